"""Experiment engine: coverage grids, drift sweeps and the duality round trip.

All randomness flows from ``(seed, cell content, block index)``; a cell's
stream key is built from its model, procedure/estimator and sample size, so
adding models to a grid leaves the other cells untouched.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import constructions as C
from . import mc
from .core import (
    DomainError,
    InsufficientDataError,
    IntervalProcedure,
    RandomizedEstimator,
    SlackSequence,
    binomial_sigma,
    clopper_pearson,
    estimate_median_bias_mc,
    exact_median_bias,
)
from .fmt import fmt_float, fmt_param
from .models import DataModel
from .registry import MODELS, ConfigError, build_estimator, build_model, build_procedure, parse_leaf

KINDS = ("medbias", "coverage", "sweep", "duality")
SIGMAS = 3.0
DEFAULT_DUALITY_LEVELS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5)


# ------------------------------------------------------------------ config


@dataclass
class DriftSpec:
    """Models at ``mu = h * n**-rate`` for each h, e.g. rate 1/2 for local alternatives."""

    model: str
    h: list[float]
    rate: float = 0.5

    def models_at(self, n: int) -> list[DataModel]:
        leaf = parse_leaf(self.model, "drift.model")
        if leaf.name not in MODELS:
            raise ConfigError(f"unknown model {leaf.name!r}; valid names: {', '.join(sorted(MODELS))}", "drift.model")
        out = []
        for h in self.h:
            mu = float(h) * n ** -self.rate
            params = ",".join([*(f"{k}={fmt_param(v)}" for k, v in leaf.params.items()), f"mu={fmt_param(mu)}"])
            out.append(build_model(f"{leaf.name}:{params}", "drift.model"))
        return out


_FIELDS = {
    "kind", "models", "estimator", "procedure", "n", "levels", "reps", "seed",
    "confidence", "drift", "alpha", "delta", "min_level", "grid_size", "check_oracles",
}


@dataclass
class ExperimentConfig:
    kind: str
    n: list[int]
    models: list[str] = field(default_factory=list)
    estimator: str | None = None
    procedure: str | None = None
    levels: list[float] = field(default_factory=list)
    reps: int = 100_000
    seed: int = 0
    confidence: float = 0.999
    drift: DriftSpec | None = None
    alpha: float = 0.1
    delta: float = 0.0
    min_level: float | None = None
    grid_size: int = 64
    check_oracles: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = sorted(set(data) - _FIELDS)
        if unknown:
            raise ConfigError(f"unknown config key(s); valid keys: {', '.join(sorted(_FIELDS))}", unknown[0])
        if "kind" not in data:
            raise ConfigError("missing experiment kind", "kind")
        if "n" not in data:
            raise ConfigError("missing sample-size grid", "n")
        kw = dict(data)
        kw["n"] = _int_list(kw["n"], "n")
        if "levels" in kw:
            kw["levels"] = _float_list(kw["levels"], "levels")
        if "models" in kw:
            kw["models"] = [str(m) for m in _as_list(kw["models"])]
        if kw.get("drift") is not None:
            d = kw["drift"]
            if not isinstance(d, dict) or "model" not in d or "h" not in d:
                raise ConfigError("drift needs 'model' and 'h'", "drift")
            extra = sorted(set(d) - {"model", "h", "rate"})
            if extra:
                raise ConfigError("unknown drift key", f"drift.{extra[0]}")
            kw["drift"] = DriftSpec(str(d["model"]), _float_list(d["h"], "drift.h"), float(d.get("rate", 0.5)))
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        out = asdict(self)
        return {k: out[k] for k in (
            "kind", "models", "estimator", "procedure", "n", "levels", "reps", "seed", "confidence",
            "drift", "alpha", "delta", "min_level", "grid_size", "check_oracles")}

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; valid kinds: {', '.join(KINDS)}", "kind")
        if not self.n or any(n < 1 for n in self.n):
            raise ConfigError("sample sizes must be a nonempty list of positive integers", "n")
        if not isinstance(self.reps, int) or isinstance(self.reps, bool) or self.reps < 1:
            raise ConfigError("reps must be a positive integer", "reps")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer", "seed")
        if not 0.0 < self.confidence < 1.0:
            raise ConfigError("confidence must lie in (0, 1)", "confidence")
        if any(not 0.0 < a < 1.0 for a in self.levels):
            raise ConfigError("levels must lie in (0, 1)", "levels")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must lie in (0, 1)", "alpha")
        if not 0.0 <= self.delta < 0.5:
            raise ConfigError("delta must lie in [0, 1/2)", "delta")
        if self.min_level is not None and not 0.0 < self.min_level < 1.0:
            raise ConfigError("min_level must lie in (0, 1)", "min_level")
        if not self.models and self.drift is None:
            raise ConfigError("give at least one model (or a drift family)", "models")
        if self.kind == "sweep" and self.drift is None:
            raise ConfigError("a sweep needs a drift family", "drift")
        if self.kind in ("medbias", "duality") and not self.estimator:
            raise ConfigError(f"{self.kind} runs need an estimator", "estimator")
        if self.kind == "coverage" and not self.procedure:
            raise ConfigError("coverage runs need a procedure", "procedure")
        if self.kind == "sweep" and not (self.procedure or self.estimator):
            raise ConfigError("a sweep needs a procedure and/or an estimator", "procedure")
        # build everything once so spec errors surface before any simulation
        for spec in self.models:
            build_model(spec, "models")
        if self.drift is not None:
            self.drift.models_at(self.n[0])
        if self.estimator:
            build_estimator(self.estimator, "estimator")
        if self.procedure:
            build_procedure(self.procedure, "procedure")

    def models_at(self, n: int) -> list[DataModel]:
        out = [build_model(s, "models") for s in self.models]
        if self.drift is not None:
            out += self.drift.models_at(n)
        return out


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def _int_list(x, name):
    try:
        out = [int(v) for v in _as_list(x)]
    except (TypeError, ValueError):
        raise ConfigError("expected integers", name) from None
    if any(float(a) != float(b) for a, b in zip(out, _as_list(x))):
        raise ConfigError("expected integers", name)
    return out


def _float_list(x, name):
    try:
        return [float(v) for v in _as_list(x)]
    except (TypeError, ValueError):
        raise ConfigError("expected numbers", name) from None


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file {str(path)!r}", "config") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}", "config") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", "config")
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if k == "drift" and isinstance(data.get("drift"), dict):
            data["drift"] = {**data["drift"], **v}
        else:
            data[k] = v
    return ExperimentConfig.from_dict(data)


# ------------------------------------------------------------------ report


@dataclass
class Table:
    name: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)


@dataclass
class Report:
    kind: str
    config: dict
    tables: list[Table]
    violations: list[dict] = field(default_factory=list)
    flags: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "ok": self.ok,
            "config": self.config,
            "meta": self.meta,
            "tables": {t.name: {"columns": t.columns, "rows": t.rows} for t in self.tables},
            "violations": self.violations,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return dump_json(self.to_dict()) + "\n"

    def table_csv(self, name: str) -> str:
        t = self.table(name)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(t.columns)
        for row in t.rows:
            writer.writerow([_csv_cell(row.get(c)) for c in t.columns])
        return buf.getvalue()

    def write(self, csv_path: str | Path | None = None, json_path: str | Path | None = None) -> list[Path]:
        """Main table to ``csv_path``; every other table to ``<stem>.<table>.csv`` beside it."""
        written = []
        if csv_path is not None:
            csv_path = Path(csv_path)
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            for i, t in enumerate(self.tables):
                path = csv_path if i == 0 else csv_path.with_name(f"{csv_path.stem}.{t.name}{csv_path.suffix or '.csv'}")
                path.write_text(self.table_csv(t.name))
                written.append(path)
        if json_path is not None:
            json_path = Path(json_path)
            json_path.parent.mkdir(parents=True, exist_ok=True)
            json_path.write_text(self.to_json())
            written.append(json_path)
        return written

    def summary_text(self) -> str:
        lines = [f"# {self.kind}"]
        for t in self.tables:
            if not t.name.endswith("summary"):
                continue
            lines.append(f"## {t.name}")
            lines.append("  ".join(t.columns))
            for row in t.rows:
                lines.append("  ".join(_text_cell(row.get(c)) for c in t.columns))
        for key, value in self.meta.items():
            lines.append(f"{key}: {_text_cell(value)}")
        for v in self.violations:
            lines.append("ORACLE MISMATCH " + " ".join(f"{k}={_text_cell(x)}" for k, x in v.items()))
        for f in self.flags:
            lines.append("BOUND EXCEEDED " + " ".join(f"{k}={_text_cell(x)}" for k, x in f.items()))
        return "\n".join(lines) + "\n"


def _csv_cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return fmt_float(x)
    return str(x)


def _text_cell(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    return _csv_cell(x) if x is not None else "-"


def dump_json(obj, indent: int = 0) -> str:
    """Deterministic JSON with floats at 17 significant digits.

    Non-finite floats are written as the strings "inf", "-inf", "nan".
    """
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        text = fmt_float(obj)
        return json.dumps(text) if not math.isfinite(obj) else text
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dump_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(dump_json(v, indent + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dump_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    if hasattr(obj, "__dict__"):
        return dump_json(vars(obj), indent)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


# ------------------------------------------------------------------- cells

COVERAGE_COLUMNS = [
    "model", "procedure", "n", "alpha", "reps", "seed", "miscoverage", "sigma", "lower", "upper",
    "exact_miscoverage", "oracle_ok", "threshold", "holds", "mean_width", "median_width",
    "trivial_fraction",
]
MEDBIAS_COLUMNS = [
    "model", "estimator", "n", "reps", "seed", "point", "lower", "upper", "exact",
    "exact_bias", "oracle_ok",
]


def threshold(bound: float, reps: int) -> float:
    """Claimed bound plus three binomial standard errors at that bound."""
    return bound + SIGMAS * binomial_sigma(min(max(bound, 0.0), 1.0), reps)


def bias_threshold(bound: float, reps: int) -> float:
    # the bias is 1/2 - min(p_ge, p_le); the binding frequency sits at 1/2 - bound
    return bound + SIGMAS * binomial_sigma(0.5 - bound, reps)


def coverage_cell(model: DataModel, proc: IntervalProcedure, n: int, alpha: float, reps: int, seed: int,
                  *, confidence: float = 0.999, bound: float | None = None, check_oracles: bool = True,
                  key: Sequence[int] | None = None, workers: int | None = None) -> dict:
    """Monte Carlo miscoverage P(theta not in CI) for one (model, n, alpha) cell."""
    theta = model.theta
    need = proc.min_n(alpha)
    if n < need:
        raise InsufficientDataError(f"{proc.spec} at alpha={alpha} needs n >= {need}, got {n}", need)
    key = mc.stream_key("coverage", model.spec, proc.spec, n) if key is None else key

    def block(rng, m):
        samples = model.sample(rng, m, n)
        lo, hi = proc.evaluate(samples, alpha, rng)
        if np.isnan(lo).any() or np.isnan(hi).any():
            raise DomainError(f"{proc.spec} produced a NaN endpoint")
        miss = int(np.count_nonzero((lo > theta) | (hi < theta)))
        width = hi - lo
        finite = np.isfinite(width)
        trivial = int(np.count_nonzero(~(np.isfinite(lo) | np.isfinite(hi))))
        return miss, width[finite], trivial

    parts = mc.run_blocks(block, seed=seed, key=key, reps=reps, n=n, workers=workers)
    misses = sum(p[0] for p in parts)
    widths = np.concatenate([p[1] for p in parts])
    trivial = sum(p[2] for p in parts)
    point = misses / reps
    lower, upper = clopper_pearson(misses, reps, confidence)
    exact = proc.exact_miscoverage(model, n, alpha) if check_oracles else None
    bound = alpha if bound is None else bound
    thr = threshold(bound, reps)
    return {
        "model": model.spec,
        "procedure": proc.spec,
        "n": n,
        "alpha": alpha,
        "reps": reps,
        "seed": seed,
        "miscoverage": point,
        "sigma": binomial_sigma(point, reps),
        "lower": lower,
        "upper": upper,
        "exact_miscoverage": exact,
        "oracle_ok": None if exact is None else bool(lower <= exact <= upper),
        "threshold": thr,
        "holds": bool(point <= thr),
        "mean_width": float(np.mean(widths)) if widths.size else None,
        "median_width": float(np.median(widths)) if widths.size else None,
        "trivial_fraction": trivial / reps,
    }


def medbias_cell(model: DataModel, est: RandomizedEstimator, n: int, reps: int, seed: int, *,
                 confidence: float = 0.999, check_oracles: bool = True,
                 key: Sequence[int] | None = None, workers: int | None = None) -> dict:
    result = estimate_median_bias_mc(model, est, n, reps, seed, confidence=confidence, key=key, workers=workers)
    row = result.to_record()
    exact = exact_median_bias(model, est, n) if check_oracles else None
    row["exact_bias"] = None if exact is None else exact.point
    row["oracle_ok"] = None if exact is None else bool(result.contains(exact.point))
    return row


def _oracle_violations(rows: list[dict], quantity: str) -> list[dict]:
    out = []
    for row in rows:
        if row.get("oracle_ok") is False:
            keys = [k for k in ("stage", "model", "procedure", "estimator", "n", "alpha", "level") if k in row]
            exact_key = "exact_miscoverage" if "exact_miscoverage" in row else "exact_bias"
            value_key = "miscoverage" if "miscoverage" in row else ("point" if "point" in row else "value")
            out.append({**{k: row[k] for k in keys}, "quantity": quantity,
                        "mc": row[value_key], "lower": row["lower"], "upper": row["upper"],
                        "exact": row[exact_key]})
    return out


# --------------------------------------------------------------- summaries


def coverage_summary(rows: list[dict]) -> Table:
    """Worst miscoverage over models for each (n, alpha): the empirical sup over the grid."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["n"], row["alpha"]), []).append(row)
    out = []
    for (n, alpha), cells in groups.items():
        worst = max(cells, key=lambda r: r["miscoverage"])
        out.append({
            "n": n, "alpha": alpha, "models": len(cells), "worst_model": worst["model"],
            "max_miscoverage": worst["miscoverage"], "upper": worst["upper"],
            "threshold": worst["threshold"], "holds": all(c["holds"] for c in cells),
        })
    return Table("coverage_summary", ["n", "alpha", "models", "worst_model", "max_miscoverage", "upper",
                                      "threshold", "holds"], out)


def medbias_summary(rows: list[dict]) -> Table:
    groups: dict[int, list[dict]] = {}
    for row in rows:
        groups.setdefault(row["n"], []).append(row)
    out = []
    for n, cells in groups.items():
        worst = max(cells, key=lambda r: r["point"])
        out.append({"n": n, "models": len(cells), "worst_model": worst["model"],
                    "max_bias": worst["point"], "upper": worst["upper"]})
    return Table("medbias_summary", ["n", "models", "worst_model", "max_bias", "upper"], out)


# -------------------------------------------------------------------- runs


def _procedure_levels(config: ExperimentConfig, default_level: float | None) -> list[float]:
    if config.levels:
        return list(config.levels)
    if default_level is not None:
        return [default_level]
    raise ConfigError("no levels given and the procedure has no default level", "levels")


def _coverage_tables(config: ExperimentConfig, workers=None) -> tuple[list[Table], list[dict]]:
    proc, default_level = build_procedure(config.procedure)
    levels = _procedure_levels(config, default_level)
    rows = []
    for n in config.n:
        for model in config.models_at(n):
            for alpha in levels:
                rows.append(coverage_cell(model, proc, n, alpha, config.reps, config.seed,
                                          confidence=config.confidence, check_oracles=config.check_oracles,
                                          workers=workers))
    table = Table("coverage", COVERAGE_COLUMNS, rows)
    flags = [{"model": r["model"], "n": r["n"], "alpha": r["alpha"], "miscoverage": r["miscoverage"],
              "threshold": r["threshold"]} for r in rows if not r["holds"]]
    return [table, coverage_summary(rows)], flags


def _medbias_tables(config: ExperimentConfig, workers=None) -> list[Table]:
    est = build_estimator(config.estimator)
    rows = []
    for n in config.n:
        for model in config.models_at(n):
            rows.append(medbias_cell(model, est, n, config.reps, config.seed,
                                     confidence=config.confidence, check_oracles=config.check_oracles,
                                     workers=workers))
    return [Table("medbias", MEDBIAS_COLUMNS, rows), medbias_summary(rows)]


def _finish(config: ExperimentConfig, tables: list[Table], flags=None, meta=None) -> Report:
    violations = []
    for t in tables:
        if t.name in ("coverage", "stages"):
            violations += _oracle_violations(t.rows, "miscoverage" if t.name == "coverage" else "stage")
        elif t.name == "medbias":
            violations += _oracle_violations(t.rows, "median_bias")
    meta = dict(meta or {})
    if config.drift is not None:
        meta.setdefault("grid_resolution", f"{len(config.drift.h)} drift points per n (+{len(config.models)} fixed models)")
    return Report(config.kind, config.to_dict(), tables, violations, flags or [], meta)


def run_medbias(config: ExperimentConfig, workers=None) -> Report:
    return _finish(config, _medbias_tables(config, workers))


def run_coverage(config: ExperimentConfig, workers=None) -> Report:
    tables, flags = _coverage_tables(config, workers)
    return _finish(config, tables, flags)


def run_uniformity_sweep(config: ExperimentConfig, workers=None) -> Report:
    """Worst case over drift points ``mu = h * n**-rate`` at each n."""
    if config.drift is None:
        raise ConfigError("a sweep needs a drift family", "drift")
    tables, flags = [], []
    if config.procedure:
        tables, flags = _coverage_tables(config, workers)
    if config.estimator:
        tables += _medbias_tables(config, workers)
    return _finish(config, tables, flags)


# ------------------------------------------------------------------ duality

STAGE_COLUMNS = [
    "stage", "name", "model", "n", "level", "quantity", "value", "sigma", "lower", "upper", "exact",
    "oracle_ok", "bound", "bound_with_slack", "threshold", "holds",
]


def run_duality_roundtrip(config: ExperimentConfig, workers=None) -> Report:
    """Estimator -> HulC interval -> boosted family -> extracted estimator.

    Stage 0 measures the median bias of the starting estimator on the batch
    size HulC uses; stage 1 the HulC miscoverage at ``alpha``; stage 2 the
    boosted family's miscoverage on the level grid; stage 3 the median bias of
    the estimator extracted from the monotonised family at ``n**-1/2``.
    Every row carries the bound with zero slack and the bound with the
    slack measured at the previous stage.
    """
    est = build_estimator(config.estimator)
    alpha, delta = config.alpha, config.delta
    levels = list(config.levels) or list(DEFAULT_DUALITY_LEVELS)
    min_level = config.min_level if config.min_level is not None else min(levels)
    stage1 = C.HulC(est, delta)
    stage2 = C.BoostedProcedure(stage1, alpha)
    stage3 = C.ExtractedEstimator(stage2, min_level=min_level, grid_size=config.grid_size)
    reps, seed, conf = config.reps, config.seed, config.confidence
    rows: list[dict] = []
    meta: dict = {"stage1": stage1.spec, "stage2": stage2.spec, "stage3": stage3.spec}

    def bias_row(stage, name, model, est_, n, bound, bound_slack, level=None):
        cell = medbias_cell(model, est_, n, reps, seed, confidence=conf, check_oracles=config.check_oracles,
                            key=mc.stream_key("duality", stage, model.spec, est_.spec, n), workers=workers)
        point = cell["point"]
        thr = bias_threshold(bound, reps)
        return {"stage": stage, "name": name, "model": model.spec, "n": n, "level": level,
                "quantity": "median_bias", "value": point, "sigma": binomial_sigma(0.5 - point, reps) if point < 0.5 else 0.0,
                "lower": cell["lower"], "upper": cell["upper"], "exact": cell["exact_bias"],
                "oracle_ok": cell["oracle_ok"], "bound": bound, "bound_with_slack": bound_slack,
                "threshold": thr, "holds": bool(point <= thr)}

    def cover_row(stage, name, model, proc, n, level, bound, bound_slack):
        cell = coverage_cell(model, proc, n, level, reps, seed, confidence=conf, bound=bound,
                             check_oracles=config.check_oracles,
                             key=mc.stream_key("duality", stage, model.spec, proc.spec, n), workers=workers)
        return {"stage": stage, "name": name, "model": model.spec, "n": n, "level": level,
                "quantity": "miscoverage", "value": cell["miscoverage"], "sigma": cell["sigma"],
                "lower": cell["lower"], "upper": cell["upper"], "exact": cell["exact_miscoverage"],
                "oracle_ok": cell["oracle_ok"], "bound": bound, "bound_with_slack": bound_slack,
                "threshold": cell["threshold"], "holds": cell["holds"]}

    tau_hat: dict = {}
    for n in config.n:
        models = config.models_at(n)
        B1 = C.batch_count(alpha, delta)
        batch_n = n // B1
        s0 = []
        for model in models:
            row = bias_row(0, "estimator", model, est, batch_n, delta, None)
            rows.append(row)
            s0.append(max(row["value"] - delta, 0.0))
        s_hat = min(max(s0), 0.999)
        s_seq = SlackSequence.constant(s_hat)
        r1 = []
        for model in models:
            row = cover_row(1, "hulc", model, stage1, n, alpha, alpha,
                            C.hulc_miscoverage_bound(alpha, delta, n, s_seq))
            rows.append(row)
            r1.append(max(row["value"] - alpha, 0.0))
        r_seq = SlackSequence.constant(min(max(r1), 0.999))
        r2 = []
        holds_at = {}
        for level in sorted(levels):
            ok = True
            for model in models:
                row = cover_row(2, "boost_level", model, stage2, n, level, level,
                                C.boost_miscoverage_bound(level, alpha, n, r_seq))
                rows.append(row)
                r2.append(max(row["value"] - level, 0.0))
                ok = ok and row["holds"]
            holds_at[level] = ok
        # smallest grid level from which validity holds at every larger level
        tau = None
        for level in sorted(levels, reverse=True):
            if not holds_at[level]:
                break
            tau = level
        tau_hat[str(n)] = tau
        level3 = stage3.level(n)
        if level3 != n ** -0.5:
            meta.setdefault("notes", []).append(
                f"n={n}: n**-1/2 is below min_level; extraction used level {fmt_float(level3)}")
        r2_hat = max(r2) if r2 else 0.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # recorded in meta above
            for model in models:
                rows.append(bias_row(3, "extract", model, stage3, n, level3 / 2.0, (level3 + r2_hat) / 2.0,
                                     level=level3))
    meta["tau_hat"] = tau_hat
    table = Table("stages", STAGE_COLUMNS, rows)
    summary = _stage_summary(rows)
    flags = [{"stage": r["stage"], "model": r["model"], "n": r["n"], "level": r["level"],
              "value": r["value"], "threshold": r["threshold"]} for r in rows if r["stage"] > 0 and not r["holds"]]
    return _finish(config, [table, summary], flags, meta)


def _stage_summary(rows: list[dict]) -> Table:
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault((row["stage"], row["name"], row["n"], row["level"]), []).append(row)
    out = []
    for (stage, name, n, level), cells in groups.items():
        worst = max(cells, key=lambda r: r["value"])
        out.append({"stage": stage, "name": name, "n": n, "level": level, "quantity": worst["quantity"],
                    "worst_model": worst["model"], "max_value": worst["value"], "bound": worst["bound"],
                    "threshold": worst["threshold"], "holds": all(c["holds"] for c in cells)})
    return Table("stage_summary", ["stage", "name", "n", "level", "quantity", "worst_model", "max_value",
                                   "bound", "threshold", "holds"], out)


RUNNERS = {
    "medbias": run_medbias,
    "coverage": run_coverage,
    "sweep": run_uniformity_sweep,
    "duality": run_duality_roundtrip,
}


def run(config: ExperimentConfig, workers=None) -> Report:
    return RUNNERS[config.kind](config, workers)
