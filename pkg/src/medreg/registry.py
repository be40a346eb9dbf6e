"""String specs for models, estimators and interval pipelines.

Grammar::

    leaf      := name [":" key "=" value ("," key "=" value)*]
    stage     := leaf ["@" level]
    pipeline  := stage (">" stage)*          ("->" and the arrow glyph also work)

The first stage names an estimator or a procedure; each later stage is a
transform. ``@level`` fixes the level gamma of a procedure for the next
transform (``boost_level``, ``union``, ``ci_estimator`` need one). On the
final stage it sets the procedure's default evaluation level. Examples::

    normal_mean:mu=0.5
    order_stat_median:r=3
    threshold_mean > hulc:delta=0
    zinterval@0.1 > boost_level
    hodges:exponent=0.25 > wald
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import constructions as C
from . import models as M
from .core import DomainError, IntervalProcedure, RandomizedEstimator


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


def _value(text: str):
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text.strip()


@dataclass(frozen=True)
class Leaf:
    name: str
    params: dict
    level: float | None = None


def parse_leaf(text: str, field: str | None = None) -> Leaf:
    text = text.strip()
    level = None
    if "@" in text:
        text, _, lvl = text.rpartition("@")
        try:
            level = float(lvl)
        except ValueError:
            raise ConfigError(f"bad level {lvl!r} in spec", field) from None
    name, _, rest = text.partition(":")
    params = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq or not key.strip():
                raise ConfigError(f"bad parameter {item!r} in spec {text!r}", field)
            params[key.strip()] = _value(val)
    return Leaf(name.strip(), params, level)


def split_pipeline(text: str) -> list[str]:
    norm = text.replace("→", ">").replace("->", ">")
    return [s for s in (p.strip() for p in norm.split(">")) if s]


def _call(factory: Callable, leaf: Leaf, field: str | None):
    try:
        return factory(**leaf.params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for {leaf.name!r}: {exc}", field) from None
    except DomainError as exc:
        raise ConfigError(str(exc), field) from None


def _uniform_scale(theta: float = 1.0):
    return M.UniformScale(float(theta))


def _discrete_uniform(k: int = 3):
    return M.DiscreteUniform(int(k))


def _two_point(p: float = 0.5):
    return M.TwoPoint(float(p))


MODELS: dict[str, Callable] = {
    "normal_mean": M.model_normal_mean,
    "location": M.model_location,
    "threshold_normal": M.model_threshold_normal,
    "uniform_scale": _uniform_scale,
    "discrete_uniform": _discrete_uniform,
    "two_point": _two_point,
}

ESTIMATORS: dict[str, Callable] = {
    "sample_mean": M.SampleMean,
    "sample_median": M.SampleMedian,
    "order_stat_median": M.RandomizedOrderStat,
    "uniform_mle": M.UniformMLE,
    "uniform_corrected": M.UniformCorrected,
    "uniform_printed": M.UniformPrinted,
    "threshold_mean": M.estimator_threshold_mean,
    "hard_threshold": M.estimator_hard_threshold,
    "hodges": M.Hodges,
}

PROCEDURES: dict[str, Callable] = {
    "zinterval": M.zinterval,
}


def _needs_level(obj, level, leaf: Leaf, field):
    if not isinstance(obj, IntervalProcedure):
        raise ConfigError(f"{leaf.name!r} needs an interval procedure as input", field)
    if level is None:
        raise ConfigError(f"{leaf.name!r} needs a fixed input level, e.g. 'zinterval@0.1 > {leaf.name}'", field)
    return obj, level


def _needs_estimator(obj, leaf: Leaf, field):
    if not isinstance(obj, RandomizedEstimator):
        raise ConfigError(f"{leaf.name!r} needs an estimator as input", field)
    return obj


def _t_hulc(obj, level, leaf, field):
    est = _needs_estimator(obj, leaf, field)
    return _call(lambda delta=0.0, shuffle=False: C.HulC(est, float(delta), bool(shuffle)), leaf, field)


def _t_wald(obj, level, leaf, field):
    est = _needs_estimator(obj, leaf, field)
    return _call(lambda sigma=1.0: M.Wald(est, float(sigma)), leaf, field)


def _t_ci_estimator(obj, level, leaf, field):
    proc, gamma = _needs_level(obj, level, leaf, field)
    return _call(lambda: C.CIEstimator(proc, gamma), leaf, field)


def _t_boost(obj, level, leaf, field):
    proc, gamma = _needs_level(obj, level, leaf, field)
    return _call(lambda shuffle=False: C.BoostedProcedure(proc, gamma, bool(shuffle)), leaf, field)


def _t_union(obj, level, leaf, field):
    proc, gamma = _needs_level(obj, level, leaf, field)
    return _call(lambda: C.UnionProcedure(proc, gamma), leaf, field)


def _parse_levels(levels):
    if isinstance(levels, (int, float)):
        return [float(levels)]
    return [float(x) for x in str(levels).split("/") if x]


def _t_monotone(obj, level, leaf, field):
    if not isinstance(obj, IntervalProcedure):
        raise ConfigError("'monotone' needs an interval procedure as input", field)

    def build(grid=64, levels=None):
        return C.MonotoneFamily(obj, int(grid), None if levels is None else _parse_levels(levels))

    return _call(build, leaf, field)


def _t_extract(obj, level, leaf, field):
    if not isinstance(obj, IntervalProcedure):
        raise ConfigError("'extract' needs an interval procedure as input", field)
    return _call(lambda min_level=None, grid=64: C.ExtractedEstimator(obj, min_level, int(grid)), leaf, field)


TRANSFORMS: dict[str, Callable] = {
    "hulc": _t_hulc,
    "wald": _t_wald,
    "ci_estimator": _t_ci_estimator,
    "boost_level": _t_boost,
    "boost": _t_boost,
    "union": _t_union,
    "monotone": _t_monotone,
    "extract": _t_extract,
}


def _unknown(kind: str, name: str, table: dict, field):
    return ConfigError(f"unknown {kind} {name!r}; valid names: {', '.join(sorted(table))}", field)


def build_model(spec: str, field: str | None = "model") -> M.DataModel:
    leaf = parse_leaf(spec, field)
    if leaf.name not in MODELS:
        raise _unknown("model", leaf.name, MODELS, field)
    return _call(MODELS[leaf.name], leaf, field)


def build(spec: str, field: str | None = None):
    """Build an estimator or procedure pipeline; returns ``(object, level)``."""
    stages = split_pipeline(spec)
    if not stages:
        raise ConfigError("empty pipeline spec", field)
    head = parse_leaf(stages[0], field)
    if head.name in ESTIMATORS:
        obj = _call(ESTIMATORS[head.name], head, field)
    elif head.name in PROCEDURES:
        obj = _call(PROCEDURES[head.name], head, field)
    else:
        raise _unknown("estimator or procedure", head.name, {**ESTIMATORS, **PROCEDURES}, field)
    level = head.level
    for text in stages[1:]:
        leaf = parse_leaf(text, field)
        if leaf.name not in TRANSFORMS:
            raise _unknown("transform", leaf.name, TRANSFORMS, field)
        obj = TRANSFORMS[leaf.name](obj, level, leaf, field)
        level = leaf.level
    return obj, level


def build_estimator(spec: str, field: str | None = "estimator") -> RandomizedEstimator:
    obj, _ = build(spec, field)
    if not isinstance(obj, RandomizedEstimator):
        raise ConfigError(f"{spec!r} is an interval procedure, not an estimator", field)
    return obj


def build_procedure(spec: str, field: str | None = "procedure") -> tuple[IntervalProcedure, float | None]:
    obj, level = build(spec, field)
    if not isinstance(obj, IntervalProcedure):
        raise ConfigError(f"{spec!r} is an estimator, not an interval procedure", field)
    return obj, level


def registry_procedures() -> dict[str, str]:
    """Default pipeline for every procedure kind the registry can build."""
    return {
        "zinterval": "zinterval",
        "wald": "sample_mean > wald",
        "hulc": "sample_mean > hulc",
        "boost_level": "zinterval@0.1 > boost_level",
        "union": "zinterval@0.1 > union",
        "monotone": "zinterval > monotone",
    }
