"""``medreg`` command-line front end.

Exit status: 0 on success, 1 when an exact-oracle check disagrees with the
Monte Carlo estimate (the failing cell is printed), 2 on usage or config
errors.
"""

from __future__ import annotations

import argparse
import sys
from fractions import Fraction

from . import constructions as C
from . import oracles
from .fmt import fmt_float
from .harness import ExperimentConfig, load_config, run
from .registry import ConfigError, parse_leaf

EPILOG = """\
Specs: models like 'normal_mean:mu=0.5'; estimators like 'order_stat_median:r=3';
procedures are pipelines such as 'sample_mean > hulc:delta=0' or 'zinterval@0.1 > boost_level'.
Flags override values from --config. MEDREG_THREADS caps the worker count; results do not depend on it.
"""


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list, got {text!r}") from None
    return parse


def _experiment_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text, description=help_text, epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--model", action="append", dest="models", metavar="SPEC",
                   help="data model spec (repeatable); replaces the config's model list")
    p.add_argument("--n", type=_csv_list(int), metavar="N[,N...]", help="sample sizes")
    p.add_argument("--reps", type=int, help="Monte Carlo replicates per cell (default 100000)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--confidence", type=float, help="Clopper-Pearson confidence (default 0.999)")
    p.add_argument("--no-oracles", action="store_true", help="skip exact-oracle cross-checks")
    p.add_argument("--csv", metavar="PATH", help="write the cell table here (extra tables beside it)")
    p.add_argument("--json", metavar="PATH", help="write the nested JSON report here")
    p.add_argument("--quiet", action="store_true", help="no summary on standard output")
    return p


def _add_drift(p):
    p.add_argument("--drift-model", metavar="SPEC", help="model family taking mu, e.g. threshold_normal")
    p.add_argument("--drift-h", type=_csv_list(float), metavar="H[,H...]", help="drift grid h")
    p.add_argument("--drift-rate", type=float, help="mu = h * n**-rate (default 0.5)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="medreg",
        description="Median bias, HulC-style intervals and coverage experiments.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", metavar="{medbias,coverage,sweep,duality,batchcount}")
    sub.required = True

    p = _experiment_parser(sub, "medbias", "Monte Carlo (and exact, where available) median bias")
    p.add_argument("--estimator", metavar="SPEC")
    _add_drift(p)

    p = _experiment_parser(sub, "coverage", "miscoverage grid over models, n and levels")
    p.add_argument("--procedure", metavar="SPEC")
    p.add_argument("--alpha", type=_csv_list(float), dest="levels", metavar="A[,A...]", help="levels")
    _add_drift(p)

    p = _experiment_parser(sub, "sweep", "worst case over drift sequences mu = h * n**-rate")
    p.add_argument("--procedure", metavar="SPEC")
    p.add_argument("--estimator", metavar="SPEC")
    p.add_argument("--alpha", type=_csv_list(float), dest="levels", metavar="A[,A...]", help="levels")
    _add_drift(p)

    p = _experiment_parser(sub, "duality", "estimator -> interval -> boosted family -> estimator round trip")
    p.add_argument("--estimator", metavar="SPEC")
    p.add_argument("--alpha", type=float, help="stage-1 HulC level (default 0.1)")
    p.add_argument("--delta", type=float, help="stage-1 HulC median-bias allowance (default 0)")
    p.add_argument("--levels", type=_csv_list(float), metavar="A[,A...]", help="boosted level grid")
    p.add_argument("--min-level", type=float, help="smallest level the extracted estimator may use")
    _add_drift(p)

    p = sub.add_parser("batchcount", help="smallest B with (1/2-d)^B + (1/2+d)^B <= alpha")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--delta", type=float, default=0.0)

    # not listed in the help on purpose: manual auditing of the reference computations
    p = sub.add_parser("oracle")
    osub = p.add_subparsers(dest="oracle", required=True)
    q = osub.add_parser("enumerate", help="exact median bias by total enumeration")
    q.add_argument("--support", required=True, metavar="V:P[,V:P...]", help="values and probabilities, e.g. 1:1/3,2:1/3,3:1/3")
    q.add_argument("--n", type=int, required=True)
    q.add_argument("--estimator", required=True, metavar="SPEC")
    q.add_argument("--theta", required=True)
    q = osub.add_parser("batchcount", help="linear-scan batch count")
    q.add_argument("--alpha", type=float, required=True)
    q.add_argument("--delta", type=float, default=0.0)
    q.add_argument("--bmax", type=int, default=10_000)
    q = osub.add_parser("top2", help="P(2 X_(n) - X_(n-1) >= 1) under Unif(0,1)^n by quadrature")
    q.add_argument("--n", type=int, required=True)
    return parser


_OVERRIDES = ("models", "estimator", "procedure", "n", "levels", "reps", "seed", "confidence",
              "alpha", "delta", "min_level")


def _config(args) -> ExperimentConfig:
    overrides = {k: getattr(args, k, None) for k in _OVERRIDES}
    overrides["kind"] = args.command
    if args.no_oracles:
        overrides["check_oracles"] = False
    drift = {k: getattr(args, f"drift_{k}", None) for k in ("model", "h", "rate")}
    if any(v is not None for v in drift.values()):
        overrides["drift"] = {k: v for k, v in drift.items() if v is not None}
    if args.config:
        return load_config(args.config, overrides)
    return ExperimentConfig.from_dict({k: v for k, v in overrides.items() if v is not None})


def _print_medbias(report, out):
    for row in report.table("medbias").rows:
        print(f"model={row['model']} estimator={row['estimator']} n={row['n']}", file=out)
        if row["exact_bias"] is not None:
            print(f"  bias={fmt_float(row['exact_bias'])} exact", file=out)
        print(f"  mc bias={fmt_float(row['point'])} lower={fmt_float(row['lower'])} "
              f"upper={fmt_float(row['upper'])} reps={row['reps']} seed={row['seed']}", file=out)


def _experiment(args, out, err) -> int:
    config = _config(args)
    report = run(config)
    report.write(args.csv, args.json)
    if not args.quiet:
        if config.kind == "medbias":
            _print_medbias(report, out)
        else:
            out.write(report.summary_text())
    for v in report.violations:
        print("oracle mismatch: " + " ".join(f"{k}={fmt_float(x) if isinstance(x, float) else x}"
                                             for k, x in v.items()), file=err)
    return 0 if report.ok else 1


def _batchcount(args, out, err) -> int:
    B = C.batch_count(args.alpha, args.delta)
    lo, hi = C.batch_count_bounds(args.alpha, args.delta)
    print(f"B={B}", file=out)
    print(f"bounds: lower={lo} upper={hi}", file=out)
    ref = oracles.brute_force_batch_count(args.alpha, args.delta, max(B, 1) + 1) if B <= 4096 else None
    if ref is not None and ref != B:
        print(f"oracle mismatch: linear scan gives B={ref}", file=err)
        return 1
    return 0


def _parse_support(text: str):
    pairs = []
    for item in text.split(","):
        value, sep, prob = item.partition(":")
        if not sep:
            raise ConfigError(f"bad support entry {item!r}, expected V:P", "support")
        try:
            pairs.append((Fraction(value.strip()), Fraction(prob.strip())))
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"bad support entry {item!r}", "support") from None
    return pairs


def _oracle(args, out, err) -> int:
    if args.oracle == "batchcount":
        B = oracles.brute_force_batch_count(args.alpha, args.delta, args.bmax)
        print("B=none" if B is None else f"B={B}", file=out)
    elif args.oracle == "top2":
        print(fmt_float(oracles.uniform_top2_probability(args.n)), file=out)
    else:
        leaf = parse_leaf(args.estimator, "estimator")
        try:
            spec = oracles.EnumerationSpec(_parse_support(args.support), args.n, leaf.name,
                                           Fraction(args.theta), leaf.params)
            p_ge, p_le = oracles.enumerate_probs(spec)
        except (oracles.OracleLimitError, ValueError) as exc:
            raise ConfigError(str(exc), "oracle") from None
        bias = max(Fraction(1, 2) - min(p_ge, p_le), Fraction(0))
        print(f"p_ge={p_ge} p_le={p_le} bias={bias}", file=out)
    return 0


def main(argv=None, out=None, err=None) -> int:
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "batchcount":
            return _batchcount(args, out, err)
        if args.command == "oracle":
            return _oracle(args, out, err)
        return _experiment(args, out, err)
    except ConfigError as exc:
        print(f"medreg: config error: {exc}", file=err)
        return 2
    except ValueError as exc:
        print(f"medreg: error: {exc}", file=err)
        return 2


if __name__ == "__main__":
    sys.exit(main())
