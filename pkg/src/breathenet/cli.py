"""Command-line entry point.

Subcommands: run an experiment spec, compare two results directories,
execute the property suite, and train the monotone coverage surrogates
from a measurement-report batch.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .coverage import save_surrogate_set, train_neighbourhood_surrogates
from .harness import (
    MetricsSeries,
    compare_runs,
    property_suite,
    run_experiment,
    spec_from_dict,
)
from .model import topology_from_json
from .mrdata import build_per_antenna_tables, load_csv, remove_redundant

_CFG_FLAGS = {
    "epsilon": float, "gamma": float, "tau": float, "delta_p": float,
    "n_s": int, "f_con": float, "r_c": float, "target_mode": str,
    "top_m": int, "over_busy_threshold": float, "coverage_mode": str,
    "coverage_sample": int, "svd_cutoff": float,
}


def _add_cfg_flags(parser: argparse.ArgumentParser) -> None:
    for name, kind in _CFG_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name,
                            type=kind, default=None)


def _load_spec(path: str, args) -> "ExperimentSpec":
    with open(path) as fh:
        raw = json.load(fh)
    overrides = {k: getattr(args, k) for k in _CFG_FLAGS
                 if getattr(args, k, None) is not None}
    if overrides:
        raw["cfg"] = {**raw.get("cfg", {}), **overrides}
    if getattr(args, "algorithm", None):
        raw["algorithm"] = args.algorithm
    if getattr(args, "periods", None):
        raw["periods"] = args.periods
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    if getattr(args, "output", None):
        raw["output_dir"] = args.output
    return spec_from_dict(raw)


def _cmd_run(args) -> int:
    spec = _load_spec(args.spec, args)
    result = run_experiment(spec, progress=not args.quiet)
    m = result.metrics
    print(f"algorithm={spec.algorithm} periods={len(m)}")
    print(f"mean std_busy      {m.mean_std_busy:.6f}")
    print(f"mean over_busy     {m.mean_over_busy:.6f}")
    print(f"mean step seconds  {m.mean_step_seconds:.6f}")
    print(f"min coverage       {m.min_coverage:.6f}")
    if spec.output_dir or args.output:
        print(f"results written to {args.output or spec.output_dir}")
    return 0


def _cmd_compare(args) -> int:
    a = MetricsSeries.from_csv(Path(args.dir_a) / "metrics.csv")
    b = MetricsSeries.from_csv(Path(args.dir_b) / "metrics.csv")
    print(json.dumps(compare_runs(a, b), indent=2))
    return 0


def _cmd_properties(args) -> int:
    bundle = cfg = None
    if args.spec:
        spec = _load_spec(args.spec, args)
        from .synth import ScenarioBundle

        bundle = ScenarioBundle(spec.topo, spec.pathloss, spec.scenario)
        cfg = spec.cfg
    checks = property_suite(bundle, cfg, quick=args.quick)
    failed = 0
    for c in checks:
        mark = "PASS" if c.passed else "FAIL"
        failed += not c.passed
        print(f"{mark}  {c.name}: {c.detail}")
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def _cmd_train_coverage(args) -> int:
    topo = topology_from_json(args.topology)
    ds, report = load_csv(args.batch, topo.n, powers=topo.initial_powers())
    if report.rejected:
        print(f"rejected {report.rejected} malformed records", file=sys.stderr)
    ds = build_per_antenna_tables(remove_redundant(ds))
    evaluator = train_neighbourhood_surrogates(
        ds, topo, r_c=args.r_c, n_samples=args.samples, span=args.span,
        epochs=args.epochs, lr=args.lr, seed=args.seed)
    save_surrogate_set(evaluator, args.output)
    worst = max(mlp.training_mse for mlp in evaluator.mlps.values())
    print(f"trained {len(evaluator.mlps)} per-antenna nets on {len(ds)} "
          f"records; worst training MSE {worst:.3e}")
    print(f"surrogates written to {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="breathenet",
        description="Busy-degree balancing simulator for breathing "
                    "cellular networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment spec (JSON)")
    p_run.add_argument("spec")
    p_run.add_argument("--output", "-o", default=None,
                       help="results directory (overrides the spec)")
    p_run.add_argument("--algorithm", choices=("none", "bdba", "bfdba"),
                       default=None)
    p_run.add_argument("--periods", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--quiet", action="store_true")
    _add_cfg_flags(p_run)
    p_run.set_defaults(handler=_cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="compare two results directories")
    p_cmp.add_argument("dir_a")
    p_cmp.add_argument("dir_b")
    p_cmp.set_defaults(handler=_cmd_compare)

    p_prop = sub.add_parser("properties",
                            help="run the invariant property suite")
    p_prop.add_argument("spec", nargs="?", default=None,
                        help="optional scenario spec; defaults to built-ins")
    p_prop.add_argument("--quick", action="store_true")
    _add_cfg_flags(p_prop)
    p_prop.set_defaults(handler=_cmd_properties)

    p_train = sub.add_parser("train-coverage",
                             help="fit monotone coverage surrogates from "
                                  "a measurement-report CSV")
    p_train.add_argument("batch", help="measurement-report CSV")
    p_train.add_argument("--topology", required=True,
                         help="topology JSON (antennas + neighbours)")
    p_train.add_argument("--output", "-o", required=True,
                         help="directory for the trained surrogate set")
    p_train.add_argument("--r-c", dest="r_c", type=float, default=-90.0)
    p_train.add_argument("--samples", type=int, default=300)
    p_train.add_argument("--span", type=float, default=10.0)
    p_train.add_argument("--epochs", type=int, default=3000)
    p_train.add_argument("--lr", type=float, default=0.02)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.set_defaults(handler=_cmd_train_coverage)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
