"""Command line entry point ``singprop``.

Exit status is 0 iff every executed check passes, 1 if a check fails and
2 for invalid configuration.
"""

import argparse
import inspect
import json
import os
import sys

from .errors import ConfigError, SingpropError
from .scenario import load_scenario

VERBS = ("run-flow", "run-spde", "run-propagation", "run-convergence", "run-acceptance")


def build_parser():
    parser = argparse.ArgumentParser(prog="singprop",
                                     description="Propagation of singularities for stochastic transport.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in VERBS:
        p = sub.add_parser(verb)
        p.add_argument("--scenario", required=verb != "run-acceptance",
                       help="scenario JSON file" + (" (unused)" if verb == "run-acceptance" else ""))
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        if verb == "run-convergence":
            p.add_argument("--ladder", type=int, nargs="+", default=None, help="n_steps values")
            p.add_argument("--target", choices=("flow", "spde"), default=None)
        if verb == "run-acceptance":
            p.add_argument("--only", nargs="+", default=None, help="criterion ids, e.g. A1 A5")
            p.add_argument("--overrides", default=None,
                           help='JSON object of per-criterion keyword overrides, e.g. {"A3": {"x_tol": 0}}')
    return parser


def _run_acceptance(args):
    from .acceptance import CRITERIA, run_acceptance, summary_line
    overrides = json.loads(args.overrides) if args.overrides else {}
    unknown = sorted(c for c in set(args.only or []) | set(overrides) if c not in CRITERIA)
    if unknown:
        raise ConfigError("only", f"unknown criteria {unknown}")
    if args.seed is not None:
        for cid in args.only or CRITERIA:
            if "seed" in inspect.signature(CRITERIA[cid]).parameters:
                overrides.setdefault(cid, {}).setdefault("seed", args.seed)
    os.makedirs(args.out, exist_ok=True)
    try:
        summary = run_acceptance(args.only, overrides, os.path.join(args.out, "acceptance.json"))
    except TypeError as exc:
        raise ConfigError("overrides", str(exc)) from None
    for res in summary["criteria"]:
        print(summary_line(res))
    return summary["passed"]


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "run-acceptance":
            ok = _run_acceptance(args)
        else:
            from . import experiments as ex
            sc = load_scenario(args.scenario)
            if args.seed is not None:
                sc = sc.with_seed(args.seed)
            if args.verb == "run-flow":
                man = ex.run_flow(sc, args.out)
            elif args.verb == "run-spde":
                man = ex.run_spde(sc, args.out)
            elif args.verb == "run-propagation":
                man = ex.run_propagation(sc, args.out)
            else:
                man = ex.run_convergence(sc, args.out, args.ladder, args.target)
            for name, passed in man.checks.items():
                print(f"{name}: {'PASS' if passed else 'FAIL'}")
            ok = man.passed
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read scenario: {exc}", file=sys.stderr)
        return 2
    except SingpropError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
