"""Command line interface: ``predcomp run | sweep | check``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import PredcompError
from .experiments.report import emit_report
from .experiments.runner import SweepRow, run_scenario, sweep_tau_max
from .experiments.scenario import resolve_scenario
from .experiments.suite import run_suite

log = logging.getLogger("predcomp")


def _int_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..")
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _scenario(args):
    s = resolve_scenario(args.scenario)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.steps is not None:
        changes["steps"] = args.steps
    if args.predictor is not None:
        changes["predictor"] = args.predictor
    return s.replace(**changes) if changes else s


def _all_good(records):
    return all(r.ok and r.bound is not None and r.bound.satisfied for r in records)


def cmd_run(args):
    s = _scenario(args)
    if args.tau_max is not None:
        if len(args.tau_max) != 1:
            raise SystemExit("run takes a single --tau-max value; use sweep for a list")
        s = s.replace(tau_max=args.tau_max[0])
    rec = run_scenario(s)
    paths = emit_report([rec], args.out, [SweepRow.of(rec)])
    print(paths["summary.txt"].read_text(), end="")
    return 0 if _all_good([rec]) else 1


def cmd_sweep(args):
    s = _scenario(args)
    taus = args.tau_max if args.tau_max is not None else list(range(7))
    records, rows = sweep_tau_max(s, taus, jobs=args.jobs)
    emit_report(records, args.out, rows)
    print("tau_max  status      tau_inf  dsigma  max_dev    v_bound    v_obs")
    for r in rows:
        fmt = lambda v: "-" if v is None else f"{v:.4g}"
        print(f"{r.tau_max:7d}  {r.status:10s}  {fmt(r.tau_inf):>7}  {fmt(r.delta_sigma_inf):>6}  "
              f"{fmt(r.max_deviation):>9}  {fmt(r.v_bound):>9}  {fmt(r.v_observed):>7}")
    return 0 if _all_good(records) else 1


def cmd_check(args):
    res = run_suite(seed=args.seed or 0, count=args.count,
                    steps=args.steps if args.steps is not None else 60)
    for line in res.lines():
        print(line)
    print(f"elapsed {res.elapsed:.1f}s")
    if args.out:
        emit_report([r for r in res.records if r.ok], args.out)
    return 0 if res.ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="predcomp", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario=True):
        if scenario:
            sp.add_argument("--scenario", default="orbit",
                            help="scenario file or bundled scenario name (default: orbit)")
            sp.add_argument("--tau-max", type=_int_list, default=None,
                            help="comma list or range, e.g. 0..6")
            sp.add_argument("--predictor", choices=["exact", "euler", "rk4"])
        sp.add_argument("--seed", type=int)
        sp.add_argument("--steps", type=int)
        sp.add_argument("--out", default=None if not scenario else "out", help="output directory")

    sp = sub.add_parser("run", help="simulate one scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="one run per tau_max with a shared noise realization")
    common(sp)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("check", help="randomized consistency, bound and replay checks")
    common(sp, scenario=False)
    sp.add_argument("--count", type=int, default=100)
    sp.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PredcompError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
