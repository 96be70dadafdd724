"""Command-line front end.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import harness, theory
from .config import (ConfigError, build_policies, build_problem, build_source, build_x0,
                     load_config)
from .optimizer import RunConfig


def _emit(args, line: str = "") -> None:
    if not args.quiet:
        print(line)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "n/a"
    return f"{v:.6g}"


def _setup(args):
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    source = build_source(cfg, problem)
    x0 = build_x0(cfg, problem)
    policies = build_policies(cfg, problem, source, x0)
    sec = cfg.section("run")
    get = sec.get if sec is not None else (lambda k, d=None: d)
    iters = get("iters", 100)
    stride = get("record_stride", 1)
    if stride > iters:
        raise cfg.error("record_stride exceeds iters", sec, "record_stride")
    config = RunConfig(x0, iters, 0, stride, get("stop_grad_norm", 0.0))
    name = get("name", Path(args.config).stem)
    exp = harness.Experiment(problem, source, policies, get("seeds", [1]), config,
                             Path(args.out) / name, name)
    return cfg, exp, get


def _write_curves(args, exp, curves, title=None):
    for label, c in curves.items():
        harness.export_csv(c, exp.outputs / f"{label}.csv")
    if args.svg:
        from .plotting import plot_curves
        plot_curves(curves, exp.outputs / "curves.svg", title=title)


def _report_errors(curves) -> int:
    failed = 0
    for label, c in curves.items():
        for err in c.errors:
            failed += 1
            print(f"error: policy {label!r}: {type(err.cause).__name__} at iteration "
                  f"{err.iteration}: {err.cause}", file=sys.stderr)
    return failed


def _summary_line(label, c) -> str:
    if not len(c):
        return f"{label}, n/a, n/a, n/a"
    final_q = float(c.mean_q[-1])
    if c.bound is None:
        return f"{label}, {_fmt(final_q)}, n/a, n/a"
    ok = c.within_bound()
    verdict = "pass" if bool(ok.all()) else "fail"
    return f"{label}, {_fmt(final_q)}, {_fmt(float(c.bound[-1]))}, {verdict}"


def cmd_run(args) -> int:
    cfg, exp, get = _setup(args)
    curves = harness.run_experiment(exp, get("workers", 1))
    _write_curves(args, exp, curves, title=exp.name)
    lines = ["label, final mean q, bound at final k, pass/fail"]
    lines += [_summary_line(label, c) for label, c in curves.items()]
    (exp.outputs / "summary.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        _emit(args, line)
    return 1 if _report_errors(curves) else 0


def cmd_compare(args) -> int:
    cfg, exp, get = _setup(args)
    scenario = get("scenario", "none")
    if scenario != "good_init" and len(exp.policies) < 2:
        raise cfg.error("compare needs at least two [policy] blocks")
    lines = []
    if scenario == "good_init":
        q0_small = get("q0_small", 1e-8)
        if not q0_small > 0:
            raise cfg.error("q0_small must be positive", cfg.section("run"), "q0_small")
        rep = harness.good_init_scenario(exp.problem, exp.policies, q0_small, exp.seeds, exp.source,
                                         exp.config.max_iters, get("x0_seed", 0))
        curves = rep.curves
        lines.append(f"good initialization: q0 = {q0_small:g}")
        for label in curves:
            lines.append(f"  {label}: initial h = {_fmt(rep.initial_h[label])}")
    else:
        curves = harness.run_experiment(exp, get("workers", 1))
    _write_curves(args, exp, curves, title=exp.name)

    def final_excess(label):
        c = curves[label]
        return float(c.mean_f_excess[-1]) if len(c) else math.inf

    ranked = sorted(curves, key=final_excess)
    lines.append("rank, label, final mean f - f*, final mean q")
    for i, label in enumerate(ranked, 1):
        c = curves[label]
        q = float(c.mean_q[-1]) if len(c) else math.nan
        lines.append(f"{i}, {label}, {_fmt(final_excess(label))}, {_fmt(q)}")
    (exp.outputs / "summary.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        _emit(args, line)
    return 1 if _report_errors(curves) else 0


def cmd_heatmap(args) -> int:
    cfg = load_config(args.config)
    problem = build_problem(cfg)
    if problem.dimension != 2:
        raise ConfigError(f"heatmap needs a 2-D problem, got d={problem.dimension}", path=cfg.path)
    source = build_source(cfg, problem)
    x0 = build_x0(cfg, problem)
    label, policy = build_policies(cfg, problem, source, x0)[0]
    sec = cfg.section("heatmap")
    get = sec.get if sec is not None else (lambda k, d=None: d)
    grid = harness.heatmap_h(problem, policy, (get("x_min", -3.0), get("x_max", 3.0)),
                             (get("y_min", -3.0), get("y_max", 3.0)), get("resolution", 101), source)
    run_sec = cfg.section("run")
    name = run_sec.get("name", Path(args.config).stem) if run_sec else Path(args.config).stem
    out = Path(args.out) / name
    harness.export_csv(grid, out / "heatmap.csv")
    if args.svg:
        from .plotting import plot_heatmap
        plot_heatmap(problem, grid, out / "heatmap.svg")
    _emit(args, f"{label}: {grid.resolution}x{grid.resolution} grid written to {out / 'heatmap.csv'}")
    return 0


def cmd_bounds(args) -> int:
    try:
        alpha_s = theory.alpha_scheduled(args.mu, args.sigma2, args.M)
        alpha_p = theory.alpha_polyak(args.mu, args.ell, args.sigma2, args.q0)
        threshold = theory.comparison_threshold(args.M, args.mu, args.ell)
        if args.kmax < 0:
            raise ValueError("kmax must be non-negative")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if threshold is theory.UNBOUNDED:
        verdict = "Polyak always >= (unbounded threshold)"
    elif args.q0 <= threshold:
        verdict = "Polyak constant >= scheduled"
    else:
        verdict = "Polyak constant < scheduled"
    _emit(args, f"alpha_S = {alpha_s:.17g}")
    _emit(args, f"alpha_P = {alpha_p:.17g}")
    _emit(args, f"threshold q0 = {threshold if threshold is theory.UNBOUNDED else f'{threshold:.17g}'}")
    _emit(args, f"verdict: {verdict}")
    out = Path(args.out) / "bounds"
    sched = theory.bound_curve("sgd", args.kmax, q0=args.q0, alpha=alpha_s)
    harness.export_csv(sched, out / "scheduled.csv")
    if math.isinf(alpha_p):
        # one exact step reaches x*; the curve is q0 then zero
        vals = np.zeros(args.kmax + 1)
        vals[0] = args.q0
        polyak = theory.BoundCurve(np.arange(args.kmax + 1), vals, alpha_p, "sgd")
    else:
        polyak = theory.bound_curve("sgd", args.kmax, q0=args.q0, alpha=alpha_p)
    harness.export_csv(polyak, out / "polyak.csv")
    if args.svg:
        from .plotting import plot_bounds
        plot_bounds({"scheduled": sched, "Polyak": polyak}, out / "bounds.svg")
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    failed = 0
    for name, ok, detail in run_selftest():
        failed += not ok
        _emit(args, f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory (default: out)")
    common.add_argument("--svg", action="store_true", default=argparse.SUPPRESS,
                        help="also render SVG figures")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="polyak-sgd", parents=[common],
                                     description="SGD with Polyak's learning rate: experiments and bounds.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (
        ("run", cmd_run, "run an experiment config"),
        ("compare", cmd_compare, "compare several policies (or the good-initialization scenario)"),
        ("heatmap", cmd_heatmap, "step-size heatmap over a 2-D domain"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("config", help="path to a configuration file")
        p.set_defaults(func=fn)
    p = sub.add_parser("bounds", parents=[common], help="rate constants and bound curves")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--M", type=float, required=True, help="gradient-norm ceiling")
    p.add_argument("--q0", type=float, required=True)
    p.add_argument("--kmax", type=int, default=1000)
    p.set_defaults(func=cmd_bounds)
    p = sub.add_parser("selftest", parents=[common], help="run the invariant checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for key, default in (("out", "out"), ("svg", False), ("quiet", False)):
        if not hasattr(args, key):
            setattr(args, key, default)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
