"""Multi-seed experiments, learning-rate heatmaps and CSV export."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import theory
from .objective import SEED_MASK, MiniBatchOracle, Problem, noise_second_moment, noise_variance_bound
from .optimizer import RunConfig, RunError, Trajectory, _num, run
from .stepsize import Converged, FStarOverestimate, PolicyState, StepContext, StepPolicy, compute_h, default_caps


def initial_point(problem: Problem, q0: float, seed: int = 0) -> np.ndarray:
    """Point at distance ``sqrt(2 q0)`` from x* in a seeded random direction."""
    if problem.x_star is None:
        raise ValueError("initial_point needs a known minimizer")
    rng = np.random.default_rng(seed & SEED_MASK)
    u = rng.standard_normal(problem.dimension)
    u /= np.linalg.norm(u)
    return problem.x_star + math.sqrt(2.0 * q0) * u


@dataclass(frozen=True)
class Theory:
    """Constants behind the bound overlays for one experiment."""

    mu: float
    ell: float
    q0: float
    sigma2: float
    M_bound: float

    @property
    def constants(self) -> theory.RateConstants:
        return theory.RateConstants(self.mu, self.ell, self.q0, self.sigma2, self.M_bound)


def problem_theory(problem: Problem, oracle: MiniBatchOracle | None, x0) -> Theory:
    """Rate-bound inputs for runs from ``x0``.

    The noise level is a ceiling over the ball of radius ``2 ||x0 - x*||``,
    the same region covered by the gradient ceiling ``M``.
    """
    q0 = problem.q(x0)
    radius = 2.0 * math.sqrt(2.0 * q0)
    sigma2 = noise_variance_bound(problem, oracle, radius)
    return Theory(problem.mu, problem.ell, q0, sigma2, theory.gradient_ceiling(problem, x0))


def scheduled_policy(problem: Problem, oracle: MiniBatchOracle | None, x0, caps=None) -> StepPolicy:
    th = problem_theory(problem, oracle, x0).constants
    return StepPolicy.scheduled(problem.mu, th.q0, th.alpha_S, caps)


def bound_for(policy: StepPolicy, th: Theory, oracle, kmax: int) -> theory.BoundCurve | None:
    """The bound the theory attaches to ``policy``, if any."""
    c = th.constants
    if policy.kind == "scheduled":
        return theory.bound_curve("sgd", kmax, q0=c.q0, alpha=c.alpha_S)
    if policy.kind == "splr":
        if math.isinf(c.alpha_P):
            return None
        return theory.bound_curve("sgd", kmax, q0=c.q0, alpha=c.alpha_P)
    if policy.kind == "polyak" and oracle is None:
        return theory.bound_curve("agd", kmax, mu=c.mu, ell=c.ell, q0=c.q0)
    return None


@dataclass
class Experiment:
    problem: Problem
    source: MiniBatchOracle | None
    policies: list[tuple[str, StepPolicy]]
    seeds: list[int]
    config: RunConfig
    outputs: Path | None = None
    name: str = "experiment"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("an experiment needs at least one seed")
        labels = [lab for lab, _ in self.policies]
        if len(set(labels)) != len(labels):
            raise ValueError("policy labels must be unique")


@dataclass
class AggregateCurve:
    """Across-seed statistics of ``q_k`` and ``f_k - f*``."""

    k: np.ndarray
    mean_q: np.ndarray
    se_q: np.ndarray
    min_q: np.ndarray
    max_q: np.ndarray
    mean_f_excess: np.ndarray
    counts: np.ndarray
    n_seeds: int
    bound: np.ndarray | None = None
    errors: list[RunError] = field(default_factory=list)
    observed_grad_max: float = math.nan
    initial_h: float = math.nan

    def __len__(self):
        return len(self.k)

    def within_bound(self, n_se: float = 3.0) -> np.ndarray | None:
        if self.bound is None:
            return None
        return self.mean_q <= self.bound + n_se * self.se_q


def aggregate(trajectories: list[Trajectory], f_star: float) -> AggregateCurve:
    """Fold trajectories in ascending seed order (so seed order is irrelevant)."""
    trajs = sorted(trajectories, key=lambda t: t.seed)
    if not trajs:
        e = np.empty(0)
        return AggregateCurve(np.empty(0, dtype=np.int64), e, e, e, e, e, np.empty(0, dtype=np.int64), 0)
    ks = sorted(set().union(*(t.k.tolist() for t in trajs)))
    pos = {k: i for i, k in enumerate(ks)}
    Q = np.full((len(trajs), len(ks)), np.nan)
    F = np.full_like(Q, np.nan)
    for j, t in enumerate(trajs):
        cols = [pos[k] for k in t.k.tolist()]
        Q[j, cols] = t.q
        F[j, cols] = t.f - f_star
    counts = np.sum(~np.isnan(F), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_q = np.nanmean(Q, axis=0)
        se = np.where(counts > 1, np.nanstd(Q, axis=0, ddof=1) / np.sqrt(counts), 0.0) \
            if len(trajs) > 1 else np.zeros(len(ks))
        return AggregateCurve(
            k=np.asarray(ks, dtype=np.int64),
            mean_q=mean_q,
            se_q=np.nan_to_num(se),
            min_q=np.nanmin(Q, axis=0),
            max_q=np.nanmax(Q, axis=0),
            mean_f_excess=np.nanmean(F, axis=0),
            counts=counts,
            n_seeds=len(trajs),
            observed_grad_max=max(float(np.max(t.grad_norm)) for t in trajs),
        )


def _cell(args):
    problem, source, policy, config = args
    return run(problem, source, policy, config)


def run_experiment(e: Experiment, max_workers: int = 1) -> dict[str, AggregateCurve]:
    """Run every (policy, seed) cell and aggregate per policy.

    Failed cells are dropped from the statistics and listed in
    ``AggregateCurve.errors``.
    """
    cells = [(label, policy, s) for label, policy in e.policies for s in e.seeds]
    jobs = [(e.problem, e.source, policy, replace(e.config, seed=s)) for _, policy, s in cells]
    if max_workers > 1:
        with ProcessPoolExecutor(max_workers) as pool:
            trajs = list(pool.map(_cell, jobs))
    else:
        trajs = [_cell(j) for j in jobs]

    th = problem_theory(e.problem, e.source, e.config.x0) if e.problem.x_star is not None else None
    out = {}
    for label, policy in e.policies:
        mine = [t for (lab, _, _), t in zip(cells, trajs) if lab == label]
        ok = [t for t in mine if t.terminal != "error"]
        curve = aggregate(ok, e.problem.f_star)
        curve.errors = [t.error for t in mine if t.terminal == "error"]
        if mine and len(mine[0].h):
            curve.initial_h = float(mine[0].h[0])
        if th is not None and len(curve):
            b = bound_for(policy, th, e.source, int(curve.k[-1]))
            if b is not None:
                curve.bound = b.values[curve.k]
        out[label] = curve
    return out


@dataclass
class HeatmapGrid:
    xs: np.ndarray
    ys: np.ndarray
    h: np.ndarray  # h[j, i] is the value at (xs[i], ys[j])

    @property
    def resolution(self) -> int:
        return len(self.xs)


def heatmap_h(problem: Problem, policy: StepPolicy, x_range=(-3.0, 3.0), y_range=(-3.0, 3.0),
              resolution: int = 101, oracle: MiniBatchOracle | None = None) -> HeatmapGrid:
    """Evaluate the policy's first step size at every point of a 2-D grid.

    Points where the step is undefined (zero gradient) are NaN.
    """
    if problem.dimension != 2:
        raise ValueError(f"heatmaps need a 2-D problem, got d={problem.dimension}")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    xs = np.linspace(*x_range, resolution)
    ys = np.linspace(*y_range, resolution)
    H = np.full((resolution, resolution), np.nan)
    for j, y in enumerate(ys):
        for i, x in enumerate(xs):
            H[j, i] = step_size_at(problem, policy, np.array([x, y]), oracle)
    return HeatmapGrid(xs, ys, H)


def step_size_at(problem: Problem, policy: StepPolicy, x, oracle: MiniBatchOracle | None = None,
                 k: int = 0) -> float:
    """Step size the policy would take from ``x`` at iteration ``k``; NaN if undefined."""
    f = problem.value(x)
    g = problem.gradient(x)
    gn2 = float(g @ g)
    if oracle is None:
        moment = gn2
    else:
        def moment():
            return noise_second_moment(problem, oracle, x, k).value
    try:
        h, _ = compute_h(policy, StepContext(k=k, f_x=f, grad_norm_sq=gn2, second_moment=moment),
                         PolicyState())
    except (Converged, FStarOverestimate):
        return math.nan
    return h


@dataclass
class ScenarioReport:
    q0_small: float
    x0: np.ndarray
    curves: dict[str, AggregateCurve]
    initial_h: dict[str, float]

    @property
    def final_q(self) -> dict[str, float]:
        return {lab: float(c.mean_q[-1]) for lab, c in self.curves.items()}

    def ranking(self) -> list[str]:
        return sorted(self.curves, key=lambda lab: self.final_q[lab])


def good_init_scenario(problem: Problem, policies: list[tuple[str, StepPolicy]], q0_small: float,
                       seeds: list[int], source: MiniBatchOracle | None = None, iters: int = 100,
                       direction_seed: int = 0) -> ScenarioReport:
    """Start every policy at distance ``sqrt(2 q0_small)`` from x*."""
    if q0_small <= 0:
        raise ValueError("q0_small must be positive")
    x0 = initial_point(problem, q0_small, direction_seed)
    exp = Experiment(problem, source, policies, list(seeds), RunConfig(x0, iters))
    curves = run_experiment(exp)
    h0 = {lab: step_size_at(problem, pol, x0, source) for lab, pol in policies}
    return ScenarioReport(q0_small, x0, curves, h0)


def stochastic_caps(problem: Problem, policy: StepPolicy) -> StepPolicy:
    """Attach the default caps to stochastic Polyak rules that have none."""
    if policy.caps is None and policy.kind in ("splr", "splr-est"):
        return replace(policy, caps=default_caps(problem.mu))
    return policy


# --- CSV export -------------------------------------------------------------

AGGREGATE_HEADER = "k,mean_q,se_q,min_q,max_q,mean_f_excess,bound"
HEATMAP_HEADER = "x,y,h"
BOUND_HEADER = "k,bound"


def export_csv(obj, path) -> None:
    """Write a curve, grid, bound or trajectory as CSV (17 significant digits)."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        if isinstance(obj, Trajectory):
            obj.to_csv(path)
            return
        if isinstance(obj, AggregateCurve):
            lines = [AGGREGATE_HEADER]
            b = obj.bound if obj.bound is not None else np.full(len(obj), np.nan)
            for i in range(len(obj)):
                vals = (obj.mean_q[i], obj.se_q[i], obj.min_q[i], obj.max_q[i], obj.mean_f_excess[i], b[i])
                lines.append(f"{obj.k[i]}," + ",".join(_num(v) for v in vals))
        elif isinstance(obj, HeatmapGrid):
            lines = [HEATMAP_HEADER]
            for j, y in enumerate(obj.ys):
                for i, x in enumerate(obj.xs):
                    h = obj.h[j, i]
                    lines.append(f"{_num(x)},{_num(y)},{'nan' if math.isnan(h) else _num(h)}")
        elif isinstance(obj, theory.BoundCurve):
            lines = [BOUND_HEADER] + [f"{k},{_num(v)}" for k, v in zip(obj.k, obj.values)]
        else:
            raise TypeError(f"cannot export {type(obj).__name__}")
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"writing {path}: {exc}") from exc


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Parse a file written by :func:`export_csv`; empty cells become NaN."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = [[float(c) if c else math.nan for c in line.split(",")] for line in lines[1:] if line]
    return header, np.array(rows).reshape(len(rows), len(header))
