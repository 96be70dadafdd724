"""The (stochastic) gradient iteration and its recorded trajectory."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .objective import MiniBatchOracle, Problem, minibatch_gradient, noise_second_moment
from .stepsize import Converged, PolicyState, StepContext, StepPolicy, compute_h

CSV_HEADER = "k,f,q,h,grad_norm"


class RunError(RuntimeError):
    """A policy or numerical failure at a given iteration."""

    def __init__(self, iteration: int, cause: Exception):
        super().__init__(f"{type(cause).__name__} at iteration {iteration}: {cause}")
        self.iteration = iteration
        self.cause = cause


@dataclass(frozen=True)
class RunConfig:
    x0: np.ndarray
    max_iters: int
    seed: int = 0
    record_stride: int = 1
    stop_grad_norm: float = 0.0

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=np.float64)
        if x0.ndim != 1 or not np.all(np.isfinite(x0)):
            raise ValueError("x0 must be a finite vector")
        object.__setattr__(self, "x0", x0)
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not 1 <= self.record_stride <= self.max_iters:
            raise ValueError("record_stride must lie in [1, max_iters]")
        if self.stop_grad_norm < 0:
            raise ValueError("stop_grad_norm must be non-negative")


@dataclass
class Trajectory:
    """Per-iteration records of one run.

    Row ``k`` describes the iterate ``x_k`` and the step ``h_k`` taken from
    it.  ``q`` is NaN when the minimizer is unknown; ``h`` is NaN only on a
    final row where no step was taken (convergence).
    """

    k: np.ndarray
    f: np.ndarray
    q: np.ndarray
    h: np.ndarray
    grad_norm: np.ndarray
    terminal: str
    x_final: np.ndarray
    error: RunError | None = None
    seed: int = 0

    def __len__(self):
        return len(self.k)

    @property
    def q0(self) -> float:
        return float(self.q[0])

    def to_csv(self, path) -> None:
        rows = [CSV_HEADER]
        for k, f, q, h, g in zip(self.k, self.f, self.q, self.h, self.grad_norm):
            rows.append(f"{k},{_num(f)},{_num(q)},{_num(h)},{_num(g)}")
        Path(path).write_text("\n".join(rows) + "\n")


def _num(v) -> str:
    return "" if v is None or math.isnan(v) else f"{v:.17g}"


def step(x, h: float, g) -> np.ndarray:
    """``x - h g``."""
    x = np.asarray(x, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if x.shape != g.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {g.shape}")
    if not h > 0:
        raise ValueError("step size must be positive")
    if not (math.isfinite(h) and np.all(np.isfinite(x)) and np.all(np.isfinite(g))):
        raise FloatingPointError("non-finite input to step")
    return x - h * g


@dataclass
class _Recorder:
    stride: int
    rows: list = field(default_factory=list)

    def add(self, k, f, q, h, gn, force=False):
        if force or k % self.stride == 0:
            self.rows.append((k, f, q, h, gn))

    def columns(self):
        if not self.rows:
            return [np.empty(0)] * 5
        cols = list(zip(*self.rows))
        return [np.asarray(cols[0], dtype=np.int64)] + [np.asarray(c, dtype=np.float64) for c in cols[1:]]


def run(problem: Problem, source: MiniBatchOracle | None, policy: StepPolicy,
        config: RunConfig) -> Trajectory:
    """Iterate ``x_{k+1} = x_k - h_k g_k`` for ``config.max_iters`` steps.

    ``source`` is ``None`` for full gradients, else a mini-batch oracle whose
    seed is replaced by ``config.seed``.  Policy failures end the run with
    ``terminal == "error"`` and the partial history kept.
    """
    if config.x0.shape != (problem.dimension,):
        raise ValueError(f"x0 has shape {config.x0.shape}, problem dimension is {problem.dimension}")
    oracle = None
    if source is not None:
        oracle = MiniBatchOracle(source.batch_size, source.sampling, config.seed,
                                 source.moment_mode, source.moment_samples)
    has_q = problem.x_star is not None
    rec = _Recorder(config.record_stride)
    state = PolicyState()
    x = config.x0.copy()
    terminal = "max_iters"
    error = None
    last = config.max_iters - 1

    for k in range(config.max_iters):
        f = problem.value(x)
        g_full = problem.gradient(x)
        gn2 = float(g_full @ g_full)
        gn = math.sqrt(gn2)
        q = problem.q(x) if has_q else math.nan
        if config.stop_grad_norm > 0 and gn <= config.stop_grad_norm:
            rec.add(k, f, q, math.nan, gn, force=True)
            terminal = "converged"
            break
        if oracle is None:
            moment = gn2
        else:
            def moment(x=x, k=k):
                return noise_second_moment(problem, oracle, x, k).value
        ctx = StepContext(k=k, f_x=f, grad_norm_sq=gn2, second_moment=moment)
        try:
            h, state = compute_h(policy, ctx, state)
        except Converged:
            rec.add(k, f, q, math.nan, gn, force=True)
            terminal = "converged"
            break
        except (ValueError, KeyError) as exc:
            rec.add(k, f, q, math.nan, gn, force=True)
            terminal = "error"
            error = RunError(k, exc)
            break
        if h == 0:
            # the iterate sits at the f_star level: nothing left to do
            rec.add(k, f, q, math.nan, gn, force=True)
            terminal = "converged"
            break
        rec.add(k, f, q, h, gn, force=k == last)
        g = g_full if oracle is None else minibatch_gradient(oracle, problem, x, k)
        try:
            x = step(x, h, g)
        except (ValueError, FloatingPointError) as exc:
            terminal = "error"
            error = RunError(k, exc)
            break
        if not np.all(np.isfinite(x)):
            terminal = "error"
            error = RunError(k, FloatingPointError("iterate diverged"))
            break

    k_, f_, q_, h_, g_ = rec.columns()
    return Trajectory(k_, f_, q_, h_, g_, terminal, x, error, config.seed)
