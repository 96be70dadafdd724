"""Rate constants and non-asymptotic bounds for scheduled and Polyak SGD.

All bounds control ``q = 1/2 ||x - x*||^2`` (note the one-half).

The Polyak constant is::

    alpha_P = 2 mu^2 / (sigma^2 + 2 mu (L - mu) q0)

which is exactly the constant ``c`` that makes the one-step transformation
``T`` dominate the sequence ``1/(c k + 1/q0)``.  The comparison threshold
follows from the same expression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class _Unbounded:
    """Marker for an infinite comparison threshold (mu == L)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    __str__ = __repr__


UNBOUNDED = _Unbounded()


def _positive(**kw):
    for name, v in kw.items():
        if not (v > 0 and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")


def _curvature(mu, ell):
    _positive(mu=mu, ell=ell)
    if ell < mu:
        raise ValueError("need mu <= ell")


def alpha_scheduled(mu: float, sigma2: float, M: float) -> float:
    _positive(mu=mu, M=M)
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    return 2.0 * mu * mu / (sigma2 + M * M)


def alpha_polyak(mu: float, ell: float, sigma2: float, q0: float) -> float:
    _curvature(mu, ell)
    _positive(q0=q0)
    if sigma2 < 0:
        raise ValueError("sigma2 must be non-negative")
    denom = sigma2 + 2.0 * mu * (ell - mu) * q0
    if denom == 0:
        # noiseless and isotropic: one Polyak step lands on x*
        return math.inf
    return 2.0 * mu * mu / denom


def sgd_bound(alpha: float, q0: float, k):
    """``1 / (alpha k + 1/q0)``; ``k`` may be an array."""
    _positive(alpha=alpha, q0=q0)
    k = np.asarray(k, dtype=np.float64)
    if np.any(k < 0):
        raise ValueError("k must be non-negative")
    out = 1.0 / (alpha * k + 1.0 / q0)
    return float(out) if out.ndim == 0 else out


def agd_bound(mu: float, ell: float, q0: float, k: int) -> float:
    """``(1 - mu/L)^k q0``, built by repeated multiplication."""
    _curvature(mu, ell)
    if q0 < 0:
        raise ValueError("q0 must be non-negative")
    if k < 0:
        raise ValueError("k must be non-negative")
    r = 1.0 - mu / ell
    b = q0
    for _ in range(int(k)):
        b *= r
    return b


def agd_curve(mu: float, ell: float, q0: float, kmax: int) -> np.ndarray:
    """``agd_bound`` for ``k = 0..kmax`` with identical rounding."""
    _curvature(mu, ell)
    r = 1.0 - mu / ell
    out = np.empty(kmax + 1)
    b = q0
    for k in range(kmax + 1):
        out[k] = b
        b *= r
    return out


@dataclass(frozen=True)
class ContractionParams:
    r: float
    beta: float


def contraction_params(mu: float, ell: float, sigma2: float) -> ContractionParams:
    _curvature(mu, ell)
    return ContractionParams(1.0 - mu / ell, sigma2 / (2.0 * mu * ell))


def _check_tr(beta, r):
    _positive(beta=beta)
    if not 0 <= r < 1:
        raise ValueError("r must lie in [0, 1)")


def t_transform(x: float, beta: float, r: float) -> float:
    """One-step map ``T(x) = (beta + r x)/(beta + x) * x``."""
    _check_tr(beta, r)
    if x < 0:
        raise ValueError("x must be non-negative")
    return (beta + r * x) / (beta + x) * x


def lemma_c(b: float, beta: float, r: float) -> float:
    """Slope ``c`` for which ``T(1/(ck + b)) <= 1/(c(k+1) + b)`` for all k >= 0."""
    _positive(b=b)
    _check_tr(beta, r)
    return (1.0 - r) / (beta + r / b)


def comparison_threshold(M: float, mu: float, ell: float):
    """Largest ``q0`` for which ``alpha_polyak >= alpha_scheduled``.

    Returns :data:`UNBOUNDED` when ``mu == ell``.
    """
    _positive(M=M)
    _curvature(mu, ell)
    if ell == mu:
        return UNBOUNDED
    return M * M / (2.0 * mu * (ell - mu))


def polyak_at_least_scheduled(q0: float, M: float, mu: float, ell: float) -> bool:
    t = comparison_threshold(M, mu, ell)
    return t is UNBOUNDED or q0 <= t


@dataclass(frozen=True)
class RateConstants:
    mu: float
    ell: float
    q0: float
    sigma2: float
    M_bound: float
    alpha_S: float = field(init=False)
    alpha_P: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "alpha_S", alpha_scheduled(self.mu, self.sigma2, self.M_bound))
        object.__setattr__(self, "alpha_P", alpha_polyak(self.mu, self.ell, self.sigma2, self.q0))

    @property
    def threshold(self):
        return comparison_threshold(self.M_bound, self.mu, self.ell)


@dataclass(frozen=True)
class BoundCurve:
    """A bound ``k -> value`` with the constant that produced it."""

    k: np.ndarray
    values: np.ndarray
    alpha: float | None
    source: str


def bound_curve(kind: str, kmax: int, *, mu=None, ell=None, q0=None, alpha=None) -> BoundCurve:
    """Bound curve for ``k = 0..kmax``: ``kind`` is ``"sgd"`` or ``"agd"``."""
    k = np.arange(kmax + 1)
    if kind == "sgd":
        return BoundCurve(k, sgd_bound(alpha, q0, k), alpha, "sgd")
    if kind == "agd":
        return BoundCurve(k, agd_curve(mu, ell, q0, kmax), 1.0 - mu / ell, "agd")
    raise ValueError(f"unknown bound kind {kind!r}")


def gradient_ceiling(problem, x0) -> float:
    """Estimate of ``max_k ||grad f(x_k)||``: ``||grad f(x0)|| + L sqrt(2 q0)``."""
    g0 = float(np.linalg.norm(problem.gradient(x0)))
    return g0 + problem.ell * math.sqrt(2.0 * problem.q(x0))


@dataclass
class ToolboxReport:
    slacks: dict[str, float]
    tol: float

    @property
    def passed(self) -> bool:
        return all(self.checks().values())

    def checks(self) -> dict[str, bool]:
        out = {}
        for name, s in self.slacks.items():
            out[name] = abs(s) <= self.tol if name == "q_identity" else s >= -self.tol
        return out


def verify_convex_toolbox(problem, x, y, tol: float = 1e-10, mu: float | None = None,
                          ell: float | None = None) -> ToolboxReport:
    """Evaluate the four basic strongly-convex inequalities at ``(x, y)``.

    Slacks are ``lhs - rhs`` (non-negative when an inequality holds; zero for
    the q identity).  ``mu``/``ell`` override the problem constants, which is
    how corrupted constants are probed.
    """
    if problem.x_star is None:
        raise ValueError("verify_convex_toolbox needs a known minimizer")
    mu = problem.mu if mu is None else mu
    ell = problem.ell if ell is None else ell
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xs = problem.x_star
    fx = problem.value(x)
    gx = problem.gradient(x)
    qx = problem.q(x)
    gap = fx - problem.f_star
    slacks = {
        "growth": gap - mu * qx,
        # f* - (f(x) + g.(x* - x)) >= mu q(x)
        "first_order": problem.f_star - (fx + gx @ (xs - x)) - mu * qx,
        "gradient_bound": 2.0 * ell * gap - gx @ gx,
        "q_identity": (qx - problem.q(y)) - ((x - y) @ (y - xs) + 0.5 * (x - y) @ (x - y)),
    }
    return ToolboxReport({k: float(v) for k, v in slacks.items()}, tol)
