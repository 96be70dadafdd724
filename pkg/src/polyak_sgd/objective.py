"""Strongly convex test problems and their gradient oracles.

Every problem is a finite sum ``f(x) = (1/N) sum_i f_i(x)`` with known
strong-convexity constant ``mu``, smoothness constant ``ell``, minimum
``f_star`` and minimizer ``x_star``.  A :class:`MiniBatchOracle` turns the
per-sample decomposition into stochastic gradients.

Problem kinds
-------------
centroid
    ``f(x) = 1/(2N) sum ||x - x_i||^2``; ``mu = ell = 1``.
quadratic
    ``f(x) = 1/2 sum_j lam_j (x_j - c_j)^2 + offset``.  The per-sample split
    is by coordinate: ``f_j(x) = d/2 lam_j (x_j - c_j)^2 + offset`` so the
    noise vanishes at the minimizer.
logistic
    L2-regularised logistic regression.  ``x_star`` is found by Newton's
    method at construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

SEED_MASK = (1 << 64) - 1

# stream tags for the per-step generator
_BATCH_STREAM = 0
_MOMENT_STREAM = 1


def _as_vector(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (d,):
        raise ValueError(f"expected a vector of length {d}, got shape {x.shape}")
    return x


class Problem:
    """Base class for finite-sum problems with known constants."""

    kind: str = ""
    mu: float
    ell: float
    f_star: float
    x_star: np.ndarray | None

    @property
    def dimension(self) -> int:
        raise NotImplementedError

    @property
    def n_samples(self) -> int:
        raise NotImplementedError

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample_gradients(self, x, idx) -> np.ndarray:
        """Gradients of the individual terms ``f_i`` for ``i`` in ``idx``."""
        raise NotImplementedError

    def sample_spread(self, x) -> float:
        """Mean squared deviation of per-sample gradients from the full gradient."""
        x = _as_vector(x, self.dimension)
        G = self.sample_gradients(x, np.arange(self.n_samples))
        dev = G - G.mean(axis=0)
        return float(np.mean(np.einsum("ij,ij->i", dev, dev)))

    def spread_bound(self, radius: float) -> float:
        """Upper bound on :meth:`sample_spread` over the ball of ``radius`` around x*."""
        raise NotImplementedError

    def q(self, x) -> float:
        """Half squared distance to the minimizer."""
        if self.x_star is None:
            raise ValueError("minimizer unknown for this problem")
        diff = _as_vector(x, self.dimension) - self.x_star
        return 0.5 * float(diff @ diff)


class Centroid(Problem):
    kind = "centroid"

    def __init__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("points must be an (N, d) array with N >= 1")
        self.points = points
        self.mu = 1.0
        self.ell = 1.0
        self.x_star = points.mean(axis=0)
        dev = points - self.x_star
        sq = np.einsum("ij,ij->i", dev, dev)
        self._spread = float(sq.mean())
        self.f_star = 0.5 * self._spread

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def n_samples(self) -> int:
        return self.points.shape[0]

    def value(self, x) -> float:
        # parallel-axis form; avoids cancellation in f - f*
        diff = _as_vector(x, self.dimension) - self.x_star
        return self.f_star + 0.5 * float(diff @ diff)

    def gradient(self, x) -> np.ndarray:
        return _as_vector(x, self.dimension) - self.x_star

    def sample_gradients(self, x, idx) -> np.ndarray:
        x = _as_vector(x, self.dimension)
        return x - self.points[np.asarray(idx)]

    def sample_spread(self, x) -> float:
        _as_vector(x, self.dimension)
        return self._spread

    def spread_bound(self, radius: float) -> float:
        return self._spread


class Quadratic(Problem):
    kind = "quadratic"

    def __init__(self, eigenvalues, center=None, offset: float = 0.0):
        lam = np.asarray(eigenvalues, dtype=np.float64).ravel()
        if lam.size == 0 or np.any(lam <= 0) or not np.all(np.isfinite(lam)):
            raise ValueError("eigenvalues must be positive and finite")
        self.eigenvalues = lam
        center = np.zeros_like(lam) if center is None else np.asarray(center, dtype=np.float64)
        self.center = _as_vector(center, lam.size).copy()
        self.offset = float(offset)
        self.mu = float(lam.min())
        self.ell = float(lam.max())
        self.x_star = self.center
        self.f_star = self.offset

    @property
    def dimension(self) -> int:
        return self.eigenvalues.size

    @property
    def n_samples(self) -> int:
        return self.eigenvalues.size

    def value(self, x) -> float:
        y = _as_vector(x, self.dimension) - self.center
        return self.offset + 0.5 * float(np.sum(self.eigenvalues * y * y))

    def gradient(self, x) -> np.ndarray:
        return self.eigenvalues * (_as_vector(x, self.dimension) - self.center)

    def sample_gradients(self, x, idx) -> np.ndarray:
        y = _as_vector(x, self.dimension) - self.center
        idx = np.asarray(idx).ravel()
        d = self.dimension
        G = np.zeros((idx.size, d))
        G[np.arange(idx.size), idx] = d * self.eigenvalues[idx] * y[idx]
        return G

    def sample_spread(self, x) -> float:
        g = self.gradient(x)
        return (self.dimension - 1) * float(g @ g)

    def spread_bound(self, radius: float) -> float:
        return (self.dimension - 1) * (self.ell * radius) ** 2


class Logistic(Problem):
    kind = "logistic"

    def __init__(self, design, labels, lam: float, tol: float = 1e-12):
        A = np.atleast_2d(np.asarray(design, dtype=np.float64))
        y = np.asarray(labels, dtype=np.float64).ravel()
        if y.size != A.shape[0]:
            raise ValueError("labels and design rows differ in length")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if lam <= 0:
            raise ValueError("lambda must be positive")
        self.design = A
        self.labels = y
        self.lam = float(lam)
        n = A.shape[0]
        self.mu = self.lam
        self.ell = self.lam + np.linalg.norm(A, 2) ** 2 / (4 * n)
        self._row_sq_mean = float(np.mean(np.einsum("ij,ij->i", A, A)))
        self.x_star = _newton_minimize(self, tol)
        self.f_star = self.value(self.x_star)

    @property
    def dimension(self) -> int:
        return self.design.shape[1]

    @property
    def n_samples(self) -> int:
        return self.design.shape[0]

    def _margins(self, x):
        return self.labels * (self.design @ x)

    def value(self, x) -> float:
        x = _as_vector(x, self.dimension)
        loss = np.logaddexp(0.0, -self._margins(x)).mean()
        return float(loss + 0.5 * self.lam * (x @ x))

    def gradient(self, x) -> np.ndarray:
        x = _as_vector(x, self.dimension)
        s = _sigmoid(-self._margins(x))
        return -(self.design.T @ (self.labels * s)) / self.n_samples + self.lam * x

    def hessian(self, x) -> np.ndarray:
        x = _as_vector(x, self.dimension)
        p = _sigmoid(self._margins(x))
        w = p * (1.0 - p)
        H = (self.design.T * w) @ self.design / self.n_samples
        return H + self.lam * np.eye(self.dimension)

    def sample_gradients(self, x, idx) -> np.ndarray:
        x = _as_vector(x, self.dimension)
        idx = np.asarray(idx).ravel()
        A = self.design[idx]
        y = self.labels[idx]
        s = _sigmoid(-y * (A @ x))
        return -(y * s)[:, None] * A + self.lam * x

    def spread_bound(self, radius: float) -> float:
        # per-sample loss gradients have norm <= ||a_i||; the ridge term cancels
        return self._row_sq_mean


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _newton_minimize(problem: Logistic, tol: float, max_iter: int = 100) -> np.ndarray:
    x = np.zeros(problem.dimension)
    best = math.inf
    for _ in range(max_iter):
        g = problem.gradient(x)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            break
        if gn >= best:
            # round-off floor reached
            break
        best = gn
        x = x - np.linalg.solve(problem.hessian(x), g)
    return x


# --- problem constructors -------------------------------------------------


def gaussian_cloud(n: int, d: int = 2, mean=0.0, scale: float = 1.0, seed: int = 0) -> Centroid:
    """Centroid problem over ``n`` Gaussian points in ``d`` dimensions."""
    rng = np.random.default_rng(seed & SEED_MASK)
    center = np.broadcast_to(np.asarray(mean, dtype=np.float64), (d,))
    return Centroid(center + scale * rng.standard_normal((n, d)))


def random_quadratic(d: int, mu: float, ell: float, seed: int = 0, center=None, offset: float = 0.0) -> Quadratic:
    """Diagonal quadratic whose spectrum spans exactly ``[mu, ell]``."""
    if not 0 < mu <= ell:
        raise ValueError("need 0 < mu <= ell")
    rng = np.random.default_rng(seed & SEED_MASK)
    lam = rng.uniform(mu, ell, size=d)
    lam[0] = mu
    if d > 1:
        lam[-1] = ell
    rng.shuffle(lam)
    return Quadratic(lam, center, offset)


def random_logistic(n: int, d: int = 2, lam: float = 0.1, seed: int = 0, label_noise: float = 0.1) -> Logistic:
    """Logistic regression on Gaussian features with a planted separator."""
    rng = np.random.default_rng(seed & SEED_MASK)
    A = rng.standard_normal((n, d))
    w = rng.standard_normal(d)
    y = np.where(A @ w >= 0, 1.0, -1.0)
    flip = rng.random(n) < label_noise
    y[flip] = -y[flip]
    return Logistic(A, y, lam)


def load_samples(path) -> np.ndarray:
    """Read a numeric sample file: one row per line, commas or whitespace.

    Lines starting with ``#`` are ignored except a leading ``# d=<int>``
    header, which is checked against the row width.
    """
    path = Path(path)
    rows = []
    declared = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text:
                continue
            if text.startswith("#"):
                body = text[1:].strip().replace(" ", "")
                if lineno == 1 and body.startswith("d="):
                    declared = int(body[2:])
                continue
            try:
                rows.append([float(tok) for tok in text.replace(",", " ").split()])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ValueError(f"{path}: row {i + 1} has {len(r)} columns, expected {width}")
    data = np.array(rows)
    if declared is not None and declared not in (width, width - 1):
        raise ValueError(f"{path}: header declares d={declared} but rows have {width} columns")
    return data


# --- oracles ---------------------------------------------------------------


@dataclass(frozen=True)
class MiniBatchOracle:
    """Stochastic gradients from random mini-batches.

    The batch drawn at ``step_index`` depends only on ``(seed, step_index)``:
    each step gets its own Philox generator keyed by a ``SeedSequence`` of
    ``(seed, step_index, stream)``.
    """

    batch_size: int
    sampling: str = "without"
    seed: int = 0
    moment_mode: str = "auto"
    moment_samples: int = 64

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.sampling not in ("with", "without"):
            raise ValueError("sampling must be 'with' or 'without'")
        if self.moment_mode not in ("auto", "exact", "estimated"):
            raise ValueError("moment_mode must be auto, exact or estimated")
        if self.moment_samples < 2:
            raise ValueError("moment_samples must be at least 2")

    def generator(self, step_index: int, stream: int = _BATCH_STREAM) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed & SEED_MASK, int(step_index), stream])
        return np.random.Generator(np.random.Philox(ss))

    def draw(self, n: int, rng: np.random.Generator, count: int | None = None) -> np.ndarray:
        if self.batch_size > n:
            raise ValueError(f"batch size {self.batch_size} exceeds sample count {n}")
        m = self.batch_size
        if count is None:
            if self.sampling == "with":
                return rng.integers(0, n, size=m)
            return rng.choice(n, size=m, replace=False)
        if self.sampling == "with":
            return rng.integers(0, n, size=(count, m))
        # disjoint batches cut from random permutations; each is uniform
        per_perm = n // m
        n_perm = -(-count // per_perm)
        perms = rng.random((n_perm, n)).argsort(axis=1)[:, : per_perm * m]
        return perms.reshape(n_perm * per_perm, m)[:count]

    def batch_indices(self, n: int, step_index: int) -> np.ndarray:
        return self.draw(n, self.generator(step_index))

    def variance_factor(self, n: int) -> float:
        """Ratio of mini-batch gradient variance to per-sample spread."""
        m = self.batch_size
        if m > n:
            raise ValueError(f"batch size {m} exceeds sample count {n}")
        if self.sampling == "with":
            return 1.0 / m
        if n == 1:
            return 0.0
        return (n - m) / (m * (n - 1))


def full_value(problem: Problem, x) -> float:
    return problem.value(x)


def full_gradient(problem: Problem, x) -> np.ndarray:
    return problem.gradient(x)


def batch_gradient(problem: Problem, x, idx) -> np.ndarray:
    """Gradient of the sub-objective over the samples in ``idx``."""
    return problem.sample_gradients(x, idx).mean(axis=0)


def minibatch_gradient(oracle: MiniBatchOracle, problem: Problem, x, step_index: int) -> np.ndarray:
    idx = oracle.batch_indices(problem.n_samples, step_index)
    return batch_gradient(problem, x, idx)


class SecondMoment(NamedTuple):
    value: float
    mode: str
    stderr: float = 0.0


def noise_second_moment(problem: Problem, oracle: MiniBatchOracle, x, step_index: int = 0,
                        samples: int | None = None) -> SecondMoment:
    """``E ||grad_mb f(x)||^2`` for the oracle's batch distribution.

    Exact for centroid and quadratic problems; logistic problems default to
    a Monte-Carlo average over ``oracle.moment_samples`` batches drawn from a
    stream separate from the step's own batch.
    """
    x = _as_vector(x, problem.dimension)
    mode = oracle.moment_mode
    if mode == "auto":
        mode = "estimated" if problem.kind == "logistic" else "exact"
    n = problem.n_samples
    if mode == "exact":
        factor = oracle.variance_factor(n)
        g = problem.gradient(x)
        return SecondMoment(float(g @ g) + factor * problem.sample_spread(x), "exact")
    k = oracle.moment_samples if samples is None else int(samples)
    rng = oracle.generator(step_index, _MOMENT_STREAM)
    idx = oracle.draw(n, rng, count=k)
    if idx.size > n:
        G = problem.sample_gradients(x, np.arange(n))[idx].mean(axis=1)
    else:
        G = problem.sample_gradients(x, idx.ravel()).reshape(k, oracle.batch_size, -1).mean(axis=1)
    sq = np.einsum("ij,ij->i", G, G)
    return SecondMoment(float(sq.mean()), "estimated", float(sq.std(ddof=1) / math.sqrt(k)))


def noise_variance_bound(problem: Problem, oracle: MiniBatchOracle | None, radius: float) -> float:
    """Ceiling on the gradient-noise variance over the ball of ``radius`` around x*."""
    if oracle is None:
        return 0.0
    return oracle.variance_factor(problem.n_samples) * problem.spread_bound(radius)
