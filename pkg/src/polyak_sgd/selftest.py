"""Fast invariant checks behind ``polyak-sgd selftest``."""

from __future__ import annotations

import itertools

import numpy as np

from . import objective, stepsize, theory
from .optimizer import RunConfig, run


def _problems(rng):
    return [
        objective.gaussian_cloud(12, 2, seed=1),
        objective.random_quadratic(5, 1.0, 10.0, seed=2),
        objective.random_logistic(60, 3, 0.05, seed=3),
    ]


def check_gradients(rng, n=20):
    worst = 0.0
    for p in _problems(rng):
        for _ in range(n):
            x = p.x_star + rng.standard_normal(p.dimension)
            eps = 1e-5
            fd = np.array([(p.value(x + eps * e) - p.value(x - eps * e)) / (2 * eps)
                           for e in np.eye(p.dimension)])
            g = p.gradient(x)
            worst = max(worst, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12))
    return worst <= 1e-6, f"max relative error {worst:.2e}"


def check_toolbox(rng, n=500):
    fails = 0
    for p in _problems(rng):
        for _ in range(n):
            x = p.x_star + 2 * rng.standard_normal(p.dimension)
            y = p.x_star + 2 * rng.standard_normal(p.dimension)
            fails += not theory.verify_convex_toolbox(p, x, y).passed
    return fails == 0, f"{fails} failing pairs"


def check_plr_bracket(rng, n=2000):
    bad = 0
    for _ in range(10):
        p = objective.random_quadratic(6, 1.0, float(rng.uniform(1, 50)), seed=int(rng.integers(1 << 30)))
        for _ in range(n // 10):
            x = p.x_star + rng.standard_normal(6)
            g = p.gradient(x)
            h = stepsize.plr(p.value(x), p.f_star, float(g @ g))
            bad += not (1 / p.ell - 1e-12 <= h <= 1 / p.mu + 1e-12)
    return bad == 0, f"{bad} out of bracket"


def check_lemma(rng, n=2000):
    bad = 0
    for _ in range(n):
        b = rng.uniform(1e-3, 100)
        beta = rng.uniform(1e-6, 10)
        r = rng.uniform(0, 1)
        k = int(rng.integers(0, 1001))
        c = theory.lemma_c(b, beta, r)
        bad += theory.t_transform(1 / (c * k + b), beta, r) > 1 / (c * (k + 1) + b) + 1e-12
    return bad == 0, f"{bad} violations"


def check_comparison(rng, n=2000):
    bad = 0
    for _ in range(n):
        mu = rng.uniform(0.1, 3)
        ell = mu * rng.uniform(1.01, 20)
        s2 = rng.uniform(0, 5)
        M = rng.uniform(0.1, 10)
        q0 = rng.uniform(0.01, 10)
        lhs = theory.alpha_polyak(mu, ell, s2, q0) >= theory.alpha_scheduled(mu, s2, M)
        bad += lhs != theory.polyak_at_least_scheduled(q0, M, mu, ell)
    return bad == 0, f"{bad} mismatches"


def check_unbiased(rng):
    p = objective.gaussian_cloud(6, 2, seed=4)
    x = rng.standard_normal(2)
    err = 0.0
    for m in (1, 2, 3):
        subsets = list(itertools.combinations(range(6), m))
        mean = np.mean([objective.batch_gradient(p, x, s) for s in subsets], axis=0)
        err = max(err, float(np.max(np.abs(mean - p.gradient(x)))))
    return err <= 1e-12, f"max deviation {err:.1e}"


def check_linear_rate(rng):
    p = objective.random_quadratic(8, 1.0, 10.0, seed=5)
    x0 = p.x_star + rng.standard_normal(8)
    t = run(p, None, stepsize.StepPolicy.polyak(p.f_star), RunConfig(x0, 100))
    b = theory.agd_curve(p.mu, p.ell, t.q0, 100)[t.k]
    ok = bool(np.all(t.q <= b + 1e-12))
    return ok, f"max q/bound {float(np.max(t.q / np.maximum(b, 1e-300))):.3f}"


CHECKS = {
    "gradient-finite-difference": check_gradients,
    "convex-toolbox": check_toolbox,
    "polyak-step-bracket": check_plr_bracket,
    "t-transform-lemma": check_lemma,
    "rate-comparison": check_comparison,
    "minibatch-unbiased": check_unbiased,
    "deterministic-linear-rate": check_linear_rate,
}


def run_selftest(seed: int = 0):
    """Run every check; yields ``(name, passed, detail)``."""
    rng = np.random.default_rng(seed)
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # report, never crash the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
