import itertools
import math

import numpy as np
import pytest

from polyak_sgd import objective
from polyak_sgd.objective import (Centroid, MiniBatchOracle, Quadratic, batch_gradient, full_gradient,
                                  full_value, minibatch_gradient, noise_second_moment)


def two_points():
    return Centroid([[0.0, 0.0], [2.0, 0.0]])


def all_problems():
    return [
        objective.gaussian_cloud(30, 3, mean=1.0, scale=2.0, seed=1),
        objective.random_quadratic(6, 0.5, 20.0, seed=2, center=np.arange(6.0), offset=-3.0),
        objective.random_logistic(80, 4, lam=0.05, seed=3),
    ]


def central_difference(f, x, eps=1e-5):
    return np.array([(f(x + eps * e) - f(x - eps * e)) / (2 * eps) for e in np.eye(len(x))])


def test_centroid_value_by_hand():
    assert full_value(two_points(), [1.0, 0.0]) == pytest.approx(0.5, rel=1e-15)


def test_centroid_value_matches_direct_sum():
    p = objective.gaussian_cloud(50, 2, seed=7)
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.standard_normal(2) * 3
        direct = np.sum((x - p.points) ** 2) / (2 * p.n_samples)
        assert full_value(p, x) == pytest.approx(direct, rel=1e-12)


def test_centroid_closed_forms():
    p = objective.gaussian_cloud(40, 2, seed=3)
    np.testing.assert_allclose(p.x_star, p.points.mean(axis=0), rtol=1e-15)
    assert p.mu == p.ell == 1.0
    direct = np.sum((p.x_star - p.points) ** 2) / (2 * p.n_samples)
    assert p.f_star == pytest.approx(direct, rel=1e-12)


def test_centroid_gradient_at_mean_is_zero():
    np.testing.assert_array_equal(full_gradient(two_points(), [1.0, 0.0]), [0.0, 0.0])


@pytest.mark.parametrize("x, expected", [((0.0, 0.0), 0.0), ((1.0, 0.0), 0.5), ((0.0, 1.0), 5.0)])
def test_quadratic_values(x, expected):
    q = Quadratic([1.0, 10.0], [0.0, 0.0], 0.0)
    assert full_value(q, x) == expected


def test_quadratic_gradient():
    q = Quadratic([1.0, 10.0])
    np.testing.assert_array_equal(full_gradient(q, [1.0, 1.0]), [1.0, 10.0])


def test_quadratic_constants():
    q = Quadratic([3.0, 1.5, 7.0], center=[1, 2, 3], offset=2.5)
    assert (q.mu, q.ell, q.f_star) == (1.5, 7.0, 2.5)
    np.testing.assert_array_equal(q.x_star, [1, 2, 3])


def test_random_quadratic_hits_requested_spectrum():
    q = objective.random_quadratic(10, 1.0, 10.0, seed=4)
    assert q.mu == 1.0 and q.ell == 10.0


@pytest.mark.parametrize("problem", all_problems(), ids=lambda p: p.kind)
def test_minimizer_invariants(problem):
    g = full_gradient(problem, problem.x_star)
    assert np.linalg.norm(g) <= 1e-10 * max(1.0, np.linalg.norm(problem.x_star))
    assert full_value(problem, problem.x_star) == pytest.approx(problem.f_star, rel=1e-12)
    assert problem.mu <= problem.ell


@pytest.mark.parametrize("problem", all_problems(), ids=lambda p: p.kind)
def test_gradient_matches_finite_differences(problem):
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = problem.x_star + rng.standard_normal(problem.dimension)
        fd = central_difference(problem.value, x)
        g = full_gradient(problem, x)
        assert np.linalg.norm(fd - g) <= 1e-6 * np.linalg.norm(g)


@pytest.mark.parametrize("problem", all_problems(), ids=lambda p: p.kind)
def test_strong_convexity_and_smoothness_witnesses(problem):
    rng = np.random.default_rng(5)
    X = problem.x_star + 3 * rng.standard_normal((10_000, problem.dimension))
    for x in X:
        gap = problem.value(x) - problem.f_star
        g = problem.gradient(x)
        assert gap >= problem.mu * problem.q(x) - 1e-10
        assert 2 * problem.ell * gap >= g @ g - 1e-10


def test_logistic_smoothness_constant_bounds_hessian():
    p = objective.random_logistic(200, 3, lam=0.2, seed=9)
    rng = np.random.default_rng(0)
    for _ in range(20):
        ev = np.linalg.eigvalsh(p.hessian(rng.standard_normal(3)))
        assert p.mu - 1e-12 <= ev.min() and ev.max() <= p.ell + 1e-12


def test_logistic_rejects_bad_labels():
    with pytest.raises(ValueError):
        objective.Logistic(np.ones((3, 2)), [1, 0, -1], 0.1)


@pytest.mark.parametrize("problem", all_problems(), ids=lambda p: p.kind)
def test_sample_gradients_average_to_full_gradient(problem):
    x = problem.x_star + 0.7
    G = problem.sample_gradients(x, np.arange(problem.n_samples))
    np.testing.assert_allclose(G.mean(axis=0), problem.gradient(x), rtol=1e-12, atol=1e-14)


def test_dimension_mismatch_raises():
    with pytest.raises(ValueError):
        full_value(two_points(), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        full_gradient(Quadratic([1.0, 2.0]), [1.0])


# --- oracle ---------------------------------------------------------------


def test_full_batch_equals_full_gradient():
    p = objective.gaussian_cloud(10, 2, seed=0)
    o = MiniBatchOracle(10)
    x = np.array([0.3, -1.2])
    np.testing.assert_allclose(minibatch_gradient(o, p, x, 5), p.gradient(x), rtol=1e-14, atol=1e-15)


def test_minibatch_is_deterministic():
    p = objective.gaussian_cloud(100, 2, seed=0)
    o = MiniBatchOracle(7, seed=42)
    x = np.array([1.0, 2.0])
    a = minibatch_gradient(o, p, x, 13)
    b = minibatch_gradient(o, p, x, 13)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, minibatch_gradient(o, p, x, 14))


def test_batch_indices_are_distinct_without_replacement():
    o = MiniBatchOracle(50, seed=3)
    for k in range(20):
        idx = o.batch_indices(60, k)
        assert len(set(idx.tolist())) == 50


def test_batch_larger_than_data_raises():
    p = objective.gaussian_cloud(5, 2)
    with pytest.raises(ValueError):
        minibatch_gradient(MiniBatchOracle(6), p, np.zeros(2), 0)


def test_unbiased_by_enumeration_centroid():
    p = objective.gaussian_cloud(5, 2, seed=1)
    x = np.array([0.4, -0.9])
    subsets = list(itertools.combinations(range(5), 2))
    assert len(subsets) == 10
    mean = np.mean([batch_gradient(p, x, s) for s in subsets], axis=0)
    np.testing.assert_allclose(mean, full_gradient(p, x), atol=1e-12)


@pytest.mark.parametrize("problem", all_problems()[:2], ids=lambda p: p.kind)
@pytest.mark.parametrize("sampling", ["with", "without"])
def test_exact_second_moment_by_enumeration(problem, sampling):
    n = min(problem.n_samples, 6)
    if problem.kind == "centroid":
        problem = Centroid(problem.points[:n])
    m = 2
    x = problem.x_star + 0.3
    if sampling == "without":
        batches = list(itertools.combinations(range(problem.n_samples), m))
    else:
        batches = list(itertools.product(range(problem.n_samples), repeat=m))
    sq = [float(np.sum(batch_gradient(problem, x, b) ** 2)) for b in batches]
    o = MiniBatchOracle(m, sampling)
    sm = noise_second_moment(problem, o, x)
    assert sm.mode == "exact"
    assert sm.value == pytest.approx(np.mean(sq), rel=1e-12)


def test_full_batch_second_moment_is_squared_gradient():
    p = objective.gaussian_cloud(12, 2, seed=2)
    x = np.array([1.0, 1.0])
    g = p.gradient(x)
    assert noise_second_moment(p, MiniBatchOracle(12), x).value == pytest.approx(g @ g, rel=1e-12)


def test_estimated_second_moment_converges_to_enumeration():
    p = objective.random_logistic(8, 2, lam=0.1, seed=6)
    x = p.x_star + np.array([0.5, -0.4])
    o = MiniBatchOracle(3, seed=9)
    exact = np.mean([np.sum(batch_gradient(p, x, b) ** 2)
                     for b in itertools.combinations(range(8), 3)])
    est = noise_second_moment(p, o, x, step_index=0, samples=20_000)
    assert est.mode == "estimated"
    assert abs(est.value - exact) <= 3 * est.stderr
    assert noise_second_moment(p, o, x, 0) == noise_second_moment(p, o, x, 0)


def test_variance_bound_dominates_exact_noise():
    rng = np.random.default_rng(1)
    o = MiniBatchOracle(4)
    for p in all_problems():
        radius = 2.0
        bound = objective.noise_variance_bound(p, o, radius)
        for _ in range(200):
            u = rng.standard_normal(p.dimension)
            x = p.x_star + radius * rng.uniform() * u / np.linalg.norm(u)
            g = p.gradient(x)
            exact = MiniBatchOracle(4, moment_mode="exact")
            assert noise_second_moment(p, exact, x).value - g @ g <= bound + 1e-12


def test_load_samples_formats(tmp_path):
    f = tmp_path / "pts.txt"
    f.write_text("# d=2\n1, 2\n3 4\n\n5,6\n")
    np.testing.assert_array_equal(objective.load_samples(f), [[1, 2], [3, 4], [5, 6]])
    bad = tmp_path / "bad.txt"
    bad.write_text("# d=3\n1 2\n")
    with pytest.raises(ValueError):
        objective.load_samples(bad)
    ragged = tmp_path / "ragged.txt"
    ragged.write_text("1 2\n3\n")
    with pytest.raises(ValueError, match="row 2"):
        objective.load_samples(ragged)


def test_gaussian_cloud_parameters():
    p = objective.gaussian_cloud(4000, 3, mean=5.0, scale=0.5, seed=0)
    np.testing.assert_allclose(p.x_star, 5.0, atol=0.05)
    # f* is half the mean squared radius: d * scale^2 / 2
    assert p.f_star == pytest.approx(3 * 0.25 / 2, rel=0.05)
    assert not math.isnan(p.f_star)
