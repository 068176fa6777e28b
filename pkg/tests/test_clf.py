import numpy as np
import pytest

from proxhold.clf import (
    Clf,
    check_decay,
    dini_derivative,
    get_clf,
    nonholonomic_clf,
    probe_uniformity,
    quadratic_clf,
)
from proxhold.systems import ControlSystem, nonholonomic_integrator


def test_nonholonomic_value_examples():
    clf = nonholonomic_clf()
    expected = 1.27 - 0.2 * np.sqrt(1.25)
    assert abs(float(clf.value(np.array([1.0, 0.5, -0.1]))) - expected) < 1e-12
    assert float(clf.value(np.zeros(3))) == 0.0
    assert abs(float(clf.value(np.array([0.0, 0.0, 1.0]))) - 2.0) < 1e-12


def test_positive_definiteness_sampled():
    clf = nonholonomic_clf()
    rng = np.random.default_rng(0)
    xs = rng.normal(size=(2000, 3))
    vals = clf.value(xs)
    assert np.all(vals > 0.0)


def test_branches_min_equals_value():
    for clf in (nonholonomic_clf(), quadratic_clf()):
        rng = np.random.default_rng(1)
        dim = 3 if clf.name == "nonholonomic" else 2
        xs = rng.normal(size=(500, dim))
        stacked = np.stack([b.value(xs) for b in clf.branches])
        assert np.allclose(np.min(stacked, axis=0), clf.value(xs), atol=1e-12)


def test_branch_expansion_lower_bound():
    # Each branch must satisfy its one-sided second-order expansion on boxes.
    clf = nonholonomic_clf()
    rng = np.random.default_rng(2)
    for _ in range(200):
        c = rng.uniform(-1.5, 1.5, size=3)
        if np.hypot(c[0], c[1]) < 0.3:
            continue
        h = rng.uniform(0.01, 0.1)
        lo, hi = (c - h)[None, :], (c + h)[None, :]
        for b in clf.branches:
            lam = float(b.curvature_drop(lo, hi)[0])
            if not np.isfinite(lam):
                continue
            g = b.gradient(c[None, :])[0]
            y = c + rng.uniform(-h, h, size=3)
            lhs = float(b.value(y[None, :])[0])
            rhs = float(b.value(c[None, :])[0]) + g @ (y - c) - 0.5 * lam * np.sum((y - c) ** 2)
            assert lhs >= rhs - 1e-10


def test_dini_smooth_quadratic():
    quad = quadratic_clf()
    est = dini_derivative(quad, np.array([1.0, 0.0]), np.array([1.0, 0.0]), mu_min=1e-6)
    assert 2.0 <= est.value <= 2.0 + 4e-6
    mus = [m for m, _ in est.quotient_trace]
    assert all(a > b for a, b in zip(mus, mus[1:]))


def test_dini_zero_direction():
    quad = quadratic_clf()
    est = dini_derivative(quad, np.array([1.0, 2.0]), np.zeros(2), mu_min=1e-6)
    assert est.value == 0.0


def test_dini_one_sided_kink():
    clf = nonholonomic_clf()
    est = dini_derivative(clf, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0]), mu_min=1e-6)
    assert abs(est.value - (-2.0)) < 5e-6


def test_dini_matches_analytic_gradient():
    rng = np.random.default_rng(3)
    A = np.array([[2.0, 0.3], [0.3, 1.0]])

    def value(y):
        y = np.asarray(y, dtype=float)
        return np.einsum("...i,ij,...j->...", y, A, y)

    clf = Clf(value, value, "test-quadratic-form")
    for _ in range(100):
        x = rng.normal(size=2)
        theta = rng.normal(size=2)
        est = dini_derivative(clf, x, theta, mu_min=1e-7)
        analytic = float(2.0 * x @ A @ theta)
        hess_bound = 2.0 * np.linalg.norm(A) * float(theta @ theta)
        assert abs(est.value - analytic) <= 10e-7 * max(hess_bound, 1.0) + 1e-9


def test_dini_positive_homogeneity():
    clf = nonholonomic_clf()
    x = np.array([0.7, -0.3, 0.2])
    theta = np.array([0.5, 0.1, -1.0])
    base = dini_derivative(clf, x, theta, mu_min=1e-7).value
    scaled = dini_derivative(clf, x, 3.0 * theta, mu_min=1e-7).value
    assert abs(scaled - 3.0 * base) < 1e-4


def test_check_decay_nonholonomic():
    clf = nonholonomic_clf()
    sys = nonholonomic_integrator()
    ok, margin = check_decay(clf, sys, np.array([1.0, 0.5, -0.1]), 21, mu_min=1e-6)
    assert ok
    assert margin > 0.0


def test_check_decay_origin():
    clf = nonholonomic_clf()
    sys = nonholonomic_integrator()
    ok, margin = check_decay(clf, sys, np.zeros(3), 5, mu_min=1e-6)
    assert ok
    assert margin >= -1e-12


def test_check_decay_counterexample():
    # Uncontrolled expanding flow cannot satisfy the decay condition.
    def field(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        return np.broadcast_to(x, shape + (x.shape[-1],))

    sys = ControlSystem(2, np.array([[-1.0, 1.0]]), field, "expanding")
    quad = quadratic_clf()
    ok, margin = check_decay(quad, sys, np.array([1.0, 0.0]), 5, mu_min=1e-6)
    assert not ok
    assert margin < 0.0


def test_check_decay_rejects_degenerate_grid():
    clf = nonholonomic_clf()
    sys = nonholonomic_integrator()
    with pytest.raises(ValueError):
        check_decay(clf, sys, np.zeros(3), 1, mu_min=1e-6)


def test_check_decay_grid_refinement_stability():
    clf = nonholonomic_clf()
    sys = nonholonomic_integrator()
    x = np.array([1.0, 0.5, -0.1])
    ok21, m21 = check_decay(clf, sys, x, 21, mu_min=1e-6)
    ok41, m41 = check_decay(clf, sys, x, 41, mu_min=1e-6)
    assert ok21 and ok41
    # Objective is affine in u, so doubling the grid can only move the
    # minimum by less than one grid cell of objective variation.
    assert abs(m41 - m21) <= 0.1 * (1.0 + abs(m21))


def test_probe_uniformity_quadratic_ball():
    quad = quadratic_clf()
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1, 1, size=(32, 2))
    dirs = rng.normal(size=(8, 2))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    res = probe_uniformity(quad, pts, dirs, nu=0.1, mu_min=1e-6)
    assert res.failures.shape[0] == 0
    assert res.mu >= 0.05


def test_probe_uniformity_vacuous_tolerance():
    quad = quadratic_clf()
    pts = np.array([[0.5, 0.5]])
    dirs = np.array([[1.0, 0.0]])
    res = probe_uniformity(quad, pts, dirs, nu=1e9, mu_start=0.1, mu_min=1e-6)
    assert res.mu == pytest.approx(0.1)


def test_probe_uniformity_flags_near_singular_point():
    # Just off the kink surface the difference quotients jump at step sizes
    # proportional to the distance, so points closer than the smallest rung
    # admit no positive uniformity step.
    clf = nonholonomic_clf()
    mu_min = 1e-6
    pts = np.array([[1.0, 0.0, 0.5 * mu_min]])
    dirs = np.array([[0.0, 0.0, -1.0]])
    res = probe_uniformity(clf, pts, dirs, nu=0.1, mu_min=mu_min)
    assert res.mu == 0.0
    assert res.failures.shape[0] == 1
    assert res.mu_excluding_failures == 0.0 or res.failures.shape[0] == 1


def test_get_clf_names():
    assert get_clf("nonholonomic").name == "nonholonomic"
    assert get_clf("quadratic").name == "quadratic"
    with pytest.raises(KeyError):
        get_clf("nope")
