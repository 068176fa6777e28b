import numpy as np
import pytest

from proxhold.systems import (
    ControlSystem,
    estimate_constants,
    get_system,
    nonholonomic_integrator,
    scalar_integrator,
)


def test_nonholonomic_vector_field_values():
    sys = nonholonomic_integrator()
    assert np.allclose(sys.f([1.0, 0.5, -0.1], [1.0, 1.0]), [1.0, 1.0, 0.5])
    assert np.allclose(sys.f([0.0, 0.0, 0.0], [0.0, 0.0]), [0.0, 0.0, 0.0])
    # 2*(-0.7) - (-1)*0.3 = -1.1
    assert np.allclose(sys.f([2.0, -1.0, 5.0], [0.3, -0.7]), [0.3, -0.7, -1.1])


def test_vector_field_pure():
    sys = nonholonomic_integrator()
    x = np.array([0.3, -1.2, 0.7])
    u = np.array([0.5, -0.25])
    first = sys.f(x, u)
    second = sys.f(x, u)
    assert np.array_equal(first, second)


def test_vector_field_batched():
    sys = nonholonomic_integrator()
    xs = np.random.default_rng(0).normal(size=(17, 3))
    us = np.random.default_rng(1).uniform(-1, 1, size=(17, 2))
    batch = sys.f(xs, us)
    for i in range(17):
        assert np.allclose(batch[i], sys.f(xs[i], us[i]))


def test_input_box_validation():
    def field(x, u):
        return x

    with pytest.raises(ValueError):
        ControlSystem(2, np.array([[1.0, -1.0]]), field, "bad")
    with pytest.raises(ValueError):
        ControlSystem(2, np.array([[0.0, np.inf]]), field, "bad")
    with pytest.raises(ValueError):
        ControlSystem(0, np.array([[-1.0, 1.0]]), field, "bad")


def test_input_grid_contains_vertices():
    sys = nonholonomic_integrator()
    grid = sys.input_grid(5)
    assert grid.shape == (25, 2)
    for vertex in ([-1, -1], [-1, 1], [1, -1], [1, 1]):
        assert np.any(np.all(grid == np.array(vertex, dtype=float), axis=1))
    with pytest.raises(ValueError):
        sys.input_grid(1)


def test_get_system_names():
    assert get_system("nonholonomic").state_dim == 3
    assert get_system("quadratic-test").state_dim == 1
    with pytest.raises(KeyError):
        get_system("no-such-system")


def test_estimate_constants_preconditions():
    sys = nonholonomic_integrator()
    with pytest.raises(ValueError):
        estimate_constants(sys, 2.0, 1, seed=0)
    with pytest.raises(ValueError):
        estimate_constants(sys, -1.0, 100, seed=0)


def test_estimate_constants_reproducible():
    sys = nonholonomic_integrator()
    a = estimate_constants(sys, 2.0, 512, seed=42)
    b = estimate_constants(sys, 2.0, 512, seed=42)
    assert a == b


def test_estimate_constants_velocity_bound_oracle():
    # Oracle: over the Euclidean ball of radius 2 and box inputs, the third
    # component is at most 2*||u||, so ||f||^2 <= 5*||u||^2 <= 10 with the
    # maximum attained on the sphere with u at a box vertex.
    sys = nonholonomic_integrator()
    oracle = np.sqrt(10.0)
    est = estimate_constants(sys, 2.0, 20_000, seed=3)
    assert oracle * 0.95 <= est.f_bar <= oracle * 1.1 * (1.0 + 1e-9)


def test_estimate_constants_linear_lipschitz():
    def field(x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        return np.broadcast_to(2.0 * x, shape + (x.shape[-1],))

    sys = ControlSystem(2, np.array([[-1.0, 1.0]]), field, "doubling")
    est = estimate_constants(sys, 1.5, 2048, seed=5)
    assert 2.0 <= est.lipschitz_L_f <= 2.2 * (1.0 + 1e-9)


def test_sampled_lipschitz_quotient_below_analytic_bound():
    # For fixed u the map x -> f(x, u) has Lipschitz constant ||u|| <= sqrt(2).
    sys = nonholonomic_integrator()
    rng = np.random.default_rng(7)
    xs = rng.normal(size=(1000, 3))
    ys = rng.normal(size=(1000, 3))
    us = rng.uniform(-1.0, 1.0, size=(1000, 2))
    quot = np.linalg.norm(sys.f(xs, us) - sys.f(ys, us), axis=-1) / np.linalg.norm(
        xs - ys, axis=-1
    )
    assert np.all(quot <= np.linalg.norm(us, axis=-1) + 1e-12)
    assert np.all(quot <= np.sqrt(2.0) + 1e-12)


def test_constants_monotone_in_radius():
    sys = nonholonomic_integrator()
    small = estimate_constants(sys, 1.0, 4096, seed=9)
    large = estimate_constants(sys, 3.0, 4096, seed=9)
    assert large.f_bar >= small.f_bar
    assert large.lipschitz_L_f >= small.lipschitz_L_f * 0.999
