import numpy as np
import pytest
from scipy.optimize import minimize

from proxhold.clf import nonholonomic_clf, quadratic_clf
from proxhold.infconv import (
    EnvelopeBudgetError,
    EnvelopeResult,
    EnvelopeSettings,
    check_eps_subgradient,
    check_taylor,
    envelope,
    lemma2_alpha_bound,
    verify_lemma1,
    verify_lemma2,
)

QUAD = quadratic_clf()
NH = nonholonomic_clf()


def quad_envelope_exact(x, alpha):
    return float(np.dot(x, x)) / (1.0 + 2.0 * alpha**2)


def quad_minimizer_exact(x, alpha):
    return np.asarray(x, dtype=float) / (1.0 + 2.0 * alpha**2)


def test_quadratic_closed_form():
    x = np.array([1.0, 0.0])
    res = envelope(QUAD, x, 0.1, 1e-9, v_bar=2.0)
    assert abs(res.upper_value - quad_envelope_exact(x, 0.1)) <= res.epsilon_achieved
    assert res.epsilon_achieved <= 1e-9
    assert np.linalg.norm(res.minimizer - quad_minimizer_exact(x, 0.1)) < 1e-4


def test_envelope_at_global_minimum():
    res = envelope(QUAD, np.zeros(2), 0.1, 1e-9, v_bar=1.0)
    assert res.upper_value <= 1e-9
    assert np.linalg.norm(res.minimizer) < 1e-3
    assert res.epsilon_achieved <= 1e-9


def brute_force_envelope(clf, x, alpha, v_bar, seed=0):
    # Independent oracle: multistart local minimization over the search ball.
    rho = np.sqrt(2.0 * v_bar) * alpha
    inv = 1.0 / (2.0 * alpha**2)

    def obj(y):
        return float(clf.value(y) + inv * np.sum((y - x) ** 2))

    rng = np.random.default_rng(seed)
    best = obj(x)
    for _ in range(60):
        start = x + rng.uniform(-rho, rho, size=x.size)
        out = minimize(obj, start, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        best = min(best, float(out.fun))
    return best


def test_nonholonomic_envelope_matches_oracle():
    x = np.array([1.0, 0.5, -0.1])
    v_bar = float(NH.value(x)) * 1.3
    res = envelope(NH, x, 0.1, 1e-6, v_bar=v_bar)
    oracle = brute_force_envelope(NH, x, 0.1, v_bar)
    assert res.upper_value <= oracle + 1e-6
    assert res.upper_value >= oracle - 1e-7
    assert res.lower_bound <= oracle + 1e-12


def test_envelope_preconditions():
    with pytest.raises(ValueError):
        envelope(QUAD, np.array([1.0, 0.0]), 1.5, 1e-6, v_bar=2.0)
    with pytest.raises(ValueError):
        envelope(QUAD, np.array([1.0, 0.0]), 0.1, -1e-6, v_bar=2.0)
    with pytest.raises(ValueError):
        envelope(QUAD, np.array([1.0, 0.0]), 0.1, 1e-6, v_bar=0.5)


def test_envelope_budget_error_carries_best():
    with pytest.raises(EnvelopeBudgetError) as err:
        envelope(NH, np.array([1.0, 0.5, -0.1]), 0.1, 1e-12, v_bar=2.0, eval_budget=300)
    res = err.value.result
    assert res.epsilon_achieved > 1e-12
    assert res.lower_bound <= res.upper_value


def test_envelope_determinism():
    x = np.array([0.4, -0.8, 0.3])
    a = envelope(NH, x, 0.2, 1e-7, v_bar=5.0)
    b = envelope(NH, x, 0.2, 1e-7, v_bar=5.0)
    assert np.array_equal(a.minimizer, b.minimizer)
    assert a.upper_value == b.upper_value
    assert a.lower_bound == b.lower_bound


def test_envelope_polish_floor_certified_and_deterministic():
    x = np.array([1.0, 0.5, -0.1])
    a = envelope(NH, x, 0.1, 1e-2, v_bar=5.0, polish_floor=4e-3)
    b = envelope(NH, x, 0.1, 1e-2, v_bar=5.0, polish_floor=4e-3)
    assert np.array_equal(a.minimizer, b.minimizer)
    assert a.epsilon_achieved <= 1e-2
    assert a.upper_value <= float(NH.value(x)) * (1.0 + 1e-9) + 1e-300
    exact = envelope(NH, x, 0.1, 1e-6, v_bar=5.0)
    # floored polish still brackets the true value but leaves real slack
    assert a.upper_value >= exact.lower_bound
    assert a.upper_value - exact.upper_value >= 0.0


def test_envelope_invariants_on_draws():
    rng = np.random.default_rng(5)
    for _ in range(25):
        x = rng.uniform(-1.5, 1.5, size=3)
        alpha = rng.uniform(0.05, 0.45)
        v_bar = max(8.0, float(NH.value(x)) + 1e-9)
        res = envelope(NH, x, alpha, 1e-5, v_bar=v_bar)
        # sandwich
        assert res.lower_bound <= res.upper_value <= float(NH.value(x)) + 1e-12
        assert res.epsilon_achieved >= 0.0
        # algebraic subgradient identity
        assert np.array_equal(res.subgradient, (x - res.minimizer) / alpha**2)
        lhs = np.linalg.norm(res.subgradient) * np.linalg.norm(res.minimizer - x)
        rhs = np.sum((res.minimizer - x) ** 2) / alpha**2
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, rhs)


def test_envelope_monotone_in_alpha():
    x = np.array([0.9, -0.4])
    values = []
    for alpha in (0.05, 0.1, 0.5):
        res = envelope(QUAD, x, alpha, 1e-9, v_bar=2.0)
        values.append(res.upper_value)
        assert abs(res.upper_value - quad_envelope_exact(x, alpha)) <= 1e-9
    assert values[0] >= values[1] >= values[2]


def test_verify_lemma1():
    x = np.array([1.0, 0.0])
    res = envelope(QUAD, x, 0.1, 1e-9, v_bar=1.5)
    assert verify_lemma1(res, 1.5)
    d = np.linalg.norm(res.minimizer - x)
    assert d <= np.sqrt(2.0 * 1.5) * 0.1
    # hand-built violation
    bad = EnvelopeResult(
        query_point=x,
        minimizer=x + np.array([10.0, 0.0]),
        upper_value=0.0,
        lower_bound=0.0,
        epsilon_achieved=0.0,
        alpha=0.1,
        subgradient=np.zeros(2),
        settings=res.settings,
        evaluations=0,
    )
    assert not verify_lemma1(bad, 1.5)


def test_verify_lemma1_at_origin():
    res = envelope(QUAD, np.zeros(2), 0.1, 1e-9, v_bar=1.0)
    assert verify_lemma1(res, 1.0)
    assert np.linalg.norm(res.minimizer) < 1e-3


def omega_inverse_quadratic(ball_radius):
    # |V(x) - V(y)| <= 2*ball_radius*||x - y|| for the squared norm.
    return lambda eps: eps / (2.0 * ball_radius)


def test_verify_lemma2_quadratic():
    rng = np.random.default_rng(6)
    inv = omega_inverse_quadratic(2.0)
    for _ in range(20):
        x = rng.uniform(-1.0, 1.0, size=2)
        assert verify_lemma2(QUAD, x, 0.1, 0.1, inv, v_bar=2.0)
    # analytic gap at alpha = 0.1 stays below 0.0197 for x in the unit ball
    x = np.array([1.0, 0.0])
    gap = float(x @ x) * 2.0 * 0.1**2 / (1.0 + 2.0 * 0.1**2)
    assert gap <= 0.0197


def test_verify_lemma2_at_origin():
    inv = omega_inverse_quadratic(2.0)
    assert verify_lemma2(QUAD, np.zeros(2), 0.1, 0.05, inv, v_bar=1.0)


def test_verify_lemma2_alpha_too_large():
    inv = omega_inverse_quadratic(2.0)
    x = np.array([1.0, 0.0])
    # analytic gap = 1.62/2.62 ~ 0.618 >> eps_1
    assert not verify_lemma2(QUAD, x, 0.9, 1e-6, inv, v_bar=4.0)


def test_lemma2_alpha_bound_orientation():
    inv = omega_inverse_quadratic(2.0)
    bound = lemma2_alpha_bound(2.0, inv, 0.1)
    assert bound == pytest.approx((0.05 / 4.0) / np.sqrt(4.0))


def test_check_taylor_zero_step():
    x = np.array([1.0, 0.0])
    res = envelope(QUAD, x, 0.1, 1e-8, v_bar=2.0)
    holds, slack = check_taylor(res, QUAD, 0.0, np.array([1.0, 0.0]))
    assert holds
    assert 0.0 <= slack <= 1e-8


def test_check_taylor_quadratic_closed_form():
    x = np.array([1.0, 0.0])
    alpha, h = 0.1, 0.1
    theta = np.array([1.0, 0.0])
    res = envelope(QUAD, x, alpha, 1e-10, v_bar=3.0)
    holds, slack = check_taylor(res, QUAD, h, theta)
    assert holds
    # closed-form slack: rhs - lhs with exact envelope values
    zeta_exact = (x - quad_minimizer_exact(x, alpha)) / alpha**2
    rhs = (
        quad_envelope_exact(x, alpha)
        + h * float(zeta_exact @ theta)
        + h * h / (2.0 * alpha**2)
    )
    lhs = quad_envelope_exact(x + h * theta, alpha)
    # the stored minimizer may sit up to sqrt(2*gap)*alpha from the exact
    # one, which shifts the subgradient term by O(h*sqrt(gap)/alpha)
    assert slack == pytest.approx(rhs - lhs, abs=1e-4)


def test_check_taylor_property_sweep():
    rng = np.random.default_rng(7)
    x = np.array([1.0, 0.5, -0.1])
    res = envelope(NH, x, 0.1, 1e-6, v_bar=5.0)
    f_bar = 3.2
    for _ in range(100):
        h = rng.uniform(-0.1, 0.1)
        theta = rng.normal(size=3)
        theta *= rng.uniform(0.0, f_bar) / max(np.linalg.norm(theta), 1e-12)
        holds, slack = check_taylor(res, NH, h, theta)
        assert holds, (h, theta, slack)


def test_check_eps_subgradient_at_minimizer():
    x = np.array([0.8, -0.2])
    res = envelope(QUAD, x, 0.1, 1e-8, v_bar=1.5)
    holds, slack = check_eps_subgradient(res, QUAD, res.minimizer)
    assert holds
    assert slack == pytest.approx(res.epsilon_achieved, abs=1e-15)


def test_check_eps_subgradient_at_query():
    x = np.array([0.8, -0.2])
    res = envelope(QUAD, x, 0.1, 1e-8, v_bar=1.5)
    holds, _ = check_eps_subgradient(res, QUAD, x)
    assert holds


def test_check_eps_subgradient_random_probes():
    rng = np.random.default_rng(8)
    x = np.array([1.0, 0.3])
    res = envelope(QUAD, x, 0.1, 1e-7, v_bar=2.0)
    for _ in range(1000):
        z = rng.uniform(-2.0, 2.0, size=2)
        holds, _ = check_eps_subgradient(res, QUAD, z)
        assert holds


def test_oracle_equivalence_quadratic_grid():
    rng = np.random.default_rng(9)
    for _ in range(30):
        x = rng.uniform(-2.0, 2.0, size=2)
        alpha = float(rng.choice([0.05, 0.1, 0.5]))
        res = envelope(QUAD, x, alpha, 1e-8, v_bar=float(x @ x) + 1.0)
        assert abs(res.upper_value - quad_envelope_exact(x, alpha)) <= res.epsilon_achieved
