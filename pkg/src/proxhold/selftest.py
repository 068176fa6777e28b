"""Quick built-in property battery behind the ``selftest`` CLI verb.

A trimmed version of the full pytest suite: closed-form envelope oracle,
minimizer localization, subgradient inequality, integrator order, and
determinism.  Prints one line per check and returns a nonzero exit code on
any failure.
"""

from __future__ import annotations

import numpy as np

from .clf import nonholonomic_clf, quadratic_clf
from .feedback import FeedbackConfig, infc_feedback
from .infconv import check_eps_subgradient, envelope, verify_lemma1
from .sim import rk4_integrate
from .systems import nonholonomic_integrator


def _check(name: str, ok: bool, detail: str = "") -> bool:
    status = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"{status}: {name}{suffix}")
    return ok


def run_selftest() -> int:
    ok = True
    quad = quadratic_clf()
    rng = np.random.default_rng(20240501)

    worst = 0.0
    for _ in range(20):
        x = rng.uniform(-2.0, 2.0, size=2)
        alpha = rng.uniform(0.05, 0.4)
        res = envelope(quad, x, alpha, 1e-8, v_bar=float(quad.value(x)) + 1.0)
        exact = float(x @ x) / (1.0 + 2.0 * alpha**2)
        worst = max(worst, abs(res.upper_value - exact))
        if abs(res.upper_value - exact) > res.epsilon_achieved + 1e-12:
            ok = False
    ok &= _check("quadratic envelope oracle", worst < 1e-7, f"worst dev {worst:.2e}")

    nh = nonholonomic_clf()
    v_bar = 8.0
    loc_ok = True
    sub_ok = True
    for _ in range(50):
        x = rng.uniform(-1.5, 1.5, size=3)
        alpha = rng.uniform(0.05, 0.4)
        res = envelope(nh, x, alpha, 1e-6, v_bar=max(v_bar, float(nh.value(x)) + 1e-9))
        loc_ok &= verify_lemma1(res, max(v_bar, float(nh.value(x)) + 1e-9))
        z = rng.uniform(-2.0, 2.0, size=3)
        holds, _ = check_eps_subgradient(res, nh, z)
        sub_ok &= holds
    ok &= _check("minimizer localization", loc_ok)
    ok &= _check("approximate subgradient inequality", sub_ok)

    exact = np.exp(np.sin(2.0)) - 1.0
    errs = []
    for steps in (8, 16, 32):
        traj = rk4_integrate(lambda t, x: np.array([np.cos(t) * np.exp(np.sin(t))]),
                             np.zeros(1), 0.0, 2.0, steps)
        errs.append(abs(traj[-1, 0] - exact))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    ok &= _check("integrator fourth-order band", all(12.0 <= q <= 20.0 for q in ratios),
                 f"ratios {ratios[0]:.1f}, {ratios[1]:.1f}")

    sysm = nonholonomic_integrator()
    cfg = FeedbackConfig(alpha=0.1, eps_x=1e-3, eta_x=1e-6, input_grid_res=11,
                         v_bar=5.0, clf_lipschitz=35.0)
    x0 = np.array([1.0, 0.5, -0.1])
    d1 = infc_feedback(sysm, nh, x0, cfg)
    d2 = infc_feedback(sysm, nh, x0, cfg)
    same = np.array_equal(d1.input, d2.input) and d1.objective_value == d2.objective_value
    ok &= _check("feedback determinism", same)
    ok &= _check("feedback decay direction", d1.objective_value < 0.0,
                 f"objective {d1.objective_value:.3f}")

    return 0 if ok else 1
