"""Control Lyapunov functions, lower Dini derivatives, and decay checks.

A :class:`Clf` carries the Lyapunov value map, the prescribed decay rate, and
(optionally) a decomposition of the value into smooth branches.  The branch
decomposition, ``V = min_b V_b`` with per-box curvature information, is what
lets the envelope solver certify tight lower bounds on nonsmooth functions;
it is never required for correctness of the Dini machinery below.

Value and gradient callables are batched: input shape ``(..., n)``, output
``(...)`` respectively ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sampling import Ball, sample_ball
from .systems import ControlSystem


@dataclass(frozen=True)
class SmoothBranch:
    """One smooth piece of a function given as a pointwise minimum of pieces.

    ``curvature_drop(lo, hi)`` returns, per box, a constant ``L`` such that
    the piece satisfies the one-sided expansion
    ``V_b(y) >= V_b(c) + <grad V_b(c), y - c> - L/2 * ||y - c||^2``
    for all ``y, c`` in the box (``inf`` if unavailable there).
    ``local_lipschitz(lo, hi)`` returns a per-box Lipschitz constant and must
    always be finite.  Both accept batched boxes of shape ``(N, n)``.
    """

    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    curvature_drop: Callable[[np.ndarray, np.ndarray], np.ndarray]
    local_lipschitz: Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Clf:
    """Positive-definite Lyapunov candidate with a prescribed decay rate."""

    value: Callable[[np.ndarray], np.ndarray]
    decay_rate: Callable[[np.ndarray], np.ndarray]
    name: str
    branches: tuple[SmoothBranch, ...] | None = None


@dataclass(frozen=True)
class DiniEstimate:
    """Lower directional derivative estimate from a geometric step ladder."""

    value: float
    mu_used: float
    quotient_trace: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class UniformityResult:
    """Outcome of the locally-uniform-convergence probe.

    ``mu`` is 0 when some sampled point admits no positive step size, in
    which case the offending points are listed in ``failures`` and
    ``mu_excluding_failures`` reports the bound over the remaining samples.
    """

    mu: float
    worst_point: np.ndarray
    failures: np.ndarray
    mu_excluding_failures: float


def _norm12(y: np.ndarray) -> np.ndarray:
    return np.sqrt(y[..., 0] ** 2 + y[..., 1] ** 2)


def nonholonomic_clf(decay_coeff: float = 0.01) -> Clf:
    """Global Lyapunov candidate for the nonholonomic integrator.

    ``V(x) = x1^2 + x2^2 + 2*x3^2 - 2*|x3|*sqrt(x1^2 + x2^2)`` with decay
    rate ``w(x) = decay_coeff * ||x||^2``.
    """
    if decay_coeff < 0:
        raise ValueError("decay_coeff must be nonnegative")

    def value(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        r = _norm12(y)
        return y[..., 0] ** 2 + y[..., 1] ** 2 + 2.0 * y[..., 2] ** 2 - 2.0 * np.abs(y[..., 2]) * r

    def decay(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return decay_coeff * np.sum(y * y, axis=-1)

    def branch(sign: float) -> SmoothBranch:
        # V_s(y) = y1^2 + y2^2 + 2 y3^2 - 2 s y3 r;  V = min over s = +-1.
        def val(y: np.ndarray) -> np.ndarray:
            y = np.asarray(y, dtype=float)
            r = _norm12(y)
            return y[..., 0] ** 2 + y[..., 1] ** 2 + 2.0 * y[..., 2] ** 2 - 2.0 * sign * y[..., 2] * r

        def grad(y: np.ndarray) -> np.ndarray:
            y = np.asarray(y, dtype=float)
            r = _norm12(y)
            safe = np.where(r > 0.0, r, 1.0)
            g = np.empty_like(y)
            g[..., 0] = 2.0 * y[..., 0] - 2.0 * sign * y[..., 2] * y[..., 0] / safe
            g[..., 1] = 2.0 * y[..., 1] - 2.0 * sign * y[..., 2] * y[..., 1] / safe
            g[..., 2] = 4.0 * y[..., 2] - 2.0 * sign * r
            return g

        def curvature(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
            # Hessian of the cross term is bounded below by -2*|y3|/r on boxes
            # separated from the x3 axis; the quadratic part contributes +2.
            r_min = np.sqrt(
                np.maximum(np.maximum(lo[..., 0], -hi[..., 0]), 0.0) ** 2
                + np.maximum(np.maximum(lo[..., 1], -hi[..., 1]), 0.0) ** 2
            )
            z_max = np.maximum(np.abs(lo[..., 2]), np.abs(hi[..., 2]))
            out = np.full(r_min.shape, np.inf)
            ok = r_min > 0.0
            out[ok] = 2.0 * z_max[ok] / r_min[ok]
            return out

        def lipschitz(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
            r_max = np.sqrt(
                np.maximum(np.abs(lo[..., 0]), np.abs(hi[..., 0])) ** 2
                + np.maximum(np.abs(lo[..., 1]), np.abs(hi[..., 1])) ** 2
            )
            z_max = np.maximum(np.abs(lo[..., 2]), np.abs(hi[..., 2]))
            l12 = 2.0 * r_max + 2.0 * z_max
            l3 = 4.0 * z_max + 2.0 * r_max
            return np.sqrt(l12 * l12 + l3 * l3)

        return SmoothBranch(val, grad, curvature, lipschitz)

    return Clf(value, decay, "nonholonomic", branches=(branch(1.0), branch(-1.0)))


def quadratic_clf(decay_coeff: float = 1.0) -> Clf:
    """Smooth test candidate ``V(x) = ||x||^2`` with ``w = decay_coeff*||x||^2``."""
    if decay_coeff < 0:
        raise ValueError("decay_coeff must be nonnegative")

    def value(y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return np.sum(y * y, axis=-1)

    def decay(y: np.ndarray) -> np.ndarray:
        return decay_coeff * value(y)

    def grad(y: np.ndarray) -> np.ndarray:
        return 2.0 * np.asarray(y, dtype=float)

    def curvature(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        return np.zeros(lo.shape[:-1])

    def lipschitz(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        corner = np.maximum(np.abs(lo), np.abs(hi))
        return 2.0 * np.linalg.norm(corner, axis=-1)

    return Clf(value, decay, "quadratic", branches=(SmoothBranch(value, grad, curvature, lipschitz),))


_CLFS: dict[str, Callable[..., Clf]] = {
    "nonholonomic": nonholonomic_clf,
    "quadratic": quadratic_clf,
}


def get_clf(name: str, decay_coeff: float | None = None) -> Clf:
    try:
        factory = _CLFS[name]
    except KeyError:
        raise KeyError(f"unknown CLF {name!r}; available: {sorted(_CLFS)}") from None
    if decay_coeff is None:
        return factory()
    return factory(decay_coeff=decay_coeff)


def _ladder(mu_start: float, mu_min: float) -> np.ndarray:
    """Geometric step ladder from mu_start down to mu_min, at least 3 rungs."""
    if mu_min <= 0:
        raise ValueError("mu_min must be positive")
    start = max(mu_start, 4.0 * mu_min)
    n = int(np.floor(np.log2(start / mu_min))) + 1
    return start * 0.5 ** np.arange(n)


def dini_derivative(
    clf: Clf,
    x: np.ndarray,
    theta: np.ndarray,
    mu_min: float,
    mu_start: float = 0.1,
) -> DiniEstimate:
    """Estimate the lower directional Dini derivative of V at x along theta.

    Difference quotients are evaluated on a geometric ladder of step sizes
    down to ``mu_min``; the liminf estimate is the minimum of the last three
    rungs.  The full trace is retained for diagnostics.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    mus = _ladder(mu_start, mu_min)
    v0 = float(clf.value(x))
    quotients = (clf.value(x[None, :] + mus[:, None] * theta[None, :]) - v0) / mus
    value = float(np.min(quotients[-3:]))
    trace = tuple((float(m), float(q)) for m, q in zip(mus, quotients))
    return DiniEstimate(value=value, mu_used=float(mus[-1]), quotient_trace=trace)


def _dini_values_batch(
    clf: Clf, x: np.ndarray, thetas: np.ndarray, mu_min: float, mu_start: float
) -> np.ndarray:
    """Dini estimates at one point along many directions, shape (D,)."""
    mus = _ladder(mu_start, mu_min)
    v0 = float(clf.value(x))
    pts = x[None, None, :] + mus[:, None, None] * thetas[None, :, :]
    quotients = (clf.value(pts) - v0) / mus[:, None]
    return np.min(quotients[-3:, :], axis=0)


def check_decay(
    clf: Clf,
    sys: ControlSystem,
    x: np.ndarray,
    input_grid_res: int,
    mu_min: float,
    mu_start: float = 0.1,
) -> tuple[bool, float]:
    """Test the decay condition at x over a uniform input grid.

    Minimizes the Dini estimate of V along f(x, u) over the grid and compares
    against ``-w(x)``.  The grid minimum under-approximates the infimum over
    the convex hull of velocities, so a True verdict is sufficient only.
    Returns ``(satisfied, margin)`` with ``margin = -min_estimate - w(x)``.
    """
    x = np.asarray(x, dtype=float)
    grid = sys.input_grid(input_grid_res)
    velocities = sys.f(x[None, :], grid)
    estimates = _dini_values_batch(clf, x, velocities, mu_min, mu_start)
    best = float(np.min(estimates))
    w = float(clf.decay_rate(x))
    return best <= -w, -best - w


def probe_uniformity(
    clf: Clf,
    region: Ball | np.ndarray,
    directions: np.ndarray,
    nu: float,
    mu_start: float = 0.1,
    mu_min: float = 1e-6,
    n_points: int = 64,
    seed: int = 0,
) -> UniformityResult:
    """Numerically probe local uniformity of the Dini difference quotients.

    For every sampled point y and direction, finds the largest ladder step mu
    such that all quotients at steps <= mu lie within ``nu`` of the Dini
    estimate.  A point where even the smallest rung deviates is a failure:
    the overall ``mu`` is then 0 and the point is reported.  This is a
    falsification probe on a finite sample, not a proof.
    """
    if nu <= 0:
        raise ValueError("nu must be positive")
    if isinstance(region, np.ndarray):
        points = np.atleast_2d(np.asarray(region, dtype=float))
    else:
        points = sample_ball(region.center, region.radius, n_points, seed)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))

    mus = _ladder(mu_start, mu_min)
    overall = np.inf
    worst = points[0]
    failures: list[np.ndarray] = []
    overall_ok = np.inf
    for y in points:
        v0 = float(clf.value(y))
        pts = y[None, None, :] + mus[:, None, None] * directions[None, :, :]
        quotients = (clf.value(pts) - v0) / mus[:, None]
        estimates = np.min(quotients[-3:, :], axis=0)
        dev_ok = np.abs(quotients - estimates[None, :]) <= nu
        point_mu = np.inf
        for j in range(directions.shape[0]):
            ok = dev_ok[:, j]
            if not ok[-1]:
                point_mu = 0.0
                break
            # Largest rung from which every smaller rung stays within nu.
            k = len(mus) - 1
            while k > 0 and ok[k - 1]:
                k -= 1
            point_mu = min(point_mu, float(mus[k]))
        if point_mu == 0.0:
            failures.append(y)
            worst = y
        else:
            if point_mu < overall_ok:
                overall_ok = point_mu
            if point_mu < overall:
                overall = point_mu
                if not failures:
                    worst = y
    if failures:
        return UniformityResult(
            mu=0.0,
            worst_point=np.asarray(failures[0]),
            failures=np.asarray(failures),
            mu_excluding_failures=float(overall_ok) if np.isfinite(overall_ok) else 0.0,
        )
    return UniformityResult(
        mu=float(overall),
        worst_point=np.asarray(worst),
        failures=np.empty((0, points.shape[1])),
        mu_excluding_failures=float(overall),
    )
