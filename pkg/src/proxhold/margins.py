"""Stability-margin constants and admissible accuracy budgets.

Builds every constant the practical-stability analysis needs (radial bounds
of V, velocity and Lipschitz constants of the dynamics, minimal decay rate,
modulus of continuity) and resolves the constraint chain that turns them
into admissible bounds on the regularization parameter alpha, the sampling
period delta, and the per-sample accuracy budgets eps and eta.  Every
sampled sup or inf is pushed to the conservative side by the shared safety
factor; the radial tables themselves are raw sampled values whose error is
controlled by the configured resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clf import Clf, probe_uniformity
from .sampling import (
    conservative_inf,
    conservative_sup,
    sample_annulus,
    sample_ball,
    sample_sphere,
)
from .systems import ControlSystem, SystemConstants, estimate_constants


class InfeasibleCertificateError(RuntimeError):
    """A constraint in the margin chain forced a nonpositive bound."""

    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


@dataclass(frozen=True)
class RhoTable:
    """Monotone lower radial bound: V(x) <= rho(s) implies ||x|| <= s.

    ``values[i]`` is the running minimum, from the right, of the sampled
    sphere minima of V, so the table is non-decreasing in the radius.
    Lookups floor to the largest grid radius not exceeding the query.
    """

    radii: np.ndarray
    values: np.ndarray

    def __call__(self, radius: float) -> float:
        idx = np.searchsorted(self.radii, radius * (1.0 + 1e-12), side="right") - 1
        if idx < 0:
            raise ValueError(f"radius {radius} below table range")
        return float(self.values[idx])

    @property
    def max_radius(self) -> float:
        return float(self.radii[-1])


@dataclass(frozen=True)
class LambdaTable:
    """Monotone inverse upper bound: V(x) >= v implies ||x|| >= lambda(v).

    Backed by the running maximum of sampled sphere maxima of V; the lookup
    returns the largest grid radius whose ball maximum stays below v.
    """

    radii: np.ndarray
    ball_max: np.ndarray

    def __call__(self, v: float) -> float:
        idx = np.searchsorted(self.ball_max, v * (1.0 + 1e-12), side="right") - 1
        if idx < 0:
            return 0.0
        return float(self.radii[idx])

    def sup_over_ball(self, radius: float) -> float:
        idx = np.searchsorted(self.radii, radius * (1.0 + 1e-12), side="right") - 1
        if idx < 0:
            raise ValueError(f"radius {radius} below table range")
        return float(self.ball_max[idx])


@dataclass(frozen=True)
class OmegaTable:
    """Sampled modulus-of-continuity data for V on a ball.

    ``oscillation(d)`` over-approximates the oscillation of V over
    displacements up to d; ``inverse(eps)`` returns the largest tabulated
    displacement whose oscillation stays within eps.
    """

    distances: np.ndarray
    oscillations: np.ndarray

    def oscillation(self, d: float) -> float:
        if d <= 0.0:
            return 0.0
        idx = np.searchsorted(self.distances, d * (1.0 - 1e-12), side="left")
        if idx >= self.distances.size:
            raise ValueError(f"distance {d} beyond table range")
        return float(self.oscillations[idx])

    def inverse(self, eps: float) -> float:
        ok = np.flatnonzero(self.oscillations <= eps)
        if ok.size == 0:
            return 0.0
        return float(self.distances[ok[-1]])


@dataclass(frozen=True)
class MarginConfig:
    """Resolutions, sample counts and seeds of the margin pipeline."""

    radius_step: float = 0.005
    sphere_samples: int = 384
    rstar_growth: float = 1.1
    theta_margin: float = 0.05
    constants_samples: int = 4096
    annulus_samples: int = 4096
    omega_pairs: int = 2048
    omega_points: int = 96
    probe_points: int = 64
    probe_directions: int = 16
    probe_mu_min: float = 1e-6
    seed: int = 1234
    max_radius_factor: float = 64.0


@dataclass(frozen=True)
class MarginCertificate:
    """All margin constants plus the admissible parameter bounds."""

    R: float
    r: float
    R_star: float
    v_bar: float
    v_star_cap: float
    theta: float
    v_star: float
    r_star: float
    f_bar: float
    lipschitz_L_f: float
    w_bar: float
    omega_V_table: OmegaTable
    alpha_max: float
    delta_max: float
    eps_bound: float
    eta_bound: float
    eps1: float
    eps2: float
    reaching_time: float
    uniformity_mu: float
    uniformity_excluded: int
    operating_radius: float

    _SCALARS = (
        "R", "r", "R_star", "v_bar", "v_star_cap", "theta", "v_star", "r_star",
        "f_bar", "lipschitz_L_f", "w_bar", "alpha_max", "delta_max", "eps_bound",
        "eta_bound", "eps1", "eps2", "reaching_time", "uniformity_mu",
        "uniformity_excluded", "operating_radius",
    )

    def to_text(self) -> str:
        lines = [f"{name} = {getattr(self, name)!r}" for name in self._SCALARS]
        lines.append("omega_distances = " + ",".join(repr(v) for v in self.omega_V_table.distances))
        lines.append("omega_oscillations = " + ",".join(repr(v) for v in self.omega_V_table.oscillations))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MarginCertificate":
        kv: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            kv[key.strip()] = value.strip()
        scalars = {name: float(kv[name]) for name in cls._SCALARS}
        scalars["uniformity_excluded"] = int(scalars["uniformity_excluded"])
        table = OmegaTable(
            distances=np.array([float(v) for v in kv["omega_distances"].split(",")]),
            oscillations=np.array([float(v) for v in kv["omega_oscillations"].split(",")]),
        )
        return cls(omega_V_table=table, **scalars)


def rho_lambda(clf: Clf, radius_grid: np.ndarray | list[float], *,
               sphere_samples: int = 384, seed: int = 0) -> tuple[RhoTable, LambdaTable]:
    """Radial lower/upper bound tables of V from sampled sphere extrema.

    Per grid radius the minimum and maximum of V over a sampled sphere are
    recorded; monotonicity is enforced by a running minimum from the right
    (lower table) and a running maximum from the left (ball suprema).
    """
    radii = np.asarray(radius_grid, dtype=float)
    if radii.size == 0 or radii[0] <= 0.0 or np.any(np.diff(radii) <= 0.0):
        raise ValueError("radius grid must be strictly increasing and positive")
    dim = _infer_dim(clf)
    from .sampling import _unit_directions

    dirs = _unit_directions(sphere_samples, dim, seed)
    pts = radii[:, None, None] * dirs[None, :, :]
    vals = clf.value(pts)
    mins = np.min(vals, axis=1)
    maxs = np.max(vals, axis=1)
    rho_vals = np.minimum.accumulate(mins[::-1])[::-1]
    ball_max = np.maximum.accumulate(maxs)
    return RhoTable(radii.copy(), rho_vals), LambdaTable(radii.copy(), ball_max)


def _infer_dim(clf: Clf) -> int:
    for dim in (1, 2, 3, 4, 5, 6, 8, 10, 12):
        try:
            v = clf.value(np.zeros(dim))
            if np.ndim(v) == 0:
                return dim
        except (IndexError, ValueError):
            continue
    raise ValueError("could not infer state dimension from the CLF")


def modulus_of_continuity(
    clf: Clf,
    ball_radius: float,
    distance_grid: np.ndarray | list[float],
    *,
    pairs: int = 2048,
    seed: int = 0,
) -> OmegaTable:
    """Sampled oscillation of V over bounded displacements inside a ball.

    For every distance d the oscillation sup is estimated by paired sampling
    (both endpoints kept inside the ball) and inflated by the safety factor;
    the table is made monotone in d.
    """
    distances = np.asarray(distance_grid, dtype=float)
    if np.any(distances <= 0.0) or np.any(np.diff(distances) <= 0.0):
        raise ValueError("distance grid must be positive and strictly increasing")
    dim = _infer_dim(clf)
    base = sample_ball(np.zeros(dim), ball_radius, pairs, seed)
    from .sampling import _unit_directions

    dirs = _unit_directions(pairs, dim, seed + 1)
    v_base = clf.value(base)
    osc = np.empty(distances.size)
    for i, d in enumerate(distances):
        partner = base + d * dirs
        # Pull partners that left the ball back onto the boundary; the pair
        # distance only shrinks, which keeps the estimate valid for <= d.
        norms = np.linalg.norm(partner, axis=-1)
        over = norms > ball_radius
        if np.any(over):
            partner[over] *= (ball_radius / norms[over])[:, None]
        osc[i] = np.max(np.abs(clf.value(partner) - v_base))
    osc = np.maximum.accumulate(osc) * 1.1
    return OmegaTable(distances.copy(), osc)


def _positive(name: str, value: float) -> float:
    if not np.isfinite(value) or value <= 0.0:
        raise InfeasibleCertificateError(name, f"bound is nonpositive or undefined ({value})")
    return float(value)


def build_certificate(
    sys: ControlSystem,
    clf: Clf,
    R: float,
    r: float,
    config: MarginConfig = MarginConfig(),
) -> MarginCertificate:
    """Assemble the margin certificate for start ball R and target ball r.

    Walks the constant chain in dependency order: radial tables, overshoot
    radius, system constants on the operating ball, minimal decay rate,
    modulus of continuity, then the admissibility bounds for alpha, delta,
    eps and eta.  Raises :class:`InfeasibleCertificateError` naming the
    first constraint that forces a nonpositive bound.  Deterministic for a
    fixed config.
    """
    if not 0.0 < r < R:
        raise ValueError("radii must satisfy 0 < r < R")

    step = config.radius_step
    grid_max = max(2.0 * R, 10.0 * step)
    while True:
        radii = step * np.arange(1, int(np.ceil(grid_max / step)) + 1)
        rho, lam = rho_lambda(
            clf, radii, sphere_samples=config.sphere_samples, seed=config.seed
        )
        v_bar = conservative_sup(lam.sup_over_ball(R))
        # Overshoot radius: smallest geometric step with a radial bound
        # exceeding the start-ball supremum by the configured margin.
        r_star_candidate = None
        R_star = None
        growth = config.rstar_growth
        j = 1
        while R * growth**j <= rho.max_radius:
            cand = R * growth**j
            if rho(cand) > v_bar * (1.0 + config.theta_margin):
                R_star = cand
                break
            j += 1
        if R_star is not None:
            break
        grid_max *= 2.0
        if grid_max > config.max_radius_factor * R:
            raise InfeasibleCertificateError(
                "theta", "no overshoot radius with rho(R_star) > v_bar within range"
            )

    theta = _positive("theta", rho(R_star))
    v_star_cap = conservative_sup(lam.sup_over_ball(R_star))
    v_star = _positive("v_star", rho(r))
    r_star = lam(v_star / 4.0)
    if r_star <= 0.0:
        raise InfeasibleCertificateError("r_star", "radial table too coarse near the target")
    if r_star > r:
        raise InfeasibleCertificateError("r_star", f"r_star {r_star} exceeds target radius {r}")

    operating_radius = R_star + np.sqrt(2.0 * v_star_cap)
    constants: SystemConstants = estimate_constants(
        sys, operating_radius, config.constants_samples, config.seed + 1
    )
    f_bar = constants.f_bar
    l_f = constants.lipschitz_L_f

    # Minimal decay rate over the annulus, inner boundary included.
    annulus = sample_annulus(
        np.zeros(sys.state_dim), r_star / 2.0, operating_radius,
        config.annulus_samples, config.seed + 2,
    )
    inner = sample_sphere(np.zeros(sys.state_dim), r_star / 2.0, 256, config.seed + 3)
    w_vals = np.concatenate([clf.decay_rate(annulus), clf.decay_rate(inner)])
    w_bar = conservative_inf(float(np.min(w_vals)))
    if w_bar <= 0.0:
        raise InfeasibleCertificateError("w_bar", "decay rate vanishes on the annulus")

    distance_grid = np.geomspace(1e-14, 2.0 * operating_radius, 160)
    omega = modulus_of_continuity(
        clf, operating_radius, distance_grid, pairs=config.omega_pairs, seed=config.seed + 4
    )

    # Accuracy budget chain, in dependency order.
    eps1_terms = [v_star / 8.0, theta - v_bar]
    if l_f > 0.0:
        eps1_terms.append(w_bar / (40.0 * l_f))
    eps1 = _positive("eps1", min(eps1_terms))
    eps2 = _positive("eps2", v_star / 8.0)

    alpha_cap = min(1.0, r_star / 2.0, omega.inverse(eps1))
    alpha_max = _positive("alpha_max", min(alpha_cap / np.sqrt(2.0 * v_star_cap), 1.0 - 1e-9))

    delta_terms = [
        w_bar * alpha_max**2 / (10.0 * f_bar**2),
        v_star / (2.0 * w_bar),
        omega.inverse(eps2) / f_bar,
        1.0 - 1e-9,
    ]
    if l_f > 0.0:
        delta_terms.append(
            w_bar * alpha_max / (20.0 * np.sqrt(2.0 * v_star_cap) * l_f * f_bar)
        )
    delta_max = _positive("delta_max", min(delta_terms))

    # Uniformity probe at a fifth of the minimal decay rate; failing sample
    # points (near the singular set of a nonsmooth V) are excluded and
    # counted rather than declared fatal.
    probe_pts = sample_annulus(
        np.zeros(sys.state_dim), r_star / 2.0, operating_radius,
        config.probe_points, config.seed + 5,
    )
    dir_states = probe_pts[:: max(1, config.probe_points // 4)][:4]
    vertices = sys.input_vertices()
    dirs = sys.f(dir_states[:, None, :], vertices[None, :, :]).reshape(-1, sys.state_dim)
    if dirs.shape[0] > config.probe_directions:
        stride = max(1, dirs.shape[0] // config.probe_directions)
        dirs = dirs[::stride][: config.probe_directions]
    probe = probe_uniformity(
        clf, probe_pts, dirs, nu=w_bar / 5.0, mu_min=config.probe_mu_min
    )
    excluded = int(probe.failures.shape[0])
    mu = probe.mu_excluding_failures if excluded else probe.mu
    if mu <= 0.0:
        raise InfeasibleCertificateError(
            "uniformity", "no sampled point admits a positive uniformity step"
        )

    eps_terms = [
        np.sqrt(delta_max * w_bar / 20.0),
        w_bar * alpha_max**2 / (10.0 * (f_bar**2 + 2.0 * alpha_max**2)),
        np.sqrt(mu),
    ]
    if l_f > 0.0:
        eps_terms.append(np.sqrt(w_bar / (40.0 * l_f)))
    eps_bound = _positive("eps_bound", min(eps_terms))
    eta_bound = _positive("eta_bound", w_bar / 20.0)

    return MarginCertificate(
        R=float(R),
        r=float(r),
        R_star=float(R_star),
        v_bar=float(v_bar),
        v_star_cap=float(v_star_cap),
        theta=float(theta),
        v_star=float(v_star),
        r_star=float(r_star),
        f_bar=float(f_bar),
        lipschitz_L_f=float(l_f),
        w_bar=float(w_bar),
        omega_V_table=omega,
        alpha_max=float(alpha_max),
        delta_max=float(delta_max),
        eps_bound=float(eps_bound),
        eta_bound=float(eta_bound),
        eps1=float(eps1),
        eps2=float(eps2),
        reaching_time=float(4.0 * (v_bar - v_star / 2.0) / w_bar),
        uniformity_mu=float(mu),
        uniformity_excluded=excluded,
        operating_radius=float(operating_radius),
    )


def check_eq26(decision, cert: MarginCertificate) -> bool:
    """Certified control-objective bound at decay-regime samples.

    True when the certified lower bound of the selected-control objective is
    at most three quarters of the minimal decay rate, negated.
    """
    return bool(decision.objective_lower_bound <= -0.75 * cert.w_bar)


def constraint_report(cert: MarginCertificate) -> str:
    """Human-readable summary of each constraint with its binding value."""
    lines = [
        f"start radius R            = {cert.R}",
        f"target radius r           = {cert.r}",
        f"overshoot radius R*       = {cert.R_star}  (rho(R*) = {cert.theta} > v_bar = {cert.v_bar})",
        f"sup V over start ball     = {cert.v_bar}",
        f"sup V over overshoot ball = {cert.v_star_cap}",
        f"target level v*           = {cert.v_star}   (r* = {cert.r_star} <= r)",
        f"operating ball radius     = {cert.operating_radius}",
        f"velocity bound f_bar      = {cert.f_bar}",
        f"Lipschitz constant L_f    = {cert.lipschitz_L_f}",
        f"minimal decay rate w_bar  = {cert.w_bar}",
        f"eps1 (sandwich budget)    = {cert.eps1}   [<= min(v*/8, theta - v_bar, w_bar/(40 L_f))]",
        f"eps2 (dwell budget)       = {cert.eps2}   [= v*/8]",
        f"alpha_max                 = {cert.alpha_max}   [sqrt(2 V*) alpha <= min(1, r*/2, omega(eps1))]",
        f"delta_max                 = {cert.delta_max}   [velocity, dwell, drift and omega(eps2) caps]",
        f"eps_bound (per sample)    = {cert.eps_bound}   [gap target is its square]",
        f"eta_bound (per sample)    = {cert.eta_bound}   [= w_bar/20]",
        f"uniformity step mu        = {cert.uniformity_mu}  (excluded samples: {cert.uniformity_excluded})",
        f"reaching-time bound       = {cert.reaching_time}",
    ]
    return "\n".join(lines) + "\n"


__all__ = [
    "InfeasibleCertificateError",
    "RhoTable",
    "LambdaTable",
    "OmegaTable",
    "MarginConfig",
    "MarginCertificate",
    "rho_lambda",
    "modulus_of_continuity",
    "build_certificate",
    "check_eq26",
    "constraint_report",
]
