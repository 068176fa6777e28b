"""Control-system abstraction, benchmark systems, and empirical system constants.

A :class:`ControlSystem` bundles the vector field ``f(x, u)`` with its input
box.  Vector fields are pure functions and must accept batched arguments:
``x`` of shape ``(..., n)`` and ``u`` of shape ``(..., m)`` broadcast over
leading axes to a velocity of shape ``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .sampling import conservative_sup, sample_ball, sample_box

VectorField = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ControlSystem:
    """Dynamics ``dx/dt = f(x, u)`` with ``u`` constrained to a closed box."""

    state_dim: int
    input_box: np.ndarray
    vector_field: VectorField
    name: str

    def __post_init__(self):
        if self.state_dim <= 0:
            raise ValueError("state_dim must be positive")
        box = np.array(self.input_box, dtype=float)
        if box.ndim != 2 or box.shape[1] != 2 or box.shape[0] < 1:
            raise ValueError("input_box must have shape (m, 2)")
        if not np.all(np.isfinite(box)):
            raise ValueError("input_box must be bounded in every coordinate")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("input_box rows must satisfy lo <= hi")
        box.setflags(write=False)
        object.__setattr__(self, "input_box", box)

    @property
    def input_dim(self) -> int:
        return self.input_box.shape[0]

    def f(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.vector_field(np.asarray(x, dtype=float), np.asarray(u, dtype=float))

    def input_grid(self, res: int) -> np.ndarray:
        """Uniform per-axis discretization of the input box, shape (res**m, m).

        The grid always contains the box vertices.
        """
        if res < 2:
            raise ValueError("input grid needs at least 2 points per axis")
        axes = [np.linspace(lo, hi, res) for lo, hi in self.input_box]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def input_vertices(self) -> np.ndarray:
        return self.input_grid(2)


@dataclass(frozen=True)
class SystemConstants:
    """Empirical Lipschitz constant and velocity bound over a ball."""

    lipschitz_L_f: float
    f_bar: float
    ball_radius: float

    def __post_init__(self):
        if self.ball_radius <= 0:
            raise ValueError("ball_radius must be positive")
        if self.lipschitz_L_f < 0 or self.f_bar < 0:
            raise ValueError("constants must be nonnegative")


def nonholonomic_integrator() -> ControlSystem:
    """Kinematic unicycle benchmark: dx = (u1, u2, x1*u2 - x2*u1), u in [-1,1]^2."""

    def field(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        out = np.empty(shape + (3,), dtype=float)
        out[..., 0] = u[..., 0]
        out[..., 1] = u[..., 1]
        out[..., 2] = x[..., 0] * u[..., 1] - x[..., 1] * u[..., 0]
        return out

    return ControlSystem(3, np.array([[-1.0, 1.0], [-1.0, 1.0]]), field, "nonholonomic")


def scalar_integrator() -> ControlSystem:
    """Scalar benchmark dx = u with u in [-1, 1]; used by the certificate demo."""

    def field(x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], u.shape[:-1])
        out = np.empty(shape + (1,), dtype=float)
        out[..., 0] = u[..., 0]
        return out

    return ControlSystem(1, np.array([[-1.0, 1.0]]), field, "quadratic-test")


_SYSTEMS: dict[str, Callable[[], ControlSystem]] = {
    "nonholonomic": nonholonomic_integrator,
    "quadratic-test": scalar_integrator,
}


def get_system(name: str) -> ControlSystem:
    try:
        factory = _SYSTEMS[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; available: {sorted(_SYSTEMS)}") from None
    return factory()


def estimate_constants(
    sys: ControlSystem,
    ball_radius: float,
    sample_count: int,
    seed: int,
) -> SystemConstants:
    """Estimate the velocity bound and state-Lipschitz constant over a ball.

    Both constants are sampled maxima over quasi-random states in the origin
    ball and inputs in the box (vertices always included), inflated by the
    shared safety factor.  Deterministic for a fixed seed.
    """
    if ball_radius <= 0:
        raise ValueError("ball_radius must be positive")
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")

    n_states = int(sample_count)
    states = sample_ball(np.zeros(sys.state_dim), ball_radius, n_states, seed)
    n_inputs = min(64, max(4, sample_count // 16))
    inputs = np.vstack(
        [
            sys.input_vertices(),
            sample_box(sys.input_box[:, 0], sys.input_box[:, 1], n_inputs, seed + 1),
        ]
    )

    # Velocity bound: max ||f|| over states x inputs.
    vel = sys.f(states[:, None, :], inputs[None, :, :])
    f_bar = conservative_sup(np.max(np.linalg.norm(vel, axis=-1)))

    # Lipschitz quotients over far pairs and jittered near pairs, same input.
    partners_far = np.roll(states, 1, axis=0)
    jitter_dirs = sample_ball(np.zeros(sys.state_dim), 1.0, n_states, seed + 2)
    partners_near = states + 1e-3 * ball_radius * jitter_dirs

    best = 0.0
    for partners in (partners_far, partners_near):
        diff = states - partners
        dist = np.linalg.norm(diff, axis=-1)
        keep = dist > 1e-12 * ball_radius
        if not np.any(keep):
            continue
        fv = sys.f(states[keep][:, None, :], inputs[None, :, :])
        gv = sys.f(partners[keep][:, None, :], inputs[None, :, :])
        quot = np.linalg.norm(fv - gv, axis=-1) / dist[keep][:, None]
        best = max(best, float(np.max(quot)))
    lipschitz = conservative_sup(best)

    return SystemConstants(lipschitz_L_f=lipschitz, f_bar=f_bar, ball_radius=float(ball_radius))
