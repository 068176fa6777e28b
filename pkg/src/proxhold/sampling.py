"""Deterministic quasi-random sampling helpers shared by the estimation routines.

All samplers are driven by scrambled Halton sequences, so repeated calls with
the same arguments return identical arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

# Safety inflation applied to sampled sup-type constants (and its reciprocal
# to inf-type constants) so that downstream bounds stay conservative.
SAFETY_FACTOR = 1.1


@dataclass(frozen=True)
class Ball:
    """Closed Euclidean ball used as a region spec by sampling-based probes."""

    center: np.ndarray
    radius: float


def unit_cube(count: int, dim: int, seed: int) -> np.ndarray:
    """Quasi-random points in [0, 1)^dim, shape (count, dim)."""
    sampler = qmc.Halton(d=dim, scramble=True, seed=seed)
    return sampler.random(count)


def sample_box(lo: np.ndarray, hi: np.ndarray, count: int, seed: int) -> np.ndarray:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    u = unit_cube(count, lo.size, seed)
    return lo + u * (hi - lo)


def _unit_directions(count: int, dim: int, seed: int) -> np.ndarray:
    if dim == 1:
        # Alternate signs deterministically; a 1-sphere has two points.
        signs = np.where(np.arange(count) % 2 == 0, 1.0, -1.0)
        return signs[:, None]
    u = unit_cube(count, dim, seed)
    # Clip away the open-interval endpoints before the normal inverse CDF.
    z = ndtri(np.clip(u, 1e-12, 1.0 - 1e-12))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return z / norms


def sample_sphere(center: np.ndarray, radius: float, count: int, seed: int) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    return center + radius * _unit_directions(count, center.size, seed)


def sample_ball(center: np.ndarray, radius: float, count: int, seed: int) -> np.ndarray:
    center = np.asarray(center, dtype=float)
    dim = center.size
    dirs = _unit_directions(count, dim, seed)
    u = unit_cube(count, 1, seed + 1)[:, 0]
    r = radius * u ** (1.0 / dim)
    return center + dirs * r[:, None]


def sample_annulus(center: np.ndarray, r_in: float, r_out: float, count: int, seed: int) -> np.ndarray:
    """Volume-uniform quasi-random points with r_in <= ||x - center|| <= r_out."""
    center = np.asarray(center, dtype=float)
    dim = center.size
    dirs = _unit_directions(count, dim, seed)
    u = unit_cube(count, 1, seed + 1)[:, 0]
    r = (r_in**dim + u * (r_out**dim - r_in**dim)) ** (1.0 / dim)
    return center + dirs * r[:, None]


def conservative_sup(sampled_max: float) -> float:
    """Inflate a sampled maximum of a nonnegative quantity."""
    return float(sampled_max) * SAFETY_FACTOR


def conservative_inf(sampled_min: float) -> float:
    """Deflate a sampled minimum of a nonnegative quantity."""
    return float(sampled_min) / SAFETY_FACTOR
