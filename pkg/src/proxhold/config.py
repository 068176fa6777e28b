"""Experiment configuration: flat key = value files with bracketed sections.

Arrays are comma-separated.  Unknown systems or candidates, missing keys and
malformed values all raise :class:`ConfigError`, which the CLI maps to exit
code 2.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

import numpy as np

from .margins import MarginConfig


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    system_name: str
    clf_name: str
    x0: np.ndarray
    delta: float
    horizon: float
    substeps: int
    R: float
    r: float
    seed: int
    output_dir: str
    alpha: float
    eta_sweep: tuple[float, ...]
    eps_sq_sweep: tuple[float, ...]
    input_grid_res: int
    v_bar: float
    clf_lipschitz: float
    inject: bool
    eval_budget: int
    decay_coeff: float | None
    margins: MarginConfig = field(default_factory=MarginConfig)


def _get(section: configparser.SectionProxy, key: str, cast, default=None):
    if key not in section:
        if default is not None:
            return default
        raise ConfigError(f"missing key {key!r} in section [{section.name}]")
    raw = section[key].strip()
    try:
        return cast(raw)
    except ValueError as err:
        raise ConfigError(f"bad value for {key!r} in [{section.name}]: {raw!r}") from err


def _floats(raw: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(float(p) for p in parts)


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(raw)


def load_config(path: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except configparser.Error as err:
        raise ConfigError(f"config file does not parse: {err}") from err

    if "experiment" not in parser:
        raise ConfigError("missing [experiment] section")
    exp = parser["experiment"]
    if "feedback" not in parser:
        raise ConfigError("missing [feedback] section")
    fb = parser["feedback"]

    x0 = np.array(_get(exp, "x0", _floats))
    delta = _get(exp, "delta", float)
    horizon = _get(exp, "horizon", float)
    substeps = _get(exp, "substeps", int, default=10)
    R = _get(exp, "R", float)
    r = _get(exp, "r", float)
    if delta <= 0.0:
        raise ConfigError("delta must be positive")
    if horizon < delta:
        raise ConfigError("horizon must be at least one sampling period")
    if substeps < 1:
        raise ConfigError("substeps must be at least 1")
    if not 0.0 < r < R:
        raise ConfigError("radii must satisfy 0 < r < R")

    eta_sweep = _get(fb, "eta_sweep", _floats)
    if any(eta <= 0.0 for eta in eta_sweep):
        raise ConfigError("all eta_sweep values must be positive")
    eps_policy = _get(fb, "eps_policy", str, default="tie-to-eta")
    if eps_policy == "tie-to-eta":
        eps_sq = eta_sweep
    else:
        try:
            eps_sq = _floats(eps_policy)
        except ValueError as err:
            raise ConfigError(f"bad eps_policy: {eps_policy!r}") from err
        if len(eps_sq) != len(eta_sweep):
            raise ConfigError("explicit eps list must match eta_sweep length")

    alpha = _get(fb, "alpha", float)
    if not 0.0 < alpha < 1.0:
        raise ConfigError("alpha must lie in (0, 1)")

    clf_section = parser["clf"] if "clf" in parser else None
    decay_coeff = None
    if clf_section is not None and "decay_coeff" in clf_section:
        decay_coeff = float(clf_section["decay_coeff"])

    margins_kwargs = {}
    if "margins" in parser:
        msec = parser["margins"]
        casts = {
            "radius_step": float, "sphere_samples": int, "rstar_growth": float,
            "theta_margin": float, "constants_samples": int, "annulus_samples": int,
            "omega_pairs": int, "omega_points": int, "probe_points": int,
            "probe_directions": int, "probe_mu_min": float, "seed": int,
            "max_radius_factor": float,
        }
        for key in msec:
            if key not in casts:
                raise ConfigError(f"unknown key {key!r} in [margins]")
            margins_kwargs[key] = casts[key](msec[key])
    seed = _get(exp, "seed", int, default=0)
    margins_kwargs.setdefault("seed", seed)

    return ExperimentConfig(
        system_name=_get(exp, "system", str),
        clf_name=_get(exp, "clf", str),
        x0=x0,
        delta=delta,
        horizon=horizon,
        substeps=substeps,
        R=R,
        r=r,
        seed=seed,
        output_dir=_get(exp, "output_dir", str, default="results"),
        alpha=alpha,
        eta_sweep=eta_sweep,
        eps_sq_sweep=eps_sq,
        input_grid_res=_get(fb, "input_grid_res", int, default=21),
        v_bar=_get(fb, "v_bar", float),
        clf_lipschitz=_get(fb, "clf_lipschitz", float),
        inject=_get(fb, "inject", _bool, default=True),
        eval_budget=_get(fb, "eval_budget", int, default=400_000),
        decay_coeff=decay_coeff,
        margins=MarginConfig(**margins_kwargs),
    )
