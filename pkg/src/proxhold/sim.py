"""Sample-and-hold closed-loop simulation and practical-stability verdicts.

The control input is recomputed by the feedback pipeline at every sampling
instant ``t_k = k * delta`` and held constant over the period; between
samples the flow is integrated with a fixed-step classical Runge-Kutta
scheme, which keeps the discretization error negligible against the
accuracy effects under study.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .clf import Clf
from .feedback import ControlDecision, FeedbackBudgetError, FeedbackConfig, infc_feedback
from .margins import MarginCertificate
from .systems import ControlSystem


@dataclass(frozen=True)
class SampleRecord:
    """State, held input, and per-sample diagnostics at one sampling instant."""

    t: float
    x: np.ndarray
    u: np.ndarray
    v: float
    v_alpha_lo: float
    v_alpha_hi: float
    eps_achieved: float
    eta_achieved: float


@dataclass(frozen=True)
class RunEvent:
    t: float
    kind: str
    detail: str


@dataclass(frozen=True)
class SampleHoldRun:
    """Recorded closed-loop trajectory under sample-and-hold feedback."""

    delta: float
    samples: tuple[SampleRecord, ...]
    dense_times: np.ndarray | None
    dense_states: np.ndarray | None
    events: tuple[RunEvent, ...]

    def sample_states(self) -> np.ndarray:
        return np.stack([rec.x for rec in self.samples])

    def trajectory(self) -> tuple[np.ndarray, np.ndarray]:
        """Densest available (times, states) pair."""
        if self.dense_states is not None:
            return self.dense_times, self.dense_states
        times = np.array([rec.t for rec in self.samples])
        return times, self.sample_states()


@dataclass(frozen=True)
class StabilityVerdict:
    """Bounded-overshoot, target-entry and permanence summary of one run."""

    start_radius_R: float
    target_radius_r: float
    bounded: bool
    entered_at: float | None
    stayed: bool
    reaching_time_bound: float | None


def rk4_integrate(
    f: Callable[[float, np.ndarray], np.ndarray],
    x0: np.ndarray,
    t0: float,
    t1: float,
    steps: int,
) -> np.ndarray:
    """Classical fixed-step 4-stage Runge-Kutta; returns all states, (steps+1, n)."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    h = (t1 - t0) / steps
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((steps + 1, x.size))
    out[0] = x
    for i in range(steps):
        t = t0 + i * h
        k1 = f(t, x)
        k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = f(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i + 1] = x
    return out


def simulate(
    sys: ControlSystem,
    clf: Clf,
    cfg: FeedbackConfig,
    x0: np.ndarray,
    delta: float,
    horizon: float,
    substeps: int,
    *,
    dense: bool = False,
    target_radius: float | None = None,
) -> SampleHoldRun:
    """Run the sample-and-hold closed loop from x0 over the horizon.

    Budget failures in the feedback pipeline are recorded as events and the
    run continues with the best-effort control, so accuracy sweeps with
    deliberately violated budgets never abort.  Every sampling instant,
    including the terminal one, gets a full feedback evaluation so records
    are uniform.  Deterministic for fixed inputs.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    if horizon < delta:
        raise ValueError("horizon must be at least one sampling period")
    if substeps < 1:
        raise ValueError("substeps must be at least 1")

    n_periods = int(round(horizon / delta))
    x = np.asarray(x0, dtype=float).copy()
    records: list[SampleRecord] = []
    events: list[RunEvent] = []
    dense_t: list[np.ndarray] = []
    dense_x: list[np.ndarray] = []
    inside_target = None

    for k in range(n_periods + 1):
        t_k = k * delta
        try:
            decision = infc_feedback(sys, clf, x, cfg, sample_index=k)
        except FeedbackBudgetError as err:
            decision = err.best
            events.append(RunEvent(t=t_k, kind="budget", detail=f"{err.stage}: {err}"))
        env = decision.envelope
        records.append(
            SampleRecord(
                t=t_k,
                x=x.copy(),
                u=decision.input.copy(),
                v=float(clf.value(x)),
                v_alpha_lo=env.lower_bound,
                v_alpha_hi=env.upper_value,
                eps_achieved=env.epsilon_achieved,
                eta_achieved=decision.eta_achieved,
            )
        )
        if target_radius is not None:
            now_inside = bool(np.linalg.norm(x) <= target_radius)
            if inside_target is None:
                inside_target = now_inside
            elif now_inside and not inside_target:
                events.append(RunEvent(t=t_k, kind="entered_target", detail=f"r={target_radius}"))
                inside_target = True
            elif not now_inside and inside_target:
                events.append(RunEvent(t=t_k, kind="left_target", detail=f"r={target_radius}"))
                inside_target = False
        if k == n_periods:
            break

        u_held = decision.input

        def flow(t: float, state: np.ndarray) -> np.ndarray:
            return sys.f(state, u_held)

        seg = rk4_integrate(flow, x, t_k, t_k + delta, substeps)
        if dense:
            seg_t = t_k + (delta / substeps) * np.arange(substeps + 1)
            start = 0 if k == 0 else 1
            dense_t.append(seg_t[start:])
            dense_x.append(seg[start:])
        x = seg[-1]

    return SampleHoldRun(
        delta=float(delta),
        samples=tuple(records),
        dense_times=np.concatenate(dense_t) if dense else None,
        dense_states=np.vstack(dense_x) if dense else None,
        events=tuple(events),
    )


def verdict(
    run: SampleHoldRun,
    R: float,
    r: float,
    R_star: float,
    cert: MarginCertificate | None = None,
) -> StabilityVerdict:
    """Scan a run for boundedness, first target entry, and permanence.

    Uses the densest recorded trajectory.  ``stayed`` requires the state to
    never leave the target ball after first entry.
    """
    if not 0.0 < r < R <= R_star:
        raise ValueError("radii must satisfy 0 < r < R <= R_star")
    times, states = run.trajectory()
    norms = np.linalg.norm(states, axis=-1)
    bounded = bool(np.all(norms <= R_star * (1.0 + 1e-12)))
    inside = norms <= r
    entered_at = None
    stayed = False
    if np.any(inside):
        first = int(np.argmax(inside))
        entered_at = float(times[first])
        stayed = bool(np.all(inside[first:]))
    bound = None
    if cert is not None:
        bound = 4.0 * (cert.v_bar - cert.v_star / 2.0) / cert.w_bar
    return StabilityVerdict(
        start_radius_R=float(R),
        target_radius_r=float(r),
        bounded=bounded,
        entered_at=entered_at,
        stayed=stayed,
        reaching_time_bound=bound,
    )


def samplewise_decay_check(
    run: SampleHoldRun, cert: MarginCertificate
) -> list[tuple[int, bool, float]]:
    """Certified per-sample decay of the envelope value outside the target.

    For every consecutive pair whose envelope lower bound at the earlier
    sample is at least ``v_star / 2`` (so the sample is certainly in the
    decay regime), reports ``amount``, a certified upper bound on the change
    of the envelope value, and whether it decays at rate ``delta*w_bar/2``.
    Samples below the threshold are exempt.
    """
    out: list[tuple[int, bool, float]] = []
    threshold = cert.v_star / 2.0
    rate = -run.delta * cert.w_bar / 2.0
    for k in range(len(run.samples) - 1):
        lo_k = run.samples[k].v_alpha_lo
        if lo_k < threshold:
            continue
        amount = run.samples[k + 1].v_alpha_hi - lo_k
        out.append((k, bool(amount <= rate), float(amount)))
    return out


__all__ = [
    "SampleRecord",
    "RunEvent",
    "SampleHoldRun",
    "StabilityVerdict",
    "rk4_integrate",
    "simulate",
    "verdict",
    "samplewise_decay_check",
]
