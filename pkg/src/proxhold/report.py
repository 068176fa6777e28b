"""Delimited output and figure rendering for experiment runs.

All numeric CSV fields use ``repr`` of the float (shortest round-trip,
locale-free), so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sim import SampleHoldRun


def _fmt(value: float) -> str:
    return repr(float(value))


def write_run_csv(path: str, run: SampleHoldRun, state_dim: int, input_dim: int) -> None:
    header = (
        ["t"]
        + [f"x_{i+1}" for i in range(state_dim)]
        + [f"u_{i+1}" for i in range(input_dim)]
        + ["V", "V_alpha_lo", "V_alpha_hi", "eps_achieved", "eta_achieved"]
    )
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rec in run.samples:
            writer.writerow(
                [_fmt(rec.t)]
                + [_fmt(v) for v in rec.x]
                + [_fmt(v) for v in rec.u]
                + [_fmt(rec.v), _fmt(rec.v_alpha_lo), _fmt(rec.v_alpha_hi),
                   _fmt(rec.eps_achieved), _fmt(rec.eta_achieved)]
            )


def write_dense_csv(path: str, run: SampleHoldRun) -> None:
    if run.dense_states is None:
        return
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"x_{i+1}" for i in range(run.dense_states.shape[1])])
        for t, x in zip(run.dense_times, run.dense_states):
            writer.writerow([_fmt(t)] + [_fmt(v) for v in x])


def write_events_csv(path: str, run: SampleHoldRun) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "kind", "detail"])
        for ev in run.events:
            writer.writerow([_fmt(ev.t), ev.kind, ev.detail])


def write_summary_csv(path: str, rows: list[dict]) -> None:
    fields = ["eta", "terminal_mean_norm", "entry_time", "stayed", "min_case1_decay"]
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([
                _fmt(row["eta"]),
                _fmt(row["terminal_mean_norm"]),
                _fmt(row["entry_time"]) if row["entry_time"] is not None else "",
                "true" if row["stayed"] else "false",
                _fmt(row["min_case1_decay"]) if row["min_case1_decay"] is not None else "",
            ])


def eta_tag(eta: float) -> str:
    return f"{eta:.0e}".replace("e-0", "e-").replace("e+0", "e+")


def write_plotdata_csv(path: str, runs: dict[float, SampleHoldRun]) -> None:
    """Wide table of ||x(t)|| and V(t) traces per sweep value."""
    etas = list(runs)
    times = np.array([rec.t for rec in runs[etas[0]].samples])
    columns = []
    for eta in etas:
        states = runs[eta].sample_states()
        columns.append((f"norm_eta_{eta_tag(eta)}", np.linalg.norm(states, axis=-1)))
        columns.append((f"V_eta_{eta_tag(eta)}", np.array([r.v for r in runs[eta].samples])))
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [name for name, _ in columns])
        for i, t in enumerate(times):
            writer.writerow([_fmt(t)] + [_fmt(col[i]) for _, col in columns])


def render_figures(outdir: str, runs: dict[float, SampleHoldRun]) -> list[str]:
    """Render the state-norm and Lyapunov-trace figures next to the CSVs."""
    written = []
    etas = sorted(runs, reverse=True)

    fig, ax = plt.subplots(figsize=(7, 4.2))
    for eta in etas:
        run = runs[eta]
        t = np.array([rec.t for rec in run.samples])
        norms = np.linalg.norm(run.sample_states(), axis=-1)
        ax.semilogy(t, np.maximum(norms, 1e-16), label=f"eta = {eta:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("||x(t)||")
    ax.set_title("State norm under the accuracy sweep")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    path = os.path.join(outdir, "fig_state_norm.png")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)

    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for eta in etas:
        run = runs[eta]
        t = np.array([rec.t for rec in run.samples])
        v = np.array([rec.v for rec in run.samples])
        ax1.semilogy(t, np.maximum(v, 1e-18), label=f"eta = {eta:g}")
    ax1.set_ylabel("V(x(t))")
    ax1.grid(True, which="both", alpha=0.3)
    ax1.legend()
    best = min(etas)
    run = runs[best]
    t = np.array([rec.t for rec in run.samples])
    u = np.stack([rec.u for rec in run.samples])
    for i in range(u.shape[1]):
        ax2.step(t, u[:, i], where="post", label=f"u_{i+1}", linewidth=0.8)
    ax2.set_xlabel("t")
    ax2.set_ylabel(f"held input (eta = {best:g})")
    ax2.grid(True, alpha=0.3)
    ax2.legend()
    path = os.path.join(outdir, "fig_clf.png")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    written.append(path)
    return written
