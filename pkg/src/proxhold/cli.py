"""Config-driven experiment runner.

Verbs:
  run <config>      accuracy sweep: per-run CSVs, events, summary, plot data,
                    rendered figures, and the margin certificate
  certify <config>  margin certificate plus a human-readable constraint report
  selftest          quick battery of the core property checks

Exit codes: 0 ok, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .clf import get_clf
from .config import ConfigError, ExperimentConfig, load_config
from .feedback import FeedbackConfig
from .margins import (
    InfeasibleCertificateError,
    MarginCertificate,
    build_certificate,
    constraint_report,
)
from .report import (
    eta_tag,
    render_figures,
    write_dense_csv,
    write_events_csv,
    write_plotdata_csv,
    write_run_csv,
    write_summary_csv,
)
from .sim import SampleHoldRun, samplewise_decay_check, simulate, verdict
from .systems import get_system


def _resolve(cfg: ExperimentConfig):
    try:
        sys_ = get_system(cfg.system_name)
        clf = get_clf(cfg.clf_name, decay_coeff=cfg.decay_coeff)
    except KeyError as err:
        raise ConfigError(str(err)) from None
    if cfg.x0.size != sys_.state_dim:
        raise ConfigError(
            f"x0 has dimension {cfg.x0.size}, system expects {sys_.state_dim}"
        )
    return sys_, clf


def _feedback_config(cfg: ExperimentConfig, eta: float, eps_sq: float, idx: int) -> FeedbackConfig:
    return FeedbackConfig(
        alpha=cfg.alpha,
        eps_x=float(np.sqrt(eps_sq)),
        eta_x=eta,
        input_grid_res=cfg.input_grid_res,
        v_bar=cfg.v_bar,
        clf_lipschitz=cfg.clf_lipschitz,
        eval_budget=cfg.eval_budget,
        inject=cfg.inject,
        inject_seed=cfg.seed + idx,
    )


def run_experiment(
    config_path: str,
    output_dir: str | None = None,
    seed: int | None = None,
    dense: bool = False,
) -> int:
    """Run the accuracy sweep described by the config and emit all artifacts."""
    cfg = load_config(config_path)
    if seed is not None:
        object.__setattr__(cfg, "seed", seed)
    system, clf = _resolve(cfg)
    outdir = output_dir or cfg.output_dir
    os.makedirs(outdir, exist_ok=True)

    cert = build_certificate(system, clf, cfg.R, cfg.r, cfg.margins)
    with open(os.path.join(outdir, "certificate.txt"), "w", encoding="utf-8") as fh:
        fh.write(cert.to_text())

    def one_run(idx_eta):
        idx, (eta, eps_sq) = idx_eta
        fb = _feedback_config(cfg, eta, eps_sq, idx)
        return eta, simulate(
            system, clf, fb, cfg.x0, cfg.delta, cfg.horizon, cfg.substeps,
            dense=dense, target_radius=cfg.r,
        )

    jobs = list(enumerate(zip(cfg.eta_sweep, cfg.eps_sq_sweep)))
    with ThreadPoolExecutor(max_workers=min(len(jobs), os.cpu_count() or 1)) as pool:
        results = dict(pool.map(one_run, jobs))

    runs: dict[float, SampleHoldRun] = {eta: results[eta] for eta, _ in zip(cfg.eta_sweep, cfg.eps_sq_sweep)}

    horizon = cfg.horizon
    window_start = 0.8 * horizon
    summary_rows = []
    for eta in cfg.eta_sweep:
        run = runs[eta]
        tag = eta_tag(eta)
        write_run_csv(os.path.join(outdir, f"run_eta_{tag}.csv"), run, system.state_dim, system.input_dim)
        write_events_csv(os.path.join(outdir, f"events_eta_{tag}.csv"), run)
        if dense:
            write_dense_csv(os.path.join(outdir, f"dense_eta_{tag}.csv"), run)
        times = np.array([rec.t for rec in run.samples])
        norms = np.linalg.norm(run.sample_states(), axis=-1)
        in_window = times >= window_start
        vstat = verdict(run, cfg.R, cfg.r, R_star=max(cert.R_star, cfg.R), cert=cert)
        decay_rows = samplewise_decay_check(run, cert)
        min_decay = min((-amount for _, _, amount in decay_rows), default=None)
        summary_rows.append(
            {
                "eta": eta,
                "terminal_mean_norm": float(np.mean(norms[in_window])),
                "entry_time": vstat.entered_at,
                "stayed": vstat.stayed,
                "min_case1_decay": min_decay,
            }
        )

    write_summary_csv(os.path.join(outdir, "summary.csv"), summary_rows)
    write_plotdata_csv(os.path.join(outdir, "plotdata.csv"), runs)
    render_figures(outdir, runs)
    return 0


def emit_certificate(config_path: str, output_dir: str | None = None) -> int:
    """Build the margin certificate and write it with a constraint report."""
    cfg = load_config(config_path)
    system, clf = _resolve(cfg)
    outdir = output_dir or cfg.output_dir
    os.makedirs(outdir, exist_ok=True)
    cert = build_certificate(system, clf, cfg.R, cfg.r, cfg.margins)
    with open(os.path.join(outdir, "certificate.txt"), "w", encoding="utf-8") as fh:
        fh.write(cert.to_text())
    with open(os.path.join(outdir, "certificate_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(constraint_report(cert))
    print(constraint_report(cert), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="proxhold", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run the accuracy-sweep experiment")
    p_run.add_argument("config")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--dense", action="store_true")

    p_cert = sub.add_parser("certify", help="emit the margin certificate")
    p_cert.add_argument("config")
    p_cert.add_argument("--output-dir", default=None)

    sub.add_parser("selftest", help="run the built-in property battery")

    args = parser.parse_args(argv)
    try:
        if args.verb == "run":
            return run_experiment(args.config, args.output_dir, args.seed, args.dense)
        if args.verb == "certify":
            return emit_certificate(args.config, args.output_dir)
        if args.verb == "selftest":
            from .selftest import run_selftest

            return run_selftest()
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except InfeasibleCertificateError as err:
        print(f"infeasible certificate: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
