"""Preset pipelines: train, analyse, and write trajectory/summary/figure files.

Every preset returns a summary dict and writes into ``out_dir``:

* single-run presets (convergence, pl_verify, custom): ``trajectory.csv``,
  ``summary.json``, ``fig_*.csv`` and ``fig_*.gp``;
* comparison presets (init_compare, width_ablation): one subdirectory per run
  holding that run's files, plus a top-level ``summary.json`` and figure.

``summary["invariants_ok"]`` is False when a checked invariant failed (PL
violations, envelope violations, divergence, or the expected ordering of a
comparison preset); the CLI maps that to exit code 2.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis, landscape, ntk, report
from .config import ExperimentConfig
from .datasets import SyntheticSpec, gen_synthetic, load_idx_pair
from .errors import InsufficientPoints
from .netcore import InitScheme, LabeledSet, MlpArch, MlpObjective, init_params
from .numkit import fit_line
from .trainer import FIXED, ONE_OVER_L, TrainConfig, descent_lemma_check, run_gd

log = logging.getLogger(__name__)

REFERENCE_KL_SLOPE = 0.71
SLACK = 1e-9


@dataclass
class RunResult:
    label: str
    trajectory: object
    summary: dict
    l_smooth: float


def build_data(cfg: ExperimentConfig) -> LabeledSet:
    if cfg.source == "idx":
        return load_idx_pair(cfg.images, cfg.labels, cfg.class_a, cfg.class_b, cfg.max_n)
    teacher = MlpArch(cfg.teacher_depth, cfg.teacher_width, cfg.d)
    return gen_synthetic(SyntheticSpec(cfg.n, cfg.d, teacher, cfg.noise_std, cfg.seed))


def _fit_dict(fit) -> dict:
    return {
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "n_points": fit.n_points,
    }


def _train_config(cfg: ExperimentConfig, l_smooth: float, eta: Optional[float]) -> TrainConfig:
    if eta is not None:
        policy, value = FIXED, eta
    elif cfg.eta_policy == "one_over_l":
        policy, value = ONE_OVER_L, 0.0
    else:
        policy, value = FIXED, cfg.eta
    return TrainConfig(
        eta=value if policy == FIXED else 1.0,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        shuffle_seed=cfg.seed,
        snapshot_every=cfg.snapshot_interval,
        eta_policy=policy,
        l_smooth=l_smooth,
        ntk_mode=cfg.ntk_mode,
        ntk_block=cfg.ntk_block,
        snapshot_smoothness=cfg.snapshot_interval > 0,
        smoothness_iters=cfg.snapshot_smoothness_iters,
        smoothness_seed=cfg.seed,
    )


def prepare(cfg: ExperimentConfig, data: LabeledSet, width: int, init: str):
    arch = MlpArch(cfg.depth, width, data.d)
    model = init_params(arch, InitScheme(init, cfg.seed))
    objective = MlpObjective(arch, data)
    l_hat = landscape.estimate_smoothness(objective, model.theta, cfg.smoothness_iters, cfg.seed)
    return objective, model, l_hat


def analyse(cfg: ExperimentConfig, objective, traj, l_hat: float) -> dict:
    """All per-run diagnostics, as a JSON-ready dict."""
    eta = traj.eta
    out: dict = {
        "eta": eta,
        "l_smooth_hat": l_hat,
        "eta_times_l_smooth": eta * l_hat,
        "diverged": traj.diverged,
        "steps_recorded": len(traj.records),
        "initial_loss": traj.records[0].loss,
        "final_loss": traj.records[-1].loss,
        "final_gap_global": analysis.final_gap(traj),
        "loss_region_min": float(np.min(traj.losses)),
    }
    lam_traj = traj.lambda_min_traj()
    out["lambda_min_traj"] = lam_traj

    gap_floor = None
    if not cfg.batch_size:
        series = traj
    else:
        series = _smoothed(traj)

    try:
        rf = analysis.rate_fit(series, cfg.burn_in_frac, gap_floor)
        out["rate_fit"] = {
            **_fit_dict(rf.fit),
            "rate_observed": rf.rate_observed,
            "rate_theory": rf.rate_theory,
            "burn_in": rf.burn_in,
            "n_used": rf.n_used,
            "r_squared_tail_trimmed": _tail_trimmed_r2(series, cfg.burn_in_frac),
        }
    except InsufficientPoints as exc:
        out["rate_fit"] = {"error": str(exc)}

    pl_fits = {}
    for name, frac in (("all", 0.0), ("post_burn_in", cfg.burn_in_frac)):
        try:
            pf = analysis.pl_slope_fit(series, gap_floor, frac)
            pl_fits[name] = {**_fit_dict(pf.fit), "n_used": pf.n_used}
        except InsufficientPoints as exc:
            pl_fits[name] = {"error": str(exc)}
    pl_fits["reference_slope"] = REFERENCE_KL_SLOPE
    out["pl_slope_fit"] = pl_fits

    if math.isfinite(lam_traj) and 0.0 <= eta * lam_traj < 1.0:
        eligible = analysis.eligible_steps(traj)
        env = analysis.envelope_check(traj, eta, lam_traj, SLACK, eligible=eligible)
        out["envelope"] = asdict(env)
    else:
        out["envelope"] = {"error": f"eta * lambda_min_traj = {eta * lam_traj:g} outside [0, 1)"}

    if eta * l_hat <= 1.0 + 1e-12 and not cfg.batch_size:
        out["descent_lemma_violations"] = descent_lemma_check(traj, l_hat, SLACK)
    else:
        out["descent_lemma_violations"] = None

    radius = cfg.radius or float(np.linalg.norm(traj.theta_final - traj.theta_init))
    alpha_hat, gamma_hat, qualifying = math.nan, None, 0
    if radius > 0 and cfg.n_pairs > 0:
        probe = landscape.RegionProbeConfig(radius, cfg.n_pairs, cfg.seed)
        alpha_hat = landscape.probe_curvature(objective, traj.theta_init, probe)
        dp = landscape.probe_descent(objective, traj.theta_init, probe)
        gamma_hat, qualifying = dp.gamma_hat, dp.qualifying
    region = landscape.region_report(traj, l_hat, alpha_hat, gamma_hat, SLACK)
    out["region_report"] = {**asdict(region), "probe_radius": radius, "descent_qualifying_pairs": qualifying}
    out["region_report_text"] = region.to_text()

    with_ntk = [(s.theta, s.ntk) for s in traj.snapshots if s.ntk is not None]
    if len(with_ntk) >= 2:
        ds = ntk.drift(with_ntk)
        out["drift"] = {"pairs": ds.pairs, "max_ratio": ds.max_ratio, "mean_ratio": ds.mean_ratio}
    else:
        out["drift"] = None

    env_viol = out["envelope"].get("violations", 0)
    out["invariants_ok"] = bool(
        not traj.diverged and region.pl_violations == 0 and env_viol == 0
    )
    return out


def _tail_trimmed_r2(traj, burn_in_frac: float, tail_frac: float = 0.1) -> Optional[float]:
    losses = traj.losses
    gap = losses - losses.min()
    t = traj.steps
    n = len(gap)
    lo, hi = int(burn_in_frac * n), int((1.0 - tail_frac) * n)
    mask = np.zeros(n, dtype=bool)
    mask[lo:hi] = True
    mask &= gap > 1e-12 * gap[0]
    if mask.sum() < analysis.MIN_POINTS:
        return None
    return fit_line(t[mask], np.log(gap[mask])).r_squared


class _Series:
    """Minimal trajectory view with smoothed losses (mini-batch fits)."""

    def __init__(self, traj, losses, g2):
        self._traj = traj
        self.losses = losses
        self.grad_norms_sq = g2
        self.steps = traj.steps
        self.eta = traj.eta

    def lambda_min_traj(self):
        return self._traj.lambda_min_traj()


def _smoothed(traj):
    return _Series(
        traj,
        analysis.moving_average(traj.losses),
        analysis.moving_average(traj.grad_norms_sq),
    )


def write_run_files(out: Path, traj, summary: dict, dump_ntk: bool) -> None:
    out.mkdir(parents=True, exist_ok=True)
    traj.write_csv(out / "trajectory.csv")
    report.write_json(out / "summary.json", summary)
    if dump_ntk:
        ntk_dir = out / "ntk"
        ntk_dir.mkdir(exist_ok=True)
        for s in traj.snapshots:
            if s.ntk is not None and s.ntk.theta_matrix is not None:
                ntk.write_csv(s.ntk.theta_matrix, ntk_dir / f"ntk_t{s.t:06d}.csv")


def _write_fig_convergence(out: Path, traj, summary: dict) -> None:
    gap = traj.losses - traj.losses.min()
    env = summary.get("envelope", {})
    rho = env.get("contraction")
    t = traj.steps
    envelope = rho ** (t - t[0]) * gap[0] if rho is not None else [None] * len(t)
    report.write_table(
        out / "fig_convergence.csv",
        ["t", "gap", "gap_smooth", "envelope"],
        [t.astype(int), gap, analysis.moving_average(gap), envelope],
    )
    report.write_text(
        out / "fig_convergence.gp",
        report.gnuplot_script(
            "fig_convergence.csv",
            "Suboptimality gap (semi-log)",
            "iteration t",
            "L(theta_t) - L*_R",
            [(1, 2, "gap", "lines"), (1, 3, "gap (moving average, 11)", "lines"), (1, 4, "linear-rate envelope", "lines dt 2")],
            logy=True,
        ),
    )


def _write_fig_pl(out: Path, traj) -> None:
    gap = traj.losses - traj.losses.min()
    g2 = traj.grad_norms_sq
    keep = (gap > 0) & (g2 > 0)
    report.write_table(
        out / "fig_pl.csv",
        ["t", "gap", "grad_norm_sq", "grad_norm_sq_smooth"],
        [traj.steps[keep].astype(int), gap[keep], g2[keep], analysis.moving_average(g2[keep])],
    )
    report.write_text(
        out / "fig_pl.gp",
        report.gnuplot_script(
            "fig_pl.csv",
            "Squared gradient norm vs suboptimality gap (log-log)",
            "L(theta_t) - L*_R",
            "||grad L(theta_t)||^2",
            [(2, 3, "observed", "points pt 7 ps 0.5"), (2, 4, "moving average, 11", "lines")],
            logx=True,
            logy=True,
        ),
    )


def run_single(cfg: ExperimentConfig, out_dir, dump_ntk: bool = False,
               data: Optional[LabeledSet] = None, width: Optional[int] = None,
               init: Optional[str] = None, eta: Optional[float] = None,
               prepared=None, label: str = "run") -> RunResult:
    data = build_data(cfg) if data is None else data
    width = cfg.width if width is None else width
    init = cfg.init if init is None else init
    objective, model, l_hat = prepared or prepare(cfg, data, width, init)
    tcfg = _train_config(cfg, l_hat, eta)
    log.info("%s: width=%d init=%s eta=%.4g L_hat=%.4g", label, width, init, tcfg.step_size, l_hat)
    _, traj = run_gd(objective, model.theta, tcfg)
    summary = {
        "preset": cfg.preset,
        "label": label,
        "config": cfg.to_dict(),
        "run": {"width": width, "init": init, "n": data.n, "d": data.d, "n_params": objective.dim},
    }
    summary.update(analyse(cfg, objective, traj, l_hat))
    out = Path(out_dir)
    write_run_files(out, traj, summary, dump_ntk)
    if cfg.preset in ("convergence", "custom", "init_compare", "width_ablation"):
        _write_fig_convergence(out, traj, summary)
    if cfg.preset in ("pl_verify", "custom"):
        _write_fig_pl(out, traj)
    return RunResult(label, traj, summary, l_hat)


def run_init_compare(cfg: ExperimentConfig, out_dir, dump_ntk=False) -> dict:
    data = build_data(cfg)
    prepared = {kind: prepare(cfg, data, cfg.width, kind) for kind in ("he", "enhanced")}
    eta = _shared_eta(cfg, [p[2] for p in prepared.values()])
    runs = [
        run_single(cfg, Path(out_dir) / kind, dump_ntk, data, cfg.width, kind, eta, prepared[kind], kind)
        for kind in ("he", "enhanced")
    ]
    table = analysis.compare_runs([(r.label, r.trajectory) for r in runs], analysis.FINAL_GAP)
    he, enh = (analysis.final_gap(r.trajectory) for r in runs)
    ordering_ok = he < enh
    t = runs[0].trajectory.steps.astype(int)
    report.write_table(
        Path(out_dir) / "fig_init_compare.csv",
        ["t", "loss_he", "loss_enhanced"],
        [t, runs[0].trajectory.losses, runs[1].trajectory.losses],
    )
    report.write_text(
        Path(out_dir) / "fig_init_compare.gp",
        report.gnuplot_script(
            "fig_init_compare.csv", "He vs depth-aware initialisation", "iteration t",
            "training loss (L* = 0)", [(1, 2, "He", "lines"), (1, 3, "enhanced", "lines")], logy=True,
        ),
    )
    return _comparison_summary(cfg, runs, table, eta, {"he_below_enhanced": ordering_ok}, ordering_ok)


def run_width_ablation(cfg: ExperimentConfig, out_dir, dump_ntk=False) -> dict:
    data = build_data(cfg)
    widths = list(cfg.widths)
    prepared = {w: prepare(cfg, data, w, cfg.init) for w in widths}
    eta = _shared_eta(cfg, [p[2] for p in prepared.values()])
    runs = [
        run_single(cfg, Path(out_dir) / f"width_{w}", dump_ntk, data, w, cfg.init, eta, prepared[w], f"width_{w}")
        for w in widths
    ]
    finals = [r.trajectory.records[-1].loss for r in runs]
    monotone = all(a >= b for a, b in zip(finals, finals[1:]))
    table = analysis.compare_runs([(r.label, r.trajectory) for r in runs], analysis.FINAL_GAP)
    report.write_table(Path(out_dir) / "fig_width_ablation.csv", ["width", "final_loss"], [widths, finals])
    report.write_text(
        Path(out_dir) / "fig_width_ablation.gp",
        report.gnuplot_script(
            "fig_width_ablation.csv", "Final training loss vs width", "width m", "final loss",
            [(1, 2, "final loss", "linespoints pt 7")], logx=True, logy=True,
        ),
    )
    checks = {"final_loss_nonincreasing_in_width": monotone, "final_losses": finals}
    return _comparison_summary(cfg, runs, table, eta, checks, monotone)


def _shared_eta(cfg: ExperimentConfig, l_hats) -> float:
    # One step size for every run: the largest L_hat keeps eta <= 1/L_hat for all.
    if cfg.eta_policy == "fixed":
        return cfg.eta
    return 1.0 / max(l_hats)


def _comparison_summary(cfg, runs, table, eta, checks, ordering_ok) -> dict:
    return {
        "preset": cfg.preset,
        "config": cfg.to_dict(),
        "shared_eta": eta,
        "metric": analysis.FINAL_GAP,
        "table": [{"label": label, "value": value} for label, value in table],
        "checks": checks,
        "runs": {r.label: {
            "l_smooth_hat": r.l_smooth,
            "final_loss": r.summary["final_loss"],
            "rate_fit": r.summary["rate_fit"],
            "invariants_ok": r.summary["invariants_ok"],
        } for r in runs},
        "invariants_ok": bool(ordering_ok and all(r.summary["invariants_ok"] for r in runs)),
    }


def run_experiment(cfg: ExperimentConfig, out_dir, dump_ntk: bool = False) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cfg.preset == "init_compare":
        summary = run_init_compare(cfg, out, dump_ntk)
    elif cfg.preset == "width_ablation":
        summary = run_width_ablation(cfg, out, dump_ntk)
    else:
        return run_single(cfg, out, dump_ntk).summary
    report.write_json(out / "summary.json", summary)
    return summary
