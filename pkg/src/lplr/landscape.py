"""Sampled probes of local loss geometry around a centre point.

The curvature and descent constants are estimated on random pairs inside a
ball, so they are diagnostics on a sample, not certificates for the ball.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DegeneratePair, EmptyTrajectory
from .netcore import fd_hvp
from .numkit import power_iter_max
from .rng import Stream

GAP_FLOOR = 1e-15


@dataclass(frozen=True)
class RegionProbeConfig:
    radius: float
    n_pairs: int = 200
    seed: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError("radius must be finite and positive")
        if self.n_pairs < 1:
            raise ValueError("n_pairs must be >= 1")


@dataclass(frozen=True)
class DescentProbe:
    """``gamma_hat`` is None when no sampled pair qualified."""

    gamma_hat: Optional[float]
    qualifying: int
    sampled: int


@dataclass(frozen=True)
class RegionReport:
    alpha_hat: float
    gamma_hat: Optional[float]
    mu_emp: float
    lambda_min_traj: float
    l_smooth_hat: float
    loss_region_min: float
    pl_violations: int

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if v is None:
                lines.append(f"{k}=")
            elif isinstance(v, float):
                lines.append(f"{k}={v:.17g}")
            else:
                lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return asdict(self)


def _ball_point(center, radius, stream: Stream):
    # Uniform radius in [0, R] (not volume-uniform; p is large).
    direction = stream.normal(center.shape[0])
    direction /= np.linalg.norm(direction)
    return center + radius * stream.uniform(1)[0] * direction


def sample_pairs(center, cfg: RegionProbeConfig):
    center = np.asarray(center, dtype=np.float64)
    root = Stream(cfg.seed, ("probe_pairs",))
    for k in range(cfg.n_pairs):
        sub = root.child(k)
        yield _ball_point(center, cfg.radius, sub.child("a")), _ball_point(
            center, cfg.radius, sub.child("b")
        )


def probe_curvature(objective, center, cfg: RegionProbeConfig) -> float:
    """Smallest ``alpha >= 0`` with ``L(phi) >= L(th) + g^T (phi-th) - alpha/2 |phi-th|^2`` on the sample."""
    alpha = 0.0
    for th, phi in sample_pairs(center, cfg):
        step = phi - th
        dist_sq = float(step @ step)
        if not math.sqrt(dist_sq) >= 1e-300:
            raise DegeneratePair("sampled pair coincides")
        l_th, g_th = objective.loss_and_grad(th)
        excess = l_th + float(g_th @ step) - objective.loss(phi)
        alpha = max(alpha, 2.0 * excess / dist_sq)
    return alpha


def probe_descent(objective, center, cfg: RegionProbeConfig) -> DescentProbe:
    """Minimum cosine between ``-grad L(th)`` and ``phi - th`` over improving pairs.

    A pair qualifies when ``L(phi) < L(th)`` and ``|grad L(th)| > 1e-12``.
    """
    gamma = None
    count = 0
    for th, phi in sample_pairs(center, cfg):
        l_th, g_th = objective.loss_and_grad(th)
        gnorm = float(np.linalg.norm(g_th))
        if gnorm <= 1e-12 or not objective.loss(phi) < l_th:
            continue
        step = th - phi
        dist = float(np.linalg.norm(step))
        if dist == 0.0:
            continue
        cos = float(np.clip(g_th @ step / (dist * gnorm), -1.0, 1.0))
        gamma = cos if gamma is None else min(gamma, cos)
        count += 1
    return DescentProbe(gamma, count, cfg.n_pairs)


def pl_check(
    traj,
    lambda_mins: Sequence[tuple[int, float]],
    l_region_min: Optional[float] = None,
    slack: float = 1e-9,
    gap_floor: float = GAP_FLOOR,
) -> tuple[float, int]:
    """Check ``g^2 / 2 + slack*(1+|L|) >= lambda_t (L_t - L*_R)`` at snapshot steps.

    ``lambda_mins`` pairs a step index with the kernel's smallest eigenvalue
    at that step. Returns ``(mu_emp, violations)`` where ``mu_emp`` is the
    smallest observed ratio ``g^2 / (2 gap)`` over checked steps with
    ``gap > gap_floor`` (inf if none).
    """
    if not traj.records or not lambda_mins:
        raise EmptyTrajectory("nothing to check")
    by_t = {r.t: r for r in traj.records}
    if l_region_min is None:
        l_region_min = min(r.loss for r in traj.records)
    mu = math.inf
    violations = 0
    for t, lam in lambda_mins:
        rec = by_t[t]
        gap = rec.loss - l_region_min
        half_g = 0.5 * rec.grad_norm_sq
        if half_g + slack * (1.0 + abs(rec.loss)) < lam * gap:
            violations += 1
        if gap > gap_floor:
            mu = min(mu, half_g / gap)
    return mu, violations


def estimate_smoothness(objective, theta, iters: int = 200, seed: int = 0, eps=None) -> float:
    """Largest |eigenvalue| of the Hessian at ``theta`` by power iteration on HVPs."""
    theta = np.asarray(theta, dtype=np.float64)
    return power_iter_max(
        lambda v: fd_hvp(objective.grad, theta, v, eps), objective.dim, iters, seed
    )


def region_report(
    traj,
    l_smooth_hat: float,
    alpha_hat: float = math.nan,
    gamma_hat: Optional[float] = None,
    slack: float = 1e-9,
) -> RegionReport:
    lams = traj.snapshot_lambda_mins()
    l_star = min(r.loss for r in traj.records)
    mu, viol = pl_check(traj, lams, l_star, slack) if lams else (math.nan, 0)
    return RegionReport(
        alpha_hat=alpha_hat,
        gamma_hat=gamma_hat,
        mu_emp=mu,
        lambda_min_traj=traj.lambda_min_traj(),
        l_smooth_hat=l_smooth_hat,
        loss_region_min=l_star,
        pl_violations=viol,
    )
