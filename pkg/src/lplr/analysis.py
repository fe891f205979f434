"""Rate fits, log-log PL slope fits, the linear-rate envelope and run tables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyTrajectory,
    InsufficientPoints,
    MismatchedLengths,
    RateOutOfRange,
)
from .numkit import LineFit, fit_line

MIN_POINTS = 10
FINAL_GAP = "final_gap"
RATE_OBSERVED = "rate_observed"


@dataclass(frozen=True)
class RateFit:
    fit: LineFit
    rate_observed: float
    rate_theory: float
    burn_in: int
    n_used: int


@dataclass(frozen=True)
class PlSlopeFit:
    fit: LineFit
    slope: float
    n_used: int


@dataclass(frozen=True)
class EnvelopeReport:
    violations: int
    n_checked: int
    worst_ratio: float  # max over checked t of gap_t / envelope_t
    worst_t: int
    contraction: float  # 1 - eta * lambda_min_traj


def gaps(traj, l_star: Optional[float] = None) -> np.ndarray:
    losses = traj.losses
    if l_star is None:
        l_star = float(np.min(losses))
    return losses - l_star


def _default_floor(gap: np.ndarray) -> float:
    return 1e-12 * gap[0] if gap[0] > 0 else 0.0


def rate_fit(
    traj,
    burn_in_frac: float = 0.1,
    gap_floor: Optional[float] = None,
    l_star: Optional[float] = None,
    lambda_min_traj: Optional[float] = None,
) -> RateFit:
    """OLS of ``ln(L_t - L*_R)`` on ``t`` after the burn-in window."""
    gap = gaps(traj, l_star)
    t = traj.steps
    floor = _default_floor(gap) if gap_floor is None else gap_floor
    burn_in = int(math.floor(burn_in_frac * len(gap)))
    mask = np.zeros(len(gap), dtype=bool)
    mask[burn_in:] = True
    mask &= gap > floor
    if mask.sum() < MIN_POINTS:
        raise InsufficientPoints(f"only {int(mask.sum())} usable points for the rate fit")
    fit = fit_line(t[mask], np.log(gap[mask]))
    lam = traj.lambda_min_traj() if lambda_min_traj is None else lambda_min_traj
    contraction = 1.0 - traj.eta * lam
    theory = -math.log(contraction) if 0.0 < contraction <= 1.0 else math.nan
    return RateFit(fit, -fit.slope, theory, burn_in, int(mask.sum()))


def pl_slope_fit(
    traj,
    gap_floor: Optional[float] = None,
    burn_in_frac: float = 0.0,
    l_star: Optional[float] = None,
) -> PlSlopeFit:
    """OLS of ``ln ||grad L||^2`` on ``ln(L_t - L*_R)``; an exact PL relation has slope 1."""
    gap = gaps(traj, l_star)
    g2 = traj.grad_norms_sq
    floor = _default_floor(gap) if gap_floor is None else gap_floor
    burn_in = int(math.floor(burn_in_frac * len(gap)))
    mask = np.zeros(len(gap), dtype=bool)
    mask[burn_in:] = True
    mask &= (gap > floor) & (g2 > 0)
    if mask.sum() < MIN_POINTS:
        raise InsufficientPoints(f"only {int(mask.sum())} usable points for the slope fit")
    fit = fit_line(np.log(gap[mask]), np.log(g2[mask]))
    return PlSlopeFit(fit, fit.slope, int(mask.sum()))


def eligible_steps(traj) -> Optional[np.ndarray]:
    """Mask of records where ``eta <= 1/L_hat`` held, from smoothness snapshots.

    A snapshot's estimate governs the records from its step up to the next
    snapshot. Returns None when the run carried no smoothness snapshots.
    """
    snaps = [s for s in traj.snapshots if s.l_smooth is not None]
    if not snaps:
        return None
    eta = traj.eta
    ok_at = {s.t: eta * s.l_smooth <= 1.0 for s in snaps}
    ts = sorted(ok_at)
    mask = np.ones(len(traj.records), dtype=bool)
    current = True
    for i, rec in enumerate(traj.records):
        if rec.t in ok_at:
            current = ok_at[rec.t]
        elif rec.t < ts[0]:
            current = True
        mask[i] = current
    return mask


def envelope_check(
    traj,
    eta: float,
    lambda_min_traj: float,
    slack: float = 1e-9,
    l_star: Optional[float] = None,
    eligible: Optional[np.ndarray] = None,
) -> EnvelopeReport:
    """Check ``gap_t <= (1 - eta*lambda)^t * gap_0 * (1 + slack)`` at every step.

    Steps masked out by ``eligible`` are skipped (counted neither as checked
    nor as violations).
    """
    if not traj.records:
        raise EmptyTrajectory("empty trajectory")
    rho = 1.0 - eta * lambda_min_traj
    if not 0.0 <= eta * lambda_min_traj < 1.0:
        raise RateOutOfRange(f"eta * lambda_min = {eta * lambda_min_traj:g} not in [0, 1)")
    gap = gaps(traj, l_star)
    t = traj.steps
    t0 = t[0]
    gap0 = gap[0]
    violations, checked = 0, 0
    worst, worst_t = -math.inf, int(t0)
    for i in range(len(gap)):
        if eligible is not None and not eligible[i]:
            continue
        envelope = rho ** (t[i] - t0) * gap0
        checked += 1
        if gap[i] > envelope * (1.0 + slack):
            violations += 1
        if envelope > 0:
            ratio = gap[i] / envelope
        else:
            ratio = 0.0 if gap[i] <= 0 else math.inf
        if ratio > worst:
            worst, worst_t = ratio, int(t[i])
    return EnvelopeReport(violations, checked, worst, worst_t, rho)


def final_gap(traj, l_star: float = 0.0) -> float:
    """Last loss measured against a fixed reference (the interpolation value 0)."""
    return float(traj.records[-1].loss - l_star)


def compare_runs(runs: Sequence[tuple[str, object]], metric: str = FINAL_GAP):
    """Rows ``(label, value)`` sorted ascending by value; ties keep input order."""
    if len(runs) < 2:
        raise ValueError("need at least two runs")
    lengths = {len(tr.records) for _, tr in runs}
    if len(lengths) != 1:
        raise MismatchedLengths(f"trajectories have lengths {sorted(lengths)}")
    rows = []
    for label, tr in runs:
        if metric == FINAL_GAP:
            value = final_gap(tr)
        elif metric == RATE_OBSERVED:
            value = rate_fit(tr).rate_observed
        else:
            raise ValueError(f"unknown metric {metric!r}")
        rows.append((label, value))
    return sorted(rows, key=lambda row: row[1])


def moving_average(values, window: int = 11) -> np.ndarray:
    """Centred moving average; the window shrinks symmetrically at the edges."""
    values = np.asarray(values, dtype=np.float64)
    half = window // 2
    out = np.empty_like(values)
    for i in range(len(values)):
        h = min(half, i, len(values) - 1 - i)
        out[i] = values[i - h : i + h + 1].mean()
    return out
