"""Empirical neural tangent kernel ``Theta = (1/n) J J^T`` and its drift."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceeded, IdenticalParams, NonPositiveEigenvalue
from .netcore import LabeledSet, MlpModel, per_sample_grads
from .numkit import sym_eig

DEFAULT_BYTE_CAP = 2**31
MATERIALIZED = "materialized"
BLOCKWISE = "blockwise"


@dataclass(frozen=True)
class NtkReport:
    n: int
    lambda_min: float
    lambda_max: float
    frob_norm: float
    theta_matrix: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class DriftStat:
    pairs: int
    max_ratio: float
    mean_ratio: float
    ratios: list  # (||Theta_a - Theta_b||_F, ||theta_a - theta_b||_2, ratio)


def ntk_matrix(
    model: MlpModel,
    data: LabeledSet,
    mode: str = MATERIALIZED,
    block: int = 64,
    byte_cap: int = DEFAULT_BYTE_CAP,
) -> np.ndarray:
    n, p = data.n, model.arch.n_params
    if mode == MATERIALIZED:
        if n * p * 8 > byte_cap:
            raise BudgetExceeded(
                f"Jacobian needs {n * p * 8} bytes, cap is {byte_cap}; use blockwise mode"
            )
        jac = per_sample_grads(model, data)
        k = (jac @ jac.T) / n
        return 0.5 * (k + k.T)
    if mode != BLOCKWISE:
        raise ValueError(f"unknown NTK mode {mode!r}")
    if block < 1:
        raise ValueError("block must be >= 1")
    # Two passes over row blocks; only two Jacobian blocks are alive at once.
    k = np.empty((n, n))
    starts = list(range(0, n, block))
    for i in starts:
        ji = per_sample_grads(model, data, (i, min(i + block, n)))
        for j in starts:
            if j < i:
                continue
            jj = ji if j == i else per_sample_grads(model, data, (j, min(j + block, n)))
            tile = (ji @ jj.T) / n
            k[i : i + len(ji), j : j + len(jj)] = tile
            k[j : j + len(jj), i : i + len(ji)] = tile.T
    return 0.5 * (k + k.T)


def report_from_matrix(k: np.ndarray, keep_matrix: bool = True) -> NtkReport:
    evals = sym_eig(k).eigenvalues
    return NtkReport(
        n=k.shape[0],
        lambda_min=float(evals[0]),
        lambda_max=float(evals[-1]),
        frob_norm=float(np.linalg.norm(k)),
        theta_matrix=k if keep_matrix else None,
    )


def build_ntk(
    model: MlpModel,
    data: LabeledSet,
    mode: str = MATERIALIZED,
    block: int = 64,
    byte_cap: int = DEFAULT_BYTE_CAP,
    keep_matrix: bool = True,
) -> NtkReport:
    """Kernel plus extreme eigenvalues (Jacobi)."""
    k = ntk_matrix(model, data, mode=mode, block=block, byte_cap=byte_cap)
    return report_from_matrix(k, keep_matrix)


def suboptimality_bound(report: NtkReport, grad_norm_sq: float) -> float:
    """Upper bound ``||grad L||^2 / (2 lambda_min)`` on ``L(theta) - L*_R``."""
    if not report.lambda_min > 1e-12:
        raise NonPositiveEigenvalue(f"lambda_min = {report.lambda_min:g}")
    return grad_norm_sq / (2.0 * report.lambda_min)


def drift(snapshots: Sequence[tuple[np.ndarray, NtkReport]]) -> DriftStat:
    """Empirical Lipschitz constant of the kernel, Frobenius norm over l2 distance.

    Uses consecutive pairs plus the (first, last) pair.
    """
    if len(snapshots) < 2:
        raise ValueError("drift needs at least two snapshots")
    for _, rep in snapshots:
        if rep.theta_matrix is None:
            raise ValueError("drift needs materialized kernel matrices")
    pairs = [(i, i + 1) for i in range(len(snapshots) - 1)]
    if len(snapshots) > 2:
        pairs.append((0, len(snapshots) - 1))
    ratios = []
    for a, b in pairs:
        th_a, rep_a = snapshots[a]
        th_b, rep_b = snapshots[b]
        dist = float(np.linalg.norm(np.asarray(th_a) - np.asarray(th_b)))
        if not dist >= 1e-300:
            raise IdenticalParams(f"snapshots {a} and {b} share the same parameters")
        dk = float(np.linalg.norm(rep_a.theta_matrix - rep_b.theta_matrix))
        ratios.append((dk, dist, dk / dist))
    rs = [r for _, _, r in ratios]
    return DriftStat(len(ratios), max(rs), float(np.mean(rs)), ratios)


def write_csv(k: np.ndarray, path) -> None:
    with open(path, "w", newline="\n") as fh:
        for row in k:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
