"""Dense real linear algebra used by the rest of the package.

Matrices are plain float64 ``numpy`` arrays. The symmetric eigensolver is a
cyclic Jacobi method with round-robin (parallel) ordering: each round applies
``n/2`` disjoint Givens rotations at once, so a sweep is ``n - 1`` vectorised
updates instead of ``n(n-1)/2`` scalar ones.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateX, NonFinite, NotSymmetric, ZeroVector
from .rng import Stream

SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class SymEigResult:
    eigenvalues: np.ndarray
    eigenvectors: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int


def as_dense(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{name} has non-finite entries")
    return a


def _round_robin(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Pairings for ``m`` (even) indices; every pair appears once over m-1 rounds."""
    others = list(range(1, m))
    rounds = []
    for r in range(m - 1):
        seq = [0] + others[r:] + others[:r]
        p = np.array([seq[i] for i in range(m // 2)])
        q = np.array([seq[m - 1 - i] for i in range(m // 2)])
        lo, hi = np.minimum(p, q), np.maximum(p, q)
        rounds.append((lo, hi))
    return rounds


def sym_eig(a, want_vectors: bool = False, max_sweeps: int = 60) -> SymEigResult:
    """Full spectrum of a symmetric matrix, ascending.

    Raises NotSymmetric when ``max|A - A^T| > 1e-10 * max(1, max|A|)`` and
    NonFinite for NaN/inf entries.
    """
    a = as_dense(a)
    n, cols = a.shape
    if n != cols:
        raise NotSymmetric(f"matrix is not square: {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > SYMMETRY_RTOL * max(1.0, scale):
        raise NotSymmetric("asymmetry exceeds tolerance")

    w = 0.5 * (a + a.T)
    v = np.eye(n) if want_vectors else None
    if n <= 1 or scale == 0.0:
        return _sorted(np.diag(w).copy(), v)

    m = n + (n % 2)
    rounds = []
    for p, q in _round_robin(m):
        keep = q < n  # drop the pair involving the padding index
        rounds.append((p[keep], q[keep]))

    # A' = P^T A P is computed as rowop((rowop(A))^T), valid because A is
    # symmetric; row slices are contiguous, column slices are not.
    vt = v
    fro = np.linalg.norm(w)
    # Entries this small cannot move the 1e-15 * ||A||_F stopping test.
    negligible = max(1e-18 * fro, np.finfo(np.float64).tiny)
    for _ in range(max_sweeps):
        off = np.linalg.norm(w - np.diag(np.diag(w)))
        if off <= 1e-15 * fro:
            break
        for p, q in rounds:
            apq = w[p, q]
            active = np.abs(apq) > negligible
            if not np.any(active):
                continue
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = w[p, p], w[q, q]
            tau = (aqq - app) / (2.0 * apq)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(tau * tau + 1.0))
            c = (1.0 / np.sqrt(t * t + 1.0))[:, None]
            s = t[:, None] * c
            _rotate_rows(w, p, q, c, s)
            w = np.ascontiguousarray(w.T)
            _rotate_rows(w, p, q, c, s)
            w[p, q] = 0.0
            w[q, p] = 0.0
            if vt is not None:
                _rotate_rows(vt, p, q, c, s)
    v = None if vt is None else vt.T
    return _sorted(np.diag(w).copy(), v)


def _rotate_rows(a, p, q, c, s):
    rows_p, rows_q = a[p, :], a[q, :]
    a[p, :] = c * rows_p - s * rows_q
    a[q, :] = s * rows_p + c * rows_q


def _sorted(evals, evecs):
    order = np.argsort(evals, kind="stable")
    return SymEigResult(evals[order], None if evecs is None else evecs[:, order])


def power_iter_max(
    apply: Callable[[np.ndarray], np.ndarray],
    dim: int,
    iters: int = 200,
    seed: int = 0,
) -> float:
    """Largest-magnitude eigenvalue of a symmetric linear map (|Rayleigh quotient|)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    x = Stream(seed, ("power_iter",)).normal(dim)
    x /= np.linalg.norm(x)
    rayleigh = 0.0
    for _ in range(iters):
        y = np.asarray(apply(x), dtype=np.float64)
        rayleigh = float(x @ y)
        norm = np.linalg.norm(y)
        if not norm > 1e-300:
            raise ZeroVector("power iteration collapsed to the zero vector")
        x = y / norm
    return abs(rayleigh)


def fit_line(xs, ys) -> LineFit:
    """Ordinary least squares fit ``y = slope * x + intercept``."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-D arrays of equal length")
    if len(xs) < 2:
        raise ValueError("need at least two points")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise NonFinite("fit_line input has non-finite values")
    xm, ym = xs.mean(), ys.mean()
    dx, dy = xs - xm, ys - ym
    sxx = float(dx @ dx)
    if sxx / len(xs) < 1e-300:
        raise DegenerateX("xs have (numerically) zero variance")
    slope = float(dx @ dy) / sxx
    intercept = float(ym - slope * xm)
    resid = ys - (slope * xs + intercept)
    ss_tot = float(dy @ dy)
    ss_res = float(resid @ resid)
    if ss_tot <= 1e-300 * max(1.0, ym * ym):
        r2 = 1.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return LineFit(slope, intercept, r2, len(xs))
