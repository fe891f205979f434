"""Gradient descent with trajectory recording and NTK snapshots."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, EmptyTrajectory
from .netcore import MlpObjective
from .ntk import DEFAULT_BYTE_CAP, MATERIALIZED, NtkReport, build_ntk
from .rng import Stream

FIXED = "fixed"
ONE_OVER_L = "one_over_l"
DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class TrainConfig:
    """``batch_size = 0`` means full batch. ``snapshot_every = 0`` disables snapshots.

    With ``eta_policy = "one_over_l"`` the step size is ``1 / l_smooth`` and
    ``l_smooth`` must be supplied (see ``landscape.estimate_smoothness``).
    """

    eta: float = 1e-3
    epochs: int = 500
    batch_size: int = 0
    shuffle_seed: int = 0
    snapshot_every: int = 0
    eta_policy: str = FIXED
    l_smooth: Optional[float] = None
    ntk_mode: str = MATERIALIZED
    ntk_block: int = 64
    ntk_byte_cap: int = DEFAULT_BYTE_CAP
    snapshot_smoothness: bool = False
    smoothness_iters: int = 50
    smoothness_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.eta_policy not in (FIXED, ONE_OVER_L):
            raise ConfigError(f"unknown eta_policy {self.eta_policy!r}")
        if self.eta_policy == ONE_OVER_L:
            if self.l_smooth is None or not self.l_smooth > 0:
                raise ConfigError("one_over_l policy needs a positive l_smooth estimate")
        elif not self.eta > 0:
            raise ConfigError("eta must be positive")
        if self.batch_size < 0 or self.snapshot_every < 0:
            raise ConfigError("batch_size and snapshot_every must be >= 0")

    @property
    def step_size(self) -> float:
        return 1.0 / self.l_smooth if self.eta_policy == ONE_OVER_L else self.eta

    @property
    def full_batch(self) -> bool:
        return self.batch_size == 0


@dataclass(frozen=True)
class StepRecord:
    t: int
    loss: float
    grad_norm_sq: float
    dist_from_init: float
    lambda_min: Optional[float] = None


@dataclass(frozen=True)
class Snapshot:
    t: int
    theta: np.ndarray = field(repr=False)
    ntk: Optional[NtkReport] = None
    l_smooth: Optional[float] = None


@dataclass
class Trajectory:
    records: list
    theta_init: np.ndarray
    theta_final: np.ndarray
    config: TrainConfig
    snapshots: list = field(default_factory=list)
    diverged: bool = False

    def __post_init__(self):
        if not self.records:
            raise EmptyTrajectory("trajectory has no records")

    @property
    def eta(self) -> float:
        return self.config.step_size

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    @property
    def losses(self) -> np.ndarray:
        return self.column("loss")

    @property
    def steps(self) -> np.ndarray:
        return self.column("t")

    @property
    def grad_norms_sq(self) -> np.ndarray:
        return self.column("grad_norm_sq")

    def snapshot_lambda_mins(self) -> list[tuple[int, float]]:
        return [(s.t, s.ntk.lambda_min) for s in self.snapshots if s.ntk is not None]

    def lambda_min_traj(self) -> float:
        vals = [lam for _, lam in self.snapshot_lambda_mins()]
        return min(vals) if vals else math.nan

    def to_csv(self) -> str:
        out = io.StringIO(newline="\n")
        out.write("t,loss,grad_norm_sq,dist_from_init,lambda_min\n")
        for r in self.records:
            lam = "" if r.lambda_min is None else f"{r.lambda_min:.17g}"
            out.write(
                f"{r.t},{r.loss:.17g},{r.grad_norm_sq:.17g},{r.dist_from_init:.17g},{lam}\n"
            )
        return out.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(self.to_csv())


def _take_snapshot(objective, theta, t, cfg: TrainConfig) -> Snapshot:
    rep = None
    if isinstance(objective, MlpObjective):
        rep = build_ntk(
            objective.model(theta),
            objective.data,
            mode=cfg.ntk_mode,
            block=cfg.ntk_block,
            byte_cap=cfg.ntk_byte_cap,
        )
    l_hat = None
    if cfg.snapshot_smoothness:
        from .landscape import estimate_smoothness

        l_hat = estimate_smoothness(
            objective, theta, iters=cfg.smoothness_iters, seed=cfg.smoothness_seed
        )
    return Snapshot(t, theta.copy(), rep, l_hat)


def _snapshot_due(t: int, cfg: TrainConfig) -> bool:
    return cfg.snapshot_every > 0 and (t % cfg.snapshot_every == 0 or t == cfg.epochs)


def run_gd(objective, theta0, cfg: TrainConfig):
    """Run ``epochs`` steps of ``theta <- theta - eta * grad L(theta)``.

    Each record holds the full-batch state *before* the update at that index;
    record 0 is the initial point and the last record is ``theta_final``. In
    mini-batch mode one epoch is a seeded pass over the data without
    replacement, and records are still full-batch quantities.

    Returns ``(theta_final, trajectory)``. If the loss becomes non-finite or
    exceeds ``1e6`` times the initial loss the run stops and the trajectory
    is flagged ``diverged``.
    """
    eta = cfg.step_size
    theta_init = np.array(theta0, dtype=np.float64)
    theta = theta_init.copy()
    records, snapshots = [], []
    diverged = False
    loss0 = None
    shuffler = Stream(cfg.shuffle_seed, ("minibatch",))
    n = getattr(objective, "n", None)
    if not cfg.full_batch and n is None:
        raise ConfigError("mini-batch mode needs a data-backed objective")

    for t in range(cfg.epochs + 1):
        value, g = objective.loss_and_grad(theta)
        if loss0 is None:
            loss0 = value
        if not math.isfinite(value) or value > DIVERGENCE_FACTOR * max(loss0, 1e-300):
            diverged = True
            break
        lam = None
        if _snapshot_due(t, cfg):
            snap = _take_snapshot(objective, theta, t, cfg)
            snapshots.append(snap)
            if snap.ntk is not None:
                lam = snap.ntk.lambda_min
        records.append(
            StepRecord(
                t=t,
                loss=value,
                grad_norm_sq=float(g @ g),
                dist_from_init=float(np.linalg.norm(theta - theta_init)),
                lambda_min=lam,
            )
        )
        if t == cfg.epochs:
            break
        if cfg.full_batch:
            theta = theta - eta * g
        else:
            order = shuffler.child(t).permutation(n)
            for start in range(0, n, cfg.batch_size):
                sub = objective.subset(order[start : start + cfg.batch_size])
                theta = theta - eta * sub.grad(theta)

    if not records:
        # Non-finite at the initial point; keep the state for diagnostics.
        records.append(StepRecord(0, float("nan"), float("nan"), 0.0))
    traj = Trajectory(records, theta_init, theta.copy(), cfg, snapshots, diverged)
    return theta, traj


def descent_lemma_check(traj: Trajectory, l_smooth_hat: float, slack: float = 1e-9) -> int:
    """Count steps with ``L_{t+1} > L_t - eta (1 - eta L / 2) ||g_t||^2`` (plus slack).

    At ``eta = 1 / L`` the decrease term is ``||g_t||^2 / (2L)``.
    """
    recs = traj.records
    if not recs:
        raise EmptyTrajectory("empty trajectory")
    eta = traj.eta
    if eta * l_smooth_hat > 1.0 + 1e-12:
        raise ValueError(f"eta * L = {eta * l_smooth_hat:g} exceeds 1")
    decrease = eta * (1.0 - eta * l_smooth_hat / 2.0)
    violations = 0
    for a, b in zip(recs[:-1], recs[1:]):
        bound = a.loss - decrease * a.grad_norm_sq
        if b.loss > bound + slack * (1.0 + abs(a.loss)):
            violations += 1
    return violations
