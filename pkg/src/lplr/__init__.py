"""Gradient descent on small ReLU networks, with empirical checks of local
Polyak-Lojasiewicz geometry through the neural tangent kernel."""

from .netcore import (
    InitScheme,
    LabeledSet,
    MlpArch,
    MlpModel,
    MlpObjective,
    QuadraticObjective,
    forward,
    grad,
    hvp,
    init_params,
    loss,
    per_sample_grads,
)
from .ntk import build_ntk, drift, suboptimality_bound
from .trainer import TrainConfig, Trajectory, descent_lemma_check, run_gd

__version__ = "0.1.0"

__all__ = [
    "InitScheme",
    "LabeledSet",
    "MlpArch",
    "MlpModel",
    "MlpObjective",
    "QuadraticObjective",
    "TrainConfig",
    "Trajectory",
    "build_ntk",
    "descent_lemma_check",
    "drift",
    "forward",
    "grad",
    "hvp",
    "init_params",
    "loss",
    "per_sample_grads",
    "run_gd",
    "suboptimality_bound",
]
