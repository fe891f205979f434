"""Bias-free fully-connected ReLU network with a scalar output.

Parameters live in one flat vector ``theta``. Layer ``l`` (1-based) has a
weight matrix of shape ``(fan_out, fan_in)`` stored row-major, layers in
order: ``W_1 (m x d)``, ``W_2 .. W_{D-1} (m x m)``, ``W_D (1 x m)``, giving
``p = d*m + (D-2)*m^2 + m``. ``depth == 1`` is the degenerate linear model
``f(x) = w^T x`` with ``p = d``.

Loss is the mean squared error ``(1/2n) * sum (f(x_i) - y_i)^2``.
The ReLU derivative at exactly 0 is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidArch, NonFinite, ShapeMismatch, ZeroVector
from .rng import Stream

HE = "he"
ENHANCED = "enhanced"


@dataclass(frozen=True)
class MlpArch:
    depth: int
    width: int
    in_dim: int

    def __post_init__(self):
        if self.depth < 1 or self.width < 1 or self.in_dim < 1:
            raise InvalidArch(f"invalid architecture {self}")

    @property
    def out_dim(self) -> int:
        return 1

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        if self.depth == 1:
            return [(1, self.in_dim)]
        m = self.width
        return [(m, self.in_dim)] + [(m, m)] * (self.depth - 2) + [(1, m)]

    @property
    def n_params(self) -> int:
        return sum(r * c for r, c in self.layer_shapes)

    def unpack(self, theta: np.ndarray) -> list[np.ndarray]:
        """Views of the weight matrices inside ``theta`` (no copy)."""
        mats, off = [], 0
        for r, c in self.layer_shapes:
            mats.append(theta[off : off + r * c].reshape(r, c))
            off += r * c
        return mats


@dataclass(frozen=True)
class MlpModel:
    arch: MlpArch
    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.shape != (self.arch.n_params,):
            raise ShapeMismatch(
                f"theta has shape {theta.shape}, expected ({self.arch.n_params},)"
            )
        if not np.all(np.isfinite(theta)):
            raise NonFinite("theta has non-finite entries")
        object.__setattr__(self, "theta", theta)

    @property
    def weights(self) -> list[np.ndarray]:
        return self.arch.unpack(self.theta)

    def with_theta(self, theta) -> "MlpModel":
        return MlpModel(self.arch, theta)


@dataclass(frozen=True)
class LabeledSet:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if x.ndim != 2 or x.shape[0] != y.shape[0] or x.shape[0] < 1:
            raise ShapeMismatch(f"x {x.shape} and y {y.shape} are incompatible")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise NonFinite("data has non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def subset(self, idx) -> "LabeledSet":
        idx = np.asarray(idx)
        return LabeledSet(self.x[idx], self.y[idx])


@dataclass(frozen=True)
class InitScheme:
    kind: str = HE
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (HE, ENHANCED):
            raise ValueError(f"unknown init scheme {self.kind!r}")


def depth_gain(layer: int, depth: int) -> float:
    """Variance multiplier ``(1 - |D/2 - l| / D)^2`` of the depth-aware init."""
    return (1.0 - abs(depth / 2.0 - layer) / depth) ** 2


def init_params(arch: MlpArch, scheme: InitScheme, stream: Optional[Stream] = None) -> MlpModel:
    """Gaussian weights with variance ``2 / fan_in``, optionally scaled by ``depth_gain``.

    Layer ``l`` draws from ``stream.child(l)``; the default stream is
    ``Stream(scheme.seed, ("init",))``.
    """
    root = Stream(scheme.seed, ("init",)) if stream is None else stream
    parts = []
    for l, (rows, cols) in enumerate(arch.layer_shapes, start=1):
        var = 2.0 / cols
        if scheme.kind == ENHANCED:
            var *= depth_gain(l, arch.depth)
        parts.append(np.sqrt(var) * root.child(l).normal(rows * cols))
    return MlpModel(arch, np.concatenate(parts))


def _check_inputs(arch: MlpArch, x: np.ndarray):
    if x.ndim != 2 or x.shape[1] != arch.in_dim:
        raise ShapeMismatch(f"inputs {x.shape} do not match in_dim={arch.in_dim}")


def _activations(weights, x):
    """Forward pass keeping pre-activations ``zs`` and layer inputs ``acts``."""
    acts, zs = [x], []
    a = x
    for w in weights[:-1]:
        z = a @ w.T
        zs.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    return acts, zs, (a @ weights[-1].T)[:, 0]


def forward(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    _check_inputs(model.arch, x)
    return _activations(model.weights, x)[2]


def _check_data(model: MlpModel, data: LabeledSet):
    _check_inputs(model.arch, data.x)


def loss(model: MlpModel, data: LabeledSet) -> float:
    _check_data(model, data)
    r = forward(model, data.x) - data.y
    return float(r @ r) / (2.0 * data.n)


def _backward(weights, acts, zs, out_grad):
    """Reverse pass. ``out_grad`` is (n,) for a summed gradient."""
    grads = [None] * len(weights)
    delta = out_grad[:, None]  # (n, 1)
    for l in range(len(weights) - 1, -1, -1):
        grads[l] = delta.T @ acts[l]
        if l > 0:
            delta = (delta @ weights[l]) * (zs[l - 1] > 0.0)
    return np.concatenate([g.reshape(-1) for g in grads])


def grad(model: MlpModel, data: LabeledSet) -> np.ndarray:
    """Gradient of the loss, ``(1/n) J^T (f - y)``."""
    _check_data(model, data)
    weights = model.weights
    acts, zs, f = _activations(weights, data.x)
    return _backward(weights, acts, zs, (f - data.y) / data.n)


def per_sample_grads(model: MlpModel, data: LabeledSet, row_range=None) -> np.ndarray:
    """Rows ``[start, stop)`` of the Jacobian: row i is d f(x_i) / d theta."""
    _check_data(model, data)
    start, stop = (0, data.n) if row_range is None else row_range
    if not (0 <= start <= stop <= data.n):
        raise ShapeMismatch(f"row range {row_range} outside [0, {data.n})")
    weights = model.weights
    acts, zs, _ = _activations(weights, data.x[start:stop])
    k = stop - start
    blocks = [None] * len(weights)
    delta = np.ones((k, 1))
    for l in range(len(weights) - 1, -1, -1):
        blocks[l] = (delta[:, :, None] * acts[l][:, None, :]).reshape(k, -1)
        if l > 0:
            delta = (delta @ weights[l]) * (zs[l - 1] > 0.0)
    return np.concatenate(blocks, axis=1)


def default_hvp_eps(theta) -> float:
    return 1e-4 * (1.0 + float(np.linalg.norm(theta)))


def fd_hvp(grad_fn, theta, v, eps: Optional[float] = None) -> np.ndarray:
    """Central difference of gradients along ``v``: an estimate of ``H v``."""
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if not norm > 1e-300:
        raise ZeroVector("hvp direction has zero norm")
    if eps is None:
        eps = default_hvp_eps(theta)
    if eps <= 0:
        raise ValueError("eps must be positive")
    u = v / norm
    return (grad_fn(theta + eps * u) - grad_fn(theta - eps * u)) / (2.0 * eps) * norm


def hvp(model: MlpModel, data: LabeledSet, v, eps: Optional[float] = None) -> np.ndarray:
    return fd_hvp(lambda th: grad(model.with_theta(th), data), model.theta, v, eps)


# Objectives: a uniform (loss, grad) interface over flat parameter vectors,
# consumed by the trainer and the landscape probes.


@dataclass(frozen=True)
class MlpObjective:
    arch: MlpArch
    data: LabeledSet

    def __post_init__(self):
        _check_inputs(self.arch, self.data.x)

    @property
    def dim(self) -> int:
        return self.arch.n_params

    def model(self, theta) -> MlpModel:
        return MlpModel(self.arch, theta)

    def loss(self, theta) -> float:
        return loss(self.model(theta), self.data)

    def grad(self, theta) -> np.ndarray:
        return grad(self.model(theta), self.data)

    def loss_and_grad(self, theta) -> tuple[float, np.ndarray]:
        weights = self.arch.unpack(np.asarray(theta, dtype=np.float64))
        acts, zs, f = _activations(weights, self.data.x)
        r = f - self.data.y
        g = _backward(weights, acts, zs, r / self.data.n)
        return float(r @ r) / (2.0 * self.data.n), g

    def subset(self, idx) -> "MlpObjective":
        return MlpObjective(self.arch, self.data.subset(idx))

    @property
    def n(self) -> int:
        return self.data.n


@dataclass(frozen=True)
class QuadraticObjective:
    """Test hook ``L(theta) = (c/2) theta^T A theta`` with a constant Hessian ``c*A``."""

    a: np.ndarray
    scale: float = 1.0
    _sym: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeMismatch("quadratic form must be square")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "_sym", 0.5 * (a + a.T))

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    def loss(self, theta) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        return 0.5 * self.scale * float(theta @ self._sym @ theta)

    def grad(self, theta) -> np.ndarray:
        return self.scale * (self._sym @ np.asarray(theta, dtype=np.float64))

    def loss_and_grad(self, theta):
        return self.loss(theta), self.grad(theta)
