"""Finite-difference gradient check shared by unit and acceptance tests."""

import numpy as np

from lplr.netcore import InitScheme, LabeledSet, MlpArch, grad, init_params, loss
from lplr.rng import Stream
from oracles import pre_activations


def _pattern(shapes, theta, x):
    return [z > 0 for z in pre_activations(shapes, theta, x)]


def random_instance(k: int):
    """Small random (model, data) with D <= 3, m <= 16, d <= 8, n <= 10."""
    s = Stream(k, ("gradcheck",))
    pick = s.child("shape").raw(4)
    depth = 1 + int(pick[0] % 3)
    width = 1 + int(pick[1] % 16)
    d = 1 + int(pick[2] % 8)
    n = 1 + int(pick[3] % 10)
    arch = MlpArch(depth, width, d)
    model = init_params(arch, InitScheme("he", k))
    x = s.child("x").normal(n * d).reshape(n, d)
    y = s.child("y").normal(n)
    return model, LabeledSet(x, y)


def gradient_check(model, data, h=1e-5):
    """Max scaled error ``|g_k - fd_k| / max(|g|_inf, 1e-12)`` over kink-free coordinates.

    A coordinate is excluded when either finite-difference probe changes the
    sign pattern of any hidden pre-activation, i.e. the step crosses a kink.
    Returns ``(error, n_checked, n_excluded)``.
    """
    shapes = model.arch.layer_shapes
    theta = model.theta
    g = grad(model, data)
    base = _pattern(shapes, theta, data.x)
    worst, checked, excluded = 0.0, 0, 0
    scale = max(np.max(np.abs(g)), 1e-12)
    for k in range(theta.size):
        step = h * max(1.0, abs(theta[k]))
        tp, tm = theta.copy(), theta.copy()
        tp[k] += step
        tm[k] -= step
        crosses = any(
            not np.array_equal(a, b)
            for probe in (tp, tm)
            for a, b in zip(base, _pattern(shapes, probe, data.x))
        )
        if crosses:
            excluded += 1
            continue
        fd = (loss(model.with_theta(tp), data) - loss(model.with_theta(tm), data)) / (2 * step)
        worst = max(worst, abs(g[k] - fd) / scale)
        checked += 1
    return worst, checked, excluded
