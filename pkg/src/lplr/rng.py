"""Seeded, splittable, counter-based random streams.

Every stream is a Philox4x64-10 generator keyed by ``(seed, stream_id)``.
``stream_id`` is derived from a label path with BLAKE2b, so child streams
are independent of the order in which they are requested::

    root = Stream(7)
    w1 = root.child("init", 1).normal(64 * 16)

Uniform doubles take the top 53 bits of each 64-bit word and are centred in
their bin, so they lie strictly inside (0, 1). Normals use the Box-Muller
transform on consecutive uniform pairs ``(u1, u2)``, emitting
``r*cos(2*pi*u2)`` then ``r*sin(2*pi*u2)`` with ``r = sqrt(-2 ln u1)``.
"""

from __future__ import annotations

import hashlib

import numpy as np

_INV_2_53 = 1.0 / 9007199254740992.0


def _stream_id(path: tuple) -> int:
    text = "/".join(str(p) for p in path).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


class Stream:
    """A reproducible random stream addressed by ``seed`` and a label path."""

    def __init__(self, seed: int, path: tuple = ()):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(path)
        key = np.array([self.seed, _stream_id(self.path)], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)

    def child(self, *labels) -> "Stream":
        return Stream(self.seed, self.path + tuple(labels))

    def raw(self, size: int) -> np.ndarray:
        return self._bitgen.random_raw(int(size))

    def uniform(self, size: int) -> np.ndarray:
        bits = self.raw(size) >> np.uint64(11)
        return (bits.astype(np.float64) + 0.5) * _INV_2_53

    def normal(self, size: int) -> np.ndarray:
        size = int(size)
        pairs = (size + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log(u[:, 0]))
        phase = 2.0 * np.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(phase)
        z[:, 1] = r * np.sin(phase)
        return z.reshape(-1)[:size]

    def permutation(self, n: int) -> np.ndarray:
        # Sort keys are raw 64-bit words; ties broken by index (stable).
        return np.argsort(self.raw(n), kind="stable")

    def __repr__(self):
        return f"Stream(seed={self.seed}, path={self.path!r})"
