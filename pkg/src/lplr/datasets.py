"""Synthetic teacher-network regression data and the IDX (MNIST) file format."""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagic, ClassAbsent, CountMismatch, ShapeMismatch, TruncatedFile
from .netcore import HE, InitScheme, LabeledSet, MlpArch, forward, init_params
from .rng import Stream

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    d: int
    teacher: MlpArch
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 1 or self.d < 1:
            raise ValueError("n and d must be >= 1")
        if self.teacher.in_dim != self.d:
            raise ShapeMismatch("teacher in_dim must equal d")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def teacher_model(spec: SyntheticSpec):
    stream = Stream(spec.seed, ("synthetic", "teacher"))
    return init_params(spec.teacher, InitScheme(HE, spec.seed), stream)


def gen_synthetic(spec: SyntheticSpec) -> LabeledSet:
    """Rows ``x ~ N(0, I_d)``; ``y = teacher(x) + N(0, noise_std^2)``.

    The teacher is He-initialised; inputs, teacher weights and noise come
    from disjoint streams of ``spec.seed``, none shared with ``init_params``'
    default stream.
    """
    root = Stream(spec.seed, ("synthetic",))
    x = root.child("x").normal(spec.n * spec.d).reshape(spec.n, spec.d)
    y = forward(teacher_model(spec), x)
    if spec.noise_std > 0:
        y = y + spec.noise_std * root.child("noise").normal(spec.n)
    return LabeledSet(x, y)


def _open(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    return gzip.open(path, "rb") if head == b"\x1f\x8b" else open(path, "rb")


def read_idx(path, expect_magic: int) -> np.ndarray:
    """Parse an IDX file of unsigned bytes; returns an array shaped by its dims."""
    with _open(path) as fh:
        blob = fh.read()
    if len(blob) < 4:
        raise TruncatedFile(f"{path}: missing header")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic != expect_magic:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{expect_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(blob) < header:
        raise TruncatedFile(f"{path}: header truncated")
    dims = struct.unpack(f">{ndim}I", blob[4:header])
    size = int(np.prod(dims, dtype=np.int64))
    if len(blob) - header < size:
        raise TruncatedFile(f"{path}: payload has {len(blob) - header} of {size} bytes")
    return np.frombuffer(blob, dtype=np.uint8, count=size, offset=header).reshape(dims)


def write_idx(path, array) -> None:
    arr = np.asarray(array, dtype=np.uint8)
    if arr.ndim not in (1, 3):
        raise ValueError("IDX writer supports label (1-D) and image (3-D) arrays")
    magic = IDX_LABELS if arr.ndim == 1 else IDX_IMAGES
    with open(path, "wb") as fh:
        fh.write(struct.pack(">I", magic))
        fh.write(struct.pack(f">{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes(order="C"))


def load_idx_pair(images_path, labels_path, class_a=0, class_b=1, max_n=None) -> LabeledSet:
    """Binary subset: ``class_a -> +1``, ``class_b -> -1``, pixels scaled by 1/255."""
    images = read_idx(images_path, IDX_IMAGES)
    labels = read_idx(labels_path, IDX_LABELS)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    keep = np.flatnonzero((labels == class_a) | (labels == class_b))
    if not np.any(labels == class_a) or not np.any(labels == class_b):
        raise ClassAbsent(f"classes {class_a}/{class_b} not both present")
    if max_n is not None:
        keep = keep[:max_n]
    x = images[keep].reshape(len(keep), -1).astype(np.float64) / 255.0
    y = np.where(labels[keep] == class_a, 1.0, -1.0)
    return LabeledSet(x, y)
