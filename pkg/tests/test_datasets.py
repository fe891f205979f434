import gzip
import struct
from pathlib import Path

import numpy as np
import pytest

from lplr.datasets import (
    IDX_IMAGES,
    IDX_LABELS,
    SyntheticSpec,
    gen_synthetic,
    load_idx_pair,
    read_idx,
    teacher_model,
    write_idx,
)
from lplr.errors import BadMagic, ClassAbsent, CountMismatch, ShapeMismatch, TruncatedFile
from lplr.netcore import MlpArch, MlpObjective, forward, loss

FIXTURES = Path(__file__).parent / "fixtures"


def _write_pair(tmp_path, pixels, labels, magic_images=0x803):
    """Byte-level IDX writer, independent of the package's writer."""
    n, rows, cols = len(pixels), 2, 2
    img = tmp_path / "img"
    lab = tmp_path / "lab"
    img.write_bytes(
        struct.pack(">IIII", magic_images, n, rows, cols) + bytes(v for im in pixels for v in im)
    )
    lab.write_bytes(struct.pack(">II", 0x801, len(labels)) + bytes(labels))
    return img, lab


def test_two_image_fixture(tmp_path):
    img, lab = _write_pair(tmp_path, [[0, 255, 51, 102], [255, 0, 0, 0]], [3, 5])
    ds = load_idx_pair(img, lab, class_a=3, class_b=5)
    assert ds.n == 2
    assert ds.y.tolist() == [1.0, -1.0]
    assert np.allclose(ds.x[0], [0.0, 1.0, 0.2, 0.4])
    assert ds.x.shape == (2, 4)


def test_max_n(tmp_path):
    img, lab = _write_pair(tmp_path, [[1, 2, 3, 4], [5, 6, 7, 8]], [0, 1])
    ds = load_idx_pair(img, lab, max_n=1)
    assert ds.n == 1 and ds.y.tolist() == [1.0]


def test_bad_magic(tmp_path):
    img, lab = _write_pair(tmp_path, [[1, 2, 3, 4]], [0], magic_images=0x802)
    with pytest.raises(BadMagic):
        load_idx_pair(img, lab)


def test_truncated(tmp_path):
    img, lab = _write_pair(tmp_path, [[1, 2, 3, 4], [5, 6, 7, 8]], [0, 1])
    img.write_bytes(img.read_bytes()[:-1])
    with pytest.raises(TruncatedFile):
        read_idx(img, IDX_IMAGES)
    img.write_bytes(b"\x00\x00")
    with pytest.raises(TruncatedFile):
        read_idx(img, IDX_IMAGES)
    img.write_bytes(struct.pack(">II", 0x803, 2))
    with pytest.raises(TruncatedFile):
        read_idx(img, IDX_IMAGES)


def test_count_mismatch(tmp_path):
    img, lab = _write_pair(tmp_path, [[1, 2, 3, 4], [5, 6, 7, 8]], [0, 1, 1])
    with pytest.raises(CountMismatch):
        load_idx_pair(img, lab)


def test_class_absent(tmp_path):
    img, lab = _write_pair(tmp_path, [[1, 2, 3, 4], [5, 6, 7, 8]], [0, 0])
    with pytest.raises(ClassAbsent):
        load_idx_pair(img, lab)


def test_committed_fixture():
    ds = load_idx_pair(FIXTURES / "tiny-images-idx3-ubyte", FIXTURES / "tiny-labels-idx1-ubyte")
    # labels 0,1,7,1,0,3 keep rows 0,1,3,4 in file order
    assert ds.y.tolist() == [1.0, -1.0, -1.0, 1.0]
    assert ds.x.shape == (4, 16)
    assert ds.x[2, 0] == pytest.approx(30 / 255)
    other = load_idx_pair(FIXTURES / "tiny-images-idx3-ubyte", FIXTURES / "tiny-labels-idx1-ubyte", 7, 3)
    assert other.y.tolist() == [1.0, -1.0]


def test_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pixels = rng.integers(0, 256, (5, 3, 4), dtype=np.uint8)
    labels = np.array([2, 9, 2, 9, 9], dtype=np.uint8)
    write_idx(tmp_path / "i", pixels)
    write_idx(tmp_path / "l", labels)
    assert np.array_equal(read_idx(tmp_path / "i", IDX_IMAGES), pixels)
    assert np.array_equal(read_idx(tmp_path / "l", IDX_LABELS), labels)
    ds = load_idx_pair(tmp_path / "i", tmp_path / "l", 2, 9)
    assert np.array_equal(np.rint(ds.x * 255).astype(np.uint8), pixels.reshape(5, -1))
    assert ds.y.tolist() == [1.0, -1.0, 1.0, -1.0, -1.0]
    with pytest.raises(ValueError):
        write_idx(tmp_path / "bad", np.zeros((2, 2)))


def test_gzip_input(tmp_path):
    raw = (FIXTURES / "tiny-labels-idx1-ubyte").read_bytes()
    path = tmp_path / "labels.gz"
    with gzip.open(path, "wb") as fh:
        fh.write(raw)
    assert read_idx(path, IDX_LABELS).tolist() == [0, 1, 7, 1, 0, 3]


def test_synthetic_deterministic():
    spec = SyntheticSpec(20, 5, MlpArch(2, 4, 5), noise_std=0.1, seed=3)
    a, b = gen_synthetic(spec), gen_synthetic(spec)
    assert a.x.tobytes() == b.x.tobytes() and a.y.tobytes() == b.y.tobytes()
    c = gen_synthetic(SyntheticSpec(20, 5, MlpArch(2, 4, 5), noise_std=0.1, seed=4))
    assert not np.array_equal(a.x, c.x)


def test_synthetic_realizable():
    arch = MlpArch(3, 6, 4)
    spec = SyntheticSpec(30, 4, arch, seed=1)
    data = gen_synthetic(spec)
    teacher = teacher_model(spec)
    assert loss(teacher, data) == 0.0
    assert MlpObjective(arch, data).loss(teacher.theta) == 0.0


def test_synthetic_linear_teacher():
    spec = SyntheticSpec(100, 16, MlpArch(1, 1, 16), seed=2)
    data = gen_synthetic(spec)
    w = teacher_model(spec).theta
    assert np.allclose(data.y, data.x @ w, rtol=0, atol=1e-13)


def test_synthetic_noise_level():
    arch = MlpArch(2, 4, 3)
    clean = gen_synthetic(SyntheticSpec(4000, 3, arch, 0.0, 5))
    noisy = gen_synthetic(SyntheticSpec(4000, 3, arch, 0.5, 5))
    assert np.array_equal(clean.x, noisy.x)
    assert abs(np.std(noisy.y - clean.y) - 0.5) < 0.03


def test_synthetic_teacher_independent_of_learner_init():
    from lplr.netcore import InitScheme, init_params

    arch = MlpArch(2, 4, 3)
    teacher = teacher_model(SyntheticSpec(5, 3, arch, seed=0))
    learner = init_params(arch, InitScheme("he", 0))
    assert not np.array_equal(teacher.theta, learner.theta)


def test_synthetic_validation():
    with pytest.raises(ShapeMismatch):
        SyntheticSpec(5, 3, MlpArch(2, 4, 2))
    with pytest.raises(ValueError):
        SyntheticSpec(0, 3, MlpArch(2, 4, 3))
    with pytest.raises(ValueError):
        SyntheticSpec(5, 3, MlpArch(2, 4, 3), noise_std=-1.0)


def test_x_is_standard_normal():
    data = gen_synthetic(SyntheticSpec(5000, 4, MlpArch(2, 2, 4), seed=7))
    assert abs(data.x.mean()) < 0.02 and abs(data.x.var() - 1) < 0.03
    assert np.all(np.isfinite(forward(teacher_model(SyntheticSpec(5000, 4, MlpArch(2, 2, 4), seed=7)), data.x)))
