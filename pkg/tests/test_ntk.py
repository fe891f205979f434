import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lplr.errors import BudgetExceeded, IdenticalParams, NonPositiveEigenvalue
from lplr.netcore import HE, InitScheme, LabeledSet, MlpArch, MlpModel, MlpObjective, grad, init_params, loss
from lplr.ntk import (
    BLOCKWISE,
    MATERIALIZED,
    NtkReport,
    build_ntk,
    drift,
    ntk_matrix,
    report_from_matrix,
    suboptimality_bound,
    write_csv,
)
from lplr.netcore import per_sample_grads
from lplr.rng import Stream
from lplr.trainer import TrainConfig, run_gd
from oracles import eigh_values, loop_ntk


def _instance(seed, depth=3, width=32, d=5, n=20):
    s = Stream(seed, ("ntk-test",))
    arch = MlpArch(depth, width, d)
    model = init_params(arch, InitScheme(HE, seed))
    data = LabeledSet(s.child("x").normal(n * d).reshape(n, d), s.child("y").normal(n))
    return model, data


def test_linear_ntk_is_gram():
    model, data = _instance(0, depth=1, width=1, d=4, n=7)
    k = ntk_matrix(model, data)
    assert np.allclose(k, data.x @ data.x.T / 7, rtol=0, atol=1e-14)
    other = model.with_theta(model.theta * -3.0 + 1.0)
    assert np.array_equal(ntk_matrix(other, data), k)


def test_single_sample():
    model, data = _instance(1, n=1)
    rep = build_ntk(model, data)
    g = per_sample_grads(model, data)[0]
    assert rep.theta_matrix.shape == (1, 1)
    assert rep.theta_matrix[0, 0] == pytest.approx(g @ g, rel=1e-14)
    assert rep.lambda_min == rep.lambda_max


def test_matches_loop_oracle():
    model, data = _instance(2, width=4, n=6)
    jac = per_sample_grads(model, data)
    assert np.allclose(ntk_matrix(model, data), loop_ntk(jac), rtol=0, atol=1e-13)


@pytest.mark.parametrize("seed", range(20))
def test_modes_agree_and_psd(seed):
    model, data = _instance(seed)
    a = ntk_matrix(model, data, MATERIALIZED)
    for block in (1, 3, 7, 64):
        b = ntk_matrix(model, data, BLOCKWISE, block=block)
        assert np.max(np.abs(a - b)) <= 1e-10
    assert np.array_equal(a, a.T)
    rep = report_from_matrix(a)
    assert rep.lambda_min >= -1e-10 * rep.lambda_max
    assert rep.lambda_min <= rep.lambda_max
    ref = eigh_values(a)
    assert rep.lambda_min == pytest.approx(ref[0], abs=1e-10 * ref[-1])
    assert rep.lambda_max == pytest.approx(ref[-1], rel=1e-12)


def test_budget_cap():
    model, data = _instance(3)
    cap = data.n * model.arch.n_params * 8 - 1
    with pytest.raises(BudgetExceeded):
        ntk_matrix(model, data, MATERIALIZED, byte_cap=cap)
    assert ntk_matrix(model, data, BLOCKWISE, byte_cap=cap).shape == (20, 20)


def test_unknown_mode():
    model, data = _instance(3)
    with pytest.raises(ValueError):
        ntk_matrix(model, data, "sparse")


def test_duplicated_dataset():
    model, data = _instance(4, n=8)
    k = ntk_matrix(model, data)
    dup = LabeledSet(np.vstack([data.x, data.x]), np.concatenate([data.y, data.y]))
    k2 = ntk_matrix(model, dup)
    expect = 0.5 * np.block([[k, k], [k, k]])
    assert np.allclose(k2, expect, rtol=1e-14, atol=1e-15)


@pytest.mark.parametrize("seed", range(10))
def test_gradient_ntk_identity(seed):
    model, data = _instance(seed, width=16, n=12)
    rep = build_ntk(model, data)
    g = grad(model, data)
    assert 0.5 * (g @ g) + 1e-9 >= rep.lambda_min * loss(model, data)


def test_suboptimality_bound_values():
    rep = NtkReport(3, 1.0, 2.0, 1.0)
    assert suboptimality_bound(rep, 0.0) == 0.0
    assert suboptimality_bound(rep, 2.0) == 1.0
    with pytest.raises(NonPositiveEigenvalue):
        suboptimality_bound(NtkReport(3, 1e-13, 2.0, 1.0), 1.0)
    with pytest.raises(NonPositiveEigenvalue):
        suboptimality_bound(NtkReport(3, -1.0, 2.0, 1.0), 1.0)


def test_suboptimality_bound_on_trajectory():
    model, data = _instance(5, width=32, n=10)
    obj = MlpObjective(model.arch, data)
    _, traj = run_gd(obj, model.theta, TrainConfig(eta=0.02, epochs=60, snapshot_every=10))
    l_star = traj.losses.min()
    by_t = {r.t: r for r in traj.records}
    for snap in traj.snapshots:
        rec = by_t[snap.t]
        assert suboptimality_bound(snap.ntk, rec.grad_norm_sq) >= rec.loss - l_star


def test_drift_identical_params():
    model, data = _instance(6)
    rep = build_ntk(model, data)
    perturbed = LabeledSet(data.x + 1.0, data.y)
    with pytest.raises(IdenticalParams):
        drift([(model.theta, rep), (model.theta.copy(), build_ntk(model, perturbed))])


def test_drift_linear_is_zero():
    model, data = _instance(7, depth=1, width=1)
    snaps = [(model.theta * c, build_ntk(model.with_theta(model.theta * c), data)) for c in (1.0, 2.0, -1.0)]
    stat = drift(snaps)
    assert stat.pairs == 3
    assert stat.max_ratio == 0.0 and stat.mean_ratio == 0.0


def test_drift_pairs_and_ratios():
    model, data = _instance(8)
    thetas = [model.theta + 0.1 * k * np.ones_like(model.theta) for k in range(4)]
    snaps = [(th, build_ntk(model.with_theta(th), data)) for th in thetas]
    stat = drift(snaps)
    assert stat.pairs == 4  # three consecutive plus (first, last)
    for dk, dist, r in stat.ratios:
        assert dk >= 0 and dist > 0 and r == pytest.approx(dk / dist)
    assert stat.max_ratio == max(r for _, _, r in stat.ratios)
    assert np.isfinite(stat.max_ratio)


def test_drift_needs_matrices():
    model, data = _instance(8)
    rep = build_ntk(model, data, keep_matrix=False)
    with pytest.raises(ValueError):
        drift([(model.theta, rep), (model.theta + 1, rep)])


def test_write_csv_round_trip(tmp_path):
    model, data = _instance(9, n=5)
    k = ntk_matrix(model, data)
    path = tmp_path / "k.csv"
    write_csv(k, path)
    back = np.loadtxt(path, delimiter=",")
    assert np.array_equal(back, k)
    assert b"\r" not in path.read_bytes()


@settings(max_examples=20, deadline=None)
@given(
    seed=st.integers(0, 10_000),
    depth=st.integers(1, 3),
    width=st.integers(1, 8),
    n=st.integers(1, 9),
    block=st.integers(1, 10),
)
def test_ntk_properties(seed, depth, width, n, block):
    model, data = _instance(seed, depth, width, 3, n)
    a = ntk_matrix(model, data)
    b = ntk_matrix(model, data, BLOCKWISE, block=block)
    assert np.max(np.abs(a - b)) <= 1e-10
    rep = report_from_matrix(a)
    assert rep.lambda_min >= -1e-10 * max(rep.lambda_max, 1e-300)
    g = grad(model, data)
    assert 0.5 * (g @ g) + 1e-9 >= rep.lambda_min * loss(model, data)


def test_zero_theta_kernel():
    arch = MlpArch(3, 4, 3)
    model = MlpModel(arch, np.zeros(arch.n_params))
    _, data = _instance(0, 3, 4, 3, 5)
    rep = build_ntk(model, data)
    assert rep.lambda_max == 0.0 and rep.frob_norm == 0.0
