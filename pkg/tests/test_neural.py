import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mipdqn.errors import CheckpointError, CheckpointVersionError, DomainError
from mipdqn.neural import (
    AdamState,
    DenseNet,
    adam_step,
    forward,
    from_dict,
    gradients,
    load,
    save,
    soft_update,
    to_dict,
)


def test_hand_computed_forward():
    net = DenseNet([[[1.0, -1.0], [0.5, 0.5]], [[2.0, -3.0]]], [[0.0, -1.0], [0.25]])
    # hidden: relu(1-2)=0, relu(0.5+1-1)=0.5 ; out: 0 - 1.5 + 0.25
    assert forward(net, [1.0, 2.0]) == pytest.approx([-1.25])
    assert forward(net, [[1.0, 2.0], [3.0, 0.0]]).shape == (2, 1)


def test_shape_checks():
    with pytest.raises(DomainError):
        DenseNet([np.ones((3, 2)), np.ones((1, 4))], [np.zeros(3), np.zeros(1)])
    with pytest.raises(DomainError):
        DenseNet([np.ones((3, 2))], [np.zeros(2)])
    net = DenseNet.init([4, 8, 1], rng=0)
    with pytest.raises(DomainError):
        net([1.0, 2.0])


def test_layer_bookkeeping():
    net = DenseNet.init([7, 64, 64, 64, 1], rng=1)
    assert net.layer_sizes == [7, 64, 64, 64, 1]
    assert net.n_hidden_units == 192
    assert net.n_inputs == 7 and net.n_outputs == 1


def _finite_difference(net, x, up, eps=1e-6):
    out = []
    for p in net.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            hi = float(np.sum(up * forward(net, x)))
            p[idx] = old - eps
            lo = float(np.sum(up * forward(net, x)))
            p[idx] = old
            g[idx] = (hi - lo) / (2 * eps)
        out.append(g)
    return out


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    net = DenseNet.init([5, 6, 4, 2], rng=rng, final_scale=1.0)
    for b in net.biases:
        b += rng.normal(0, 0.1, b.shape)
    x = rng.normal(size=(3, 5))
    up = rng.normal(size=(3, 2))
    analytic = gradients(net, x, up)
    numeric = _finite_difference(net, x, up)
    for a, n in zip(analytic.params(), numeric):
        assert np.allclose(a, n, atol=1e-6)

    eps = 1e-6
    gx = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += eps
        xm[idx] -= eps
        gx[idx] = (np.sum(up * forward(net, xp)) - np.sum(up * forward(net, xm))) / (2 * eps)
    assert np.allclose(analytic.inputs, gx, atol=1e-6)


def test_adam_minimises_a_quadratic():
    p = [np.array([3.0, -2.0])]
    state = AdamState.for_params(p, lr=0.05)
    for _ in range(2000):
        adam_step(state, p, [2 * p[0]])
    assert np.allclose(p[0], 0.0, atol=1e-3)


def test_adam_first_step_has_lr_magnitude():
    p = [np.array([1.0, 1.0])]
    state = AdamState.for_params(p, lr=0.01)
    adam_step(state, p, [np.array([5.0, -1e-3])])
    assert p[0] == pytest.approx([0.99, 1.01], abs=1e-6)


def test_soft_update_blends_parameters():
    a = DenseNet.init([2, 3, 1], rng=0)
    b = DenseNet.init([2, 3, 1], rng=1)
    expect = [0.9 * x + 0.1 * y for x, y in zip(a.params(), b.params())]
    soft_update(a, b, 0.1)
    for got, e in zip(a.params(), expect):
        assert np.allclose(got, e, atol=1e-15)
    with pytest.raises(DomainError):
        soft_update(a, b, 1.5)
    with pytest.raises(DomainError):
        soft_update(a, DenseNet.init([2, 4, 1]), 0.1)


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = DenseNet.init([7, 16, 16, 1], rng=3)
    path = tmp_path / "q.json"
    save(net, path, {"seed": 3})
    back = load(path)
    for x, y in zip(net.params(), back.params()):
        assert np.array_equal(x, y)
    assert json.loads(path.read_text())["metadata"] == {"seed": 3}


def test_checkpoint_rejects_bad_files(tmp_path):
    net = DenseNet.init([3, 4, 1], rng=0)
    data = to_dict(net)
    short = dict(data, params=data["params"][:-1])
    with pytest.raises(CheckpointError):
        from_dict(short)
    with pytest.raises(CheckpointVersionError):
        from_dict(dict(data, version=99))
    with pytest.raises(CheckpointError):
        from_dict({"format": "other"})
    path = tmp_path / "trunc.json"
    path.write_text(json.dumps(data)[:-20])
    with pytest.raises(CheckpointError):
        load(path)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 10.0))
def test_relu_net_is_positively_homogeneous_without_biases(seed, scale):
    net = DenseNet.init([4, 8, 8, 1], rng=seed, final_scale=1.0)
    x = np.random.default_rng(seed).normal(size=4)
    assert forward(net, scale * x) == pytest.approx(scale * forward(net, x), rel=1e-9, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_batch_and_single_agree(seed):
    net = DenseNet.init([3, 5, 2], rng=seed)
    x = np.random.default_rng(seed).normal(size=(4, 3))
    batch = forward(net, x)
    for i in range(4):
        assert np.allclose(forward(net, x[i]), batch[i], rtol=1e-12, atol=1e-15)
