import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mipdqn.errors import CheckpointError, DomainError, ValidationError
from mipdqn.microgrid import EnvState, default_system, large_system
from mipdqn.neural import DenseNet
from mipdqn.profiles import synthesize
from mipdqn.training import (
    AgentBundle,
    FeatureMap,
    ReplayBuffer,
    TrainConfig,
    Transition,
    denormalize_action,
    explore_action,
    load_agent,
    normalize_action,
    q_update,
    read_curves,
    save_agent,
    train,
    write_curves,
)

CFG = default_system()
SMALL = TrainConfig(epochs=6, batch_size=16, buffer_capacity=500, hidden=(8, 8), seed=5)


def test_feature_map_round_trip():
    fmap = FeatureMap(CFG, include_time=True)
    s = EnvState(7, 120.0, 300.0, 8.0, (50.0, 100.0, 200.0), (0.5,))
    f = fmap.featurize(s)
    assert f.shape == (fmap.size,) == (8,)
    back = fmap.inverse(f)
    assert back.t == 7 and back.price == pytest.approx(8.0)
    assert back.dg_prev == pytest.approx(s.dg_prev) and back.soc == pytest.approx(s.soc)


def test_action_scaling_examples():
    a = denormalize_action(np.array([-1.0, 1.0, 0.0, -1.0]), CFG)
    assert a.p_dg == pytest.approx((CFG.dgs[0].p_min, CFG.dgs[1].p_max,
                                    0.5 * (CFG.dgs[2].p_min + CFG.dgs[2].p_max)))
    assert a.p_ess == pytest.approx((-CFG.esss[0].p_limit,))


@settings(max_examples=50, deadline=None)
@given(a=st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_normalize_inverts_denormalize(a):
    back = normalize_action(denormalize_action(np.array(a), CFG), CFG)
    assert np.allclose(back, a, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), sigma=st.floats(0, 2))
def test_exploration_stays_in_box(seed, sigma):
    pi = DenseNet.init([5, 8, 4], rng=seed, final_scale=5.0)
    a = explore_action(pi, np.ones(5), sigma, np.random.default_rng(seed))
    assert np.all(np.abs(a) <= 1.0)


def test_negative_sigma_rejected():
    pi = DenseNet.init([5, 8, 4], rng=0)
    with pytest.raises(DomainError):
        explore_action(pi, np.ones(5), -0.1, np.random.default_rng(0))


def test_replay_buffer_overwrites_oldest():
    buf = ReplayBuffer(3, 1, 1)
    for k in range(5):
        buf.add(Transition(np.array([k]), np.array([0.0]), float(k), np.array([k]), False))
    assert len(buf) == 3
    assert sorted(buf.r) == [2.0, 3.0, 4.0]
    with pytest.raises(DomainError):
        buf.sample(4, np.random.default_rng(0))


def test_sigma_schedule():
    tc = TrainConfig(epochs=100, sigma_start=0.3, sigma_end=0.01)
    assert tc.sigma(0) == pytest.approx(0.3)
    assert tc.sigma(50) == pytest.approx(0.01)
    assert tc.sigma(99) == pytest.approx(0.01)
    assert tc.sigma(25) == pytest.approx(0.155)


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(gamma=1.0)
    with pytest.raises(ValidationError):
        TrainConfig(batch_size=100, buffer_capacity=10)
    with pytest.raises(ValidationError):
        TrainConfig(update_mode="sometimes")


def test_q_update_fits_a_constant_reward():
    # With done=1 everywhere the Bellman target is the reward itself.
    rng = np.random.default_rng(0)
    bundle = AgentBundle.create(2, 1, (16,), lr=1e-2, rng=rng)
    batch = {"s": rng.uniform(size=(64, 2)), "a": rng.uniform(-1, 1, size=(64, 1)),
             "r": np.full(64, 0.7), "s_next": rng.uniform(size=(64, 2)), "done": np.ones(64)}
    first = q_update(bundle, batch, 0.9)
    for _ in range(300):
        last = q_update(bundle, batch, 0.9)
    assert last < 1e-3 < first


def test_training_is_deterministic():
    days = synthesize(0, 10)
    a = train(CFG, days, SMALL)
    b = train(CFG, days, SMALL)
    assert [r.reward_mean for r in a.curves] == [r.reward_mean for r in b.curves]
    for x, y in zip(a.bundle.q_net.params(), b.bundle.q_net.params()):
        assert np.array_equal(x, y)
    assert len(a.curves) == SMALL.epochs and a.losses


def test_training_on_large_system_runs():
    r = train(large_system(), synthesize(0, 4), SMALL)
    assert r.bundle.q_net.n_inputs == r.features.size + large_system().n_actions


def test_empty_training_set_rejected():
    with pytest.raises(ValidationError):
        train(CFG, [], SMALL)


def test_agent_and_curves_round_trip(tmp_path):
    result = train(CFG, synthesize(0, 4), SMALL)
    save_agent(result, tmp_path, SMALL, {"note": "x"})
    q, pi, fmap = load_agent(tmp_path, CFG)
    for x, y in zip(q.params(), result.bundle.q_net.params()):
        assert np.array_equal(x, y)
    assert pi is not None and fmap == result.features
    write_curves(tmp_path / "c.csv", result.curves)
    assert read_curves(tmp_path / "c.csv") == result.curves
    with pytest.raises(CheckpointError):
        load_agent(tmp_path, large_system())

