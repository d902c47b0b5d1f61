import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mipdqn.dispatch import (
    DispatchContext,
    build_constraints,
    build_dispatch_model,
    dispatch_step,
    feasibility_check,
    run_day,
    run_policy_day,
    static_feasibility_warnings,
    trajectory_header,
    write_trajectory,
)
from mipdqn.errors import DomainError, InfeasibleError
from mipdqn.microgrid import Action, EnvState, RewardParams, clip_action, default_system
from mipdqn.mip import HighsBackend, maximize_network, reference_solve
from mipdqn.neural import DenseNet, forward
from mipdqn.profiles import DayProfile, synthesize
from mipdqn.training import FeatureMap, TrainConfig, action_scales, denormalize_action, train

CFG = default_system()
FMAP = FeatureMap(CFG)
N_S = FMAP.size


def state(t=3, pv=0.0, load=150.0, dg_prev=(10.0, 50.0, 100.0), soc=(0.5,), price=5.0):
    return EnvState(t, pv, load, price, tuple(dg_prev), tuple(soc))


def parabola_net(centre=0.3, knots=np.round(np.arange(-1.0, 1.0001, 0.1), 10), action=0):
    """Concave piecewise-linear interpolation of -(a - centre)^2 in one action input."""
    f = -(knots - centre) ** 2
    slopes = np.diff(f) / np.diff(knots)
    n_in = N_S + CFG.n_actions
    # Unit 0 carries the first slope: relu(a + 1) is a + 1 on the whole box.
    w1 = np.zeros((len(slopes), n_in))
    w1[:, N_S + action] = 1.0
    b1 = np.concatenate([[-knots[0]], -knots[1:-1]])
    w2 = np.concatenate([[slopes[0]], np.diff(slopes)])[None, :]
    return DenseNet([w1, w2], [b1, [f[0]]])


@pytest.fixture(scope="module")
def agent():
    tc = TrainConfig(epochs=40, batch_size=32, buffer_capacity=2000, hidden=(16, 16), seed=2)
    return train(CFG, synthesize(0, 20), tc).bundle


def ctx_for(q_net, s=None, cfg=CFG, **kw):
    return DispatchContext(q_net, cfg, FeatureMap(cfg), s, backend=HighsBackend(), **kw)


# ---------------------------------------------------------------- constraints

def test_dg1_window_example():
    cons = build_constraints(state(), CFG)
    offset, scale = action_scales(CFG)
    p_lo = offset + scale * cons.a_lo
    p_hi = offset + scale * cons.a_hi
    assert (p_lo[0], p_hi[0]) == pytest.approx((10.0, 110.0))
    assert cons.labels_hi[0] == "dg1_ramp_up"


def test_full_soc_blocks_charging():
    cons = build_constraints(state(soc=(CFG.esss[0].soc_max,)), CFG)
    offset, scale = action_scales(CFG)
    assert offset[-1] + scale[-1] * cons.a_hi[-1] == pytest.approx(0.0, abs=1e-12)
    assert cons.labels_hi[-1] == "ess1_soc_max"


def test_balanced_case_zero_grid_is_feasible():
    # PV covers the load net of the DG minimum outputs: idle storage and P^N = 0 balance exactly.
    p_min = tuple(u.p_min for u in CFG.dgs)
    s = state(pv=240.0, load=240.0 + sum(p_min), dg_prev=p_min)
    cfg = default_system(grid_limit=0.0)
    assert feasibility_check(Action(p_min, (0.0,)), s, cfg) == []
    cons = build_constraints(s, cfg)
    a = (np.array(p_min + (0.0,)) - action_scales(CFG)[0]) / action_scales(CFG)[1]
    assert cons.balance_coefs @ a == pytest.approx(cons.balance_rhs, abs=1e-9)


def test_unreachable_balance_names_constraint():
    with pytest.raises(InfeasibleError) as err:
        build_constraints(state(load=5000.0), CFG)
    assert err.value.constraint == "balance"
    with pytest.raises(DomainError):
        build_constraints(state(soc=(0.5, 0.5)), CFG)


def test_context_checks_dimensions():
    with pytest.raises(DomainError):
        DispatchContext(DenseNet.init([3, 4, 1]), CFG, FMAP)
    with pytest.raises(DomainError):
        DispatchContext(parabola_net(), CFG, FMAP, strategy="greedy")


# ---------------------------------------------------------------- hand-built Q

@pytest.mark.parametrize("strategy", ["split", "monolithic"])
def test_parabola_peak_is_found(strategy):
    s = state(load=300.0, dg_prev=(50.0, 150.0, 200.0))
    ctx = ctx_for(parabola_net(), s, strategy=strategy)
    res = dispatch_step(ctx)
    assert res.a_norm[0] == pytest.approx(0.3, abs=1e-6)
    # Independent check with the enumeration reference.
    cons = build_constraints(s, CFG)
    f = FMAP.featurize(s)
    bx = np.vstack([np.column_stack([f, f]), np.column_stack([cons.a_lo, cons.a_hi])])
    coefs, lo, hi = cons.balance_row()
    ref = reference_solve(ctx.q_net, bx, extra_linear_constraints=[(np.r_[np.zeros(N_S), coefs], lo, hi)])
    assert res.predicted_q == pytest.approx(ref.objective, abs=1e-9)
    assert feasibility_check(res.action, s, CFG) == []


def test_equality_forces_the_action():
    s = state(load=300.0, dg_prev=(50.0, 150.0, 200.0))
    ctx = ctx_for(parabola_net(), s)
    model = build_dispatch_model(ctx)
    model.add_row({model.action_vars[0]: 1.0}, 0.5, 0.5, name="pin")
    res = HighsBackend().solve(model)
    assert res.values[model.action_vars[0]] == pytest.approx(0.5, abs=1e-9)
    assert res.objective == pytest.approx(-0.04, abs=1e-9)


def test_peak_outside_window_lands_on_bound():
    # DG1 ramp window [10, 110] is a in [-1, 0.4286]; a peak at 0.9 must clip to the top.
    s = state(load=300.0, dg_prev=(10.0, 150.0, 200.0))
    res = dispatch_step(ctx_for(parabola_net(centre=0.9), s))
    assert res.action.p_dg[0] == pytest.approx(110.0, abs=1e-6)
    assert "dg1_ramp_up" in res.binding


# ---------------------------------------------------------------- trained net

def _feasible_samples(s, cons, rng, n):
    """Random actions meeting the box and balance rows: draw all but DG3, then DG3 inside its slice."""
    coefs, lo, hi = cons.balance_row()
    out = []
    while len(out) < n:
        a = rng.uniform(cons.a_lo, cons.a_hi, size=(4 * n, len(cons.a_lo)))
        rest = a @ coefs - a[:, 2] * coefs[2]
        lo3 = np.maximum(cons.a_lo[2], (lo - rest) / coefs[2])
        hi3 = np.minimum(cons.a_hi[2], (hi - rest) / coefs[2])
        ok = lo3 <= hi3
        a, lo3, hi3 = a[ok], lo3[ok], hi3[ok]
        a[:, 2] = lo3 + rng.uniform(size=len(a)) * (hi3 - lo3)
        out.extend(a)
    return np.array(out[:n])


def test_dispatch_dominates_random_feasible_actions(agent):
    day = synthesize(7, 1)[0]
    rng = np.random.default_rng(0)
    for t in (2, 12, 19):
        s = EnvState(t, day.pv[t], day.load[t], day.price[t], (60.0, 150.0, 250.0), (0.45,))
        res = dispatch_step(ctx_for(agent.q_net, s))
        cons = build_constraints(s, CFG)
        samples = _feasible_samples(s, cons, rng, 10_000)
        f = FMAP.featurize(s)
        q = forward(agent.q_net, np.hstack([np.tile(f, (len(samples), 1)), samples]))[:, 0]
        assert res.predicted_q >= q.max() - 1e-5
        assert feasibility_check(res.action, s, CFG) == []


def test_balance_row_never_raises_optimum(agent):
    s = state(load=260.0, pv=40.0, dg_prev=(60.0, 150.0, 250.0))
    cons = build_constraints(s, CFG)
    f = FMAP.featurize(s)
    bx = np.vstack([np.column_stack([f, f]), np.column_stack([cons.a_lo, cons.a_hi])])
    coefs, lo, hi = cons.balance_row()
    free = maximize_network(agent.q_net, bx)
    tied = maximize_network(agent.q_net, bx, [(np.r_[np.zeros(N_S), coefs], lo, hi)])
    assert tied.objective <= free.objective + 1e-9


def test_split_and_monolithic_agree(agent):
    s = state(load=320.0, pv=80.0, dg_prev=(60.0, 150.0, 250.0))
    a = dispatch_step(ctx_for(agent.q_net, s))
    b = dispatch_step(ctx_for(agent.q_net, s, strategy="monolithic"))
    assert a.predicted_q == pytest.approx(b.predicted_q, abs=1e-6)


def test_reproducible_mode_is_deterministic(agent):
    s = state(load=320.0, pv=80.0, dg_prev=(60.0, 150.0, 250.0))
    a = dispatch_step(ctx_for(agent.q_net, s, reproducible=True))
    b = dispatch_step(ctx_for(agent.q_net, s, reproducible=True))
    assert np.array_equal(a.a_norm, b.a_norm)


def _recomputed_cost(traj, profile, cfg):
    total = 0.0
    for r in traj.records:
        dg = sum(u.a_cost * p * p + u.b_cost * p + u.c_cost for u, p in zip(cfg.dgs, r.p_dg))
        rho = profile.price[r.t]
        ex = rho * r.grid_power if r.grid_power > 0 else cfg.sell_coeff * rho * r.grid_power
        total += dg + ex
    return total


@pytest.mark.parametrize("grid_limit", [30.0, 0.0])
def test_full_day_is_balanced_and_costed(agent, grid_limit):
    cfg = default_system(grid_limit=grid_limit)
    day = synthesize(3, 1)[0]
    traj = run_day(ctx_for(agent.q_net, cfg=cfg), day, [0.5], RewardParams())
    assert len(traj.records) == cfg.horizon
    assert traj.max_unbalance <= 1e-6 * max(day.load)
    for r in traj.records:
        assert abs(r.grid_power) <= grid_limit + 1e-9
        assert feasibility_check(Action(r.p_dg, r.p_ess), r.state, cfg) == []
    assert traj.total_cost == pytest.approx(_recomputed_cost(traj, day, cfg), abs=1e-9, rel=0)


def test_infeasible_step_reports_index(agent):
    day = synthesize(3, 1)[0]
    load = list(day.load)
    load[5] = 3000.0
    bad = DayProfile(day.day, day.pv, load, day.price)
    with pytest.raises(InfeasibleError) as err:
        run_day(ctx_for(agent.q_net), bad, [0.5])
    assert err.value.step == 5
    assert static_feasibility_warnings(bad, CFG)


# ---------------------------------------------------------------- auditing

def test_greedy_balance_violation_is_recorded():
    s = state(pv=0.0, load=10.0 + 50.0 + 100.0 + CFG.grid_limit + 20.0)
    v = feasibility_check(Action((10.0, 50.0, 100.0), (0.0,)), s, CFG)
    assert len(v) == 1 and v[0].constraint == "balance"
    assert v[0].residual == pytest.approx(20.0)


def test_exact_bounds_are_feasible():
    # Every unit at an edge of its window; discharging 100 kW adds to supply.
    s = state(load=110.0 + 150.0 + 300.0 + 100.0, dg_prev=(10.0, 50.0, 100.0))
    a = Action((110.0, 150.0, 300.0), (-100.0,))
    assert feasibility_check(a, s, CFG) == []
    v = feasibility_check(Action((110.0 + 1e-3, 150.0, 300.0), (-100.0,)), s, CFG)
    assert [x.constraint for x in v] == ["dg_ramp_up"]


@settings(max_examples=100, deadline=None)
@given(a=st.lists(st.floats(-1, 1), min_size=4, max_size=4), soc=st.floats(0.2, 0.8),
       pv=st.floats(0, 250), load=st.floats(100, 500))
def test_policy_clipped_actions_only_violate_balance(a, soc, pv, load):
    # After clipping into the unit windows the only possible violation is balance.
    s = state(pv=pv, load=load, dg_prev=(60.0, 150.0, 250.0), soc=(soc,))
    act = clip_action(s, denormalize_action(np.array(a), CFG), CFG)
    kinds = {v.constraint for v in feasibility_check(act, s, CFG)}
    assert kinds <= {"balance"}


def test_policy_day_and_trajectory_csv(agent, tmp_path):
    day = synthesize(3, 1)[0]
    traj = run_policy_day(agent.policy_net, FMAP, day, CFG, [0.5])
    path = tmp_path / "traj.csv"
    write_trajectory(path, traj, CFG)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == trajectory_header(CFG)
    assert lines[0] == "t,p_dg1,p_dg2,p_dg3,p_essA,p_grid_kw,soc_A,cost_usd,unbalance_kw,q_value,solve_ms"
    assert len(lines) == 25
