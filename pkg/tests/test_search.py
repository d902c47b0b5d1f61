import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mipdqn.errors import DomainError
from mipdqn.mip import INFEASIBLE, OPTIMAL, HighsBackend, encode_network, maximize_network, reference_solve, solve
from mipdqn.mip.search import _knapsack
from mipdqn.neural import DenseNet, forward
from scipy.optimize import linprog


def random_net(seed, sizes):
    rng = np.random.default_rng(seed)
    net = DenseNet.init(list(sizes), rng=rng, final_scale=1.0)
    for b in net.biases:
        b += rng.normal(0, 0.3, b.shape)
    return net


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6))
def test_knapsack_matches_linprog(seed, n):
    rng = np.random.default_rng(seed)
    a, r = rng.normal(size=n), rng.normal(size=n)
    lo, hi = -rng.uniform(0, 2, n), rng.uniform(0, 2, n)
    cap = rng.normal()
    x = _knapsack(a, lo, hi, r, cap)
    lp = linprog(-a, A_ub=r[None, :], b_ub=[cap], bounds=list(zip(lo, hi)), method="highs")
    if lp.status == 2:
        assert x is None
    else:
        assert x is not None
        assert r @ x <= cap + 1e-9
        assert a @ x == pytest.approx(-lp.fun, abs=1e-8)


@pytest.mark.parametrize("seed", range(6))
def test_search_matches_reference(seed):
    net = random_net(seed, (3, 8, 8, 1))
    bx = np.tile([-1.0, 1.0], (3, 1))
    rows = [(np.array([1.0, -1.0, 0.5]), -0.3, 0.4)]
    ref = reference_solve(net, bx, extra_linear_constraints=rows, max_unstable=40)
    got = maximize_network(net, bx, rows, HighsBackend(), leaf_unstable=4)
    assert got.status == OPTIMAL
    assert got.objective == pytest.approx(ref.objective, abs=1e-6)
    x = got.values
    assert -0.3 - 1e-9 <= rows[0][0] @ x <= 0.4 + 1e-9
    assert float(forward(net, x)[0]) == pytest.approx(got.objective, abs=1e-12)


def test_search_matches_monolithic_mip_with_pinned_inputs():
    net = random_net(11, (5, 16, 16, 1))
    bx = np.tile([-1.0, 1.0], (5, 1))
    bx[:3] = [[0.2, 0.2], [-0.5, -0.5], [0.9, 0.9]]
    got = maximize_network(net, bx, leaf_unstable=2)
    model = encode_network(net, bx)
    model.set_objective({model.outputs[0]: 1.0})
    mono = solve(model, HighsBackend())
    assert got.objective == pytest.approx(mono.objective, abs=1e-6)
    assert np.allclose(got.values[:3], [0.2, -0.5, 0.9])


def test_search_reports_infeasibility_and_bad_box():
    net = random_net(0, (2, 4, 1))
    bx = np.tile([-1.0, 1.0], (2, 1))
    assert maximize_network(net, bx, [(np.ones(2), 3.0, 4.0)]).status == INFEASIBLE
    with pytest.raises(DomainError):
        maximize_network(net, np.tile([1.0, -1.0], (2, 1)))


def test_multi_row_relaxation():
    net = random_net(4, (3, 6, 1))
    bx = np.tile([-1.0, 1.0], (3, 1))
    rows = [(np.array([1.0, 1.0, 0.0]), -np.inf, 0.5), (np.array([0.0, 1.0, 1.0]), -0.5, np.inf)]
    got = maximize_network(net, bx, rows, leaf_unstable=3)
    ref = reference_solve(net, bx, extra_linear_constraints=rows)
    assert got.objective == pytest.approx(ref.objective, abs=1e-6)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_equality_row_is_never_pruned(seed):
    # lo == hi rows leave no slack for rounding in the relaxation.
    net = random_net(seed, (3, 6, 1))
    rng = np.random.default_rng(seed)
    bx = np.tile([-1.0, 1.0], (3, 1))
    r = rng.normal(scale=100.0, size=3)
    x0 = rng.uniform(-1, 1, 3)
    rhs = float(r @ x0)
    got = maximize_network(net, bx, [(r, rhs, rhs)], leaf_unstable=3)
    ref = reference_solve(net, bx, extra_linear_constraints=[(r, rhs, rhs)])
    assert got.status == OPTIMAL
    assert got.objective == pytest.approx(ref.objective, abs=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_leaf_escalation_keeps_the_optimum(seed):
    net = random_net(seed, (4, 8, 8, 1))
    net.weights[-1] *= 1e-3                      # nearly flat objective
    bx = np.tile([-1.0, 1.0], (4, 1))
    rows = [(np.array([1.0, 2.0, -1.0, 0.5]), 0.2, 0.2)]
    ref = reference_solve(net, bx, extra_linear_constraints=rows)
    for after in (1, 8, 10**9):
        got = maximize_network(net, bx, rows, leaf_unstable=2, escalate_after=after)
        assert got.objective == pytest.approx(ref.objective, abs=1e-7)
