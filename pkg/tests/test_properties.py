import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from spatial_aloha import analysis as A
from spatial_aloha import metrics as M
from spatial_aloha import topology as T
from spatial_aloha.sale import RunConfig, run_ideal


@st.composite
def graphs(draw, max_n=8, connected=False):
    n = draw(st.integers(2 if connected else 1, max_n))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    edges = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    g = T.build_graph(n, edges)
    if connected:
        assume(T.is_connected(g))
    return g


def maps(n, hi=0.6):
    return st.lists(st.floats(0.0, hi), min_size=n, max_size=n).map(np.array)


def below_rim_two(g, q):
    while A.rim_all(g, q).max(initial=0) >= 2:
        q = 0.9 * q
    return q


@given(graphs())
def test_adjacency_symmetric_zero_diagonal(g):
    a = g.adjacency
    assert np.array_equal(a, a.T)
    assert not np.diag(a).any()
    assert np.array_equal(g.degree, a.sum(axis=1))


@settings(max_examples=1000, suppress_health_check=[HealthCheck.too_slow])
@given(st.data())
def test_rim_below_two_gives_positive_definite(data):
    g = data.draw(graphs())
    q = below_rim_two(g, data.draw(maps(g.n)))
    assert A.is_positive_definite(A.stability_matrix(g, q))


@pytest.mark.parametrize("k", range(2, 7))
def test_regular_tangency(k):
    for g in (T.complete(k + 1), T.cycle(k + 3)):
        deg = int(g.degree[0])
        q = np.full(g.n, 1 / (deg + 1))
        assert np.allclose(A.rim_all(g, q), 2)
        assert abs(A.jacobian_det(g, q)) < 1e-12


@settings(max_examples=200)
@given(st.data())
def test_best_response_iterates_increase(data):
    g = data.draw(graphs())
    y = data.draw(st.lists(st.floats(0, 0.3), min_size=g.n, max_size=g.n).map(np.array))
    q = np.zeros(g.n)
    for _ in range(200):
        nxt = A.best_response_step(g, q, y)
        assert np.all(nxt >= q - 1e-15)
        if np.allclose(nxt, q, atol=1e-13):
            break
        q = nxt


@settings(max_examples=200)
@given(st.data())
def test_feasible_targets_are_met(data):
    g = data.draw(graphs(max_n=6))
    q0 = below_rim_two(g, data.draw(maps(g.n, 0.5)))
    y = A.throughput(g, q0)
    rep = A.solve_nash(g, y, tol=1e-12)
    assert rep.converged
    assert np.allclose(A.throughput(g, rep.q), y, atol=1e-8)
    # the least fixed point never exceeds any other solution
    assert np.all(rep.q <= q0 + 1e-8)


@pytest.mark.parametrize("n", range(1, 51))
def test_sensitivity_sign_change(n):
    for eps in (1e-3, 0.1, 0.5, 1.5):
        assert A.sensitivity_at_rim(n, -eps) > 0
        assert A.sensitivity_at_rim(n, eps) < 0
    assert abs(A.sensitivity_at_rim(n, 0.0)) < 1e-15


@pytest.mark.parametrize("n", range(2, 21))
def test_affected_gain_smaller(n):
    k = abs(A.leader_gain(n))
    for q_m in np.linspace(0, 1 / (n + 1), 11):
        q_op = A.affected_operating_point(n, q_m)
        assert abs(A.affected_leader_gain(n, q_m, q_op)) < k


@settings(max_examples=20, deadline=None)
@given(name=st.sampled_from(["fig3", "fig5"]), signs=st.lists(st.sampled_from([-1, 1]),
                                                              min_size=10, max_size=10))
def test_perturbation_returns(name, signs):
    g = T.BUILTINS[name]()
    tr = run_ideal(g, RunConfig(settle_iters=100))
    state = tr.state
    leaders = state.is_leader.copy()
    state.set_q(tr.final_q * (1 + 0.01 * np.array(signs[:g.n])))
    back = run_ideal(g, RunConfig(settle_iters=100), state=state)
    assert back.outcome == "converged"
    assert np.array_equal(back.state.is_leader, leaders)
    assert np.allclose(back.final_q, tr.final_q, atol=1e-3)


@given(st.data())
def test_jain_bounds_and_scaling(data):
    g = data.draw(graphs())
    th = data.draw(maps(g.n, 1.0))
    assume(th.max() > 1e-6)
    j = M.jain_weighted(g, th)
    assert 1 / g.n - 1e-12 <= j <= 1 + 1e-12
    c = data.draw(st.floats(1e-3, 1e3))
    assert M.jain_weighted(g, c * th) == pytest.approx(j, rel=1e-9)


@settings(max_examples=15, deadline=None)
@given(n=st.integers(3, 14), seed=st.integers(0, 10**6))
def test_sale_runs_are_safe_and_feasible(n, seed):
    g = T.random_geometric(n, n * 4.0, 5, seed)
    cfg = RunConfig()
    tr = run_ideal(g, cfg)
    assert tr.outcome == "converged"
    q = tr.final_q
    assert A.rim_all(g, q).max() <= 2 + cfg.tol
    leaders = [l - 1 for l in tr.partition.leaders if g.degree[l - 1] > 0]
    assert np.all(np.abs(A.rim_all(g, q)[leaders] - 2) <= cfg.tol)
    ref = A.solve_steady_state(g, tr.partition)
    assert np.max(np.abs(q - ref)) <= 10 * cfg.tol
    assert M.distance_to_pareto(g, A.throughput(g, q)) >= 1


@settings(max_examples=40, deadline=None)
@given(st.data())
def test_pareto_boundary_is_singular(data):
    g = data.draw(graphs(max_n=4, connected=True))
    q0 = below_rim_two(g, data.draw(maps(g.n, 0.5)))
    assume(q0.min() > 0.02)
    th = A.throughput(g, q0)
    q = M.limiting_point(g, th)
    assert abs(A.jacobian_det(g, q)) <= 1e-2
