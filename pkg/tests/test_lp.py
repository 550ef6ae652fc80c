from __future__ import annotations

import numpy as np
import pytest

import oracles
from renewalopt.lp import (
    CoupledMdpResult,
    LpProblem,
    conditional_ratio_optimal,
    coupled_chain_lp_shape,
    coupled_mdp_optimal,
    fractional_to_lp,
    solve_lp,
    stationary_baseline,
)


class SimplePoly:
    """Duck-typed polytope for stationary_baseline tests."""

    def __init__(self, aff_a, aff_b):
        self.aff_a = np.asarray(aff_a, float)
        self.aff_b = np.asarray(aff_b, float)
        self.dim = self.aff_a.shape[1]


def _random_bounded_lp(rng):
    n = int(rng.integers(2, 9))
    m_eq = int(rng.integers(0, 3))
    m_ub = int(rng.integers(1, 4))
    x0 = rng.uniform(0, 2, size=n)
    a_eq = rng.normal(size=(m_eq, n)) if m_eq else None
    b_eq = a_eq @ x0 if m_eq else None
    g = rng.normal(size=(m_ub, n))
    h = g @ x0 + rng.uniform(0.1, 2.0, size=m_ub)
    # bounding row keeps the feasible region a polytope
    g = np.vstack([g, np.ones(n)])
    h = np.append(h, x0.sum() + 5.0)
    c = rng.normal(size=n)
    return LpProblem(c=c, a_eq=a_eq, b_eq=b_eq, g_ub=g, h_ub=h)


def test_simplex_matches_enumeration_on_random_instances():
    rng = np.random.default_rng(42)
    for _ in range(30):
        prob = _random_bounded_lp(rng)
        sol = solve_lp(prob)
        assert sol.status == "optimal"
        status, _, value = oracles.lp_by_enumeration(
            prob.c, prob.a_eq, prob.b_eq, prob.g_ub, prob.h_ub
        )
        assert status == "optimal"
        assert sol.objective_value == pytest.approx(value, abs=1e-8)


def test_simplex_residuals_within_tolerance():
    rng = np.random.default_rng(7)
    for _ in range(10):
        prob = _random_bounded_lp(rng)
        sol = solve_lp(prob)
        assert sol.status == "optimal"
        if prob.a_eq.shape[0]:
            assert np.max(np.abs(prob.a_eq @ sol.x - prob.b_eq)) <= 1e-8
        assert np.max(prob.g_ub @ sol.x - prob.h_ub) <= 1e-8
        assert np.min(sol.x) >= -1e-12


def test_simplex_detects_infeasible():
    # x1 + x2 = 1 and x1 + x2 = 2 cannot both hold
    prob = LpProblem(
        c=[1.0, 1.0],
        a_eq=[[1.0, 1.0], [1.0, 1.0]],
        b_eq=[1.0, 2.0],
    )
    assert solve_lp(prob).status == "infeasible"
    # negative requirement with nonnegative variables
    prob = LpProblem(c=[1.0], a_eq=[[1.0]], b_eq=[-3.0])
    assert solve_lp(prob).status == "infeasible"


def test_simplex_detects_unbounded():
    prob = LpProblem(c=[-1.0, 0.0], g_ub=[[0.0, 1.0]], h_ub=[1.0])
    assert solve_lp(prob).status == "unbounded"


def test_simplex_drops_redundant_equalities():
    prob = LpProblem(
        c=[1.0, 2.0],
        a_eq=[[1.0, 1.0], [2.0, 2.0]],
        b_eq=[1.0, 2.0],
    )
    sol = solve_lp(prob)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0)


def test_simplex_zero_rows_edge_cases():
    assert solve_lp(LpProblem(c=[1.0, 1.0])).status == "optimal"
    assert solve_lp(LpProblem(c=[-1.0])).status == "unbounded"


def test_fractional_single_action_example():
    prob = fractional_to_lp([(2.0, [0.0], 2.0)], [1.0])
    sol = solve_lp(prob)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0, abs=1e-10)


def test_fractional_two_action_hand_solved():
    # actions: (y=0, z=2, T=1) and (y=3, z=0, T=1), drift rate 1
    # feasibility forces q1 <= 1/2 of the mix, optimum 1.5
    prob = fractional_to_lp([(0.0, [2.0], 1.0), (3.0, [0.0], 1.0)], [1.0])
    sol = solve_lp(prob)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.5, abs=1e-9)


def test_fractional_invariant_to_duplicated_actions():
    rng = np.random.default_rng(11)
    for _ in range(10):
        k = int(rng.integers(2, 5))
        trips = [
            (float(rng.uniform(0, 5)), [float(rng.uniform(-2, 2))], float(rng.uniform(1, 6)))
            for _ in range(k)
        ]
        d = [float(rng.uniform(0.2, 1.5))]
        base = solve_lp(fractional_to_lp(trips, d))
        dup = solve_lp(fractional_to_lp(trips + trips, d))
        if base.status == "optimal":
            assert dup.status == "optimal"
            assert dup.objective_value == pytest.approx(base.objective_value, abs=1e-9)


def test_fractional_validation():
    with pytest.raises(ValueError):
        fractional_to_lp([], [1.0])
    with pytest.raises(ValueError):
        fractional_to_lp([(1.0, [0.0], 0.5)], [1.0])


def test_conditional_ratio_single_event_reduces_to_fractional():
    trips = [(1.0, [2.0], 2.0), (4.0, [0.0], 1.0), (2.0, [1.0], 3.0)]
    d = [0.7]
    frac = solve_lp(fractional_to_lp(trips, d))
    cond = conditional_ratio_optimal(
        [1.0],
        np.array([[t[0] for t in trips]]),
        np.array([[t[2] for t in trips]]),
        np.array([[[t[1][0]] for t in trips]]).reshape(1, 3, 1),
        d,
    )
    assert frac.status == "optimal"
    assert cond == pytest.approx(frac.objective_value, abs=1e-9)


def test_conditional_ratio_unconstrained_matches_policy_enumeration():
    # with a slack budget, the optimum over randomized event-conditioned
    # policies is attained at a deterministic policy (ratio of linear forms),
    # so exhaustive enumeration over A^E is an exact oracle
    rng = np.random.default_rng(3)
    probs = np.array([0.5, 0.3, 0.2])
    n_e, n_a = 3, 3
    y = rng.uniform(0, 5, size=(n_e, n_a))
    t = rng.uniform(1, 4, size=(n_e, n_a))
    z = rng.uniform(0, 1, size=(n_e, n_a, 1))
    budget = [1e6]
    best = np.inf
    import itertools

    for pol in itertools.product(range(n_a), repeat=n_e):
        num = sum(probs[e] * y[e, pol[e]] for e in range(n_e))
        den = sum(probs[e] * t[e, pol[e]] for e in range(n_e))
        best = min(best, num / den)
    val = conditional_ratio_optimal(probs, y, t, z, budget)
    assert val == pytest.approx(best, abs=1e-8)


def test_conditional_ratio_validation():
    with pytest.raises(ValueError):
        conditional_ratio_optimal([0.5, 0.6], np.ones((2, 2)), np.ones((2, 2)),
                                  np.ones((2, 2, 1)), [1.0])
    with pytest.raises(ValueError):
        conditional_ratio_optimal([1.0], np.ones((1, 2)), 0.5 * np.ones((1, 2)),
                                  np.ones((1, 2, 1)), [1.0])


def test_coupled_single_user_closed_form():
    rng = np.random.default_rng(19)
    for _ in range(5):
        lam = float(rng.uniform(0.05, 0.9))
        mu = float(rng.uniform(0.1, 0.95))
        mean_file = float(rng.uniform(0.5, 4.0))
        res = coupled_mdp_optimal(
            [lam], [1.0], [mean_file], [[(0.0, 0.0), (mu, 1.0)]],
            served_limit=1, power_budget=None,
        )
        expect = oracles.single_user_download_value(mean_file, mu, lam)
        assert res.value == pytest.approx(expect, abs=1e-9)


def test_coupled_zero_budget_forbids_serving():
    res = coupled_mdp_optimal(
        [0.4], [1.0], [2.0], [[(0.0, 0.0), (0.5, 1.0)]],
        served_limit=1, power_budget=0.0,
    )
    assert res.value == pytest.approx(0.0, abs=1e-9)


def test_coupled_two_queue_instance_dominates_priority_rule():
    res = coupled_mdp_optimal(
        [0.5, 0.25], [1.0, 1.0], [2.0, 4.0 / 3.0],
        [[(0.0, 0.0), (0.5, 1.0)], [(0.0, 0.0), (0.75, 1.0)]],
        served_limit=1, power_budget=None,
    )
    assert res.value >= 0.7 - 1e-9
    assert res.value <= 1.0 + 1e-9


def test_coupled_small_instance_matches_enumeration():
    import renewalopt.lp as lp_mod

    lam = [0.3, 0.6]
    acts = [[(0.0, 0.0), (0.5, 2.0)], [(0.0, 0.0), (0.8, 1.0)]]
    res = coupled_mdp_optimal(lam, [1.5, 1.0], [2.0, 1.25], acts,
                              served_limit=1, power_budget=0.8)
    # rebuild the same LP by hand and enumerate its vertices
    # (8 occupation variables + 1 slack keeps enumeration cheap)
    states = range(4)
    variables = []
    for s in states:
        active = [u for u in range(2) if (s >> u) & 1]
        variables.append((s, (0, 0)))
        for u in active:
            a = [0, 0]
            a[u] = 1
            variables.append((s, tuple(a)))
    rewards = []
    powers = []
    cols = []
    bfs = [2.0, 1.25]
    ws = [1.5, 1.0]
    for s, assign in variables:
        reward = 0.0
        power = 0.0
        factors = []
        for u in range(2):
            if (s >> u) & 1:
                if assign[u]:
                    phi, pw = acts[u][1]
                    done = phi * (1 - lam[u])
                    factors.append(np.array([done, 1 - done]))
                    reward += ws[u] * bfs[u] * phi
                    power += pw
                else:
                    factors.append(np.array([0.0, 1.0]))
            else:
                factors.append(np.array([1 - lam[u], lam[u]]))
        probs = np.kron(factors[1], factors[0])
        rewards.append(reward)
        powers.append(power)
        cols.append(probs)
    a_eq = np.zeros((5, len(variables)))
    for j, ((s, _), pr) in enumerate(zip(variables, cols)):
        a_eq[:4, j] = pr
        a_eq[s, j] -= 1.0
    a_eq[4] = 1.0
    b_eq = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    status, _, value = oracles.lp_by_enumeration(
        -np.array(rewards), a_eq, b_eq, np.array(powers).reshape(1, -1), [0.8]
    )
    assert status == "optimal"
    assert res.value == pytest.approx(-value, abs=1e-8)


def test_coupled_chain_lp_shape_matches_reported_size():
    n_vars, n_rows = coupled_chain_lp_shape(8, [1] * 8, served_limit=4,
                                            has_power_budget=True)
    assert (n_vars, n_rows) == (5985, 258)
    # small instance cross-check against the built problem
    res = coupled_mdp_optimal(
        [0.3, 0.6], [1.0, 1.0], [2.0, 1.25],
        [[(0.0, 0.0), (0.5, 2.0)], [(0.0, 0.0), (0.8, 1.0)]],
        served_limit=1, power_budget=0.8,
    )
    sv, sr = coupled_chain_lp_shape(2, [1, 1], 1, True)
    assert (res.n_variables, res.n_constraints) == (sv, sr)


def test_coupled_dual_route_matches_simplex_route(monkeypatch):
    import renewalopt.lp as lp_mod

    lam = [0.2546, 0.1705, 0.2109, 0.4151]
    acts = [
        [(0.0, 0.0), (0.5377, 3.529)],
        [(0.0, 0.0), (0.4966, 2.5226)],
        [(0.0, 0.0), (0.6837, 2.5376)],
        [(0.0, 0.0), (0.8855, 3.1982)],
    ]
    args = dict(
        arrival_probs=lam,
        weights=[3.9647, 1.5159, 3.6364, 4.5554],
        mean_files=[1.0 / 0.5975, 1.0 / 0.5517, 1.0 / 0.7597, 1.0 / 0.9839],
        action_sets=acts,
        served_limit=2,
        power_budget=3.0,
    )
    via_simplex = coupled_mdp_optimal(**args)
    monkeypatch.setattr(lp_mod, "_SIMPLEX_VARS_LIMIT", 0)
    via_dual = coupled_mdp_optimal(**args)
    assert via_dual.value == pytest.approx(via_simplex.value, abs=1e-8)
    assert (via_dual.n_variables, via_dual.n_constraints) == (
        via_simplex.n_variables, via_simplex.n_constraints
    )
    # unbudgeted branch of the dual route against the single-user closed form
    solo = coupled_mdp_optimal(
        [0.37], [2.0], [1.6], [[(0.0, 0.0), (0.62, 1.0)]],
        served_limit=1, power_budget=None,
    )
    expect = oracles.single_user_download_value(1.6, 0.62, 0.37) * 2.0
    assert solo.value == pytest.approx(expect, abs=1e-9)


def test_coupled_matches_lagrangian_oracle():
    lam = [0.3181, 0.0888, 0.4176]
    acts = [
        [(0.0, 0.0), (0.5493, 2.1828)],
        [(0.0, 0.0), (0.4540, 3.5753)],
        [(0.0, 0.0), (0.4908, 3.7391)],
    ]
    args = dict(
        arrival_probs=lam,
        weights=[2.4605, 2.8656, 2.0681],
        mean_files=[1.0 / 0.6103, 1.0 / 0.5044, 1.0 / 0.5453],
        action_sets=acts,
        served_limit=2,
        power_budget=2.5,
    )
    res = coupled_mdp_optimal(**args)
    lag = oracles.coupled_chain_lagrangian(**args)
    assert res.value == pytest.approx(lag, abs=1e-8)


def test_coupled_validation():
    with pytest.raises(ValueError):
        coupled_mdp_optimal([1.0], [1.0], [1.0], [[(0.0, 0.0), (0.5, 1.0)]], 1)
    with pytest.raises(ValueError):
        coupled_mdp_optimal([0.5], [1.0], [1.0], [[(0.5, 1.0)]], 1)
    with pytest.raises(ValueError):
        coupled_mdp_optimal(
            [0.5] * 14, [1.0] * 14, [1.0] * 14,
            [[(0.0, 0.0), (0.5, 1.0)]] * 14, 1,
        )


def test_stationary_baseline_uncoupled_takes_independent_optima():
    p1 = SimplePoly([[1.0, 1.0]], [1.0])
    p2 = SimplePoly([[1.0, 1.0]], [1.0])
    thetas, value = stationary_baseline(
        [p1, p2], [np.array([1.0, 3.0]), np.array([2.0, 0.0])], [np.zeros((0, 2)), np.zeros((0, 2))]
    )
    assert value == pytest.approx(1.0, abs=1e-9)
    assert thetas[0] == pytest.approx([1.0, 0.0], abs=1e-9)
    assert thetas[1] == pytest.approx([0.0, 1.0], abs=1e-9)


def test_stationary_baseline_symmetric_instance_symmetric_solution():
    # per-system constraint theta(0) - theta(1) <= 0 makes the symmetric
    # split the unique optimum of min (1 - theta(0)) per system
    p = SimplePoly([[1.0, 1.0]], [1.0])
    f = np.array([0.0, 1.0])
    g1 = np.array([[1.0, -1.0], [0.0, 0.0]])
    g2 = np.array([[0.0, 0.0], [1.0, -1.0]])
    thetas, value = stationary_baseline([p, p], [f, f], [g1, g2])
    assert value == pytest.approx(1.0, abs=1e-9)
    assert thetas[0] == pytest.approx(thetas[1], abs=1e-9)
    assert thetas[0] == pytest.approx([0.5, 0.5], abs=1e-9)
