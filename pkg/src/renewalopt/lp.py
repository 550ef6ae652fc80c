"""Dense two-phase simplex and the stationary benchmark LPs built on it.

The solver is intentionally self-contained: a tableau simplex with a
lexicographic ratio test and Bland's entering rule as a degeneracy fallback,
artificial variables in phase one, and explicit residual verification of any
reported optimum. Benchmark constructors turn renewal action sets,
event-conditioned policies, and coupled Markov chains into LpProblem
instances solved by the same routine.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

PIVOT_TOL = 1e-9


@dataclass
class LpProblem:
    """min c.x subject to a_eq x = b_eq, g_ub x <= h_ub, x >= 0."""

    c: np.ndarray
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    g_ub: Optional[np.ndarray] = None
    h_ub: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if self.a_eq is None or np.size(self.a_eq) == 0:
            self.a_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        else:
            self.a_eq = np.asarray(self.a_eq, dtype=float).reshape(-1, n)
            self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
            if self.b_eq.size != self.a_eq.shape[0]:
                raise ValueError("b_eq length does not match a_eq rows")
        if self.g_ub is None or np.size(self.g_ub) == 0:
            self.g_ub = np.zeros((0, n))
            self.h_ub = np.zeros(0)
        else:
            self.g_ub = np.asarray(self.g_ub, dtype=float).reshape(-1, n)
            self.h_ub = np.asarray(self.h_ub, dtype=float).ravel()
            if self.h_ub.size != self.g_ub.shape[0]:
                raise ValueError("h_ub length does not match g_ub rows")

    @property
    def n_variables(self) -> int:
        """Structural variables plus one slack per inequality row."""
        return self.c.size + self.g_ub.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.a_eq.shape[0] + self.g_ub.shape[0]


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | failed
    x: Optional[np.ndarray] = None
    objective_value: Optional[float] = None
    iterations: int = 0


# After this many consecutive degenerate pivots the entering rule switches
# from Dantzig pricing to Bland's rule until a pivot makes progress again,
# which rules out cycling while keeping the iteration count practical.
_DEGENERATE_STREAK = 16


def _entering(reduced, cost_tol, bland):
    if bland:
        eligible = np.flatnonzero(reduced < -cost_tol)
        return int(eligible[0]) if eligible.size else -1
    j = int(np.argmin(reduced))
    return j if reduced[j] < -cost_tol else -1


def _leaving(a, b, n_real, col):
    """Lexicographic minimum-ratio row.

    Ratio ties are refined by comparing the scaled basis-inverse rows kept in
    the tableau columns past ``n_real``; those rows are always linearly
    independent, so the refinement singles out one row. Tie comparisons are
    exact on purpose: the anti-cycling guarantee needs the true lexicographic
    minimum, not a toleranced neighborhood of it.
    """
    colv = a[:, col]
    rows = np.flatnonzero(colv > PIVOT_TOL)
    if not rows.size:
        return -1, 0.0
    ratios = b[rows] / colv[rows]
    rmin = ratios.min()
    tied = rows[ratios == rmin]
    if tied.size > 1:
        for j in range(n_real, a.shape[1]):
            vals = a[tied, j] / colv[tied]
            tied = tied[vals == vals.min()]
            if tied.size == 1:
                break
    return int(tied[0]), float(rmin)


def _apply_pivot(a, b, reduced, basis, row, col):
    piv = a[row, col]
    a[row] /= piv
    b[row] /= piv
    colvals = a[:, col].copy()
    colvals[row] = 0.0
    nz = np.abs(colvals) > 0.0
    if np.any(nz):
        a[nz] -= np.outer(colvals[nz], a[row])
        b[nz] -= colvals[nz] * b[row]
    r = reduced[col]
    if r != 0.0:
        reduced -= r * a[row, : reduced.size]
    basis[row] = col


def _pivot_until_optimal(a, b, reduced, basis, n_real, cost_tol, iterations,
                         max_iterations):
    """Pivot until no reduced cost is negative.

    Pricing is Dantzig's most-negative rule, switching to Bland's rule after
    a streak of degenerate pivots and back once progress resumes; the leaving
    row follows the lexicographic ratio test, so no basis ever repeats even
    on fully degenerate plateaus. Returns (outcome, iterations) with outcome
    "optimal", "no_pivot" for an entering column with no positive entry, or
    "iteration_limit".
    """
    streak = 0
    bland = False
    while True:
        col = _entering(reduced, cost_tol, bland)
        if col < 0:
            return "optimal", iterations
        row, rmin = _leaving(a, b, n_real, col)
        if row < 0:
            return "no_pivot", iterations
        _apply_pivot(a, b, reduced, basis, row, col)
        iterations += 1
        if iterations > max_iterations:
            return "iteration_limit", iterations
        if rmin <= 1e-12:
            streak += 1
            bland = bland or streak >= _DEGENERATE_STREAK
        else:
            streak = 0
            bland = False


def solve_lp(
    problem: LpProblem,
    feas_tol: float = 1e-8,
    cost_tol: float = 1e-9,
    max_iterations: int = 100_000,
) -> LpSolution:
    """Two-phase dense simplex with anti-cycling safeguards.

    Leaving rows follow the lexicographic ratio test; entering columns use
    Dantzig pricing with Bland's rule engaged on long degenerate streaks.
    Reported optima satisfy equality residuals within ``feas_tol``, inequality
    overshoot within ``feas_tol``, and componentwise x >= -1e-12; a numerically
    inconsistent final basis is reported as status "failed" rather than trusted.
    """
    n = problem.c.size
    m_eq = problem.a_eq.shape[0]
    m_ub = problem.g_ub.shape[0]
    m = m_eq + m_ub
    n_real = n + m_ub

    a = np.zeros((m, n_real))
    b = np.zeros(m)
    if m_eq:
        a[:m_eq, :n] = problem.a_eq
        b[:m_eq] = problem.b_eq
    if m_ub:
        a[m_eq:, :n] = problem.g_ub
        a[m_eq:, n:] = np.eye(m_ub)
        b[m_eq:] = problem.h_ub
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0
    # append the artificial identity: those columns carry the running basis
    # inverse, which the lexicographic ratio test in _leaving compares
    a = np.hstack([a, np.eye(m)])

    basis = [n_real + i for i in range(m)]  # artificial variables
    reduced = -a[:, :n_real].sum(axis=0)  # phase-one reduced costs

    outcome, iterations = _pivot_until_optimal(
        a, b, reduced, basis, n_real, cost_tol, 0, max_iterations
    )
    if outcome != "optimal":
        # the phase-one objective is bounded below by zero, so a missing
        # pivot row here is numeric trouble, not unboundedness
        return LpSolution(status="failed", iterations=iterations)

    phase1 = sum(b[i] for i in range(m) if basis[i] >= n_real)
    if phase1 > feas_tol:
        return LpSolution(status="infeasible", iterations=iterations)

    # drive leftover zero-level artificials out of the basis; a row with no
    # usable pivot is a redundant constraint and is dropped
    keep = np.ones(m, dtype=bool)
    for i in range(m):
        if basis[i] < n_real:
            continue
        piv_col = -1
        for j in range(n_real):
            if abs(a[i, j]) > PIVOT_TOL:
                piv_col = j
                break
        if piv_col < 0:
            keep[i] = False
        else:
            _apply_pivot(a, b, reduced, basis, i, piv_col)
    if not np.all(keep):
        a = a[keep]
        b = b[keep]
        basis = [bv for bv, k in zip(basis, keep) if k]
    m = a.shape[0]

    cost_full = np.concatenate([problem.c, np.zeros(m_ub)])
    c_basis = cost_full[np.array(basis, dtype=int)] if m else np.zeros(0)
    reduced = cost_full - (c_basis @ a[:, :n_real] if m else 0.0)

    outcome, iterations = _pivot_until_optimal(
        a, b, reduced, basis, n_real, cost_tol, iterations, max_iterations
    )
    if outcome == "no_pivot":
        return LpSolution(status="unbounded", iterations=iterations)
    if outcome == "iteration_limit":
        return LpSolution(status="failed", iterations=iterations)

    x_full = np.zeros(n_real)
    for i, bv in enumerate(basis):
        if bv < n_real:
            x_full[bv] = b[i]

    # basis repair: the final basis is combinatorial and survives roundoff,
    # the tableau arithmetic does not. Recompute the basic values against the
    # original data and keep whichever candidate passes verification.
    basic = [bv for bv in basis if bv < n_real]
    x_repaired = None
    if basic:
        full = np.zeros((m_eq + m_ub, n_real))
        full[:m_eq, :n] = problem.a_eq
        full[m_eq:, :n] = problem.g_ub
        full[m_eq:, n:] = np.eye(m_ub)
        rhs = np.concatenate([problem.b_eq, problem.h_ub])
        vals, *_ = np.linalg.lstsq(full[:, basic], rhs, rcond=None)
        x_repaired = np.zeros(n_real)
        x_repaired[basic] = vals

    for cand in (x_repaired, x_full):
        if cand is None:
            continue
        x = cand[:n]
        if not np.all(np.isfinite(x)):
            continue
        if m_eq and np.max(np.abs(problem.a_eq @ x - problem.b_eq)) > feas_tol:
            continue
        if m_ub and np.max(problem.g_ub @ x - problem.h_ub) > feas_tol:
            continue
        if np.min(x, initial=0.0) < -1e-12:
            continue
        return LpSolution(
            status="optimal",
            x=x.copy(),
            objective_value=float(problem.c @ x),
            iterations=iterations,
        )
    return LpSolution(status="failed", iterations=iterations)


# ---------------------------------------------------------------------------
# fractional (renewal ratio) benchmark
# ---------------------------------------------------------------------------

def fractional_to_lp(action_triples: Sequence[Tuple[float, Sequence[float], float]],
                     d_rates: Sequence[float]) -> LpProblem:
    """Stationary benchmark for one renewal system as an LP.

    Each triple is (expected penalty y, expected metric vector z, expected
    frame length T >= 1); d_rates are the allowed drift rates. Variables q_i
    are frame frequencies after the standard change of variable: minimize
    sum q_i y_i subject to sum q_i (z_il - d_l T_i) <= 0 for every l and
    sum q_i T_i = 1, q >= 0. The optimal value is the best achievable
    time-average penalty over stationary mixes of the given actions.
    """
    if not action_triples:
        raise ValueError("need at least one action triple")
    d = np.asarray(d_rates, dtype=float).ravel()
    ys = np.array([float(t[0]) for t in action_triples])
    zs = np.array([np.asarray(t[1], dtype=float).ravel() for t in action_triples])
    ts = np.array([float(t[2]) for t in action_triples])
    if np.any(ts < 1.0):
        raise ValueError("expected frame lengths must be at least 1")
    if zs.shape[1] != d.size:
        raise ValueError("metric dimension does not match d_rates")
    g = (zs - ts[:, None] * d[None, :]).T  # one row per constraint
    return LpProblem(
        c=ys,
        a_eq=ts.reshape(1, -1),
        b_eq=np.array([1.0]),
        g_ub=g,
        h_ub=np.zeros(d.size),
    )


def conditional_ratio_optimal(
    event_probs: Sequence[float],
    exp_penalty: np.ndarray,
    exp_frame_len: np.ndarray,
    exp_metrics: np.ndarray,
    budgets: Sequence[float],
) -> float:
    """Best stationary event-conditioned policy for a renewal system.

    The controller observes an i.i.d. event e (probabilities ``event_probs``)
    at each frame start and randomizes over actions given e. Inputs are per
    (event, action) expectations: penalty (E,A), frame length (E,A) with every
    entry >= 1, metrics (E,A,L); ``budgets`` has length L. Solves the ratio
    problem min E[y]/E[T] s.t. E[z_l]/E[T] <= budget_l via the change of
    variable w_{e,a} proportional to P(e) pi(a|e), with one scale variable
    tying per-event mass to P(e).
    """
    p = np.asarray(event_probs, dtype=float).ravel()
    y = np.asarray(exp_penalty, dtype=float)
    t = np.asarray(exp_frame_len, dtype=float)
    z = np.asarray(exp_metrics, dtype=float)
    c = np.asarray(budgets, dtype=float).ravel()
    n_e, n_a = y.shape
    if p.size != n_e or t.shape != (n_e, n_a) or z.shape[:2] != (n_e, n_a):
        raise ValueError("inconsistent event/action table shapes")
    if abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
        raise ValueError("event probabilities must be a distribution")
    if np.any(t < 1.0):
        raise ValueError("expected frame lengths must be at least 1")
    n_w = n_e * n_a
    a_eq = np.zeros((n_e + 1, n_w + 1))
    b_eq = np.zeros(n_e + 1)
    for e in range(n_e):
        a_eq[e, e * n_a : (e + 1) * n_a] = 1.0
        a_eq[e, n_w] = -p[e]
    a_eq[n_e, :n_w] = t.ravel()
    b_eq[n_e] = 1.0
    ell = c.size
    g_ub = np.zeros((ell, n_w + 1))
    for l in range(ell):
        g_ub[l, :n_w] = (z[:, :, l] - c[l] * t).ravel()
    cost = np.concatenate([y.ravel(), [0.0]])
    sol = solve_lp(LpProblem(c=cost, a_eq=a_eq, b_eq=b_eq, g_ub=g_ub, h_ub=np.zeros(ell)))
    if sol.status != "optimal":
        raise RuntimeError(f"conditional ratio benchmark LP ended {sol.status}")
    return float(sol.objective_value)


# ---------------------------------------------------------------------------
# coupled download chains: composite occupation-measure LP
# ---------------------------------------------------------------------------

@dataclass
class CoupledMdpResult:
    value: float
    n_variables: int
    n_constraints: int


# Composite occupation LPs beyond this many variables are solved through the
# Lagrangian dual (policy iteration plus bisection on the power multiplier)
# instead of the dense simplex: the balance rows make the tableau walk of the
# bigger instances pathologically degenerate, while the dual route is exact
# for this LP (single budget row, no duality gap) and runs in seconds.
_SIMPLEX_VARS_LIMIT = 2500


def _chain_policy_gain(p_rows, rewards, starts, ends, n_states):
    """Best average reward of a finite unichain MDP, by policy iteration.

    p_rows stacks one transition row per state-action pair, grouped by state
    with group j occupying rows starts[j]:ends[j]. Returns (gain, policy) with
    policy[s] the selected row index for state s.
    """
    policy = starts.copy()
    for _ in range(500):
        p_pi = p_rows[policy]
        # gain/bias equations (I - P) h + g 1 = r pinned by h[0] = 0
        m = np.zeros((n_states + 1, n_states + 1))
        m[:n_states, :n_states] = np.eye(n_states) - p_pi
        m[:n_states, n_states] = 1.0
        m[n_states, 0] = 1.0
        rhs = np.append(rewards[policy], 0.0)
        sol, *_ = np.linalg.lstsq(m, rhs, rcond=None)
        h, gain = sol[:n_states], float(sol[n_states])
        q = rewards + p_rows @ h
        improved = False
        for s in range(n_states):
            j = starts[s] + int(np.argmax(q[starts[s]:ends[s]]))
            if q[j] > q[policy[s]] + 1e-10:
                policy[s] = j
                improved = True
        if not improved:
            return gain, policy
    raise RuntimeError("policy iteration did not converge")


def _chain_policy_power(p_rows, powers, policy):
    """Stationary expected power of the chain induced by ``policy``."""
    p_pi = p_rows[policy]
    n = p_pi.shape[0]
    m = np.vstack([p_pi.T - np.eye(n), np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    pi, *_ = np.linalg.lstsq(m, rhs, rcond=None)
    return float(pi @ powers[policy])


def _constrained_chain_value(p_rows, rewards, powers, starts, ends, n_states,
                             power_budget):
    """Optimal budget-constrained average reward via the Lagrangian dual.

    With a single budget row the dual d(nu) = gain(reward - nu power) +
    nu * budget is convex piecewise linear with no duality gap; its minimum
    is bracketed where the optimal policy's power crosses the budget and
    located by bisection.
    """
    if power_budget is None:
        gain, _ = _chain_policy_gain(p_rows, rewards, starts, ends, n_states)
        return gain

    def best(nu):
        gain, policy = _chain_policy_gain(
            p_rows, rewards - nu * powers, starts, ends, n_states
        )
        return gain + nu * power_budget, _chain_policy_power(p_rows, powers, policy)

    value, power = best(0.0)
    if power <= power_budget + 1e-12:
        return value
    lo, hi = 0.0, 1.0
    while best(hi)[1] > power_budget:
        hi *= 2.0
        if hi > 1e6:
            raise RuntimeError("power multiplier bracket diverged")
    while hi - lo > 1e-11:
        mid = 0.5 * (lo + hi)
        if best(mid)[1] > power_budget:
            lo = mid
        else:
            hi = mid
    return min(best(lo)[0], best(hi)[0])


def coupled_chain_lp_shape(
    n_users: int,
    nonzero_actions: Sequence[int],
    served_limit: int,
    has_power_budget: bool,
) -> Tuple[int, int]:
    """(variables, constraints) of the composite LP without building it.

    Variables count one occupation entry per (state, joint action) plus one
    slack when the power row is present; joint actions pick at most
    ``served_limit`` active users and one nonzero action for each.
    """
    counts = list(nonzero_actions)
    if len(counts) != n_users:
        raise ValueError("nonzero_actions must list one count per user")
    n_vars = 0
    for s in range(2 ** n_users):
        active = [u for u in range(n_users) if (s >> u) & 1]
        # coefficient generating polynomial, truncated at served_limit
        poly = [1.0] + [0.0] * served_limit
        for u in active:
            nxt = poly[:]
            for deg in range(served_limit):
                nxt[deg + 1] += poly[deg] * counts[u]
            poly = nxt
        n_vars += int(round(sum(poly)))
    n_rows = 2 ** n_users + 1 + (1 if has_power_budget else 0)
    return n_vars + (1 if has_power_budget else 0), n_rows


def coupled_mdp_optimal(
    arrival_probs: Sequence[float],
    weights: Sequence[float],
    mean_files: Sequence[float],
    action_sets: Sequence[Sequence[Tuple[float, float]]],
    served_limit: int,
    power_budget: Optional[float] = None,
    state_cap: int = 8192,
) -> CoupledMdpResult:
    """Optimal stationary weighted throughput of coupled download chains.

    User n alternates between holding a file (active) and idle: an idle user
    turns active with probability ``arrival_probs[n]`` each slot; serving an
    active user with action (phi, power) completes the file with probability
    phi, and a fresh file may arrive at the end of the completing slot. Each
    slot at most ``served_limit`` users are served; expected served power is
    capped by ``power_budget`` when given. Builds the occupation-measure LP on
    the composite state space (all active/idle patterns) with joint actions
    enumerated directly, and maximizes sum of weight * mean_file * phi over
    served users.

    The optimum is computed by the dense simplex up to _SIMPLEX_VARS_LIMIT
    variables and through the equivalent Lagrangian dual beyond that; the two
    routes agree to well under 1e-8 wherever both run.

    action_sets[n] lists (phi, power) pairs; the first entry must be the do
    nothing action (0, 0).
    """
    lam = np.asarray(arrival_probs, dtype=float).ravel()
    w = np.asarray(weights, dtype=float).ravel()
    bf = np.asarray(mean_files, dtype=float).ravel()
    n_users = lam.size
    if not (w.size == bf.size == n_users and len(action_sets) == n_users):
        raise ValueError("per-user parameter lengths disagree")
    if np.any(lam <= 0) or np.any(lam >= 1):
        raise ValueError("arrival probabilities must lie strictly inside (0, 1)")
    if 2 ** n_users > state_cap:
        raise ValueError(
            f"composite state space 2^{n_users} exceeds capacity {state_cap}"
        )
    for acts in action_sets:
        if not acts or acts[0][0] != 0.0 or acts[0][1] != 0.0:
            raise ValueError("each action set must start with the (0, 0) idle action")
        for phi, power in acts:
            if not (0.0 <= phi <= 1.0) or power < 0:
                raise ValueError("action success must be in [0,1], power nonnegative")

    n_states = 2 ** n_users
    variables = []  # (state, assignment) with assignment[n] = action index
    rewards = []
    powers = []
    columns = []
    idle_next = np.array([[1.0 - l, l] for l in lam])  # idle: [P(F'=0), P(F'=1)]
    for s in range(n_states):
        active = [u for u in range(n_users) if (s >> u) & 1]
        for k in range(0, min(served_limit, len(active)) + 1):
            for subset in itertools.combinations(active, k):
                choice_pools = [range(1, len(action_sets[u])) for u in subset]
                for picks in itertools.product(*choice_pools):
                    assign = [0] * n_users
                    for u, a_idx in zip(subset, picks):
                        assign[u] = a_idx
                    factors = []
                    reward = 0.0
                    power = 0.0
                    for u in range(n_users):
                        if (s >> u) & 1:
                            if assign[u]:
                                phi, pw = action_sets[u][assign[u]]
                                done = phi * (1.0 - lam[u])
                                factors.append(np.array([done, 1.0 - done]))
                                reward += w[u] * bf[u] * phi
                                power += pw
                            else:
                                factors.append(np.array([0.0, 1.0]))
                        else:
                            factors.append(idle_next[u])
                    probs = factors[-1]
                    for f in reversed(factors[:-1]):
                        probs = np.kron(probs, f)
                    # probs index has user 0 in the least significant bit
                    variables.append((s, tuple(assign)))
                    rewards.append(reward)
                    powers.append(power)
                    columns.append(probs)

    n_vars = len(variables)
    a_eq = np.zeros((n_states + 1, n_vars))
    for j, ((s, _), probs) in enumerate(zip(variables, columns)):
        a_eq[:n_states, j] = probs
        a_eq[s, j] -= 1.0
    a_eq[n_states, :] = 1.0
    b_eq = np.zeros(n_states + 1)
    b_eq[n_states] = 1.0
    if power_budget is not None:
        g_ub = np.asarray(powers, dtype=float).reshape(1, -1)
        h_ub = np.array([float(power_budget)])
    else:
        g_ub = None
        h_ub = None
    problem = LpProblem(
        c=-np.asarray(rewards, dtype=float), a_eq=a_eq, b_eq=b_eq, g_ub=g_ub, h_ub=h_ub
    )
    if n_vars <= _SIMPLEX_VARS_LIMIT:
        sol = solve_lp(problem)
        if sol.status != "optimal":
            raise RuntimeError(f"composite chain LP ended {sol.status}")
        value = -float(sol.objective_value)
    else:
        state_of = np.array([s for s, _ in variables])
        starts = np.searchsorted(state_of, np.arange(n_states))
        ends = np.searchsorted(state_of, np.arange(n_states) + 1)
        value = _constrained_chain_value(
            np.asarray(columns),
            np.asarray(rewards, dtype=float),
            np.asarray(powers, dtype=float),
            starts, ends, n_states,
            None if power_budget is None else float(power_budget),
        )
    return CoupledMdpResult(
        value=value,
        n_variables=problem.n_variables,
        n_constraints=problem.n_constraints,
    )


# ---------------------------------------------------------------------------
# stationary baseline over occupation polytopes
# ---------------------------------------------------------------------------

def stationary_baseline(
    polyhedra: Sequence[object],
    mean_f: Sequence[np.ndarray],
    mean_g: Sequence[np.ndarray],
) -> Tuple[List[np.ndarray], float]:
    """Best stationary occupation vectors for parallel MDPs under coupling.

    Minimizes sum_k <mean_f[k], theta_k> over theta_k in each polytope subject
    to sum_k <mean_g[k][i], theta_k> <= 0 for every constraint row i. Each
    polytope must expose ``aff_a``, ``aff_b`` and ``dim`` (see
    ocmdp.build_polyhedron). Returns (occupation vectors, optimal value).
    """
    dims = [int(p.dim) for p in polyhedra]
    offs = np.concatenate([[0], np.cumsum(dims)])
    total = int(offs[-1])
    rows = sum(np.asarray(p.aff_a).shape[0] for p in polyhedra)
    a_eq = np.zeros((rows, total))
    b_eq = np.zeros(rows)
    r = 0
    for k, p in enumerate(polyhedra):
        aa = np.asarray(p.aff_a, dtype=float)
        a_eq[r : r + aa.shape[0], offs[k] : offs[k + 1]] = aa
        b_eq[r : r + aa.shape[0]] = np.asarray(p.aff_b, dtype=float)
        r += aa.shape[0]
    f_vec = np.concatenate([np.asarray(f, dtype=float).ravel() for f in mean_f])
    if f_vec.size != total:
        raise ValueError("mean_f dimensions do not match the polytopes")
    m = 0 if not len(mean_g) else np.asarray(mean_g[0], dtype=float).reshape(-1, dims[0]).shape[0]
    g_ub = np.zeros((m, total))
    for k, gk in enumerate(mean_g):
        gk = np.asarray(gk, dtype=float).reshape(-1, dims[k])
        if gk.shape[0] != m:
            raise ValueError("constraint counts differ between systems")
        g_ub[:, offs[k] : offs[k + 1]] = gk
    sol = solve_lp(
        LpProblem(c=f_vec, a_eq=a_eq, b_eq=b_eq,
                  g_ub=g_ub if m else None, h_ub=np.zeros(m) if m else None)
    )
    if sol.status != "optimal":
        raise RuntimeError(f"stationary baseline LP ended {sol.status}")
    thetas = [sol.x[offs[k] : offs[k + 1]].copy() for k in range(len(polyhedra))]
    return thetas, float(sol.objective_value)
