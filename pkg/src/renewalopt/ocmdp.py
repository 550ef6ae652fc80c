"""Online constrained control of several weakly coupled Markov decision
processes.

Each system runs on its own finite state space and is steered through a
state-action occupation vector theta rather than through an explicit policy:
theta[s * n_actions + a] is the stationary probability of sitting in state s
and playing action a, and the feasible set is the polyhedron cut out by the
balance equations together with the probability simplex. One slot after the
penalty and constraint tables of slot t-1 are revealed, every system takes a
projected gradient step

    w = V * f + sum_i Q_i * g_i
    theta_t = project(theta_{t-1} - w / (2 * alpha))

and the shared virtual queues absorb the expected constraint usage of the new
occupation vectors. Projections use Dykstra's alternating projections between
the affine part and the nonnegative orthant. True trajectories are simulated
alongside the occupation iterates: policies are recovered from theta, actions
are sampled, the chains advance, and realized penalties feed the regret
accounting against the best stationary baseline from ``lp.stationary_baseline``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from renewalopt import lp

_MEMBERSHIP_TOL = 1e-8
_ROW_SUM_TOL = 1e-12


@dataclass
class MdpSpec:
    """One system: transition tensor plus penalty/constraint generators.

    ``transitions[a, s, :]`` is the next-state distribution under action a,
    row-stochastic to within 1e-12. ``f_mean`` (states, actions) and
    ``g_means`` (constraints, states, actions) are the means of the revealed
    tables; each slot the generator adds independent uniform noise of
    half-width ``noise`` and clips to [-psi, psi]. ``psi`` defaults to the
    smallest bound consistent with the means and the noise. ``f_drift``
    optionally makes the penalty mean wander: a pair (direction, period)
    adds sin(2*pi*t/period) * direction to ``f_mean`` at slot t. The
    constraint tables stay i.i.d.; only f may drift.
    """

    transitions: np.ndarray
    f_mean: np.ndarray
    g_means: np.ndarray
    noise: float = 0.0
    psi: Optional[float] = None
    f_drift: Optional[Tuple[np.ndarray, float]] = None

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.f_mean = np.asarray(self.f_mean, dtype=float)
        self.g_means = np.asarray(self.g_means, dtype=float)
        if self.transitions.ndim != 3 or self.transitions.shape[1] != self.transitions.shape[2]:
            raise ValueError("transitions must be shaped (actions, states, states)")
        n_a, n_s, _ = self.transitions.shape
        if n_a < 1 or n_s < 1:
            raise ValueError("need at least one state and one action")
        if (self.transitions < 0.0).any():
            raise ValueError("transition probabilities must be nonnegative")
        row_err = np.abs(self.transitions.sum(axis=2) - 1.0).max()
        if row_err > _ROW_SUM_TOL:
            raise ValueError(f"transition rows must sum to 1 (off by {row_err:.3e})")
        if self.f_mean.shape != (n_s, n_a):
            raise ValueError("f_mean must be shaped (states, actions)")
        self.g_means = self.g_means.reshape(-1, n_s, n_a)
        if not float(self.noise) >= 0.0:
            raise ValueError("noise must be nonnegative")
        self.noise = float(self.noise)
        if self.f_drift is not None:
            direction, period = self.f_drift
            direction = np.asarray(direction, dtype=float)
            if direction.shape != (n_s, n_a):
                raise ValueError("drift direction must be shaped (states, actions)")
            if not float(period) > 0.0:
                raise ValueError("drift period must be positive")
            self.f_drift = (direction, float(period))
        needed = self._tightest_bound() + self.noise
        if self.psi is None:
            self.psi = needed
        else:
            self.psi = float(self.psi)
            if self.psi + 1e-12 < needed:
                raise ValueError(
                    f"psi={self.psi} cannot bound tables reaching {needed}"
                )

    def _tightest_bound(self) -> float:
        peak = float(np.abs(self.f_mean).max())
        if self.g_means.size:
            peak = max(peak, float(np.abs(self.g_means).max()))
        if self.f_drift is not None:
            direction, _ = self.f_drift
            peak = max(peak, float((np.abs(self.f_mean) + np.abs(direction)).max()))
        return peak

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_constraints(self) -> int:
        return self.g_means.shape[0]

    @property
    def dim(self) -> int:
        return self.n_states * self.n_actions

    def mean_f_at(self, slot: int) -> np.ndarray:
        """Penalty mean table for one slot, drift included."""
        if self.f_drift is None:
            return self.f_mean
        direction, period = self.f_drift
        return self.f_mean + math.sin(2.0 * math.pi * slot / period) * direction

    def sample_tables(self, slot: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Realized (f, g) tables for one slot: mean + uniform noise, clipped."""
        f = self.mean_f_at(slot).copy()
        g = self.g_means.copy()
        if self.noise > 0.0:
            f += rng.uniform(-self.noise, self.noise, size=f.shape)
            if g.size:
                g += rng.uniform(-self.noise, self.noise, size=g.shape)
        np.clip(f, -self.psi, self.psi, out=f)
        if g.size:
            np.clip(g, -self.psi, self.psi, out=g)
        return f, g


def _stationary_distribution(p: np.ndarray) -> np.ndarray:
    """Stationary distribution of one row-stochastic matrix via least squares."""
    n = p.shape[0]
    a = np.vstack([p.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    d, *_ = np.linalg.lstsq(a, b, rcond=None)
    return d


@dataclass
class PolyhedronTheta:
    """Occupation polyhedron of one system in halfspace form.

    ``aff_a theta = aff_b`` stacks the balance equations (one redundant row
    dropped) and the simplex normalization; the orthant theta >= 0 completes
    the set. ``projector`` is the pseudoinverse of ``aff_a``, precomputed so
    the affine projection inside Dykstra is two matrix-vector products.
    ``uniform_theta`` is the uniform policy's stationary occupation vector,
    which doubles as the constructive membership witness.
    """

    aff_a: np.ndarray
    aff_b: np.ndarray
    dim: int
    n_states: int
    n_actions: int
    projector: np.ndarray = field(repr=False)
    uniform_theta: np.ndarray = field(repr=False)

    def membership_residual(self, theta: np.ndarray) -> float:
        """How far a vector sits outside the polyhedron, in infinity norm."""
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.dim:
            raise ValueError("vector length does not match the polyhedron")
        affine = float(np.abs(self.aff_a @ theta - self.aff_b).max())
        negative = float(max(0.0, -theta.min()))
        return max(affine, negative)


def build_polyhedron(spec: MdpSpec) -> PolyhedronTheta:
    """Assemble the occupation polyhedron of one system.

    Balance rows (one per destination state, coefficient P_a(s, s') minus the
    indicator of s = s') sum to the zero functional, so the last one is
    dropped before the simplex row is appended. The uniform policy's
    stationary occupation vector is computed and checked for membership
    within 1e-9; failure means the transition tensor is numerically broken
    and raises.
    """
    p = np.asarray(spec.transitions, dtype=float)
    if (p < 0.0).any() or np.abs(p.sum(axis=2) - 1.0).max() > _ROW_SUM_TOL:
        raise ValueError("transitions are not row-stochastic")
    n_a, n_s, _ = p.shape
    dim = n_s * n_a
    balance = np.zeros((n_s, dim))
    for s_next in range(n_s):
        balance[s_next] = p[:, :, s_next].T.ravel()
        balance[s_next, s_next * n_a : (s_next + 1) * n_a] -= 1.0
    aff_a = np.vstack([balance[: n_s - 1], np.ones((1, dim))])
    aff_b = np.zeros(n_s)
    aff_b[-1] = 1.0
    projector = np.linalg.pinv(aff_a)

    d = _stationary_distribution(p.mean(axis=0))
    uniform_theta = np.repeat(d, n_a) / n_a
    poly = PolyhedronTheta(
        aff_a=aff_a,
        aff_b=aff_b,
        dim=dim,
        n_states=n_s,
        n_actions=n_a,
        projector=projector,
        uniform_theta=uniform_theta,
    )
    witness = poly.membership_residual(uniform_theta)
    if witness > 1e-9:
        raise RuntimeError(
            f"uniform stationary vector misses the polyhedron by {witness:.3e}"
        )
    return poly


def project_onto_theta(
    poly: PolyhedronTheta,
    x: np.ndarray,
    tol: float = 1e-10,
    max_iterations: int = 100_000,
) -> np.ndarray:
    """Euclidean projection onto the occupation polyhedron.

    Dykstra's alternating projections between the affine set (closed-form
    least-squares projection, no correction term needed) and the nonnegative
    orthant (clipping, with the running correction), iterated until
    successive orthant iterates differ by less than ``tol`` in infinity norm.
    The returned vector is exactly nonnegative and its affine residual is
    verified to be below 1e-8; non-convergence raises with a residual report.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.size != poly.dim:
        raise ValueError("vector length does not match the polyhedron")
    if not np.all(np.isfinite(x)):
        raise ValueError("projection input must be finite")
    aff_a, aff_b, back = poly.aff_a, poly.aff_b, poly.projector
    z = x.copy()
    correction = np.zeros_like(z)
    for _ in range(max_iterations):
        u = z - back @ (aff_a @ z - aff_b)
        w = u + correction
        z_next = np.maximum(w, 0.0)
        correction = w - z_next
        change = float(np.abs(z_next - z).max())
        z = z_next
        if change < tol:
            break
    else:
        affine = float(np.abs(aff_a @ z - aff_b).max())
        raise RuntimeError(
            f"projection did not converge in {max_iterations} iterations "
            f"(last change {change:.3e}, affine residual {affine:.3e})"
        )
    affine = float(np.abs(aff_a @ z - aff_b).max())
    if affine > _MEMBERSHIP_TOL:
        raise RuntimeError(
            f"projection affine residual {affine:.3e} exceeds {_MEMBERSHIP_TOL}"
        )
    return z


def recover_policy(theta: np.ndarray, n_states: int, n_actions: int) -> np.ndarray:
    """Conditional action distribution encoded by an occupation vector.

    Rows are theta(s, .) divided by the state marginal. A state with zero
    marginal carries no probability mass under theta, so any distribution
    works there; the uniform one is substituted to keep every row a
    distribution for the simulator.
    """
    table = np.asarray(theta, dtype=float).reshape(n_states, n_actions)
    marginals = table.sum(axis=1)
    policy = np.full((n_states, n_actions), 1.0 / n_actions)
    positive = marginals > 0.0
    policy[positive] = table[positive] / marginals[positive, None]
    return policy


@dataclass
class OcmdpState:
    """Iterate of the coupled online run.

    ``slot`` is the index of the last completed decision slot; ``thetas``
    are that slot's occupation vectors, ``queues`` the virtual queue values
    entering the next slot (so Q(0) and Q(1) are both exactly zero), and
    ``states`` the true chain states entering the next slot.
    """

    thetas: List[np.ndarray]
    queues: np.ndarray
    states: np.ndarray
    slot: int
    v: float
    alpha: float


def ocmdp_step(
    specs: Sequence[MdpSpec],
    polys: Sequence[PolyhedronTheta],
    state: OcmdpState,
    f_prev: Sequence[np.ndarray],
    g_prev: Sequence[np.ndarray],
    v: float,
    alpha: float,
    rngs: Sequence[np.random.Generator],
) -> Tuple[OcmdpState, np.ndarray]:
    """Advance every system by one slot using the previous slot's tables.

    Per system: fold the revealed tables into w = v*f + sum_i Q_i * g_i,
    project theta - w/(2*alpha) back onto the polyhedron, recover the
    policy, sample an action at the current true state and advance the
    chain. The virtual queues then absorb the expected constraint usage of
    the new occupation vectors. Returns the successor state and the sampled
    actions. Each new theta is hard-checked for membership within 1e-8.
    """
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    n_sys = len(specs)
    queues = state.queues
    new_thetas: List[np.ndarray] = []
    actions = np.zeros(n_sys, dtype=int)
    new_states = state.states.copy()
    for k in range(n_sys):
        spec, poly = specs[k], polys[k]
        w = v * np.asarray(f_prev[k], dtype=float)
        g_k = np.asarray(g_prev[k], dtype=float).reshape(spec.n_constraints, spec.n_states, spec.n_actions)
        if queues.size:
            w = w + np.tensordot(queues, g_k, axes=1)
        theta = project_onto_theta(poly, state.thetas[k] - w.ravel() / (2.0 * alpha))
        residual = poly.membership_residual(theta)
        if residual > _MEMBERSHIP_TOL:
            raise RuntimeError(
                f"occupation vector left the polyhedron (residual {residual:.3e})"
            )
        new_thetas.append(theta)
        policy = recover_policy(theta, spec.n_states, spec.n_actions)
        s_now = int(state.states[k])
        row = policy[s_now]
        a = int(rngs[k].choice(spec.n_actions, p=row / row.sum()))
        actions[k] = a
        new_states[k] = int(rngs[k].choice(spec.n_states, p=spec.transitions[a, s_now]))
    if queues.size:
        drift = np.zeros_like(queues)
        for k in range(n_sys):
            g_k = np.asarray(g_prev[k], dtype=float).reshape(specs[k].n_constraints, -1)
            drift += g_k @ new_thetas[k]
        new_queues = np.maximum(queues + drift, 0.0)
    else:
        new_queues = queues.copy()
    successor = OcmdpState(
        thetas=new_thetas,
        queues=new_queues,
        states=new_states,
        slot=state.slot + 1,
        v=v,
        alpha=alpha,
    )
    return successor, actions


def instance_fingerprint(specs: Sequence[MdpSpec]) -> str:
    """Order-sensitive content hash of an instance's defining arrays."""
    digest = hashlib.sha256()
    for spec in specs:
        for tag, arr in (
            ("P", spec.transitions),
            ("f", spec.f_mean),
            ("g", spec.g_means),
        ):
            digest.update(tag.encode())
            digest.update(str(arr.shape).encode())
            digest.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        digest.update(f"noise={spec.noise!r};psi={spec.psi!r}".encode())
        if spec.f_drift is not None:
            direction, period = spec.f_drift
            digest.update(f"drift;period={period!r}".encode())
            digest.update(np.ascontiguousarray(direction, dtype=float).tobytes())
    return digest.hexdigest()


def slater_margin(
    polys: Sequence[PolyhedronTheta],
    g_means: Sequence[np.ndarray],
) -> float:
    """Largest s with sum_k <g_i, theta_k> <= -s feasible for every i.

    A positive margin certifies strict feasibility of the coupling
    constraints under some product of randomized stationary policies.
    Returns -inf when even weak feasibility fails.
    """
    dims = [p.dim for p in polys]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    total = int(offs[-1])
    m = np.asarray(g_means[0], dtype=float).reshape(-1, dims[0]).shape[0]
    if m == 0:
        return math.inf
    rows = sum(np.asarray(p.aff_a).shape[0] for p in polys)
    a_eq = np.zeros((rows, total + 1))
    b_eq = np.zeros(rows)
    r = 0
    for k, p in enumerate(polys):
        a_eq[r : r + p.aff_a.shape[0], offs[k] : offs[k + 1]] = p.aff_a
        b_eq[r : r + p.aff_a.shape[0]] = p.aff_b
        r += p.aff_a.shape[0]
    g_ub = np.zeros((m, total + 1))
    for k, gk in enumerate(g_means):
        g_ub[:, offs[k] : offs[k + 1]] = np.asarray(gk, dtype=float).reshape(m, dims[k])
    g_ub[:, -1] = 1.0
    cost = np.zeros(total + 1)
    cost[-1] = -1.0
    sol = lp.solve_lp(lp.LpProblem(c=cost, a_eq=a_eq, b_eq=b_eq, g_ub=g_ub, h_ub=np.zeros(m)))
    if sol.status != "optimal":
        return -math.inf
    return float(sol.x[-1])


@dataclass
class StationaryBaseline:
    """Best stationary occupation vectors and their per-slot penalty rate."""

    thetas: List[np.ndarray]
    value: float
    fingerprint: str


def solve_baseline(specs: Sequence[MdpSpec]) -> StationaryBaseline:
    """Solve the coupled stationary benchmark on the instance's true means."""
    polys = [build_polyhedron(spec) for spec in specs]
    thetas, value = lp.stationary_baseline(
        polys,
        [spec.f_mean for spec in specs],
        [spec.g_means for spec in specs],
    )
    return StationaryBaseline(
        thetas=thetas, value=value, fingerprint=instance_fingerprint(specs)
    )


@dataclass
class OcmdpLog:
    """Trajectory record of one simulated run.

    ``queues[t]`` is Q(t) (rows 0 and 1 are exactly zero), ``realized_f[t]``
    and ``realized_g[t]`` sum the revealed table entries at the visited
    state-action pairs over all systems, and ``thetas[k][t]`` is system k's
    occupation vector during slot t.
    """

    v: float
    alpha: float
    horizon: int
    seed: int
    fingerprint: str
    queues: np.ndarray
    realized_f: np.ndarray
    realized_g: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    thetas: List[np.ndarray]

    @property
    def n_systems(self) -> int:
        return self.states.shape[1]

    @property
    def n_constraints(self) -> int:
        return self.queues.shape[1]


def _spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(child) for child in children]


def _common_constraint_count(specs: Sequence[MdpSpec]) -> int:
    counts = {spec.n_constraints for spec in specs}
    if len(counts) != 1:
        raise ValueError("all systems must share the same constraint count")
    return counts.pop()


def run_ocmdp(
    specs: Sequence[MdpSpec],
    horizon: int,
    v: float,
    alpha: float,
    seed: int = 0,
    theta0: Optional[Sequence[np.ndarray]] = None,
    initial_states: Optional[Sequence[int]] = None,
    check_slater: bool = True,
    slater_tol: float = 1e-6,
) -> OcmdpLog:
    """Simulate the projected-update controller on its true chains.

    Slot 0 plays ``theta0`` (default: each system's uniform-policy
    stationary occupation vector); every later slot applies
    :func:`ocmdp_step` to the tables revealed at the end of the previous
    slot. Q(0) = Q(1) = 0 exactly. Each system draws all its randomness
    (actions, table noise, transitions) from its own spawned stream, so a
    run is reproducible for a fixed seed no matter how the per-system work
    is scheduled. Constrained instances are rejected unless the strict
    feasibility margin exceeds ``slater_tol``.
    """
    if not specs:
        raise ValueError("need at least one system")
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not v >= 0.0:
        raise ValueError("v must be nonnegative")
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    m = _common_constraint_count(specs)
    polys = [build_polyhedron(spec) for spec in specs]
    if check_slater and m:
        margin = slater_margin(polys, [spec.g_means for spec in specs])
        if not margin > slater_tol:
            raise ValueError(
                f"instance fails the Slater check (margin {margin:.3e} <= {slater_tol})"
            )
    n_sys = len(specs)
    if theta0 is None:
        thetas = [poly.uniform_theta.copy() for poly in polys]
    else:
        if len(theta0) != n_sys:
            raise ValueError("theta0 must give one vector per system")
        thetas = [np.asarray(t, dtype=float).ravel().copy() for t in theta0]
        for poly, theta in zip(polys, thetas):
            residual = poly.membership_residual(theta)
            if residual > _MEMBERSHIP_TOL:
                raise ValueError(
                    f"theta0 lies outside its polyhedron (residual {residual:.3e})"
                )
    if initial_states is None:
        states = np.zeros(n_sys, dtype=int)
    else:
        states = np.asarray(initial_states, dtype=int)
        if states.shape != (n_sys,):
            raise ValueError("initial_states must give one state per system")
        for spec, s in zip(specs, states):
            if not 0 <= s < spec.n_states:
                raise ValueError("initial state out of range")
        states = states.copy()
    rngs = _spawn_rngs(seed, n_sys)

    queues_log = np.zeros((horizon + 1, m))
    realized_f = np.zeros(horizon)
    realized_g = np.zeros((horizon, m))
    states_log = np.zeros((horizon, n_sys), dtype=int)
    actions_log = np.zeros((horizon, n_sys), dtype=int)
    thetas_log = [np.zeros((horizon, spec.dim)) for spec in specs]

    state = OcmdpState(
        thetas=thetas,
        queues=np.zeros(m),
        states=states,
        slot=0,
        v=float(v),
        alpha=float(alpha),
    )
    # slot 0: play theta0 as-is; the first projected update happens at slot 1
    # and the queue stays at zero through it (Q(0) = Q(1) = 0).
    visited0 = states.copy()
    actions0 = np.zeros(n_sys, dtype=int)
    for k, (spec, rng) in enumerate(zip(specs, rngs)):
        policy = recover_policy(state.thetas[k], spec.n_states, spec.n_actions)
        row = policy[int(visited0[k])]
        actions0[k] = int(rng.choice(spec.n_actions, p=row / row.sum()))
        state.states[k] = int(
            rng.choice(spec.n_states, p=spec.transitions[actions0[k], int(visited0[k])])
        )
    tables = [spec.sample_tables(0, rng) for spec, rng in zip(specs, rngs)]
    states_log[0] = visited0
    actions_log[0] = actions0
    for k in range(n_sys):
        thetas_log[k][0] = state.thetas[k]
        f_tab, g_tab = tables[k]
        realized_f[0] += f_tab[visited0[k], actions0[k]]
        if m:
            realized_g[0] += g_tab[:, visited0[k], actions0[k]]

    for t in range(1, horizon):
        visited = state.states.copy()
        state, acts = ocmdp_step(
            specs,
            polys,
            state,
            [tab[0] for tab in tables],
            [tab[1] for tab in tables],
            float(v),
            float(alpha),
            rngs,
        )
        tables = [spec.sample_tables(t, rng) for spec, rng in zip(specs, rngs)]
        queues_log[t + 1] = state.queues
        states_log[t] = visited
        actions_log[t] = acts
        for k in range(n_sys):
            thetas_log[k][t] = state.thetas[k]
            f_tab, g_tab = tables[k]
            realized_f[t] += f_tab[visited[k], acts[k]]
            if m:
                realized_g[t] += g_tab[:, visited[k], acts[k]]

    return OcmdpLog(
        v=float(v),
        alpha=float(alpha),
        horizon=horizon,
        seed=seed,
        fingerprint=instance_fingerprint(specs),
        queues=queues_log,
        realized_f=realized_f,
        realized_g=realized_g,
        states=states_log,
        actions=actions_log,
        thetas=thetas_log,
    )


def run_fixed_policy(
    specs: Sequence[MdpSpec],
    thetas: Sequence[np.ndarray],
    horizon: int,
    seed: int = 0,
    initial_states: Optional[Sequence[int]] = None,
) -> OcmdpLog:
    """Play fixed occupation vectors on the true chains, no adaptation.

    Used to replay a stationary benchmark in the real system; the log has
    all-zero queues and constant theta rows so it can feed the same
    measurement code as an adaptive run.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    m = _common_constraint_count(specs)
    n_sys = len(specs)
    if len(thetas) != n_sys:
        raise ValueError("need one occupation vector per system")
    polys = [build_polyhedron(spec) for spec in specs]
    fixed = [np.asarray(t, dtype=float).ravel() for t in thetas]
    for poly, theta in zip(polys, fixed):
        residual = poly.membership_residual(theta)
        if residual > _MEMBERSHIP_TOL:
            raise ValueError(
                f"occupation vector outside its polyhedron (residual {residual:.3e})"
            )
    policies = [
        recover_policy(theta, spec.n_states, spec.n_actions)
        for spec, theta in zip(specs, fixed)
    ]
    if initial_states is None:
        states = np.zeros(n_sys, dtype=int)
    else:
        states = np.asarray(initial_states, dtype=int).copy()
    rngs = _spawn_rngs(seed, n_sys)

    realized_f = np.zeros(horizon)
    realized_g = np.zeros((horizon, m))
    states_log = np.zeros((horizon, n_sys), dtype=int)
    actions_log = np.zeros((horizon, n_sys), dtype=int)
    for t in range(horizon):
        for k, (spec, rng) in enumerate(zip(specs, rngs)):
            s_now = int(states[k])
            row = policies[k][s_now]
            a = int(rng.choice(spec.n_actions, p=row / row.sum()))
            states[k] = int(rng.choice(spec.n_states, p=spec.transitions[a, s_now]))
            f_tab, g_tab = spec.sample_tables(t, rng)
            states_log[t, k] = s_now
            actions_log[t, k] = a
            realized_f[t] += f_tab[s_now, a]
            if m:
                realized_g[t] += g_tab[:, s_now, a]
    return OcmdpLog(
        v=0.0,
        alpha=math.inf,
        horizon=horizon,
        seed=seed,
        fingerprint=instance_fingerprint(specs),
        queues=np.zeros((horizon + 1, m)),
        realized_f=realized_f,
        realized_g=realized_g,
        states=states_log,
        actions=actions_log,
        thetas=[np.tile(theta, (horizon, 1)) for theta in fixed],
    )


def measure_regret(
    specs: Sequence[MdpSpec],
    log: OcmdpLog,
    baseline: StationaryBaseline,
) -> Tuple[float, np.ndarray]:
    """Realized regret against a stationary benchmark, plus violations.

    Regret is the run's summed realized penalty minus the benchmark's
    expected cumulative penalty (per-slot means, drift included, dotted
    with the benchmark occupation vectors). Violations are the signed sums
    of realized constraint values per constraint row. Both sides must hash
    to the same instance.
    """
    stamp = instance_fingerprint(specs)
    if log.fingerprint != stamp or baseline.fingerprint != stamp:
        raise ValueError("log, baseline and specs describe different instances")
    bench = 0.0
    for spec, theta in zip(specs, baseline.thetas):
        flat = np.asarray(theta, dtype=float).ravel()
        if spec.f_drift is None:
            bench += log.horizon * float(spec.f_mean.ravel() @ flat)
        else:
            direction, period = spec.f_drift
            slots = np.arange(log.horizon)
            wave = np.sin(2.0 * math.pi * slots / period).sum()
            bench += log.horizon * float(spec.f_mean.ravel() @ flat)
            bench += wave * float(direction.ravel() @ flat)
    regret = float(log.realized_f.sum() - bench)
    violations = log.realized_g.sum(axis=0).astype(float)
    return regret, violations


def save_instance(specs: Sequence[MdpSpec], path: str) -> None:
    """Write an instance as a JSON document (arrays as nested lists)."""
    payload = []
    for spec in specs:
        entry = {
            "transitions": spec.transitions.tolist(),
            "f_mean": spec.f_mean.tolist(),
            "g_means": spec.g_means.tolist(),
            "noise": spec.noise,
            "psi": spec.psi,
        }
        if spec.f_drift is not None:
            direction, period = spec.f_drift
            entry["f_drift"] = {"direction": direction.tolist(), "period": period}
        payload.append(entry)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump({"systems": payload}, handle, indent=2)


def load_instance(path: str) -> List[MdpSpec]:
    """Read an instance written by :func:`save_instance`."""
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    specs = []
    for entry in doc["systems"]:
        drift = None
        if "f_drift" in entry:
            drift = (np.asarray(entry["f_drift"]["direction"], dtype=float),
                     float(entry["f_drift"]["period"]))
        specs.append(
            MdpSpec(
                transitions=np.asarray(entry["transitions"], dtype=float),
                f_mean=np.asarray(entry["f_mean"], dtype=float),
                g_means=np.asarray(entry["g_means"], dtype=float),
                noise=float(entry["noise"]),
                psi=float(entry["psi"]),
                f_drift=drift,
            )
        )
    return specs


def two_mdp_example(noise: float = 0.25) -> List[MdpSpec]:
    """Fixed two-system instance with one binding coupling constraint.

    Action 1 is the expensive one in both systems: it raises the penalty
    mean but drives the shared constraint negative, so the unconstrained
    penalty minimizer violates the constraint while the all-action-1
    product policy strictly satisfies it. The uniform starting point sits
    on the infeasible side, which makes both regret and cumulative
    violation grow through the transient.
    """
    first = MdpSpec(
        transitions=np.array(
            [
                [[0.9, 0.1], [0.5, 0.5]],
                [[0.2, 0.8], [0.1, 0.9]],
            ]
        ),
        f_mean=np.array([[0.2, 1.0], [0.1, 0.8]]),
        g_means=np.array([[[0.9, -0.35], [0.8, -0.5]]]),
        noise=noise,
        psi=1.5,
    )
    second = MdpSpec(
        transitions=np.array(
            [
                [[0.7, 0.3], [0.4, 0.6]],
                [[0.3, 0.7], [0.2, 0.8]],
            ]
        ),
        f_mean=np.array([[0.1, 0.9], [0.3, 1.1]]),
        g_means=np.array([[[0.8, -0.4], [1.0, -0.25]]]),
        noise=noise,
        psi=1.5,
    )
    return [first, second]
