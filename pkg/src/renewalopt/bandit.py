"""Power-constrained multi-user file downloading by ratio indexing.

Users flip between idle and active (file present). Serving an active user
with a rate option completes the file with that option's success probability
and spends its power; a shared virtual queue tracks the average power budget
and the scheduler serves the users with the largest ratio indices. Includes
the single-user frame algorithm, the fixed-rate special case where the
highest-arrival-rate policy is optimal, its two-queue Markov chain oracle,
and a robustness harness with non-geometric file lengths.

Timing convention: a file that completes in a slot can be replaced by a new
arrival at the end of that same slot, so an active user served with success
probability phi goes idle with probability phi * (1 - lambda). The single
user frame accounting instead counts a full idle period after each download,
giving the expected frame length 1 + phi / lambda used by the index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

_CHUNK = 4096


@dataclass(frozen=True)
class UserSpec:
    """One user: arrival probability, mean file size, rate options, weight.

    ``actions`` holds (success probability, power) pairs and must start with
    the designated zero action (0, 0); every other option needs positive
    power. ``file_length_sampler`` optionally draws integer file lengths for
    the non-memoryless harness; the index policy itself never looks at it.
    """

    lam: float
    mean_file: float
    actions: Tuple[Tuple[float, float], ...]
    weight: float = 1.0
    file_length_sampler: Optional[Callable[[np.random.Generator], int]] = field(
        default=None, repr=False
    )

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("arrival probability must be strictly inside (0, 1)")
        if not self.mean_file > 0:
            raise ValueError("mean file size must be positive")
        if not self.weight > 0:
            raise ValueError("weight must be positive")
        acts = tuple((float(phi), float(p)) for phi, p in self.actions)
        if not acts or acts[0] != (0.0, 0.0):
            raise ValueError("first action must be the zero action (0, 0)")
        for phi, p in acts:
            if not 0.0 <= phi <= 1.0:
                raise ValueError("success probability must lie in [0, 1]")
            if p < 0:
                raise ValueError("power must be nonnegative")
        for phi, p in acts[1:]:
            if not p > 0:
                raise ValueError("nonzero actions must have positive power")
        object.__setattr__(self, "actions", acts)

    @property
    def p_min(self) -> float:
        return min(p for _, p in self.actions[1:]) if len(self.actions) > 1 else np.inf

    @property
    def p_max(self) -> float:
        return max(p for _, p in self.actions)


@dataclass
class BanditState:
    file_states: List[int]
    q: float
    slot: int


@dataclass
class SlotStats:
    served: List[Tuple[int, int]]  # (user index, action index)
    throughput: float  # expected weighted bits, sum of c * mean_file * phi
    power: float


def _index_terms(user: UserSpec, v: float):
    """Index of action a is gain[a] - Q * cost[a]; both lists share order."""
    gain, cost = [], []
    for phi, p in user.actions:
        denom = 1.0 + phi / user.lam
        gain.append(v * user.weight * user.mean_file * phi / denom)
        cost.append(p / denom)
    return gain, cost


def single_user_select(user: UserSpec, q: float, v: float) -> int:
    """Best action index at a frame start; ties go to the lowest index."""
    if not v > 0:
        raise ValueError("penalty weight must be positive")
    gain, cost = _index_terms(user, v)
    best, best_val = 0, -np.inf
    for a in range(len(user.actions)):
        val = gain[a] - q * cost[a]
        if val > best_val:
            best, best_val = a, val
    return best


def single_user_queue_update(
    q: float, power: float, frame_len: int, beta: float
) -> float:
    if frame_len < 1:
        raise ValueError("frame length must be at least 1")
    return max(q + power - beta * frame_len, 0.0)


def single_user_queue_bound(user: UserSpec, v: float, beta: float) -> float:
    return max(v * user.mean_file / user.p_min + user.p_max - beta, 0.0)


def single_user_run(
    user: UserSpec, v: float, beta: float, n_frames: int, seed: int
) -> dict:
    """Simulate frames of the single-user algorithm from an empty queue.

    A frame is one service slot plus, when the file completes, the idle slots
    until the next arrival. The power-queue bound is enforced as a hard check
    on every frame.
    """
    if n_frames < 1:
        raise ValueError("need at least one frame")
    rng = np.random.default_rng(seed)
    bound = single_user_queue_bound(user, v, beta) + 1e-9
    actions = np.empty(n_frames, dtype=int)
    frame_lens = np.empty(n_frames, dtype=int)
    powers = np.empty(n_frames)
    queues = np.empty(n_frames)
    q = 0.0
    for k in range(n_frames):
        a = single_user_select(user, q, v)
        phi, p = user.actions[a]
        t_k = 1
        if rng.random() < phi:
            t_k += int(rng.geometric(user.lam))
        q = single_user_queue_update(q, p, t_k, beta)
        if q > bound:
            raise RuntimeError(
                f"power queue {q:.6f} exceeded its deterministic bound {bound:.6f}"
            )
        actions[k] = a
        frame_lens[k] = t_k
        powers[k] = p
        queues[k] = q
    return {
        "actions": actions,
        "frame_lens": frame_lens,
        "powers": powers,
        "queues": queues,
    }


# ---------------------------------------------------------------------------
# multi-user scheduling
# ---------------------------------------------------------------------------


def multi_user_queue_bound(users: Sequence[UserSpec], v: float, beta: float) -> float:
    p_min = min(u.p_min for u in users)
    c_b_max = max(u.weight * u.mean_file for u in users)
    return max(v * c_b_max / p_min + sum(u.p_max for u in users) - beta, 0.0)


def _schedule(users, gains, costs, file_states, q, m_servers):
    """Pick up to m_servers active users with the greatest indices.

    Index ties break toward the lower user number, action ties toward the
    lower action number. Returns the served (user, action) pairs with the
    slot's power draw and expected weighted bits.
    """
    ranked = []
    for n, f in enumerate(file_states):
        if not f:
            continue
        g, c = gains[n], costs[n]
        best, best_val = 0, -np.inf
        for a in range(len(g)):
            val = g[a] - q * c[a]
            if val > best_val:
                best, best_val = a, val
        ranked.append((-best_val, n, best))
    if len(ranked) > m_servers:
        ranked.sort()
        ranked = ranked[:m_servers]
    served = [(n, a) for _, n, a in ranked]
    power = 0.0
    tput = 0.0
    for n, a in served:
        phi, p = users[n].actions[a]
        power += p
        tput += users[n].weight * users[n].mean_file * phi
    return served, power, tput


def multi_user_step(
    users: Sequence[UserSpec],
    state: BanditState,
    v: float,
    m_servers: int,
    beta: float,
    rng: np.random.Generator,
) -> Tuple[BanditState, SlotStats]:
    """One slot of the ratio indexing scheduler.

    Consumes two uniform vectors per slot (completion then arrival), one
    entry per user, regardless of which entries end up used; this keeps the
    draw layout identical to the chunked generation in :func:`multi_user_run`.
    """
    if not 0 < m_servers < len(users):
        raise ValueError("server count must satisfy 0 < M < N")
    gains, costs = zip(*(_index_terms(u, v) for u in users))
    comp_u = rng.random(len(users))
    arr_u = rng.random(len(users))
    served, power, tput = _schedule(
        users, gains, costs, state.file_states, state.q, m_servers
    )
    new_states = list(state.file_states)
    served_phi = {n: users[n].actions[a][0] for n, a in served}
    for n, user in enumerate(users):
        if new_states[n]:
            phi = served_phi.get(n, 0.0)
            if phi and comp_u[n] < phi:
                new_states[n] = 1 if arr_u[n] < user.lam else 0
        else:
            new_states[n] = 1 if arr_u[n] < user.lam else 0
    q_new = max(state.q + power - beta, 0.0)
    return (
        BanditState(file_states=new_states, q=q_new, slot=state.slot + 1),
        SlotStats(served=served, throughput=tput, power=power),
    )


def multi_user_run(
    users: Sequence[UserSpec],
    v: float,
    m_servers: int,
    beta: float,
    horizon: int,
    seed: int,
) -> dict:
    """Simulate the multi-user scheduler for ``horizon`` slots, idle start.

    Matches slot-by-slot composition of :func:`multi_user_step` bit for bit
    while pregenerating the uniforms in chunks. The deterministic queue bound
    is enforced as a hard check on every slot.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not 0 < m_servers < len(users):
        raise ValueError("server count must satisfy 0 < M < N")
    n_users = len(users)
    rng = np.random.default_rng(seed)
    gains, costs = zip(*(_index_terms(u, v) for u in users))
    lams = [u.lam for u in users]
    phis = [[phi for phi, _ in u.actions] for u in users]
    bound = multi_user_queue_bound(users, v, beta) + 1e-9
    tput_arr = np.empty(horizon)
    power_arr = np.empty(horizon)
    q_arr = np.empty(horizon)
    file_states = [0] * n_users
    q = 0.0
    pos = _CHUNK
    block = None
    for t in range(horizon):
        if pos == _CHUNK:
            block = rng.random((_CHUNK, 2, n_users)).tolist()
            pos = 0
        comp_u, arr_u = block[pos]
        pos += 1
        served, power, tput = _schedule(
            users, gains, costs, file_states, q, m_servers
        )
        served_phi = dict.fromkeys(range(n_users), 0.0)
        for n, a in served:
            served_phi[n] = phis[n][a]
        for n in range(n_users):
            if file_states[n]:
                phi = served_phi[n]
                if phi and comp_u[n] < phi:
                    file_states[n] = 1 if arr_u[n] < lams[n] else 0
            elif arr_u[n] < lams[n]:
                file_states[n] = 1
        q = q + power - beta
        if q < 0.0:
            q = 0.0
        elif q > bound:
            raise RuntimeError(
                f"power queue {q:.6f} exceeded its deterministic bound {bound:.6f}"
            )
        tput_arr[t] = tput
        power_arr[t] = power
        q_arr[t] = q
    return {
        "throughput": tput_arr,
        "power": power_arr,
        "queue": q_arr,
        "throughput_avg": float(tput_arr.mean()),
        "power_avg": float(power_arr.mean()),
    }


# ---------------------------------------------------------------------------
# fixed-rate special case and its Markov chain oracle
# ---------------------------------------------------------------------------


def maxlambda_step(
    file_states: List[int],
    lambdas: Sequence[float],
    m_servers: int,
    rng: np.random.Generator,
    prefer_small: bool = False,
) -> Tuple[List[int], int]:
    """One slot of strict-priority service over single-buffer queues.

    Serves up to ``m_servers`` nonempty buffers, ordered by arrival rate
    (largest first, or smallest first with ``prefer_small``; rate ties go to
    the lower queue number). A served buffer always delivers its packet.
    Bernoulli arrivals then fill every buffer that is empty after service.
    Returns the new states and the number of packets delivered.
    """
    for lam in lambdas:
        if not 0.0 < lam < 1.0:
            raise ValueError("arrival probabilities must be strictly inside (0, 1)")
    order = sorted(
        range(len(lambdas)),
        key=lambda n: (lambdas[n] if prefer_small else -lambdas[n], n),
    )
    new_states = list(file_states)
    served = 0
    for n in order:
        if served == m_servers:
            break
        if new_states[n]:
            new_states[n] = 0
            served += 1
    arr_u = rng.random(len(lambdas))
    for n, lam in enumerate(lambdas):
        if new_states[n] == 0 and arr_u[n] < lam:
            new_states[n] = 1
    return new_states, served


def maxlambda_run(
    lambdas: Sequence[float],
    m_servers: int,
    horizon: int,
    seed: int,
    prefer_small: bool = False,
) -> float:
    """Time-average packets per slot over ``horizon`` slots, empty start."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    for lam in lambdas:
        if not 0.0 < lam < 1.0:
            raise ValueError("arrival probabilities must be strictly inside (0, 1)")
    n_q = len(lambdas)
    order = sorted(
        range(n_q), key=lambda n: (lambdas[n] if prefer_small else -lambdas[n], n)
    )
    rng = np.random.default_rng(seed)
    states = [0] * n_q
    delivered = 0
    pos = _CHUNK
    block = None
    for _ in range(horizon):
        if pos == _CHUNK:
            block = rng.random((_CHUNK, n_q)).tolist()
            pos = 0
        arr_u = block[pos]
        pos += 1
        served = 0
        for n in order:
            if served == m_servers:
                break
            if states[n]:
                states[n] = 0
                served += 1
        delivered += served
        for n in range(n_q):
            if states[n] == 0 and arr_u[n] < lambdas[n]:
                states[n] = 1
    return delivered / horizon


def two_queue_markov_throughput(lam1: float, lam2: float, priority: int) -> float:
    """Exact stationary throughput of two single-buffer queues, one server.

    The four occupancy states form a Markov chain under strict priority to
    the given queue (1 or 2); a slot delivers a packet unless both buffers
    are empty, so the throughput is one minus the both-empty probability.
    """
    if priority not in (1, 2):
        raise ValueError("priority must be 1 or 2")
    for lam in (lam1, lam2):
        if not 0.0 < lam < 1.0:
            raise ValueError("arrival probabilities must be strictly inside (0, 1)")
    lams = (lam1, lam2)
    p = np.zeros((4, 4))
    for s in range(4):
        occ = [s >> 1 & 1, s & 1]
        post = list(occ)
        serve = None
        if occ[priority - 1]:
            serve = priority - 1
        elif occ[2 - priority]:
            serve = 2 - priority
        if serve is not None:
            post[serve] = 0
        for s_next in range(4):
            nxt = [s_next >> 1 & 1, s_next & 1]
            prob = 1.0
            for i in range(2):
                if post[i]:
                    prob *= 1.0 if nxt[i] else 0.0
                else:
                    prob *= lams[i] if nxt[i] else 1.0 - lams[i]
            p[s, s_next] = prob
    a = np.vstack([p.T - np.eye(4), np.ones(4)])
    b = np.zeros(5)
    b[4] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    return float(1.0 - pi[0])


# ---------------------------------------------------------------------------
# non-memoryless robustness harness
# ---------------------------------------------------------------------------


def geometric_file_sampler(mean: float) -> Callable[[np.random.Generator], int]:
    if not mean >= 1:
        raise ValueError("mean file length must be at least 1")
    return lambda rng: int(rng.geometric(1.0 / mean))


def uniform_file_sampler(low: int, high: int) -> Callable[[np.random.Generator], int]:
    if not 1 <= low <= high:
        raise ValueError("need 1 <= low <= high")
    return lambda rng: int(rng.integers(low, high + 1))


def poisson_file_sampler(mean: float) -> Callable[[np.random.Generator], int]:
    """Shifted Poisson: 1 + Poisson(mean - 1), so lengths stay positive while
    keeping the requested mean."""
    if not mean >= 1:
        raise ValueError("mean file length must be at least 1")
    return lambda rng: 1 + int(rng.poisson(mean - 1.0))


def multi_user_run_nonmemoryless(
    users: Sequence[UserSpec],
    v: float,
    m_servers: int,
    beta: float,
    horizon: int,
    seed: int,
) -> dict:
    """Run the index policy against files with true integer residual lengths.

    The policy still prices actions with the memoryless model (phi and the
    mean file size), but a served file now loses one packet with per-packet
    success probability phi * mean_file and completes when its residual hits
    zero. Every user needs a ``file_length_sampler``. Throughput counts
    weighted packets actually delivered. The power-queue bound stays a hard
    per-slot check; it is a sample-path result that does not depend on the
    file length model.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not 0 < m_servers < len(users):
        raise ValueError("server count must satisfy 0 < M < N")
    n_users = len(users)
    packet_success = []
    for u in users:
        if u.file_length_sampler is None:
            raise ValueError("every user needs a file_length_sampler")
        probs = [phi * u.mean_file for phi, _ in u.actions]
        if max(probs) > 1.0 + 1e-12:
            raise ValueError(
                "phi * mean_file must stay within [0, 1] to be a packet "
                "success probability"
            )
        packet_success.append(probs)
    rng = np.random.default_rng(seed)
    gains, costs = zip(*(_index_terms(u, v) for u in users))
    bound = multi_user_queue_bound(users, v, beta) + 1e-9
    residual = [0] * n_users
    q = 0.0
    tput_arr = np.empty(horizon)
    power_arr = np.empty(horizon)
    q_arr = np.empty(horizon)
    for t in range(horizon):
        file_states = [1 if r else 0 for r in residual]
        comp_u = rng.random(n_users)
        arr_u = rng.random(n_users)
        served, power, _ = _schedule(
            users, gains, costs, file_states, q, m_servers
        )
        tput = 0.0
        success = dict.fromkeys(range(n_users), 0.0)
        for n, a in served:
            success[n] = packet_success[n][a]
        for n, u in enumerate(users):
            if residual[n]:
                if success[n] and comp_u[n] < success[n]:
                    residual[n] -= 1
                    tput += u.weight
                    if residual[n] == 0 and arr_u[n] < u.lam:
                        residual[n] = u.file_length_sampler(rng)
            elif arr_u[n] < u.lam:
                residual[n] = u.file_length_sampler(rng)
        q = max(q + power - beta, 0.0)
        if q > bound:
            raise RuntimeError(
                f"power queue {q:.6f} exceeded its deterministic bound {bound:.6f}"
            )
        tput_arr[t] = tput
        power_arr[t] = power
        q_arr[t] = q
    return {
        "throughput": tput_arr,
        "power": power_arr,
        "queue": q_arr,
        "throughput_avg": float(tput_arr.mean()),
        "power_avg": float(power_arr.mean()),
    }


# ---------------------------------------------------------------------------
# benchmark instances
# ---------------------------------------------------------------------------

_TABLE_ONE = [
    # lam, mu, phi(1), c, p(1)
    (0.0028, 0.5380, 0.4842, 4.7527, 3.9504),
    (0.4176, 0.5453, 0.4908, 2.0681, 3.7391),
    (0.0888, 0.5044, 0.4540, 2.8656, 3.5753),
    (0.3181, 0.6103, 0.5493, 2.4605, 2.1828),
    (0.4151, 0.9839, 0.8855, 4.5554, 3.1982),
    (0.2546, 0.5975, 0.5377, 3.9647, 3.5290),
    (0.1705, 0.5517, 0.4966, 1.5159, 2.5226),
    (0.2109, 0.7597, 0.6837, 3.6364, 2.5376),
]

_TABLE_TWO = [
    # mu, uniform (low, high), poisson mean, lam, phi(1), c, p(1)
    (1 / 3, (1, 5), 3.0, 0.4955, 0.1832, 4.3261, 2.8763),
    (1 / 2, (1, 3), 2.0, 0.1181, 0.4187, 1.6827, 2.0549),
    (1 / 2, (1, 3), 2.0, 0.1298, 0.4491, 1.9483, 2.1469),
    (1 / 7, (1, 13), 7.0, 0.4660, 0.0984, 2.7495, 3.4472),
    (1 / 4, (1, 7), 4.0, 0.1661, 0.1742, 1.5535, 3.2801),
    (1 / 3, (1, 5), 3.0, 0.2124, 0.3101, 4.3151, 3.5648),
    (1 / 2, (1, 3), 2.0, 0.5295, 0.4980, 3.6701, 2.4680),
    (1 / 5, (1, 9), 5.0, 0.2228, 0.1971, 4.0185, 2.2984),
    (1 / 4, (1, 7), 4.0, 0.0332, 0.1986, 3.0411, 2.5747),
]

EIGHT_USER_BUDGET = 5.0
EIGHT_USER_SERVERS = 4


def table_one_users() -> List[UserSpec]:
    """The eight-user two-action benchmark (geometric files, M=4, beta=5)."""
    return [
        UserSpec(
            lam=lam,
            mean_file=1.0 / mu,
            actions=((0.0, 0.0), (phi, p)),
            weight=c,
        )
        for lam, mu, phi, c, p in _TABLE_ONE
    ]


def table_two_users(file_dist: str = "geometric") -> List[UserSpec]:
    """The nine-user robustness benchmark with a choice of file length law.

    ``file_dist`` is "geometric", "uniform", or "poisson"; all three match
    the per-user mean file length 1/mu.
    """
    users = []
    for mu, unif, pmean, lam, phi, c, p in _TABLE_TWO:
        mean = 1.0 / mu
        if file_dist == "geometric":
            sampler = geometric_file_sampler(mean)
        elif file_dist == "uniform":
            sampler = uniform_file_sampler(*unif)
        elif file_dist == "poisson":
            sampler = poisson_file_sampler(pmean)
        else:
            raise ValueError("file_dist must be geometric, uniform, or poisson")
        users.append(
            UserSpec(
                lam=lam,
                mean_file=mean,
                actions=((0.0, 0.0), (phi, p)),
                weight=c,
                file_length_sampler=sampler,
            )
        )
    return users
