"""Data-center power control on slotted time.

A threshold front end rejects or routes incoming requests, and every server
runs renewal frames of its own: at a frame start it either serves for one slot
or commits to a sleep window (a chosen idle length, then a geometric setup,
then one closing service slot). The frame decision compares the one-slot
active cost against a frame-length-normalized window cost with a quadratic
length correction, which collapses to checking the two integers around a real
stationary point. The module also carries the virtualized single-queue
variant, the always-on and reactive baselines, and CSV trace utilities.

All decisions read only queue values and model constants; the service drawn
in the current slot is never observed before it is used.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

Decision = Union[str, Tuple[int, int]]


@dataclass
class SleepMode:
    """One sleep option: per-slot idle and setup power draws plus the mean of
    the geometric setup time (support 1, 2, ...)."""

    idle_power: float
    setup_power: float
    setup_mean: float

    def __post_init__(self) -> None:
        if self.idle_power < 0 or self.setup_power < 0:
            raise ValueError("sleep mode powers must be nonnegative")
        if self.setup_mean < 1:
            raise ValueError("setup_mean must be at least 1")

    @property
    def setup_var(self) -> float:
        return self.setup_mean * self.setup_mean - self.setup_mean


@dataclass
class ServerConfig:
    """Per-server model.

    ``mu_dist`` is ``("constant", value)`` or ``("zipf", k, p)``; the mean and
    the largest possible draw are derived from it so the decision rule and the
    sampler can never disagree. ``r_max`` is the router cap shared by every
    server in a run; it enters the quadratic coefficient of the frame rule.
    """

    active_power: float
    mu_dist: Tuple
    sleep_modes: Sequence[SleepMode]
    i_max: int
    r_max: float

    def __post_init__(self) -> None:
        if self.active_power < 0:
            raise ValueError("active_power must be nonnegative")
        if self.i_max < 1:
            raise ValueError("i_max must be at least 1")
        if self.r_max < 0:
            raise ValueError("r_max must be nonnegative")
        if not self.sleep_modes:
            raise ValueError("at least one sleep mode is required")
        self.sleep_modes = list(self.sleep_modes)
        tag = self.mu_dist[0] if self.mu_dist else None
        if tag == "constant":
            if len(self.mu_dist) != 2 or self.mu_dist[1] <= 0:
                raise ValueError("constant service needs one positive value")
        elif tag == "zipf":
            if len(self.mu_dist) != 3 or int(self.mu_dist[1]) < 1:
                raise ValueError("zipf service needs support size >= 1 and an exponent")
        else:
            raise ValueError(f"unknown service distribution {self.mu_dist!r}")

    @property
    def mu_mean(self) -> float:
        if self.mu_dist[0] == "constant":
            return float(self.mu_dist[1])
        return zipf_mean(int(self.mu_dist[1]), float(self.mu_dist[2]))

    @property
    def mu_max(self) -> float:
        if self.mu_dist[0] == "constant":
            return float(self.mu_dist[1])
        return float(int(self.mu_dist[1]))


@dataclass
class TraceRecord:
    slot: int
    arrivals: int
    cost: float


@dataclass
class DatacenterState:
    """Mutable mid-run snapshot: decision queues, the physical backlog when it
    is kept separately, and each server's phase with its remaining slots."""

    queues: np.ndarray
    backlog: Optional[float]
    phase: List[str]
    remaining: List[int]
    mode_index: List[int]
    slot: int


def zipf_mean(k: int, p: float) -> float:
    """Mean of the Zipf(k, p) law on 1..k: sum(i**(1-p)) / sum(i**(-p))."""
    idx = np.arange(1, k + 1, dtype=float)
    weights = idx ** (-p)
    return float((idx * weights).sum() / weights.sum())


class _ZipfSampler:
    """Inverse-CDF draws from Zipf(k, p) on the integers 1..k."""

    def __init__(self, k: int, p: float) -> None:
        weights = np.arange(1, k + 1, dtype=float) ** (-p)
        self.cdf = np.cumsum(weights / weights.sum())
        self.cdf[-1] = 1.0

    def __call__(self, rng: np.random.Generator) -> float:
        return float(np.searchsorted(self.cdf, rng.random(), side="right") + 1)


def _service_sampler(mu_dist):
    if mu_dist[0] == "constant":
        value = float(mu_dist[1])
        return lambda rng: value
    return _ZipfSampler(int(mu_dist[1]), float(mu_dist[2]))


# ---------------------------------------------------------------------------
# trace handling
# ---------------------------------------------------------------------------

def validate_trace(records: Sequence[TraceRecord]) -> None:
    """Reject traces whose slots are not contiguous from 0 or whose fields are
    out of range (negative arrivals, nonpositive costs)."""
    for pos, rec in enumerate(records):
        if rec.slot != pos:
            raise ValueError(f"trace slots must run 0,1,..., got {rec.slot} at row {pos}")
        if rec.arrivals < 0 or rec.arrivals != int(rec.arrivals):
            raise ValueError(f"arrivals must be nonnegative integers, got {rec.arrivals!r}")
        if rec.cost <= 0:
            raise ValueError(f"rejection cost must be positive, got {rec.cost!r}")


def load_trace(path) -> List[TraceRecord]:
    """Read a ``slot,arrivals,cost`` CSV (header row required) and validate it."""
    records = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or [col.strip() for col in header] != ["slot", "arrivals", "cost"]:
            raise ValueError("trace file must start with a 'slot,arrivals,cost' header")
        for row in reader:
            if not row:
                continue
            records.append(TraceRecord(int(row[0]), int(row[1]), float(row[2])))
    validate_trace(records)
    return records


def write_trace(path, records: Sequence[TraceRecord]) -> None:
    validate_trace(records)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["slot", "arrivals", "cost"])
        for rec in records:
            writer.writerow([rec.slot, rec.arrivals, repr(float(rec.cost))])


def uniform_trace(horizon: int, arrival_range=(10, 30), cost_range=(1, 6),
                  seed: int = 0) -> List[TraceRecord]:
    """I.i.d. trace: integer arrivals and rejection costs drawn uniformly from
    the two closed ranges."""
    rng = np.random.default_rng(seed)
    arrivals = rng.integers(arrival_range[0], arrival_range[1] + 1, size=horizon)
    costs = rng.integers(cost_range[0], cost_range[1] + 1, size=horizon)
    return [TraceRecord(t, int(arrivals[t]), float(costs[t])) for t in range(horizon)]


def ramp_trace(horizon: int, base_rate: float, peak_rate: float,
               ramp_start: int, ramp_end: int, cost: float = 1.0,
               seed: int = 0) -> List[TraceRecord]:
    """Synthetic load curve with the measured-trace shape: a steady stretch, a
    linear climb between the two marker slots, then steady at the peak.
    Arrivals are Poisson around the phase rate; the cost column is constant."""
    if not 0 <= ramp_start < ramp_end <= horizon:
        raise ValueError("need 0 <= ramp_start < ramp_end <= horizon")
    rng = np.random.default_rng(seed)
    slots = np.arange(horizon, dtype=float)
    frac = np.clip((slots - ramp_start) / (ramp_end - ramp_start), 0.0, 1.0)
    rates = base_rate + (peak_rate - base_rate) * frac
    draws = rng.poisson(rates)
    return [TraceRecord(t, int(draws[t]), float(cost)) for t in range(horizon)]


# ---------------------------------------------------------------------------
# decision rules
# ---------------------------------------------------------------------------

def admission_decide(arrivals, cost, queues, v, r_max):
    """Threshold front end for one slot.

    If some queue sits at or below v*cost, send min(arrivals, r_max) to the
    shortest such queue (lowest index on ties) and reject the overflow;
    otherwise reject everything. Returns ``(rejected, routed)`` with
    ``rejected + routed.sum() == arrivals``.
    """
    routed = np.zeros(len(queues))
    threshold = v * cost
    eligible = [n for n, q in enumerate(queues) if q <= threshold]
    if not eligible:
        return float(arrivals), routed
    target = min(eligible, key=lambda n: (queues[n], n))
    admitted = min(float(arrivals), float(r_max))
    routed[target] = admitted
    return float(arrivals) - admitted, routed


def server_frame_decide(cfg: ServerConfig, queue: float, v: float) -> Decision:
    """Frame-start rule for one server: serve now, or sleep and for how long.

    Serving for one slot costs v*e - q*mu_mean. A window with sleep mode alpha
    and idle length I costs

        [v*W*m + v*e - q*mu_mean + (b0/2)*var + v*g*I] / (I + m + 1)
        + (b0/2)*(I + m + 1)

    with b0 = (r_max + mu_max)*mu_max/2 and (g, W, m, var) the mode's idle
    power, setup power, setup mean and setup variance. Substituting
    x = I + m + 1 turns the window cost into v*g + c/x + (b0/2)*x with c
    independent of I, so per mode only the two integers bracketing the real
    stationary point sqrt(2c/b0) need checking; when c <= 0 the cost is
    increasing in I and the window of length 1 stands in. Candidates are
    clipped to [1, i_max]. Returns ``"active"`` or ``(mode_index, idle_len)``;
    exact ties keep the server active, then prefer the lower mode index and
    the shorter window.
    """
    mu_hat = cfg.mu_mean
    b0 = 0.5 * (cfg.r_max + cfg.mu_max) * cfg.mu_max
    best: Decision = "active"
    best_val = v * cfg.active_power - queue * mu_hat
    for k, mode in enumerate(cfg.sleep_modes):
        m = mode.setup_mean
        head = (v * mode.setup_power * m + v * cfg.active_power
                - queue * mu_hat + 0.5 * b0 * mode.setup_var)
        c = head - v * mode.idle_power * (m + 1.0)
        if c > 0 and b0 > 0:
            i_real = math.sqrt(2.0 * c / b0) - m - 1.0
            lo = min(max(int(math.floor(i_real)), 1), cfg.i_max)
            hi = min(max(int(math.ceil(i_real)), 1), cfg.i_max)
            candidates = (lo,) if hi == lo else (lo, hi)
        else:
            candidates = (1,)
        for i in candidates:
            x = i + m + 1.0
            val = v * mode.idle_power + c / x + 0.5 * b0 * x
            if val < best_val:
                best = (k, i)
                best_val = val
    return best


def reactive_target(recent_arrivals: Sequence[float], extra: float,
                    mu_mean: float) -> int:
    """Server count the reactive baseline wants on: ceil((lambda_bar + extra)
    / mu_mean), with lambda_bar the mean of the supplied window (the caller
    passes the latest at-most-10 slots)."""
    lam_bar = float(np.mean(recent_arrivals)) if len(recent_arrivals) else 0.0
    return int(math.ceil((lam_bar + extra) / mu_mean))


# ---------------------------------------------------------------------------
# queue recursions
# ---------------------------------------------------------------------------

def queue_update(queues, routed, drained) -> np.ndarray:
    """Per-queue backlog recursion max(q + in - out, 0), elementwise."""
    return np.maximum(np.asarray(queues, dtype=float) + routed - drained, 0.0)


def actual_queue_update(backlog: float, admitted: float, drained: float) -> float:
    """Single physical queue: admitted work in, the active servers' total
    service out, floored at zero."""
    return max(backlog + admitted - drained, 0.0)


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------

@dataclass
class DatacenterLog:
    """Per-slot trajectories of one run.

    ``backlog`` is the work physically waiting after each slot (sum of the
    real queues, or the single queue elsewhere); ``queue_total`` sums the
    queues the decisions read, so in virtualized mode it tracks the virtual
    copies and otherwise equals ``backlog``.
    """

    mode: object
    v: float
    power: np.ndarray
    reject_cost: np.ndarray
    backlog: np.ndarray
    queue_total: np.ndarray
    active_servers: np.ndarray
    rejected: np.ndarray
    arrivals: np.ndarray
    max_queue: np.ndarray

    @property
    def horizon(self) -> int:
        return self.power.shape[0]

    def power_avg_series(self) -> np.ndarray:
        steps = np.arange(1, self.horizon + 1, dtype=float)
        return np.cumsum(self.power) / steps

    @property
    def final_power_avg(self) -> float:
        return float(self.power.mean())

    @property
    def final_cost_avg(self) -> float:
        return float((self.power + self.reject_cost).mean())

    @property
    def final_backlog_avg(self) -> float:
        return float(self.backlog.mean())


# Hard-assertion slack: every queue quantity is a small sum of integers and
# router caps, so violations of the deterministic bounds show up at order one,
# never at order float-epsilon.
_BOUND_SLACK = 1e-9


def _shared_r_max(cfgs: Sequence[ServerConfig]) -> float:
    caps = {float(cfg.r_max) for cfg in cfgs}
    if len(caps) != 1:
        raise ValueError("all servers must share one router cap r_max")
    return caps.pop()


def run_datacenter(cfgs: Sequence[ServerConfig], trace: Sequence[TraceRecord],
                   v: float, mode="n-queue", seed: int = 0,
                   horizon: Optional[int] = None, min_active: int = 0,
                   initial_queues: Optional[Sequence[float]] = None) -> DatacenterLog:
    """Drive the slotted simulation for ``horizon`` slots of ``trace``.

    Modes:

    - ``"n-queue"``: threshold admission with one real queue per server.
    - ``"virtualized"``: the same per-server queues kept as software
      multipliers while every admitted request waits in one physical queue
      served by whichever servers are active.
    - ``("always-on", k)``: servers 0..k-1 serve every slot, the rest sit in
      their first sleep mode's idle state; all arrivals accepted.
    - ``("reactive", extra)``: targets ceil((mean arrivals over the latest 10
      slots + extra) / mean service rate) committed servers, switching on
      through the setup state (lowest index first) and off instantly (pending
      setups first, then active servers, highest index first); all arrivals
      accepted.

    The two algorithm modes enforce the deterministic queue bounds every slot
    (each decision queue at most v*c_max + r_max, and in virtualized mode the
    physical backlog at most the sum of the virtual queues and at most N times
    the per-queue bound) and raise RuntimeError on any violation.
    ``min_active`` pins servers 0..min_active-1 to the active choice at their
    frame starts in the algorithm modes and is ignored by the baselines.
    ``initial_queues`` seeds the decision queues; the physical backlog always
    starts empty.
    """
    records = list(trace)
    if horizon is None:
        horizon = len(records)
    if len(records) < horizon:
        raise ValueError(f"trace has {len(records)} slots, horizon wants {horizon}")
    records = records[:horizon]
    validate_trace(records)
    if not cfgs:
        raise ValueError("need at least one server")

    if mode in ("n-queue", "virtualized"):
        return _run_algorithm(list(cfgs), records, float(v), mode, seed,
                              min_active, initial_queues)
    if isinstance(mode, tuple) and len(mode) == 2 and mode[0] in ("always-on", "reactive"):
        return _run_baseline(list(cfgs), records, float(v), mode, seed)
    raise ValueError(f"unknown mode {mode!r}")


def _run_algorithm(cfgs, records, v, mode, seed, min_active, initial_queues):
    n = len(cfgs)
    virtualized = mode == "virtualized"
    rng = np.random.default_rng(seed)
    samplers = [_service_sampler(cfg.mu_dist) for cfg in cfgs]
    r_max = _shared_r_max(cfgs)
    cost_max = max(rec.cost for rec in records)
    per_queue_bound = v * cost_max + r_max

    if initial_queues is None:
        queues = np.zeros(n)
    else:
        queues = np.asarray(initial_queues, dtype=float).copy()
        if queues.shape != (n,) or (queues < 0).any():
            raise ValueError("initial_queues must give one nonnegative value per server")
    state = DatacenterState(queues=queues, backlog=0.0 if virtualized else None,
                            phase=["start"] * n, remaining=[0] * n,
                            mode_index=[0] * n, slot=0)

    horizon = len(records)
    power = np.zeros(horizon)
    reject_cost = np.zeros(horizon)
    backlog_log = np.zeros(horizon)
    queue_total = np.zeros(horizon)
    active_servers = np.zeros(horizon, dtype=int)
    rejected_log = np.zeros(horizon)
    arrivals_log = np.zeros(horizon, dtype=int)
    max_queue = state.queues.copy()

    for t, rec in enumerate(records):
        state.slot = t
        rejected, routed = admission_decide(rec.arrivals, rec.cost, state.queues, v, r_max)

        slot_power = 0.0
        drained = np.zeros(n)
        n_active = 0
        for s in range(n):
            cfg = cfgs[s]
            if state.phase[s] == "start":
                if s < min_active:
                    decision: Decision = "active"
                else:
                    decision = server_frame_decide(cfg, float(state.queues[s]), v)
                if decision == "active":
                    state.phase[s] = "active"
                else:
                    state.mode_index[s], state.remaining[s] = decision
                    state.phase[s] = "idle"
            if state.phase[s] == "active":
                slot_power += cfg.active_power
                drained[s] = samplers[s](rng)
                n_active += 1
                state.phase[s] = "start"
            elif state.phase[s] == "idle":
                sleep = cfg.sleep_modes[state.mode_index[s]]
                slot_power += sleep.idle_power
                state.remaining[s] -= 1
                if state.remaining[s] == 0:
                    state.phase[s] = "setup"
                    state.remaining[s] = int(rng.geometric(1.0 / sleep.setup_mean))
            else:
                sleep = cfg.sleep_modes[state.mode_index[s]]
                slot_power += sleep.setup_power
                state.remaining[s] -= 1
                if state.remaining[s] == 0:
                    state.phase[s] = "active"

        state.queues = queue_update(state.queues, routed, drained)
        if (state.queues > per_queue_bound + _BOUND_SLACK).any():
            worst = int(np.argmax(state.queues))
            raise RuntimeError(
                f"queue bound violated at slot {t}: Q_{worst}={state.queues[worst]:.6g} "
                f"> {per_queue_bound:.6g}")
        if virtualized:
            state.backlog = actual_queue_update(state.backlog, rec.arrivals - rejected,
                                                float(drained.sum()))
            virtual_sum = float(state.queues.sum())
            if state.backlog > virtual_sum + _BOUND_SLACK:
                raise RuntimeError(
                    f"physical backlog {state.backlog:.6g} exceeded the virtual total "
                    f"{virtual_sum:.6g} at slot {t}")
            if state.backlog > n * per_queue_bound + _BOUND_SLACK:
                raise RuntimeError(
                    f"physical backlog bound violated at slot {t}: {state.backlog:.6g} "
                    f"> {n * per_queue_bound:.6g}")

        np.maximum(max_queue, state.queues, out=max_queue)
        power[t] = slot_power
        reject_cost[t] = rejected * rec.cost
        queue_total[t] = state.queues.sum()
        backlog_log[t] = state.backlog if virtualized else queue_total[t]
        active_servers[t] = n_active
        rejected_log[t] = rejected
        arrivals_log[t] = rec.arrivals

    return DatacenterLog(mode=mode, v=v, power=power, reject_cost=reject_cost,
                         backlog=backlog_log, queue_total=queue_total,
                         active_servers=active_servers, rejected=rejected_log,
                         arrivals=arrivals_log, max_queue=max_queue)


def _run_baseline(cfgs, records, v, mode, seed):
    n = len(cfgs)
    kind, param = mode
    rng = np.random.default_rng(seed)
    samplers = [_service_sampler(cfg.mu_dist) for cfg in cfgs]
    if kind == "always-on":
        k_on = int(param)
        if not 0 <= k_on <= n:
            raise ValueError(f"always-on count must lie in [0, {n}]")
        status = ["on" if s < k_on else "off" for s in range(n)]
    else:
        status = ["off"] * n
    remaining = [0] * n
    mu_bar = float(np.mean([cfg.mu_mean for cfg in cfgs]))

    horizon = len(records)
    power = np.zeros(horizon)
    backlog_log = np.zeros(horizon)
    active_servers = np.zeros(horizon, dtype=int)
    arrivals_log = np.zeros(horizon, dtype=int)
    backlog = 0.0
    window: List[int] = []

    for t, rec in enumerate(records):
        if kind == "reactive":
            window.append(rec.arrivals)
            if len(window) > 10:
                window.pop(0)
            target = min(max(reactive_target(window, param, mu_bar), 0), n)
            committed = [s for s in range(n) if status[s] != "off"]
            if len(committed) < target:
                for s in range(n):
                    if len(committed) >= target:
                        break
                    if status[s] == "off":
                        status[s] = "setup"
                        remaining[s] = int(rng.geometric(1.0 / cfgs[s].sleep_modes[0].setup_mean))
                        committed.append(s)
            elif len(committed) > target:
                surplus = len(committed) - target
                for phase_name in ("setup", "on"):
                    for s in reversed(range(n)):
                        if surplus == 0:
                            break
                        if status[s] == phase_name:
                            status[s] = "off"
                            surplus -= 1

        slot_power = 0.0
        drained_total = 0.0
        n_active = 0
        for s in range(n):
            cfg = cfgs[s]
            if status[s] == "on":
                slot_power += cfg.active_power
                drained_total += samplers[s](rng)
                n_active += 1
            elif status[s] == "setup":
                slot_power += cfg.sleep_modes[0].setup_power
                remaining[s] -= 1
                if remaining[s] == 0:
                    status[s] = "on"
            else:
                slot_power += cfg.sleep_modes[0].idle_power

        backlog = actual_queue_update(backlog, float(rec.arrivals), drained_total)
        power[t] = slot_power
        backlog_log[t] = backlog
        active_servers[t] = n_active
        arrivals_log[t] = rec.arrivals

    return DatacenterLog(mode=mode, v=v, power=power, reject_cost=np.zeros(horizon),
                         backlog=backlog_log, queue_total=backlog_log.copy(),
                         active_servers=active_servers, rejected=np.zeros(horizon),
                         arrivals=arrivals_log, max_queue=np.zeros(n))
