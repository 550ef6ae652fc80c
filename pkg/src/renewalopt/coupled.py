"""Slot-level simulation of several renewal systems sharing virtual queues.

Each system runs its own frames: at a frame start it picks an action by the
rate-normalized drift-plus-penalty rule against the shared queues, samples the
frame, and emits penalty and metrics slot by slot while the frame plays out.
Queues update every slot from the summed emissions minus a fresh draw of the
external process. The energy scheduling instance (several servers working
three job classes) is built here as well, together with its stationary LP
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from renewalopt.core import (
    ActionModel,
    FrameOutcome,
    dpp_linear_select,
    queue_update_slot,
    sample_outcome,
)
from renewalopt import lp as lp_mod


@dataclass
class CoupledSystemSpec:
    """Systems (one action list each), an external per-slot process, and the
    number of shared constraints. ``external_process(rng)`` must return the
    length ``n_constraints`` drift allowance vector for one slot.

    ``external_batch(rng, count)``, when given, must produce the same rows as
    ``count`` sequential ``external_process`` calls while consuming the
    generator identically; :func:`run` then draws the whole horizon up front.
    """

    systems: List[List[ActionModel]]
    external_process: Callable[[np.random.Generator], np.ndarray]
    n_constraints: int
    external_batch: Optional[
        Callable[[np.random.Generator, int], np.ndarray]
    ] = None
    meta: dict = field(default_factory=dict)


@dataclass
class SystemFrameState:
    action_id: object
    frame_start: int
    frame_len: int
    slot_index: int
    penalty_slots: np.ndarray
    metrics_slots: np.ndarray

    @property
    def remaining(self) -> int:
        return self.frame_len - self.slot_index


@dataclass
class SlotRecord:
    slot: int
    penalty_by_system: np.ndarray
    metrics_sum: np.ndarray
    external: np.ndarray
    queues: np.ndarray


@dataclass
class MetricsLog:
    """Per-slot trajectories of one run plus derived time averages."""

    v: float
    seed: Optional[int]
    penalty: np.ndarray  # (horizon, n_systems)
    metrics: np.ndarray  # (horizon, n_constraints) summed over systems
    external: np.ndarray  # (horizon, n_constraints)
    queues: np.ndarray  # (horizon, n_constraints), value after the slot update
    frame_log: List[Tuple[int, int, int, object]]  # (system, start, length, action)

    @property
    def horizon(self) -> int:
        return self.penalty.shape[0]

    def penalty_avg_series(self) -> np.ndarray:
        steps = np.arange(1, self.horizon + 1, dtype=float)
        return np.cumsum(self.penalty.sum(axis=1)) / steps

    def metrics_avg_series(self) -> np.ndarray:
        steps = np.arange(1, self.horizon + 1, dtype=float)[:, None]
        return np.cumsum(self.metrics, axis=0) / steps

    @property
    def final_penalty_avg(self) -> float:
        return float(self.penalty.sum() / self.horizon)

    @property
    def final_metrics_avg(self) -> np.ndarray:
        return self.metrics.sum(axis=0) / self.horizon


def _profiles(outcome: FrameOutcome, n_constraints: int):
    """Per-slot emission arrays; totals lump on the final slot by default."""
    if outcome.penalty_slots is not None:
        pslots = outcome.penalty_slots
    else:
        pslots = np.zeros(outcome.frame_len)
        pslots[-1] = outcome.penalty_total
    if outcome.metrics_slots is not None:
        mslots = outcome.metrics_slots
    else:
        mslots = np.zeros((outcome.frame_len, n_constraints))
        mslots[-1] = outcome.metrics_total
    return pslots, mslots


def _start_frame(spec, n, q, v, t, rng) -> SystemFrameState:
    actions = spec.systems[n]
    chosen = dpp_linear_select(actions, q, v)
    model = next(a for a in actions if a.action_id == chosen)
    outcome = sample_outcome(model, rng)
    pslots, mslots = _profiles(outcome, spec.n_constraints)
    return SystemFrameState(
        action_id=chosen,
        frame_start=t,
        frame_len=outcome.frame_len,
        slot_index=0,
        penalty_slots=pslots,
        metrics_slots=mslots,
    )


def step(
    spec: CoupledSystemSpec,
    states: List[Optional[SystemFrameState]],
    q: np.ndarray,
    v: float,
    rng: np.random.Generator,
    t: int,
    external_rng: Optional[np.random.Generator] = None,
):
    """Advance the coupled system one slot.

    Systems at frame boundaries decide (in index order) before the slot's
    emissions; the external process is drawn last, after all decisions, from
    ``external_rng`` (or ``rng`` when not given). Returns (states, q', record).
    """
    if external_rng is None:
        external_rng = rng
    n_sys = len(spec.systems)
    penalty_row = np.zeros(n_sys)
    metrics_row = np.zeros(spec.n_constraints)
    new_states: List[Optional[SystemFrameState]] = list(states)
    for n in range(n_sys):
        st = new_states[n]
        if st is None or st.remaining == 0:
            st = _start_frame(spec, n, q, v, t, rng)
            new_states[n] = st
        penalty_row[n] = st.penalty_slots[st.slot_index]
        metrics_row += st.metrics_slots[st.slot_index]
        st.slot_index += 1
    d = np.asarray(spec.external_process(external_rng), dtype=float)
    q_new = queue_update_slot(q, metrics_row, d)
    rec = SlotRecord(
        slot=t,
        penalty_by_system=penalty_row,
        metrics_sum=metrics_row,
        external=d,
        queues=q_new,
    )
    return new_states, q_new, rec


def run(spec: CoupledSystemSpec, v: float, horizon: int, seed: int) -> MetricsLog:
    """Simulate ``horizon`` slots from zero queues, deterministically in seed.

    The master seed is split into one stream for frame sampling (consumed in
    system index order at frame starts) and one for the external process
    (consumed once per slot, after the slot's decisions).
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    if not v > 0:
        raise ValueError("penalty weight must be positive")
    frames_rng, external_rng = [
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2)
    ]
    n_sys = len(spec.systems)
    ell = spec.n_constraints
    penalty = np.zeros((horizon, n_sys))
    metrics = np.zeros((horizon, ell))
    queues = np.zeros((horizon, ell))
    if spec.external_batch is not None:
        external = np.asarray(
            spec.external_batch(external_rng, horizon), dtype=float
        )
        if external.shape != (horizon, ell):
            raise ValueError("external_batch returned the wrong shape")
    else:
        external = np.empty((horizon, ell))
        for t in range(horizon):
            external[t] = spec.external_process(external_rng)
    frame_log: List[Tuple[int, int, int, object]] = []
    remaining = [0] * n_sys
    q = np.zeros(ell)
    buf = np.empty(ell)
    for t in range(horizon):
        for n in range(n_sys):
            if remaining[n] == 0:
                st = _start_frame(spec, n, q, v, t, frames_rng)
                end = min(t + st.frame_len, horizon)
                penalty[t:end, n] = st.penalty_slots[: end - t]
                metrics[t:end] += st.metrics_slots[: end - t]
                frame_log.append((n, t, st.frame_len, st.action_id))
                remaining[n] = st.frame_len
            remaining[n] -= 1
        np.add(q, metrics[t], out=buf)
        np.subtract(buf, external[t], out=buf)
        np.maximum(buf, 0.0, out=q)
        queues[t] = q
    return MetricsLog(
        v=v,
        seed=seed,
        penalty=penalty,
        metrics=metrics,
        external=external,
        queues=queues,
        frame_log=frame_log,
    )


# ---------------------------------------------------------------------------
# energy scheduling instance: five servers, three job classes
# ---------------------------------------------------------------------------

ENERGY_CLASSES = {
    "arrival_rate": np.array([2.0, 3.0, 4.0]),
    "service_mean_len": np.array([5.5, 4.6, 3.8]),  # busy period slots, geometric
    "jobs_low": np.array([9, 15, 11]),
    "jobs_high": np.array([21, 27, 23]),
    "jobs_mean": np.array([15.0, 21.0, 17.0]),
    "service_energy": np.array([16.0, 20.0, 13.0]),
    "idle_mean_len": np.array([2.5, 4.3, 3.7]),  # vacation slots, geometric
    "idle_power": 3.0,
}


def _energy_action(class_idx: int) -> ActionModel:
    c = ENERGY_CLASSES
    h_mean = float(c["service_mean_len"][class_idx])
    i_mean = float(c["idle_mean_len"][class_idx])
    energy = float(c["service_energy"][class_idx])
    jobs_mean = float(c["jobs_mean"][class_idx])
    lo = int(c["jobs_low"][class_idx])
    hi = int(c["jobs_high"][class_idx])
    p_idle = float(c["idle_power"])
    t_mean = h_mean + i_mean
    exp_metrics = np.zeros(3)
    exp_metrics[class_idx] = -jobs_mean / t_mean

    def sampler(rng: np.random.Generator) -> FrameOutcome:
        h = int(rng.geometric(1.0 / h_mean))
        i = int(rng.geometric(1.0 / i_mean))
        jobs = int(rng.integers(lo, hi + 1))
        t = h + i
        pslots = np.zeros(t)
        pslots[h - 1] = energy
        pslots[h:] = p_idle
        mslots = np.zeros((t, 3))
        mslots[h - 1, class_idx] = -jobs
        totals = np.zeros(3)
        totals[class_idx] = -jobs
        return FrameOutcome(
            frame_len=t,
            penalty_total=energy + p_idle * i,
            metrics_total=totals,
            penalty_slots=pslots,
            metrics_slots=mslots,
        )

    return ActionModel(
        action_id=class_idx,
        exp_penalty=(energy + p_idle * i_mean) / t_mean,
        exp_metrics=exp_metrics,
        exp_frame_len=t_mean,
        sampler=sampler,
    )


def energy_scheduling_spec(n_servers: int = 5) -> CoupledSystemSpec:
    """Servers choosing which job class to work next.

    A frame is one busy period (geometric length, jobs done in a lump on its
    last slot, fixed energy) followed by a geometric vacation drawing idle
    power every slot. Queue l tracks the backlog of class l: metrics are the
    negated jobs served and the external process is the negated Poisson
    arrival count (truncated at ten times its rate), so the slot update adds
    arrivals and subtracts service.
    """
    c = ENERGY_CLASSES
    lam = c["arrival_rate"]
    cap = 10.0 * lam

    def external(rng: np.random.Generator) -> np.ndarray:
        return -np.minimum(rng.poisson(lam), cap)

    def external_batch(rng: np.random.Generator, count: int) -> np.ndarray:
        return -np.minimum(rng.poisson(lam, size=(count, 3)), cap)

    actions = [_energy_action(i) for i in range(3)]
    systems = [list(actions) for _ in range(n_servers)]
    return CoupledSystemSpec(
        systems=systems,
        external_process=external,
        n_constraints=3,
        external_batch=external_batch,
        meta={"kind": "energy-scheduling", "n_servers": n_servers},
    )


def energy_oracle_value(n_servers: int = 5) -> float:
    """Optimal stationary energy rate for the scheduling instance.

    The servers are identical, so the aggregate achievable region is the
    single-server region scaled by their count and the optimum is n times the
    single-server fractional LP run at per-server arrival rates lambda / n.
    """
    c = ENERGY_CLASSES
    triples = []
    for i in range(3):
        t_mean = float(c["service_mean_len"][i] + c["idle_mean_len"][i])
        y = float(c["service_energy"][i] + c["idle_power"] * c["idle_mean_len"][i])
        z = np.zeros(3)
        z[i] = -float(c["jobs_mean"][i])
        triples.append((y, z, t_mean))
    d = -c["arrival_rate"] / n_servers
    sol = lp_mod.solve_lp(lp_mod.fractional_to_lp(triples, d))
    if sol.status != "optimal":
        raise RuntimeError(f"energy oracle LP ended {sol.status}")
    return n_servers * float(sol.objective_value)


def energy_table(log: MetricsLog, stride: int = 1) -> Tuple[List[str], np.ndarray]:
    """Rows (slot, energy_avg, service_avg_1..L, q_1..L) for metric files."""
    ell = log.metrics.shape[1]
    cols = (
        ["slot", "energy_avg"]
        + [f"service_avg_{l + 1}" for l in range(ell)]
        + [f"q_{l + 1}" for l in range(ell)]
    )
    slots = np.arange(log.horizon)
    energy = log.penalty_avg_series()
    service = -log.metrics_avg_series()
    rows = np.column_stack([slots, energy, service, log.queues])
    return cols, rows[::stride]
