"""Discrete-event simulation of the master/worker asynchronous protocol.

Machine ``0`` is the master: it always "arrives" with a fresh local gradient.
Machines ``1..m-1`` are workers whose gradient messages reach the master in
arrival sets ``A_t``.  Delay counters ``d_j`` enforce the bounded-delay
barrier: a worker with ``d_j > tau - 1`` must be waited for, so every worker
arrives at least once in any window of ``tau + 1`` iterations.

Workers are simulated under a virtual clock; nothing here spawns threads.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

MASTER = 0


class BoundedDelayViolation(AssertionError):
    pass


@dataclass(frozen=True)
class ArrivalModel:
    """How arrival sets are drawn.

    kind
        ``"synchronous"``: every machine arrives every iteration.
        ``"bernoulli"``: worker ``j`` arrives with probability ``probs[j]``
        (entry 0, the master, is ignored), plus the workers forced by the
        delay barrier.
        ``"speed"``: arrivals follow the virtual clock; worker ``j`` needs
        ``compute_cost[j]`` seconds per gradient.
    tau
        Maximum tolerated delay.
    cost_range
        Compute costs are drawn once per worker from ``U[cost_range]``.
    master_cost
        Virtual seconds charged per master solve.
    """

    kind: str = "synchronous"
    tau: int = 0
    probs: Optional[tuple] = None
    seed: int = 0
    cost_range: tuple = (1.0, 10.0)
    master_cost: float = 0.0

    def __post_init__(self):
        if self.kind not in ("synchronous", "bernoulli", "speed"):
            raise ValueError(f"unknown arrival model {self.kind!r}")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.kind == "bernoulli":
            if self.probs is None:
                raise ValueError("bernoulli arrivals need per-machine probabilities")
            if any(not 0.0 <= q <= 1.0 for q in self.probs):
                raise ValueError("arrival probabilities must lie in [0, 1]")
        lo, hi = self.cost_range
        if not 0 < lo <= hi:
            raise ValueError("cost_range must satisfy 0 < lo <= hi")
        if self.master_cost < 0:
            raise ValueError("master_cost must be >= 0")

    def to_dict(self):
        return {"kind": self.kind, "tau": self.tau,
                "probs": list(self.probs) if self.probs is not None else None,
                "seed": self.seed, "cost_range": list(self.cost_range),
                "master_cost": self.master_cost}


def split_probs(m, low=0.2, high=0.5):
    """Half of the workers arrive with probability ``low``, the rest with ``high``."""
    workers = m - 1
    return (1.0,) + tuple(low if k < workers // 2 else high for k in range(workers))


@dataclass
class WorkerState:
    id: int
    cached_gradient: Optional[np.ndarray] = None
    last_arrival: int = 0
    delay_counter: int = 0
    busy_until: float = 0.0
    compute_cost: float = 1.0
    compute_time: float = 0.0
    idle_time: float = 0.0


def init_workers(model: ArrivalModel, m):
    """Fresh states; every worker starts computing its first gradient at time 0."""
    rng = np.random.default_rng([model.seed, 0xC057])
    lo, hi = model.cost_range
    costs = rng.uniform(lo, hi, size=m)
    states = []
    for j in range(m):
        cost = 0.0 if j == MASTER else float(costs[j])
        states.append(WorkerState(j, busy_until=cost, compute_cost=cost))
    return states


def _wait_for_one(states, candidates):
    # most overdue worker first, ties broken by the lowest id
    return max(candidates, key=lambda j: (states[j].delay_counter, -j))


def draw_arrivals(model: ArrivalModel, states, t, now=0.0):
    """Arrival set ``A_t`` (sorted machine ids, always containing the master).

    After this set, no worker outside it has ``d_j > tau - 1``.  Bernoulli
    mode samples candidates and then adds every worker whose exclusion would
    break the barrier; if no worker message arrives at all, the master waits
    for the most overdue worker.  Speed mode advances to the forced workers'
    finishing times (or the earliest finisher) and includes every worker done
    by then.  Deterministic in ``(seed, t)``.
    """
    m = len(states)
    workers = range(1, m)
    if t == 0 or model.kind == "synchronous" or model.tau == 0 or m == 1:
        return list(range(m))
    forced = {j for j in workers if states[j].delay_counter > model.tau - 1}
    if model.kind == "bernoulli":
        rng = np.random.default_rng([model.seed, t])
        u = rng.random(m)
        arrived = {j for j in workers if u[j] < model.probs[j]} | forced
        if not arrived:
            arrived = {_wait_for_one(states, workers)}
    else:
        if forced:
            until = max(now, max(states[j].busy_until for j in forced))
        else:
            until = max(now, min(states[j].busy_until for j in workers))
        arrived = {j for j in workers if states[j].busy_until <= until}
    arrival = sorted(arrived | {MASTER})
    assert len(arrival) >= 1
    return arrival


def update_delay_counters(states, arrival_set, t):
    """``d_j = 0`` and ``t_j = t`` for arrived machines, ``d_j += 1`` otherwise."""
    arrived = set(arrival_set)
    for s in states:
        if s.id in arrived:
            s.delay_counter = 0
            s.last_arrival = t
        else:
            s.delay_counter += 1


def check_bounded_delay(states, t, tau):
    """Raise :class:`BoundedDelayViolation` unless ``t - t_j <= tau`` for all j."""
    worst = max(t - s.last_arrival for s in states)
    if worst > tau:
        raise BoundedDelayViolation(f"iteration {t}: staleness {worst} exceeds tau={tau}")
    return worst


@dataclass
class TimeTable:
    compute_time: np.ndarray
    idle_time: np.ndarray

    @property
    def utilization(self):
        total = self.compute_time + self.idle_time
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(total > 0, self.compute_time / np.where(total > 0, total, 1.0), 0.0)

    @property
    def mean_utilization(self):
        u = self.utilization
        return float(u.mean()) if u.size else float("nan")

    def to_dict(self):
        return {"compute_time": self.compute_time.tolist(), "idle_time": self.idle_time.tolist(),
                "utilization": self.utilization.tolist(),
                "mean_utilization": self.mean_utilization}


def advance_clock(states, arrival_set, now, master_cost=0.0):
    """Move the virtual clock through one master iteration.

    The master waits until every arrived worker has finished, solves (charged
    ``master_cost``) and broadcasts to the arrived workers, which then start
    their next gradient.  Returns the new clock value and the per-worker
    ``(compute, idle)`` increments, keyed by worker id.
    """
    workers = [j for j in arrival_set if j != MASTER]
    arrival_time = max([now] + [states[j].busy_until for j in workers])
    broadcast = arrival_time + master_cost
    deltas = {}
    for j in workers:
        s = states[j]
        idle = broadcast - s.busy_until
        s.compute_time += s.compute_cost
        s.idle_time += idle
        deltas[j] = (s.compute_cost, idle)
        s.busy_until = broadcast + s.compute_cost
    return broadcast, deltas


def time_table(states):
    ws = [s for s in states if s.id != MASTER]
    return TimeTable(np.array([s.compute_time for s in ws]), np.array([s.idle_time for s in ws]))


@dataclass
class CommLedger:
    uploads: int = 0
    downloads: int = 0
    rounds: int = 0

    def snapshot(self):
        return (self.uploads, self.downloads, self.rounds)


def record_comm(ledger: CommLedger, arrival_set, free_workers):
    """Count one round: ``|A_t|`` gradient messages in, one broadcast per free worker."""
    ledger.uploads += len(arrival_set)
    ledger.downloads += len(free_workers)
    ledger.rounds += 1


# --------------------------------------------------------------------------
# Event log
# --------------------------------------------------------------------------

LOG_MAGIC = b"EDL1"


@dataclass
class Event:
    t: int
    arrivals: tuple
    delays: tuple
    x_hash: bytes


def iterate_hash(x):
    return hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).digest()


@dataclass
class EventLog:
    """Append-only record of ``(t, A_t, d, sha256(x^t))`` per master iteration."""

    m: int
    events: list = field(default_factory=list)

    def append(self, t, arrivals, states, x):
        self.events.append(Event(t, tuple(arrivals), tuple(s.delay_counter for s in states),
                                 iterate_hash(x)))

    def write(self, path):
        with open(path, "wb") as fh:
            fh.write(LOG_MAGIC + struct.pack("<I", self.m))
            for ev in self.events:
                fh.write(struct.pack("<II", ev.t, len(ev.arrivals)))
                fh.write(struct.pack(f"<{len(ev.arrivals)}I", *ev.arrivals))
                fh.write(struct.pack(f"<{self.m}I", *ev.delays))
                fh.write(ev.x_hash)

    @classmethod
    def read(cls, path):
        raw = Path(path).read_bytes()
        if raw[:4] != LOG_MAGIC:
            raise ValueError(f"{path}: not an event log")
        (m,) = struct.unpack_from("<I", raw, 4)
        log = cls(m)
        off = 8
        while off < len(raw):
            t, k = struct.unpack_from("<II", raw, off)
            off += 8
            arrivals = struct.unpack_from(f"<{k}I", raw, off)
            off += 4 * k
            delays = struct.unpack_from(f"<{m}I", raw, off)
            off += 4 * m
            log.events.append(Event(t, arrivals, delays, raw[off:off + 32]))
            off += 32
        return log

    def max_staleness(self):
        """Replay the arrival sets and return ``max_t max_j (t - t_j)``."""
        last = [0] * self.m
        worst = 0
        for ev in self.events:
            for j in ev.arrivals:
                last[j] = ev.t
            worst = max(worst, max(ev.t - tj for tj in last))
        return worst
