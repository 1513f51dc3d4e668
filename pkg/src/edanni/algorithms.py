"""Outer-loop drivers: the asynchronous second-order method and the
first-order parameter-server baseline, sharing one arrival protocol."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import engine as eng
from .master import (ConfigurationError, InexactnessSpec, SubproblemNotConverged, SubproblemSpec,
                     perturb_inexact, solve_subproblem, validate_rho)
from .problems import objective
from .prox import prox, prox_gradient_map

log = logging.getLogger(__name__)

STALE_CHECK_EVERY = 100


class InvalidConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Protocol and algorithm parameters of one run.

    ``ps_step`` is the proximal weight of the baseline update (defaults to the
    common Lipschitz bound); ``stop_objective`` optionally ends a run once
    ``L(x^t)`` drops to that value.
    """

    algorithm: str = "edanni"
    rho: float = 0.0
    max_rounds: int = 1000
    target_pg_norm: float = 1e-8
    arrival: eng.ArrivalModel = field(default_factory=eng.ArrivalModel)
    inexact: InexactnessSpec = field(default_factory=InexactnessSpec)
    seed: int = 0
    ps_step: Optional[float] = None
    inner_tol: float = 1e-10
    inner_max_iter: int = 100_000
    x0: Optional[np.ndarray] = None
    stop_objective: Optional[float] = None
    delta: float = 1.0

    def __post_init__(self):
        if self.algorithm not in ("edanni", "proxgrad_ps"):
            raise InvalidConfigError(f"unknown algorithm {self.algorithm!r}")
        if not self.target_pg_norm > 0:
            raise InvalidConfigError("target_pg_norm must be > 0")
        if self.max_rounds < 1:
            raise InvalidConfigError("max_rounds must be >= 1")
        if self.rho < 0 or not math.isfinite(self.rho):
            raise InvalidConfigError("rho must be finite and >= 0")

    @property
    def tau(self):
        return self.arrival.tau

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("arrival", "inexact", "x0")}
        d["arrival"] = self.arrival.to_dict()
        d["inexact"] = asdict(self.inexact)
        d["x0"] = None if self.x0 is None else np.asarray(self.x0).tolist()
        return d


@dataclass
class IterationRecord:
    """Telemetry of iterate ``x^t``.

    ``f_value`` is ``F(x^t, x^{t-1})`` and ``delta_norm`` is
    ``||x^t - x^{t-1}||``; for ``t = 0`` both refer to ``x^{-1} = x^0``.
    Ledger counters and the clock are taken after the round producing ``x^t``.
    """

    t: int
    objective: float
    f_value: float
    pg_norm: float
    delta_norm: float
    uploads: int = 0
    downloads: int = 0
    rounds: int = 0
    virtual_time: float = 0.0
    rho_valid: bool = False


@dataclass
class RunResult:
    x: np.ndarray
    records: list
    converged: bool
    final_pg_norm: float
    ledger: eng.CommLedger
    time_table: eng.TimeTable
    event_log: eng.EventLog
    config: RunConfig
    staleness: list = field(default_factory=list)
    injected: list = field(default_factory=list)
    wall_time: float = 0.0
    stop_reason: str = ""

    @property
    def rounds(self):
        return self.ledger.rounds

    def manifest(self):
        return {
            "config": self.config.to_dict(),
            "converged": self.converged,
            "stop_reason": self.stop_reason,
            "final_pg_norm": self.final_pg_norm,
            "final_objective": self.records[-1].objective if self.records else None,
            "rounds": self.ledger.rounds,
            "uploads": self.ledger.uploads,
            "downloads": self.ledger.downloads,
            "max_staleness": max(self.staleness, default=0),
            "time_table": self.time_table.to_dict(),
            "wall_time": self.wall_time,
        }


def evaluate_F(problem, rho, x_next, x_t):
    """``(1/m) sum_j L_j(x_next) + rho/2 ||x_next - x_t||^2 + h(x_next)``."""
    d = np.asarray(x_next) - np.asarray(x_t)
    return objective(problem.losses, problem.regularizer, x_next) + 0.5 * rho * float(d @ d)


def _initial_point(problem, config):
    if config.x0 is None:
        return np.zeros(problem.p)
    x0 = np.array(config.x0, dtype=np.float64)
    if x0.shape != (problem.p,):
        raise InvalidConfigError(f"x0 must have dimension {problem.p}")
    return x0


def _edanni_step(problem, config, x_t, gbar, fresh_master_grad, round_t, prev_delta):
    spec = SubproblemSpec(problem.losses[0], problem.regularizer, config.rho, x_t,
                          gbar - fresh_master_grad, config.inner_tol, config.inner_max_iter)
    try:
        x_next, _, _ = solve_subproblem(spec)
        eps = None
        if config.inexact.active:
            x_next, eps = perturb_inexact(x_next, spec, config.inexact, prev_delta, round_t)
    except SubproblemNotConverged as exc:
        raise SubproblemNotConverged(f"round {round_t}: {exc}", exc.best, exc.residual) from exc
    return x_next, eps


def _run(problem, config: RunConfig, step):
    t0 = time.perf_counter()
    losses, h = problem.losses, problem.regularizer
    m = losses.m
    model = config.arrival
    if model.kind == "bernoulli" and len(model.probs) != m:
        raise InvalidConfigError(f"need {m} arrival probabilities, got {len(model.probs)}")
    L = losses.lipschitz_bound
    rho_ok = validate_rho(L, model.tau, h.convex_modulus, config.rho, config.delta).passed

    states = eng.init_workers(model, m)
    ledger = eng.CommLedger()
    events = eng.EventLog(m)
    now = 0.0
    cached = np.zeros((m, problem.p))
    history = {}

    x = _initial_point(problem, config)
    if not h.feasible(x):
        x = prox(h, x)
    pg = prox_gradient_map(losses, h, x).norm
    obj = objective(losses, h, x)
    records = [IterationRecord(0, obj, obj, pg, 0.0, rho_valid=rho_ok)]
    staleness, injected = [], []
    prev_delta = 0.0
    converged = pg < config.target_pg_norm
    reason = "target_pg_norm" if converged else ""

    t = 0
    while not converged and t < config.max_rounds:
        if config.stop_objective is not None and obj <= config.stop_objective:
            reason = "stop_objective"
            break
        arrivals = eng.draw_arrivals(model, states, t, now)
        eng.update_delay_counters(states, arrivals, t)
        staleness.append(eng.check_bounded_delay(states, t, model.tau))
        events.append(t, arrivals, states, x)
        history[t] = x
        for j in arrivals:
            g = losses[j].gradient(x)
            states[j].cached_gradient = g
            cached[j] = g
        if t % STALE_CHECK_EVERY == 0:
            _check_stale_gradients(losses, states, history)
        for old in [k for k in history if k < t - model.tau]:
            del history[old]

        gbar = cached.mean(axis=0)
        x_next, eps = step(x, gbar, cached[0], t, prev_delta)
        if eps is not None and eps.any():
            e2 = float(eps @ eps)
            if not e2 < config.inexact.c1 * prev_delta ** 2:
                raise AssertionError(f"round {t}: injected error violates the residual bound")
            injected.append((t, math.sqrt(e2), prev_delta))

        now, _ = eng.advance_clock(states, arrivals, now, model.master_cost)
        eng.record_comm(ledger, arrivals, arrivals)

        delta = float(np.linalg.norm(x_next - x))
        f_val = evaluate_F(problem, config.rho, x_next, x)
        x = x_next
        t += 1
        obj = objective(losses, h, x)
        pg = prox_gradient_map(losses, h, x).norm
        records.append(IterationRecord(t, obj, f_val, pg, delta, ledger.uploads,
                                       ledger.downloads, ledger.rounds, now, rho_ok))
        prev_delta = delta
        if pg < config.target_pg_norm:
            converged = True
            reason = "target_pg_norm"
    if not reason:
        if config.stop_objective is not None and obj <= config.stop_objective:
            reason = "stop_objective"
        else:
            reason = "max_rounds"
    log.info("%s finished after %d rounds (%s), pg_norm=%.3e",
             config.algorithm, ledger.rounds, reason, pg)
    return RunResult(x, records, converged, pg, ledger, eng.time_table(states), events, config,
                     staleness, injected, time.perf_counter() - t0, reason)


def _check_stale_gradients(losses, states, history):
    for s in states:
        x_tj = history.get(s.last_arrival)
        if x_tj is not None and not np.array_equal(s.cached_gradient, losses[s.id].gradient(x_tj)):
            raise AssertionError(f"worker {s.id}: cached gradient does not match x^{s.last_arrival}")


def run_edanni(problem, config: RunConfig):
    """Run the asynchronous method: each round the master solves its local
    subproblem with the drift-corrected linear term built from the (possibly
    stale) cached worker gradients.

    Raises
    ------
    ConfigurationError
        Before any round, when the master's loss is nonconvex and ``rho`` is
        below its Lipschitz bound.
    """
    master_loss = problem.losses[0]
    if not getattr(master_loss, "convex", True) and config.rho < master_loss.lipschitz_bound:
        raise ConfigurationError(
            f"nonconvex master loss needs rho >= {master_loss.lipschitz_bound:.6g}, "
            f"got {config.rho}")

    def step(x, gbar, g_master, t, prev_delta):
        return _edanni_step(problem, config, x, gbar, g_master, t, prev_delta)

    return _run(problem, config, step)


def run_proxgrad_ps(problem, config: RunConfig):
    """Parameter-server proximal gradient baseline.

    ``x^{t+1} = prox_{h/w}(x^t - (1/w) * gbar)`` where ``gbar`` averages the
    cached gradients and ``w = config.ps_step`` (default: the common
    Lipschitz bound).
    """
    w = config.ps_step if config.ps_step is not None else problem.losses.lipschitz_bound
    if not w > 0:
        raise InvalidConfigError("the baseline needs a positive proximal weight")
    h = problem.regularizer

    def step(x, gbar, g_master, t, prev_delta):
        return prox(h, x - gbar / w, 1.0 / w), None

    return _run(problem, config, step)


def run(problem, config: RunConfig):
    if config.algorithm == "edanni":
        return run_edanni(problem, config)
    return run_proxgrad_ps(problem, config)


@dataclass
class CertificateReport:
    applicable: bool
    passed: Optional[bool]
    c: float
    worst_slack: float = 0.0
    lower_bound_ok: Optional[bool] = None


def descent_constant(L, tau, rho, mu_h=0.0, delta=1.0):
    gamma = rho + mu_h
    return min(gamma / 2 - 1.5 * L - L * delta * tau, rho / 2 - L * tau / delta)


def check_descent_certificates(records, L, tau, rho, mu_h=0.0, delta=1.0, slack=1e-8,
                               f_lower=None):
    """Check ``F(x^{T+1},x^T) - F(x^1,x^0) <= -c sum_{t<=T} ||x^{t+1}-x^t||^2``
    for every ``T >= 1`` of a run.

    ``c = min(gamma/2 - 3L/2 - L delta tau, rho/2 - L tau/delta)``; a
    non-positive ``c`` makes the certificate inapplicable.  With ``f_lower``
    every recorded ``F`` value is also checked to stay above it.
    """
    c = descent_constant(L, tau, rho, mu_h, delta)
    if c <= 0:
        return CertificateReport(False, None, c)
    steps = records[1:]
    if len(steps) < 2:
        return CertificateReport(True, True, c)
    f = np.array([r.f_value for r in steps])
    d2 = np.cumsum(np.array([r.delta_norm for r in steps]) ** 2)
    margin = ((-c * d2 + slack) - (f - f[0]))[1:]
    lower_ok = None
    if f_lower is not None:
        lower_ok = bool(np.all(f >= f_lower - slack))
    return CertificateReport(True, bool(np.all(margin >= 0)), c, float(margin.min()), lower_ok)
