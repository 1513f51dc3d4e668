"""The master's per-iteration subproblem and the parameter validators.

At iteration ``t`` the master (machine 1) computes

    x^{t+1} = argmin_x  L_1(x) + h(x) + rho/2 ||x - x^t||^2 + <drift, x - x^t>

with ``drift = (1/m) sum_j grad L_j(x^{t_j}) - grad L_1(x^t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from .prox import prox, subgradient_residual


class SubproblemNotConverged(RuntimeError):
    """The inner solver hit its iteration cap far from the tolerance."""

    def __init__(self, message, best, residual):
        super().__init__(message)
        self.best = best
        self.residual = residual


class ConfigurationError(ValueError):
    pass


class InapplicableError(ValueError):
    """A validator was asked about an assumption the problem cannot satisfy."""


@dataclass
class SubproblemSpec:
    local_loss: object
    h: object
    rho: float
    x_t: np.ndarray
    drift: np.ndarray
    inner_tol: float = 1e-10
    inner_max_iter: int = 100_000

    def __post_init__(self):
        if self.drift.shape != self.x_t.shape:
            raise ValueError("drift and x_t must have the same shape")
        if not math.isfinite(self.rho) or self.rho < 0:
            raise ValueError(f"rho must be finite and >= 0, got {self.rho}")
        if not self.inner_tol > 0:
            raise ValueError("inner_tol must be > 0")

    def smooth_gradient(self, x):
        return self.local_loss.gradient(x) + self.drift + self.rho * (x - self.x_t)

    def smooth_value(self, x):
        d = x - self.x_t
        return self.local_loss.value(x) + float(self.drift @ d) + 0.5 * self.rho * float(d @ d)

    def value(self, x):
        return self.smooth_value(x) + self.h.value(x)

    def residual(self, x, grad=None):
        """Norm of the subproblem's own unit-step proximal-gradient map."""
        g = self.smooth_gradient(x) if grad is None else grad
        return float(np.linalg.norm(x - prox(self.h, x - g)))

    def certificate(self, x):
        """Distance of ``0`` to the subdifferential of the subproblem at ``x``."""
        return subgradient_residual(self.h, self.smooth_gradient(x), x)


def solve_subproblem(spec: SubproblemSpec, x0=None):
    """Minimize the master subproblem by accelerated proximal gradient.

    Fixed step ``1 / (L_1 + rho)``, momentum restarted whenever the objective
    increases, warm start at ``x_t`` (or ``x0``).  Stops when the subproblem's
    proximal-gradient-map norm drops to ``inner_tol``, or to the
    floating-point floor ``1e3 * eps * scale`` when the iterate and gradient
    magnitudes make ``inner_tol`` unreachable in double precision.

    Returns
    -------
    x_next : ndarray
    inner_iters : int
    residual : float

    Raises
    ------
    ConfigurationError
        For a nonconvex local loss with ``rho`` below its Lipschitz bound.
    SubproblemNotConverged
        When the cap is reached with residual above ten times the tolerance.
    """
    loss = spec.local_loss
    lip = loss.lipschitz_bound
    if not getattr(loss, "convex", True) and spec.rho < lip:
        raise ConfigurationError(
            f"nonconvex local loss needs rho >= {lip:.6g} for a convex subproblem, got {spec.rho}")
    step = 1.0 / (lip + spec.rho) if lip + spec.rho > 0 else 1.0
    h = spec.h

    x = np.array(spec.x_t if x0 is None else x0, dtype=np.float64)
    if not h.feasible(x):
        x = prox(h, x)
    gx = spec.smooth_gradient(x)
    scale = (lip + spec.rho) * float(np.linalg.norm(x)) + float(np.linalg.norm(gx))
    tol = max(spec.inner_tol, 1e3 * np.finfo(float).eps * scale)
    res = spec.residual(x, gx)
    if res <= tol:
        return x, 0, res
    best, best_res = x, res
    y, gy = x, gx
    fx = spec.value(x)
    k = 1.0
    it = 0
    while it < spec.inner_max_iter:
        it += 1
        x_new = prox(h, y - step * gy, step)
        f_new = spec.value(x_new)
        if f_new > fx:
            # restart: plain prox-gradient step from the last iterate
            k = 1.0
            x_new = prox(h, x - step * gx, step)
            f_new = spec.value(x_new)
        g_new = spec.smooth_gradient(x_new)
        res = spec.residual(x_new, g_new)
        if res < best_res:
            best, best_res = x_new, res
        if res <= tol:
            return x_new, it, res
        k_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * k * k))
        beta = (k - 1.0) / k_new
        y = x_new + beta * (x_new - x)
        gy = spec.smooth_gradient(y) if beta != 0.0 else g_new
        x, gx, fx, k = x_new, g_new, f_new, k_new
    if best_res > 10 * tol:
        raise SubproblemNotConverged(
            f"inner solver stopped after {it} iterations at residual {best_res:.3e}",
            best, best_res)
    return best, it, best_res


def solve_subproblem_closed_form(H, gbar, x_t):
    """``x_t - H^{-1} gbar`` via a Cholesky factorization.

    Valid for ``rho = 0``, no regularizer and a quadratic local loss with SPD
    Hessian ``H``; raises ``numpy.linalg.LinAlgError`` otherwise.
    """
    H = np.asarray(H, dtype=np.float64)
    if not np.allclose(H, H.T, rtol=1e-12, atol=1e-14):
        raise np.linalg.LinAlgError("Hessian is not symmetric")
    factor = scipy.linalg.cho_factor(H)
    return np.asarray(x_t) - scipy.linalg.cho_solve(factor, np.asarray(gbar))


# --------------------------------------------------------------------------
# Inexact solves
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InexactnessSpec:
    """Injected subproblem error with ``||eps^t||^2 < c1 ||x^t - x^{t-1}||^2``."""

    c1: float = 0.0
    mode: str = "off"
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("off", "injected"):
            raise ValueError(f"unknown inexactness mode {self.mode!r}")
        if self.c1 < 0:
            raise ValueError("c1 must be >= 0")

    @property
    def active(self):
        return self.mode == "injected" and self.c1 > 0


def draw_error(inexact: InexactnessSpec, p, prev_delta_norm, t):
    """Random error vector, norm capped at ``0.99 sqrt(c1) prev_delta_norm``."""
    cap = 0.99 * math.sqrt(inexact.c1) * prev_delta_norm
    if not inexact.active or cap == 0.0:
        return np.zeros(p)
    rng = np.random.default_rng([inexact.seed, t])
    e = rng.standard_normal(p) * (math.sqrt(inexact.c1) * prev_delta_norm / math.sqrt(p))
    ne = np.linalg.norm(e)
    if ne > cap:
        e *= cap / ne
    return e


def perturb_inexact(x_exact, spec: SubproblemSpec, inexact: InexactnessSpec,
                    prev_delta_norm, t):
    """Move an exact subproblem solution to one with a prescribed residual.

    The returned point ``x`` satisfies ``eps in grad phi(x) + dh(x)`` for the
    drawn error ``eps``, i.e. it solves the subproblem with its linear term
    shifted by ``-eps``.

    Returns
    -------
    x : ndarray
    eps : ndarray
        The injected error (zeros when inactive).
    """
    eps = draw_error(inexact, x_exact.shape[0], prev_delta_norm, t)
    if not eps.any():
        return np.array(x_exact, copy=True), eps
    shifted = SubproblemSpec(spec.local_loss, spec.h, spec.rho, spec.x_t, spec.drift - eps,
                             spec.inner_tol, spec.inner_max_iter)
    x, _, _ = solve_subproblem(shifted, x0=x_exact)
    return x, eps


# --------------------------------------------------------------------------
# Parameter validators
# --------------------------------------------------------------------------

@dataclass
class ValidationReport:
    passed: bool
    checks: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    inexact_passed: Optional[bool] = None

    def lines(self):
        out = []
        for name, ok in self.checks.items():
            out.append(f"{name}: {'PASS' if ok else 'FAIL'}")
        return out


def validate_rho(L, tau, mu_h, rho, delta=1.0, c1=0.0):
    """Check the descent conditions on ``rho`` for the exact and inexact methods.

    Exact: ``gamma > 3L + 2 L delta tau`` and ``rho > 2 L tau / delta`` with
    ``gamma = rho + mu_h``.  Inexact: ``gamma > 3L + 2 L delta tau + 1`` and
    ``rho > 2 L tau / delta + c1``.
    """
    if not delta > 0:
        raise ValueError("delta must be > 0")
    gamma = rho + mu_h
    gamma_min = 3 * L + 2 * L * delta * tau
    rho_min = 2 * L * tau / delta
    checks = {
        "gamma > 3L + 2L*delta*tau": gamma > gamma_min,
        "rho > 2L*tau/delta": rho > rho_min,
    }
    inexact_checks = {
        "gamma > 3L + 2L*delta*tau + 1": gamma > gamma_min + 1,
        "rho > 2L*tau/delta + c1": rho > rho_min + c1,
    }
    values = {"gamma": gamma, "gamma_min": gamma_min, "rho_min": rho_min,
              "descent_constant": min(gamma / 2 - 1.5 * L - L * delta * tau,
                                      rho / 2 - L * tau / delta)}
    return ValidationReport(all(checks.values()), {**checks, **inexact_checks}, values,
                            all(inexact_checks.values()))


def default_delta1(L, rho, sigma2):
    return 2.0 * (2.0 * L + rho + 1.0) / sigma2


def linear_rate_eta(rho, delta1):
    return 1.0 + 1.0 / (0.5 * rho * (1 + delta1) + delta1)


def linear_rate_margins(L, sigma2, tau, rho, delta=1.0, delta1=None, c1=0.0):
    """Left-hand sides of the two linear-rate inequalities (both must be < 0).

    With ``c1 > 0`` the inexact variants are returned instead.
    """
    if delta1 is None:
        delta1 = default_delta1(L, rho, sigma2)
    a = 0.5 * rho * (1 + delta1) + delta1
    eta = 1.0 + 1.0 / a
    geo = tau if eta == 1.0 else (eta ** tau - 1.0) / (eta - 1.0)
    tail = (L / delta + 0.5 * delta1 * L * L * tau / a) * geo
    if c1 > 0:
        p3 = (delta1 * L + 0.5 * rho * (1 + delta1) + 0.5) / a + 1.5 * L - 0.5 * (rho - 1) \
            + L * delta * tau
        second = p3 - 0.5 * (rho - c1) * eta + tail + c1 * eta / a
    else:
        p3 = (delta1 * L + 0.5 * rho * (1 + delta1)) / a + 1.5 * L - 0.5 * rho + L * delta * tau
        second = p3 - 0.5 * rho * eta + tail
    return p3, second, eta


def validate_linear_rate_conditions(L, sigma2, tau, rho, delta=1.0, delta1=None, c1=0.0):
    """Evaluate the sufficient conditions for linear convergence.

    Returns a report whose ``values["eta"]`` is the guaranteed contraction
    factor ``1 + 1 / ((rho/2)(1 + delta1) + delta1)``.

    Raises
    ------
    InapplicableError
        When ``sigma2 == 0`` (no strong convexity available).
    """
    if not sigma2 > 0:
        raise InapplicableError("linear-rate conditions need a strong convexity modulus > 0")
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if delta1 is None:
        delta1 = default_delta1(L, rho, sigma2)
    first, second, eta = linear_rate_margins(L, sigma2, tau, rho, delta, delta1)
    delta1_min = (2 * L + rho + 1) / sigma2
    checks = {
        "first inequality": first < 0,
        "second inequality": second < 0,
        "delta1 > (2L + rho + 1)/sigma2": delta1 > delta1_min,
    }
    values = {"eta": eta, "delta1": delta1, "delta1_min": delta1_min,
              "first": first, "second": second}
    inexact_passed = None
    if c1 > 0:
        f_in, s_in, _ = linear_rate_margins(L, sigma2, tau, rho, delta, delta1, c1)
        checks["first inequality (inexact)"] = f_in < 0
        checks["second inequality (inexact)"] = s_in < 0
        values.update(first_inexact=f_in, second_inexact=s_in)
        inexact_passed = f_in < 0 and s_in < 0 and delta1 > delta1_min
    passed = first < 0 and second < 0 and delta1 > delta1_min
    return ValidationReport(passed, checks, values, inexact_passed)
