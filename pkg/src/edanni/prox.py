"""Proximal operators and the proximal-gradient stationarity map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def soft_threshold(z, t):
    """Componentwise ``sign(z) * max(|z| - t, 0)``; ties ``|z| == t`` map to 0."""
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def project_ball(z, radius):
    nz = np.linalg.norm(z)
    if nz <= radius:
        return z
    return z * (radius / nz)


def prox(h, z, scale=1.0):
    """Exact minimizer of ``scale * h(x) + 1/2 ||x - z||^2``.

    Parameters
    ----------
    h : Regularizer
    z : ndarray
        Finite input point.
    scale : float
        Positive multiplier of ``h``.

    Raises
    ------
    FloatingPointError
        If ``z`` contains NaN or infinite entries.
    ValueError
        If ``scale`` is not positive.
    """
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise FloatingPointError("prox input is not finite")
    if not scale > 0:
        raise ValueError(f"prox scale must be > 0, got {scale}")
    if h.kind == "none":
        return z.copy()
    x = soft_threshold(z, scale * h.theta) if h.theta > 0 else z.copy()
    if h.kind == "l1ball":
        x = project_ball(x, h.radius)
    return x


def prox_nonexpansive_check(h, z1, z2, scale=1.0):
    """``||prox(z1) - prox(z2)|| <= ||z1 - z2||`` up to a 1e-12 relative slack."""
    d = np.linalg.norm(prox(h, z1, scale) - prox(h, z2, scale))
    return bool(d <= np.linalg.norm(np.asarray(z1) - np.asarray(z2)) * (1 + 1e-12))


@dataclass
class ProxGradReport:
    map_value: np.ndarray
    norm: float


def prox_gradient_map(losses, h, x):
    """``x - prox_h(x - (1/m) sum_j grad L_j(x))`` with fresh gradients.

    Its norm vanishes exactly at stationary points of the composite objective.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (losses.p,):
        raise ValueError(f"expected a vector of dimension {losses.p}, got shape {x.shape}")
    g = losses.gradient(x)
    mv = x - prox(h, x - g)
    return ProxGradReport(mv, float(np.linalg.norm(mv)))


def subgradient_residual(h, g, x):
    """Smallest ``||v||`` over ``v in g + dh(x)``.

    Used to certify subproblem solutions: ``g`` is the gradient of the smooth
    part at ``x``.  For the ball-constrained kind the normal-cone multiplier is
    optimized in closed form over the support of ``x``.
    """
    g = np.asarray(g, dtype=np.float64)
    if h.kind == "none":
        return float(np.linalg.norm(g))
    t = h.theta
    nz = x != 0
    r = np.empty_like(g)
    r[nz] = g[nz] + t * np.sign(x[nz])
    r[~nz] = soft_threshold(g[~nz], t)
    if h.kind == "l1ball" and np.linalg.norm(x) >= h.radius * (1 - 1e-12):
        a, xs = r[nz], x[nz]
        lam = max(0.0, -float(a @ xs) / float(xs @ xs))
        r[nz] = a + lam * xs
    return float(np.linalg.norm(r))
