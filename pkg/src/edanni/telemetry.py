"""Post-processing of run records: rate fits, round counts and CSV output."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

CSV_FIELDS = ("t", "objective", "f_value", "pg_norm", "delta_norm",
              "uploads", "downloads", "rounds", "virtual_time")
_INT_FIELDS = {"t", "uploads", "downloads", "rounds"}


class InsufficientDataError(ValueError):
    pass


@dataclass
class RateFitReport:
    kind: str
    r_squared: float
    window: tuple
    eta_hat: Optional[float] = None
    C_hat: Optional[float] = None
    table: dict = field(default_factory=dict)
    complete: bool = True


def fit_linear_rate(records, f_star, min_gap=0.0, start=1):
    """Least-squares fit of ``log(F_t - f_star)`` against ``t``.

    Uses records with ``t >= start`` whose gap is positive, at least
    ``min_gap`` and above the floating-point floor ``100 * eps * |f_star|``.
    ``eta_hat = exp(-slope)`` is the fitted per-iteration contraction.
    """
    t = np.array([r.t for r in records], dtype=float)
    gap = np.array([r.f_value for r in records], dtype=float) - f_star
    floor = max(100 * np.finfo(float).eps * abs(f_star), min_gap)
    keep = (t >= start) & (gap > 0) & (gap >= floor)
    # window: the leading run of usable points
    if keep.any():
        first = int(np.argmax(keep))
        stop = first
        while stop < len(keep) and keep[stop]:
            stop += 1
        keep = np.zeros_like(keep)
        keep[first:stop] = True
    if keep.sum() < 5:
        raise InsufficientDataError(f"only {int(keep.sum())} usable points for a linear fit")
    tt, yy = t[keep], np.log(gap[keep])
    slope, intercept = np.polyfit(tt, yy, 1)
    resid = yy - (slope * tt + intercept)
    ss_tot = float(((yy - yy.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - float((resid ** 2).sum()) / ss_tot)
    return RateFitReport("linear", r2, (int(tt[0]), int(tt[-1])), eta_hat=float(np.exp(-slope)))


def first_below(records, eps, attr="pg_norm"):
    """First ``t`` whose ``attr`` is strictly below ``eps`` (``None`` if never)."""
    for r in records:
        if getattr(r, attr) < eps:
            return r.t
    return None


def fit_sublinear_bound(records, eps_grid):
    """Tabulate ``T(eps)`` (first ``t`` with ``pg_norm < eps``) and
    ``C_hat = max_eps T(eps) * eps``.

    Unreached tolerances are reported as ``None`` and mark the report
    incomplete.
    """
    table = {eps: first_below(records, eps) for eps in sorted(eps_grid, reverse=True)}
    reached = {e: T for e, T in table.items() if T is not None}
    c_hat = max((T * e for e, T in reached.items()), default=math.nan)
    if len(reached) >= 2:
        x = np.log([1 / e for e in reached])
        y = np.log([max(T, 1) for T in reached.values()])
        if np.ptp(y) == 0:
            r2 = 1.0
        else:
            r2 = float(np.corrcoef(x, y)[0, 1] ** 2)
    else:
        r2 = math.nan
    window = (records[0].t, records[-1].t) if records else (0, 0)
    return RateFitReport("sublinear", r2, window, C_hat=c_hat, table=table,
                         complete=len(reached) == len(table))


def rounds_to_objective(records, f_star, tol):
    """Rounds needed until ``L(x^t) - f_star <= tol`` (``None`` if never)."""
    for r in records:
        if r.objective - f_star <= tol:
            return r.rounds
    return None


def rounds_to_pg(records, eps):
    for r in records:
        if r.pg_norm < eps:
            return r.rounds
    return None


def trailing_max(values, window=10):
    """Running maximum over the last ``window`` entries, per position."""
    v = np.asarray(values, dtype=float)
    return np.array([v[max(0, i - window + 1):i + 1].max() for i in range(len(v))])


def emit_csv(records, path):
    """Write one row per record; floats carry 17 significant digits."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for r in records:
                w.writerow([getattr(r, f) if f in _INT_FIELDS else format(getattr(r, f), ".17g")
                            for f in CSV_FIELDS])
    except OSError as exc:
        raise OSError(f"cannot write telemetry CSV {path}: {exc}") from exc


def read_csv(path):
    """Parse an emitted CSV back into a list of dicts with typed values."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: int(v) if k in _INT_FIELDS else float(v) for k, v in row.items()} for row in rows]


def write_manifest(result, path, extra=None):
    data = result.manifest()
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
