"""Command-line front end: ``edanni generate|run|validate <spec.json>``.

An experiment spec is a JSON object::

    {
      "name": "desk_lasso",
      "output_dir": "out/desk_lasso",
      "problem": {"kind": "lasso", "m": 4, "n": 50, "p": 40, "s": 4, "seed": 0},
      "runs": [
        {"name": "edanni", "algorithm": "edanni", "rho": "0.25L",
         "arrival": {"kind": "bernoulli", "tau": 3, "probs": "split", "seed": 1}},
        {"name": "ps", "algorithm": "proxgrad_ps",
         "arrival": {"kind": "bernoulli", "tau": 3, "probs": "split", "seed": 1}}
      ]
    }

``rho`` is a number or a multiple of a Lipschitz bound written ``"<k>L"``
(global bound) or ``"<k>L1"`` (the master's local bound).  Every source of
randomness takes an explicit seed.  Exit codes: 0 success, 1 run failure,
2 spec error.  Log verbosity comes from the ``EDANNI_LOG_LEVEL`` environment
variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import dataset as ds
from . import engine as eng
from .algorithms import RunConfig, run
from .master import (InapplicableError, InexactnessSpec, validate_linear_rate_conditions,
                     validate_rho)
from .problems import InvalidSpecError
from .telemetry import emit_csv, rounds_to_pg, write_manifest

log = logging.getLogger("edanni")

EXIT_OK, EXIT_RUN_FAILURE, EXIT_SPEC_ERROR = 0, 1, 2

_RUN_KEYS = {"name", "algorithm", "rho", "arrival", "inexact", "max_rounds", "target_pg_norm",
             "seed", "ps_step", "delta", "inner_tol", "inner_max_iter", "x0", "x0_seed", "group"}
_ARRIVAL_KEYS = {"kind", "tau", "probs", "seed", "cost_range", "master_cost"}
_RHO_RE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*\*?\s*(L1|L)\s*$")


@dataclass
class RunSpec:
    name: str
    fields: dict
    group: str


@dataclass
class ExperimentSpec:
    name: str
    output_dir: Path
    kind: str
    problem_spec: object
    runs: list
    summary_eps: Optional[float] = None
    raw: dict = field(default_factory=dict)

    @property
    def dataset_path(self):
        return self.output_dir / f"{self.name}.edn"


def _fail(where, msg):
    raise InvalidSpecError(f"{where}: {msg}")


def _arrival_label(arr):
    kind = arr.get("kind", "synchronous")
    return kind if kind == "synchronous" else f"{kind}/tau={arr.get('tau', 0)}"


def parse_experiment(data, output_dir=None, max_rounds=None, target_eps=None):
    """Validate a decoded spec and apply command-line overrides.

    Raises
    ------
    InvalidSpecError
        With the offending field named in the message.
    """
    if not isinstance(data, dict):
        _fail("spec", "top level must be an object")
    name = data.get("name")
    if not isinstance(name, str) or not name:
        _fail("name", "a non-empty string is required")
    out = output_dir if output_dir is not None else data.get("output_dir")
    if not out:
        _fail("output_dir", "required (or pass --output-dir)")
    problem = data.get("problem")
    if not isinstance(problem, dict) or "kind" not in problem:
        _fail("problem", "an object with a 'kind' field is required")
    fields = {k: v for k, v in problem.items() if k != "kind"}
    if "seed" not in fields:
        _fail("problem.seed", "seeds must be explicit")
    spec = ds.spec_from_dict(problem["kind"], fields)

    runs_raw = data.get("runs", [])
    if not isinstance(runs_raw, list):
        _fail("runs", "must be a list")
    seen = set()
    runs = []
    for i, r in enumerate(runs_raw):
        where = f"runs[{i}]"
        if not isinstance(r, dict):
            _fail(where, "must be an object")
        unknown = set(r) - _RUN_KEYS
        if unknown:
            _fail(where, f"unknown field(s) {sorted(unknown)}")
        rname = r.get("name")
        if not isinstance(rname, str) or not rname:
            _fail(f"{where}.name", "a non-empty string is required")
        if rname in seen:
            _fail(f"{where}.name", f"duplicate run name {rname!r}")
        seen.add(rname)
        r = dict(r)
        if max_rounds is not None:
            r["max_rounds"] = max_rounds
        if target_eps is not None:
            r["target_pg_norm"] = target_eps
        arr = r.get("arrival", {"kind": "synchronous"})
        if not isinstance(arr, dict):
            _fail(f"{where}.arrival", "must be an object")
        bad = set(arr) - _ARRIVAL_KEYS
        if bad:
            _fail(f"{where}.arrival", f"unknown field(s) {sorted(bad)}")
        if arr.get("kind", "synchronous") != "synchronous" and "seed" not in arr:
            _fail(f"{where}.arrival.seed", "seeds must be explicit")
        if "rho" in r:
            _parse_rho(r["rho"], 1.0, 1.0, f"{where}.rho")
        runs.append(RunSpec(rname, r, str(r.get("group", _arrival_label(arr)))))
    eps = target_eps if target_eps is not None else data.get("summary_eps")
    return ExperimentSpec(name, Path(out), problem["kind"], spec, runs, eps, data)


def load_experiment(path, **overrides):
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InvalidSpecError(f"cannot read spec {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InvalidSpecError(f"{path}: not valid JSON ({exc})") from None
    return parse_experiment(data, **overrides)


def _parse_rho(value, L, L1, where="rho"):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        if value < 0 or not math.isfinite(value):
            _fail(where, "must be finite and >= 0")
        return float(value)
    if isinstance(value, str):
        match = _RHO_RE.match(value)
        if match:
            k = float(match.group(1))
            return k * (L1 if match.group(2) == "L1" else L)
    _fail(where, f"expected a number or '<k>L' / '<k>L1', got {value!r}")


def _initial_point(fields, p, where):
    x0 = fields.get("x0", "zeros")
    if isinstance(x0, list):
        if len(x0) != p:
            _fail(f"{where}.x0", f"expected {p} entries")
        return np.asarray(x0, dtype=np.float64)
    if x0 == "zeros":
        return None
    if x0 == "random_unit":
        if "x0_seed" not in fields:
            _fail(f"{where}.x0_seed", "seeds must be explicit")
        v = np.random.default_rng(fields["x0_seed"]).standard_normal(p)
        return v / np.linalg.norm(v)
    _fail(f"{where}.x0", f"expected 'zeros', 'random_unit' or a list, got {x0!r}")


def build_run_config(run_spec: RunSpec, problem):
    """Turn one run entry into a :class:`RunConfig` for ``problem``."""
    f = run_spec.fields
    where = f"run {run_spec.name!r}"
    losses = problem.losses
    rho = _parse_rho(f.get("rho", 0.0), losses.lipschitz_bound, losses[0].lipschitz_bound,
                     f"{where}.rho")
    arr = dict(f.get("arrival", {"kind": "synchronous"}))
    probs = arr.get("probs")
    if probs == "split":
        arr["probs"] = eng.split_probs(losses.m)
    elif probs is not None:
        arr["probs"] = tuple(float(q) for q in probs)
    if "cost_range" in arr:
        arr["cost_range"] = tuple(arr["cost_range"])
    inexact_raw = f.get("inexact")
    if inexact_raw:
        inexact = InexactnessSpec(float(inexact_raw.get("c1", 0.0)), "injected",
                                  int(inexact_raw.get("seed", 0)))
    else:
        inexact = InexactnessSpec()
    try:
        arrival = eng.ArrivalModel(**arr)
        kwargs = {k: f[k] for k in ("algorithm", "max_rounds", "target_pg_norm", "seed",
                                    "ps_step", "delta", "inner_tol", "inner_max_iter")
                  if k in f}
        return RunConfig(rho=rho, arrival=arrival, inexact=inexact,
                         x0=_initial_point(f, problem.p, where), **kwargs)
    except (TypeError, ValueError) as exc:
        raise InvalidSpecError(f"{where}: {exc}") from None


def load_problem(exp: ExperimentSpec):
    """Read the experiment's dataset if it was generated from the same spec,
    otherwise generate the instance in memory."""
    path = exp.dataset_path
    side = ds.sidecar_path(path)
    if path.exists() and side.exists():
        meta = json.loads(side.read_text())
        if meta.get("kind") == exp.kind and meta.get("spec") == exp.problem_spec.to_dict():
            log.info("loading dataset %s", path)
            return ds.read_dataset(path)
        log.warning("dataset %s was generated from a different spec; regenerating in memory", path)
    return ds.build_problem(exp.kind, exp.problem_spec)


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_generate(exp: ExperimentSpec, out=None):
    out = out if out is not None else sys.stdout
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    path, side = ds.write_dataset(exp.dataset_path, exp.kind, exp.problem_spec)
    print(f"wrote {path}", file=out)
    print(f"wrote {side}", file=out)
    return EXIT_OK


@dataclass
class RunOutcome:
    name: str
    algorithm: str
    group: str
    result: object = None
    error: Optional[str] = None
    rounds_to_eps: Optional[int] = None
    ratio: Optional[float] = None


def run_experiment(exp: ExperimentSpec, problem=None):
    """Execute every run, writing ``<run>.csv``, ``<run>.manifest.json`` and
    ``<run>.events`` into the output directory.  Failures are recorded and the
    remaining runs still execute."""
    problem = problem if problem is not None else load_problem(exp)
    exp.output_dir.mkdir(parents=True, exist_ok=True)
    outcomes = []
    for rs in exp.runs:
        oc = RunOutcome(rs.name, rs.fields.get("algorithm", "edanni"), rs.group)
        try:
            config = build_run_config(rs, problem)
            res = run(problem, config)
            emit_csv(res.records, exp.output_dir / f"{rs.name}.csv")
            write_manifest(res, exp.output_dir / f"{rs.name}.manifest.json",
                           {"run": rs.name, "experiment": exp.name, "problem": exp.kind,
                            "problem_spec": exp.problem_spec.to_dict()})
            res.event_log.write(exp.output_dir / f"{rs.name}.events")
            oc.result = res
        except InvalidSpecError:
            raise
        except Exception as exc:  # recorded, the sweep continues
            log.error("run %s failed: %s", rs.name, exc)
            oc.error = f"{type(exc).__name__}: {exc}"
        outcomes.append(oc)
    _normalize(outcomes, exp)
    return outcomes


def _normalize(outcomes, exp):
    eps = exp.summary_eps
    if eps is None:
        targets = [o.result.config.target_pg_norm for o in outcomes if o.result is not None]
        eps = max(targets, default=None)
    exp.summary_eps = eps
    for o in outcomes:
        if o.result is not None and eps is not None:
            o.rounds_to_eps = rounds_to_pg(o.result.records, eps)
    for o in outcomes:
        base = next((b for b in outcomes if b.group == o.group and b.algorithm == "edanni"
                     and b.rounds_to_eps), None)
        if base is not None and o.rounds_to_eps is not None:
            o.ratio = o.rounds_to_eps / base.rounds_to_eps


def format_summary(outcomes, eps):
    lines = [f"rounds to pg_norm < {eps:g} (EDANNI = 1 within each group)",
             f"{'run':<20} {'algorithm':<12} {'group':<18} {'rounds':>8} {'uploads':>9} "
             f"{'downloads':>10} {'ratio':>7}"]
    for o in outcomes:
        if o.error:
            lines.append(f"{o.name:<20} {o.algorithm:<12} {o.group:<18} FAILED  {o.error}")
            continue
        r = o.rounds_to_eps
        rec = None if r is None else o.result.records[r]
        lines.append(f"{o.name:<20} {o.algorithm:<12} {o.group:<18} "
                     f"{'-' if r is None else r:>8} {'-' if rec is None else rec.uploads:>9} "
                     f"{'-' if rec is None else rec.downloads:>10} "
                     f"{'-' if o.ratio is None else format(o.ratio, '.3f'):>7}")
    lines.append("")
    lines.append("time table (virtual seconds, worker totals)")
    lines.append(f"{'run':<20} {'compute':>12} {'idle':>12} {'utilization':>12}")
    for o in outcomes:
        if o.result is None:
            continue
        tt = o.result.time_table
        lines.append(f"{o.name:<20} {tt.compute_time.sum():>12.2f} {tt.idle_time.sum():>12.2f} "
                     f"{tt.mean_utilization:>12.4f}")
    return "\n".join(lines)


def cmd_run(exp: ExperimentSpec, out=None):
    out = out if out is not None else sys.stdout
    outcomes = run_experiment(exp)
    text = format_summary(outcomes, exp.summary_eps if exp.summary_eps is not None else math.nan)
    print(text, file=out)
    summary = [{"run": o.name, "algorithm": o.algorithm, "group": o.group, "error": o.error,
                "rounds_to_eps": o.rounds_to_eps, "ratio": o.ratio,
                "mean_utilization": None if o.result is None
                else o.result.time_table.mean_utilization}
               for o in outcomes]
    (exp.output_dir / "summary.json").write_text(
        json.dumps({"eps": exp.summary_eps, "runs": summary}, indent=2) + "\n")
    return EXIT_RUN_FAILURE if any(o.error for o in outcomes) else EXIT_OK


def validation_lines(exp: ExperimentSpec, problem=None):
    """Advisory report on ``rho`` for every run (also used by ``cmd_validate``)."""
    problem = problem if problem is not None else load_problem(exp)
    losses = problem.losses
    L, sigma2 = losses.lipschitz_bound, losses.strong_convexity_modulus
    mu_h = problem.regularizer.convex_modulus
    lines = [f"problem {exp.kind}: L = {L:.6g}, sigma2 = {sigma2:.6g}"]
    for rs in exp.runs:
        cfg = build_run_config(rs, problem)
        c1 = cfg.inexact.c1 if cfg.inexact.active else 0.0
        rep = validate_rho(L, cfg.tau, mu_h, cfg.rho, cfg.delta, c1)
        v = rep.values
        lines.append(f"[{rs.name}] rho = {cfg.rho:.6g}, tau = {cfg.tau}")
        lines.append(f"  rho condition: {'PASS' if rep.passed else 'FAIL'} (advisory) "
                     f"gamma_min = {v['gamma_min']:.6g}, rho_min = {v['rho_min']:.6g}")
        if c1 > 0:
            lines.append(f"  inexact variant (c1 = {c1:g}): "
                         f"{'PASS' if rep.inexact_passed else 'FAIL'} (advisory)")
        try:
            lr = validate_linear_rate_conditions(L, sigma2, cfg.tau, cfg.rho, cfg.delta, c1=c1)
        except InapplicableError:
            lines.append("  linear rate: inapplicable (no strong convexity)")
        else:
            w = lr.values
            lines.append(f"  linear rate: {'PASS' if lr.passed else 'FAIL'} (advisory) "
                         f"eta = {w['eta']:.6g}, margins = ({w['first']:.4g}, {w['second']:.4g})")
    return lines


def cmd_validate(exp: ExperimentSpec, out=None):
    out = out if out is not None else sys.stdout
    for line in validation_lines(exp):
        print(line, file=out)
    return EXIT_OK


_COMMANDS = {"generate": cmd_generate, "run": cmd_run, "validate": cmd_validate}


def build_parser():
    parser = argparse.ArgumentParser(prog="edanni", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("spec", help="experiment spec (JSON)")
    parser.add_argument("--output-dir", help="override the spec's output_dir")
    parser.add_argument("--max-rounds", type=int, help="override max_rounds of every run")
    parser.add_argument("--target-eps", type=float, help="override target_pg_norm of every run")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = os.environ.get("EDANNI_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.max_rounds is not None and args.max_rounds < 1:
            _fail("--max-rounds", "must be >= 1")
        if args.target_eps is not None and not args.target_eps > 0:
            _fail("--target-eps", "must be > 0")
        exp = load_experiment(args.spec, output_dir=args.output_dir,
                              max_rounds=args.max_rounds, target_eps=args.target_eps)
        return _COMMANDS[args.command](exp)
    except InvalidSpecError as exc:
        print(f"spec error: {exc}", file=sys.stderr)
        return EXIT_SPEC_ERROR


if __name__ == "__main__":
    sys.exit(main())
