"""Batch orchestration: fan rollouts out over workers, then write sorted records and trajectories."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from ..mpc import ControllerConfig, RolloutRecord, run_rollout
from ..valuefn import SafetyOracle
from .metrics import TrialRow
from .sampling import sample_initial_states

logger = logging.getLogger(__name__)

WORKERS_ENV = "HJMPC_WORKERS"
RECORD_COLUMNS = tuple(f.name for f in fields(TrialRow))
STATE_NAMES = ("x", "y", "theta", "v")
CONTROL_NAMES = ("turn_rate", "accel")


class RecordsFormatError(ValueError):
    pass


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV}={raw!r} is not an integer") from None
    return max(1, n)


@dataclass(frozen=True)
class Job:
    variant: str
    horizon: int
    controls_per_plan: int
    margin: float
    seed: int
    x0: tuple


_shared: dict = {}


def _init(scenario, field):
    _shared["scenario"] = scenario
    _shared["oracle"] = SafetyOracle(field)


def _run(job: Job) -> RolloutRecord:
    sc = _shared["scenario"]
    cfg = ControllerConfig(job.variant, job.horizon, controls_per_plan=job.controls_per_plan,
                           margin=job.margin)
    return run_rollout(cfg, sc, _shared["oracle"], np.array(job.x0), sc.steps, seed=job.seed)


def _key(rec: RolloutRecord):
    return (rec.config.variant, rec.config.horizon, rec.seed)


def run_batch(scenario, field, variants, horizons, n: int, seed: int, controls_per_plan: int = 1,
              margin: float | None = None, workers: int | None = None,
              progress=None) -> list[RolloutRecord]:
    """Every (variant, h) pair on the same ``n`` seeded starts, sorted by (variant, h, seed).

    Trial ``i`` uses seed ``seed + i``.  ``margin`` defaults to the scenario's
    terminal margin.  Results do not depend on ``workers``.
    """
    margin = scenario.terminal_margin if margin is None else margin
    oracle = SafetyOracle(field)
    starts = sample_initial_states(scenario, oracle, n, seed)
    jobs = [Job(v, h, controls_per_plan, margin, seed + i, tuple(float(c) for c in starts[i]))
            for v in variants for h in horizons for i in range(n)]
    workers = worker_count() if workers is None else workers
    out = []
    if workers == 1:
        _init(scenario, field)
        for job in jobs:
            out.append(_run(job))
            if progress:
                progress(len(out), len(jobs))
    else:
        with ProcessPoolExecutor(workers, initializer=_init, initargs=(scenario, field)) as pool:
            for rec in pool.map(_run, jobs, chunksize=1):
                out.append(rec)
                if progress:
                    progress(len(out), len(jobs))
    return sorted(out, key=_key)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def write_records(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in rows:
            w.writerow([_fmt(getattr(r, c)) for c in RECORD_COLUMNS])


def _parse_bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise ValueError(f"expected true/false, got {s!r}")
    return s == "true"


_PARSERS = {"seed": int, "variant": str, "h": int, "h_c": int, "safe": _parse_bool,
            "goal_reached": _parse_bool, "cost": float, "min_l": float, "fallback_count": int}


def read_records(path) -> list[TrialRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != RECORD_COLUMNS:
            raise RecordsFormatError(f"{path}: header must be {','.join(RECORD_COLUMNS)}")
        rows = []
        for lineno, line in enumerate(reader, start=2):
            if len(line) != len(RECORD_COLUMNS):
                raise RecordsFormatError(f"{path}:{lineno}: expected {len(RECORD_COLUMNS)} fields")
            try:
                rows.append(TrialRow(**{c: _PARSERS[c](v) for c, v in zip(RECORD_COLUMNS, line)}))
            except ValueError as exc:
                raise RecordsFormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise RecordsFormatError(f"{path}: no records")
    return rows


def trajectory_name(rec: RolloutRecord) -> str:
    c = rec.config
    return f"{c.variant}_h{c.horizon}_hc{c.controls_per_plan}_seed{rec.seed}.csv"


def write_trajectory(rec: RolloutRecord, path) -> None:
    K = len(rec.controls)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("k", "t") + STATE_NAMES + CONTROL_NAMES + ("l", "V_s"))
        for k in range(K + 1):
            u = rec.controls[k] if k < K else (None, None)
            w.writerow([str(k), _fmt(k * rec.dt)] + [_fmt(v) for v in rec.states[k]]
                       + ["" if v is None else _fmt(v) for v in u]
                       + [_fmt(rec.l_values[k]), _fmt(rec.v_values[k])])


def read_trajectory(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    states = np.array([[float(r[s]) for s in STATE_NAMES] for r in rows])
    return {"states": states, "l": np.array([float(r["l"]) for r in rows])}


def write_outputs(records, out_dir) -> Path:
    """records.csv plus one trajectory CSV per rollout under ``out_dir/trajectories``."""
    out = Path(out_dir)
    traj = out / "trajectories"
    traj.mkdir(parents=True, exist_ok=True)
    write_records([TrialRow.from_record(r) for r in records], out / "records.csv")
    for rec in records:
        write_trajectory(rec, traj / trajectory_name(rec))
    return out / "records.csv"
