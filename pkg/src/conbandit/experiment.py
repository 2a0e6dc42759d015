"""Monte Carlo batches, CSV/JSON output and characteristic-time grids.

Output of `run_experiment` with an output directory:

  runs.csv      one row per (sampler, seed); deterministic given the seeds
  timings.csv   seed, sampler, wall_ms (kept apart so runs.csv is reproducible byte for byte)
  summary.json  per-sampler statistics plus reference values

runs.csv columns: seed, sampler, scenario, exploration, tau, correct (1, 0 or
NA when censored), censored (1/0), statistic, threshold, track_margin,
target_violation, n_1 .. n_K.  Floats are written with repr, so they parse
back to the same doubles.

summary.json layout:

  {"scenario": name, "exploration": ..., "delta": ..., "n_seeds": ..., "base_seed": ...,
   "reference": {"characteristic_time", "lower_bound", "oracle_allocation"},
   "samplers": {name: {"n", "completed", "censored", "errors", "error_rate",
                       "mean_tau", "std_tau", "q10_tau", "q50_tau", "q90_tau",
                       "mean_wall_ms"}}}

Stopping-time statistics use completed runs only; the error rate is
errors / completed.  Statistics that have no data are null.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .explorers import RunRecord, StoppingConfig, run_once
from .hardness import _kl_factor, solve_oracle_allocation
from .model import AltBoundaryError, ConBanditError, NonUniqueOptimumError, Problem
from .scenarios import ScenarioSpec

DEFAULT_MAX_STEPS = 10_000_000
GRID_CLIP = 1e6
_FIXED_COLUMNS = ("seed", "sampler", "scenario", "exploration", "tau", "correct", "censored",
                  "statistic", "threshold", "track_margin", "target_violation")


def csv_columns(n_arms: int) -> list[str]:
    return list(_FIXED_COLUMNS) + [f"n_{a + 1}" for a in range(n_arms)]


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def record_row(rec: RunRecord) -> list[str]:
    correct = "NA" if rec.correct is None else _fmt(bool(rec.correct))
    return [str(rec.seed), rec.sampler, rec.scenario, rec.exploration, str(rec.tau), correct,
            _fmt(bool(rec.censored)), _fmt(rec.statistic), _fmt(rec.threshold), _fmt(rec.track_margin),
            _fmt(rec.target_violation)] + [str(int(n)) for n in rec.counts]


def row_text(rec: RunRecord) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow(record_row(rec))
    return buf.getvalue()


@dataclass
class ExperimentResult:
    spec: ScenarioSpec
    records: list
    summary: dict


def _reference(problem: Problem, delta):
    inst = problem.instance
    try:
        sol = solve_oracle_allocation(inst.means, problem.polytope, problem.scenario, inst.family,
                                      inst.domain)
    except (NonUniqueOptimumError, AltBoundaryError):
        return None, {"characteristic_time": None, "lower_bound": None, "oracle_allocation": None}
    T = sol.characteristic_time
    return sol.w, {"characteristic_time": T, "lower_bound": T * _kl_factor(delta),
                   "oracle_allocation": [float(x) for x in sol.w]}


def _job(args):
    problem, sampler, seed, config, max_steps, oracle_w, options, name = args
    return run_once(problem, sampler, seed, config, max_steps, oracle_w, options, name)


def summarize_rows(rows: list[dict], samplers) -> dict:
    """Per-sampler statistics from parsed rows (keys: sampler, tau, correct,
    censored, wall_ms).  Used both on fresh records and on re-read CSVs."""
    out = {}
    for s in samplers:
        mine = [r for r in rows if r["sampler"] == s]
        done = [r for r in mine if not r["censored"]]
        taus = np.array([r["tau"] for r in done], dtype=float)
        errors = sum(1 for r in done if r["correct"] is False)
        walls = np.array([r["wall_ms"] for r in mine], dtype=float)
        entry = {"n": len(mine), "completed": len(done), "censored": len(mine) - len(done),
                 "errors": errors, "error_rate": errors / len(done) if done else None,
                 "mean_tau": None, "std_tau": None, "q10_tau": None, "q50_tau": None, "q90_tau": None,
                 "mean_wall_ms": float(walls.mean()) if walls.size else None}
        if taus.size:
            q10, q50, q90 = np.quantile(taus, [0.1, 0.5, 0.9])
            entry.update(mean_tau=float(taus.mean()), std_tau=float(taus.std(ddof=1)) if taus.size > 1 else 0.0,
                         q10_tau=float(q10), q50_tau=float(q50), q90_tau=float(q90))
        out[s] = entry
    return out


def _rows_from_records(records):
    return [{"sampler": r.sampler, "tau": r.tau, "correct": r.correct, "censored": r.censored,
             "wall_ms": r.wall_ms} for r in records]


def run_experiment(spec: ScenarioSpec, out_dir=None, jobs: int = 1, max_steps: int = DEFAULT_MAX_STEPS,
                   config: StoppingConfig | None = None, progress=None) -> ExperimentResult:
    """Run every (sampler, seed) pair of `spec`.

    Runs go to a process pool of size `jobs`; results are collected in the
    parent and ordered by (sampler, seed) before anything is written, so the
    files do not depend on scheduling.
    """
    config = config or StoppingConfig(delta=spec.delta)
    oracle_w, reference = _reference(spec.problem, config.delta)
    tasks = []
    for s in spec.samplers:
        if s == "oracle" and oracle_w is None:
            raise ConBanditError("oracle sampler needs a unique optimum away from the Alt boundary")
        for seed in spec.seeds:
            tasks.append((spec.problem, s, seed, config, max_steps, oracle_w, spec.options, spec.name))
    records = []
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for rec in pool.map(_job, tasks, chunksize=max(1, len(tasks) // (8 * jobs))):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        for t in tasks:
            rec = _job(t)
            records.append(rec)
            if progress:
                progress(rec)
    order = {s: i for i, s in enumerate(spec.samplers)}
    records.sort(key=lambda r: (order[r.sampler], r.seed))
    summary = {
        "scenario": spec.name,
        "exploration": spec.exploration,
        "delta": config.delta,
        "n_seeds": spec.n_seeds,
        "base_seed": spec.base_seed,
        "max_steps": max_steps,
        "reference": reference,
        "samplers": summarize_rows(_rows_from_records(records), spec.samplers),
    }
    if out_dir is not None:
        write_outputs(Path(out_dir), records, summary, spec.problem.instance.n_arms)
    return ExperimentResult(spec, records, summary)


def write_outputs(out: Path, records, summary, n_arms):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "runs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_columns(n_arms))
        for r in records:
            w.writerow(record_row(r))
    with open(out / "timings.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "sampler", "wall_ms"])
        for r in records:
            w.writerow([r.seed, r.sampler, repr(float(r.wall_ms))])
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


def read_runs(out_dir) -> list[dict]:
    """Parse runs.csv (and timings.csv when present) back into row dicts."""
    out = Path(out_dir)
    walls = {}
    tpath = out / "timings.csv"
    if tpath.exists():
        with open(tpath, newline="") as fh:
            for r in csv.DictReader(fh):
                walls[(r["sampler"], int(r["seed"]))] = float(r["wall_ms"])
    rows = []
    with open(out / "runs.csv", newline="") as fh:
        for r in csv.DictReader(fh):
            counts = [int(v) for k, v in r.items() if k.startswith("n_")]
            rows.append({
                "seed": int(r["seed"]), "sampler": r["sampler"], "scenario": r["scenario"],
                "exploration": r["exploration"], "tau": int(r["tau"]),
                "correct": None if r["correct"] == "NA" else r["correct"] == "1",
                "censored": r["censored"] == "1",
                "statistic": float(r["statistic"]), "threshold": float(r["threshold"]),
                "track_margin": float(r["track_margin"]), "target_violation": float(r["target_violation"]),
                "counts": counts, "wall_ms": walls.get((r["sampler"], int(r["seed"])), math.nan),
            })
    return rows


def resummarize(out_dir) -> dict:
    """Rebuild summary.json's sampler block from the CSV files."""
    out = Path(out_dir)
    old = json.loads((out / "summary.json").read_text())
    rows = read_runs(out)
    new = dict(old)
    new["samplers"] = summarize_rows(rows, list(old["samplers"]))
    return new


def characteristic_time_grid(problem: Problem, arm_i: int, lo_i: float, hi_i: float, steps_i: int,
                             arm_j: int, lo_j: float, hi_j: float, steps_j: int, clip: float = GRID_CLIP) -> dict:
    """T_F over a grid of (mu_i, mu_j) values, other means fixed.

    Values are clipped at `clip`; cells where the optimal policy is not unique
    are null.  Arms are 0-based here.
    """
    inst = problem.instance
    xs = np.linspace(lo_i, hi_i, steps_i)
    ys = np.linspace(lo_j, hi_j, steps_j)
    grid = []
    for x in xs:
        row = []
        for y in ys:
            mu = inst.means.copy()
            mu[arm_i] = x
            mu[arm_j] = y
            try:
                T = solve_oracle_allocation(mu, problem.polytope, problem.scenario, inst.family,
                                            inst.domain).characteristic_time
                row.append(float(min(T, clip)))
            except NonUniqueOptimumError:
                row.append(None)
            except AltBoundaryError:
                row.append(float(clip))
        grid.append(row)
    return {"arm_i": arm_i, "arm_j": arm_j, "mu_i": xs.tolist(), "mu_j": ys.tolist(),
            "clip": clip, "exploration": problem.scenario.value if hasattr(problem.scenario, "value")
            else str(problem.scenario), "characteristic_time": grid}
