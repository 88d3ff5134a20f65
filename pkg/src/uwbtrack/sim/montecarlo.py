"""Monte-Carlo studies: seeded cells, chunked batches, CSV artifacts.

Every cell (one p_out value, or the control scenario) owns a seed list derived
from ``(base_seed, cell, run)``; all estimators or controllers of a cell share
it, so comparisons see identical noise. Runs are grouped into fixed-size chunks
that never depend on the worker count, which keeps the CSVs byte-identical for
any ``jobs``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import SimConfig
from .episode import RunMetrics, compute_metrics, run_batch
from .scenarios import scenario_control, scenario_estimation

CHUNK = 10
CELL_CONTROL = 1000
CELL_COVERAGE = 2000

SWEEP_COLUMNS = ("p_out", "estimator", "mean_rmse", "std_rmse", "n_runs")
SUMMARY_KEYS = ("study", "p_out", "estimator", "controller", "run", "seed")
COVERAGE_COLUMNS = ("estimator", "p_out", "alpha", "n_runs", "n_checked", "n_covered", "coverage")
ESTIMATE_COLUMNS = ("estimator", "seed", "step", "est_px", "est_py", "est_pz", "est_vx", "est_vy", "est_vz",
                    "cov_trace_pos", "true_px", "true_py", "true_pz", "true_vx", "true_vy", "true_vz")
CONTROL_COLUMNS = ("controller", "seed", "step", "u_x", "u_y", "u_z", "qp_status", "h_near", "h_far", "R",
                   "d_hat", "d_true")


def run_seed(base_seed: int, cell: int, run: int) -> int:
    """64-bit episode seed hashed from ``(base_seed, cell, run)``."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(cell), int(run)))
    lo, hi = ss.generate_state(2, np.uint32)
    return int(lo) | (int(hi) << 32)


def cell_seeds(base_seed: int, cell: int, n_runs: int) -> list[int]:
    return [run_seed(base_seed, cell, i) for i in range(n_runs)]


@dataclass
class CellResult:
    study: str
    p_out: float
    estimator: str
    controller: str
    seeds: list[int]
    metrics: list[RunMetrics]

    def values(self, field: str) -> np.ndarray:
        return np.array([getattr(m, field) for m in self.metrics], float)

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.values("rmse")))

    @property
    def std_rmse(self) -> float:
        r = self.values("rmse")
        return float(np.std(r, ddof=1)) if r.size > 1 else 0.0


def _scenario(study: str, cfg: SimConfig):
    if study == "control":
        return scenario_control(cfg)
    return scenario_estimation(cfg)


def _run_chunk(task) -> list[RunMetrics]:
    study, cfg, estimator, controller, seeds = task
    traces = run_batch(_scenario(study, cfg), estimator, controller, cfg, seeds)
    return [compute_metrics(t, cfg) for t in traces]


def _map(tasks, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_chunk(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(_run_chunk, tasks))


def run_cells(cells, jobs: int = 1) -> list[CellResult]:
    """Run ``(study, cfg, estimator, controller, seeds)`` cells; order is preserved."""
    tasks, owners = [], []
    for idx, (study, cfg, est, ctrl, seeds) in enumerate(cells):
        for start in range(0, len(seeds), CHUNK):
            tasks.append((study, cfg, est, ctrl, list(seeds[start:start + CHUNK])))
            owners.append(idx)
    out = _map(tasks, jobs)
    metrics: list[list[RunMetrics]] = [[] for _ in cells]
    for idx, chunk in zip(owners, out):
        metrics[idx].extend(chunk)
    return [CellResult(study, cfg.p_out, est, ctrl, list(seeds), m)
            for (study, cfg, est, ctrl, seeds), m in zip(cells, metrics)]


def sweep_outliers(cfg: SimConfig, base_seed: int | None = None, jobs: int | None = None,
                   n_runs: int | None = None) -> list[CellResult]:
    """Estimator RMSE over the p_out grid on the scripted estimation scenario."""
    base = cfg.seed if base_seed is None else base_seed
    n = cfg.n_runs if n_runs is None else n_runs
    cells = []
    for i, p in enumerate(cfg.p_grid_values):
        seeds = cell_seeds(base, i, n)
        cfg_p = cfg.replace(p_out=p)
        for est in cfg.estimator_list:
            cells.append(("estimation", cfg_p, est, "scripted", seeds))
    return run_cells(cells, cfg.jobs if jobs is None else jobs)


def control_study(cfg: SimConfig, base_seed: int | None = None, jobs: int | None = None,
                  n_runs: int | None = None, estimator: str = "fg_robust") -> list[CellResult]:
    """Each controller on the staged control scenario, one cell per controller."""
    base = cfg.seed if base_seed is None else base_seed
    seeds = cell_seeds(base, CELL_CONTROL, cfg.n_runs if n_runs is None else n_runs)
    cells = [("control", cfg, estimator, ctrl, seeds) for ctrl in cfg.controller_list]
    return run_cells(cells, cfg.jobs if jobs is None else jobs)


def estimator_study(cfg: SimConfig, base_seed: int | None = None, jobs: int | None = None,
                    n_runs: int | None = None) -> list[CellResult]:
    """Every configured estimator at the configured p_out."""
    base = cfg.seed if base_seed is None else base_seed
    seeds = cell_seeds(base, CELL_COVERAGE + 1, cfg.n_runs if n_runs is None else n_runs)
    cells = [("estimation", cfg, est, "scripted", seeds) for est in cfg.estimator_list]
    return run_cells(cells, cfg.jobs if jobs is None else jobs)


def coverage_study(cfg: SimConfig, base_seed: int | None = None, jobs: int | None = None,
                   n_runs: int | None = None) -> list[CellResult]:
    """Confidence-radius calibration with nominal Gaussian sensing (p_out forced to 0)."""
    base = cfg.seed if base_seed is None else base_seed
    seeds = cell_seeds(base, CELL_COVERAGE, cfg.n_runs if n_runs is None else n_runs)
    cfg0 = cfg.replace(p_out=0.0)
    cells = [("estimation", cfg0, est, "scripted", seeds) for est in cfg.estimator_list]
    return run_cells(cells, cfg.jobs if jobs is None else jobs)


def pooled_coverage(cell: CellResult) -> float:
    checked = sum(m.n_checked for m in cell.metrics)
    return sum(m.n_covered for m in cell.metrics) / checked if checked else math.nan


# CSV output


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if v == 0.0:
            return "0"
        return format(v, ".9g")
    return str(value)


def write_csv(path: str | Path, columns, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_sweep(path, cells: list[CellResult]) -> Path:
    rows = [(c.p_out, c.estimator, c.mean_rmse, c.std_rmse, len(c.metrics)) for c in cells]
    return write_csv(path, SWEEP_COLUMNS, rows)


def write_summary(path, cells: list[CellResult]) -> Path:
    rows = []
    for c in cells:
        for run, (seed, m) in enumerate(zip(c.seeds, c.metrics)):
            rows.append((c.study, c.p_out, c.estimator, c.controller, run, seed)
                        + tuple(getattr(m, f) for f in RunMetrics.FIELDS))
    return write_csv(path, SUMMARY_KEYS + RunMetrics.FIELDS, rows)


def write_coverage(path, cells: list[CellResult], alpha: float) -> Path:
    rows = [(c.estimator, c.p_out, alpha, len(c.metrics), sum(m.n_checked for m in c.metrics),
             sum(m.n_covered for m in c.metrics), pooled_coverage(c)) for c in cells]
    return write_csv(path, COVERAGE_COLUMNS, rows)


def estimate_rows(trace) -> list[tuple]:
    rows = []
    for k in range(trace.steps):
        rows.append((trace.estimator, trace.seed, k, *trace.est[k], float(np.trace(trace.est_cov_pos[k])),
                     *trace.target[k]))
    return rows


def control_rows(trace) -> list[tuple]:
    rows = []
    for k in range(trace.steps):
        rows.append((trace.controller, trace.seed, k, *trace.u[k], trace.qp_status[k], trace.h_near[k],
                     trace.h_far[k], trace.R[k], trace.d_hat[k], trace.d_true[k]))
    return rows


def example_traces(study: str, cfg: SimConfig, seed: int, kinds) -> list:
    """Single-seed traces for the per-step logs (one per estimator or controller)."""
    out = []
    for kind in kinds:
        est, ctrl = (kind, "scripted") if study == "estimation" else ("fg_robust", kind)
        out.append(run_batch(_scenario(study, cfg), est, ctrl, cfg, [seed])[0])
    return out
