"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one ``[ACCEPT n] PASS|FAIL ...`` line (visible with or
without ``-s``). The Monte-Carlo studies run once per module.
"""

import math
import time

import numpy as np
import pytest

import test_factors
from oracles import enumerate_qp, rts_smoother
from test_qpsolver import _random_feasible
from test_window import _linear_problem, _linear_window
from uwbtrack.cli import main
from uwbtrack.control import hocbf_halfspaces, relative_kinematics, safety_envelope
from uwbtrack.core import SimConfig, chi2_quantile
from uwbtrack.dynamics import UavState
from uwbtrack.estimation import GaussianBelief, cauchy_loss
from uwbtrack.qpsolver import solve
from uwbtrack.sim import montecarlo as mc

CFG = SimConfig()
BASE_SEED = 2024
N_RUNS = 50


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[ACCEPT {n}] {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    cells = mc.sweep_outliers(CFG, base_seed=BASE_SEED, n_runs=N_RUNS, jobs=1)
    return cells, time.perf_counter() - t0


@pytest.fixture(scope="module")
def control():
    t0 = time.perf_counter()
    cells = mc.control_study(CFG, base_seed=BASE_SEED, n_runs=N_RUNS, jobs=1)
    return {c.controller: c for c in cells}, time.perf_counter() - t0


def test_1_outlier_sweep_ordering(sweep, report):
    cells, elapsed = sweep
    rmse = {(c.p_out, c.estimator): c.mean_rmse for c in cells}
    grid = CFG.p_grid_values
    ordered = all(rmse[p, "fg_robust"] < rmse[p, "fg_plain"] < rmse[p, "ekf"] for p in grid if p >= 0.1)
    robust = [rmse[p, "fg_robust"] for p in grid]
    non_strict = sum(b <= a for a, b in zip(robust, robust[1:]))
    ok = ordered and robust[-1] > robust[0] and non_strict <= 1 and elapsed < 300
    table = "; ".join(f"p={p:g}: " + "/".join(f"{rmse[p, e]:.3f}" for e in ("fg_robust", "fg_plain", "ekf"))
                      for p in grid)
    assert report(1, ok, f"robust/plain/ekf mean RMSE [{table}] non-strict pairs={non_strict} "
                         f"time={elapsed:.0f}s")


def test_2_control_violation_rates(control, report):
    cells, elapsed = control
    rate = {k: float(np.mean(c.values("violation_steps") >= 1)) for k, c in cells.items()}
    ca_clean = 1.0 - rate["ca_clf_cbf"]
    ok = (rate["clf_only"] >= 0.8 and ca_clean >= 0.95
          and rate["ca_clf_cbf"] < rate["fixed_clf_cbf"] < rate["clf_only"] and elapsed < 180)
    assert report(2, ok, f"violating-run rate clf_only={rate['clf_only']:.2f} fixed={rate['fixed_clf_cbf']:.2f} "
                         f"ca={rate['ca_clf_cbf']:.2f} time={elapsed:.0f}s")


def test_3_radius_grows_in_degraded_window(control, report):
    cells, _ = control
    ratios = cells["ca_clf_cbf"].values("r_ratio")
    frac = float(np.mean(ratios >= 1.5))
    assert report(3, frac >= 0.9, f"runs with median-R ratio >= 1.5: {frac:.2f} (min ratio {np.min(ratios):.2f})")


def test_4_confidence_radius_coverage(report):
    cfg = CFG.replace(estimators="fg_robust", alpha_risk=0.05)
    (cell,) = mc.coverage_study(cfg, base_seed=BASE_SEED, n_runs=N_RUNS)
    cov = mc.pooled_coverage(cell)
    assert report(4, cov >= 0.93, f"pooled coverage at p_out=0, alpha=0.05: {cov:.4f}")


def test_5a_window_map_vs_rts(report):
    worst = 0.0
    for seed in range(20):
        A, m0, P0, zs, Rs = _linear_problem(15, seed)
        xs, _ = rts_smoother(m0, P0, A, CFG.process_cov, zs, Rs)
        means = [b.mean for b in _linear_window(20, m0, P0, zs, Rs).optimize()]
        worst = max(worst, float(np.max(np.abs(np.array(means) - xs))))
    assert report("5a", worst <= 1e-8, f"max |window MAP - RTS| = {worst:.2e}")


def test_5b_qp_vs_enumeration(report):
    rng = np.random.default_rng(55)
    worst = 0.0
    for _ in range(10**4):
        p = _random_feasible(rng)
        worst = max(worst, float(np.max(np.abs(solve(p).x - enumerate_qp(p.P, p.q, p.G, p.h)))))
    assert report("5b", worst <= 1e-6, f"max |x - x_enum| over 1e4 QPs = {worst:.2e}")


def test_5c_jacobians_vs_fd(report):
    worst = 0.0
    for p_T, p_R, R, z, rng in test_factors._configs(77):
        zr = np.array([np.linalg.norm(p_T - p_R) + rng.normal(0, 0.1)])
        _, Jr, _ = test_factors.range_kernel(p_T[None], p_R[None], zr)
        fd = test_factors.central_jacobian(lambda p: test_factors.range_kernel(p[None], p_R[None], zr)[0], p_T)
        worst = max(worst, test_factors._rel_err(Jr, fd))
        _, Jb, B, _ = test_factors.bearing_kernel(p_T[None], p_R[None], R[None], z[None])
        fd = test_factors.central_jacobian(
            lambda p: test_factors.bearing_kernel(p[None], p_R[None], R[None], z[None], B=B, jac=False)[0][0], p_T)
        worst = max(worst, test_factors._rel_err(Jb[0], fd))
    assert report("5c", worst <= 1e-5, f"max relative Jacobian error over 1e3 configurations = {worst:.2e}")


def test_6_spot_values(report):
    chi = chi2_quantile(3, 0.95)
    loss = cauchy_loss(1.0, 1.0)
    cfg = CFG.replace(d_min=1.5, omega=1.0, a_max=1.0)
    kin = relative_kinematics(GaussianBelief(np.array([2.0, 0, 0, 0, 0, 0]), np.eye(6)), UavState(np.zeros(6)))
    (_, b_near), _ = hocbf_halfspaces(kin, safety_envelope(kin.d_hat, 0.0, cfg), cfg)
    ok = abs(chi - 7.81473) <= 1e-4 and abs(loss - math.log(2)) <= 1e-12 and b_near == -0.5
    assert report(6, ok, f"chi2(3,0.95)={chi:.6f} cauchy(1,1)={loss:.15f} hocbf near bound={b_near}")


def test_7_cli_determinism(tmp_path, report):
    small = ["--set", "n_runs=12", "--set", "estimation_horizon=60", "--set", "horizon=200"]
    files = {"sweep-outliers": ("rmse_sweep.csv", "summary.csv"),
             "sim-estimators": ("rmse_sweep.csv", "summary.csv", "estimate_trace.csv"),
             "sim-control": ("summary.csv", "control_trace.csv"),
             "coverage": ("coverage.csv", "summary.csv")}
    same = True
    for cmd, names in files.items():
        outs = []
        for i, jobs in enumerate(("1", "1", "4")):
            out = tmp_path / f"{cmd}-{i}"
            assert main([cmd, "--seed", "7", "--jobs", jobs, "--out", str(out), *small]) == 0
            outs.append(out)
        for name in names:
            data = [(o / name).read_bytes() for o in outs]
            same &= data[0] == data[1] == data[2]
    assert report(7, same, "byte-identical CSVs for all commands across reruns and --jobs 1/4")
