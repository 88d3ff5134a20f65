"""Closed-loop (or scripted) episode execution and per-run metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..control import compute_control, confidence_radius
from ..core import DegenerateGeometry, SimConfig, rng_stream, rotation_z
from ..dynamics import TargetState, UavState, step_target, step_uav
from ..estimation import EkfTracker, GaussianBelief, initialize_belief
from ..estimation.window import WindowBatch
from ..sensing import angles_to_unit, measure_bearing, measure_range, true_bearing_angles, true_range
from .scenarios import Scenario

ESTIMATOR_KINDS = ("ekf", "fg_plain", "fg_robust")
EPISODE_CONTROLLERS = ("clf_only", "fixed_clf_cbf", "ca_clf_cbf", "scripted")

# random stream ids; each noise source gets its own so estimators see identical data
_STREAM_TARGET, _STREAM_RANGE, _STREAM_BEARING = 0, 1, 2


@dataclass
class EpisodeTrace:
    """Per-step record arrays, one row per step."""

    target: np.ndarray
    uav: np.ndarray
    est: np.ndarray
    est_cov_pos: np.ndarray
    smoothed: np.ndarray
    R: np.ndarray
    u: np.ndarray
    qp_status: list
    h_near: np.ndarray
    h_far: np.ndarray
    d_true: np.ndarray
    d_hat: np.ndarray
    z_r: np.ndarray
    z_angles: np.ndarray
    degrade: np.ndarray
    estimator: str
    controller: str
    seed: int

    @property
    def steps(self) -> int:
        return len(self.d_true)


@dataclass
class RunMetrics:
    rmse: float
    rmse_online: float
    violation_steps: int
    min_d: float
    max_d: float
    mean_R: float
    max_R: float
    n_relaxed: int
    n_fallback: int
    coverage: float
    n_covered: int
    n_checked: int
    r_ratio: float

    FIELDS = ("rmse", "rmse_online", "violation_steps", "min_d", "max_d", "mean_R", "max_R",
              "n_relaxed", "n_fallback", "coverage", "n_covered", "n_checked", "r_ratio")


def _yaw_toward(p_from: np.ndarray, p_to: np.ndarray, fallback: float) -> float:
    dx, dy = p_to[0] - p_from[0], p_to[1] - p_from[1]
    if math.hypot(dx, dy) < 1e-6:
        return fallback
    return math.atan2(dy, dx)


class _BatchEstimator:
    """One estimator per run: EKFs side by side, or a shared window batch."""

    def __init__(self, kind: str, cfg: SimConfig, batch: int):
        if kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator {kind}")
        self.kind = kind
        self.cfg = cfg
        self.batch = batch
        if kind == "ekf":
            self.ekfs = [EkfTracker(cfg) for _ in range(batch)]
            self.window = None
        else:
            self.ekfs = None
            self.window = WindowBatch(cfg, batch, robust=(kind == "fg_robust"))

    def update(self, poses, z_rs, z_bs) -> list[GaussianBelief | None]:
        if self.window is None:
            out = []
            for ekf, pose, z_r, z_b in zip(self.ekfs, poses, z_rs, z_bs):
                if ekf.belief is None and (z_r is None or z_b is None):
                    out.append(None)
                else:
                    out.append(ekf.update(pose, z_r, z_b))
            return out
        win = self.window
        p_R = np.array([p.position for p in poses])
        R = np.array([p.rotation for p in poses])
        if win.prior_mean is None:
            if any(z is None for z in z_rs) or any(z is None for z in z_bs):
                raise DegenerateGeometry("first step needs a range and a bearing in every run")
            init = [initialize_belief(p, zr, zb, self.cfg) for p, zr, zb in zip(poses, z_rs, z_bs)]
            win.set_prior(np.array([b.mean for b in init]), np.array([np.linalg.inv(b.cov) for b in init]))
            win.push(p_R, R)
        else:
            z_r = np.array([np.nan if z is None else z.z_r for z in z_rs])
            w_r = np.array([0.0 if z is None else 1.0 / z.sigma_r**2 for z in z_rs])
            z_b = np.array([np.full(3, np.nan) if z is None else angles_to_unit(z) for z in z_bs])
            W_b = np.array([np.zeros((2, 2)) if z is None else np.linalg.inv(z.cov) for z in z_bs])
            win.push(p_R, R, z_r=z_r, w_r=w_r, z_b=z_b, W_b=W_b)
        est = win.optimize(marginals="last")
        return [GaussianBelief(est.means[b, -1].copy(), est.covs[b], bool(est.degraded[b]))
                for b in range(self.batch)]

    def smoothed(self, online: np.ndarray) -> np.ndarray:
        """``(B, H, 6)`` fixed-lag smoothed means (online estimates for the EKF)."""
        out = online.copy()
        if self.window is not None:
            for step, means in self.window.smoothed_trajectory():
                out[:, step] = means
        return out


def run_episode(scenario: Scenario, estimator_kind: str, controller_kind: str, cfg: SimConfig,
                seed: int) -> EpisodeTrace:
    """Propagate truth, sense, estimate, control and actuate for every step."""
    return run_batch(scenario, estimator_kind, controller_kind, cfg, [seed])[0]


def run_batch(scenario: Scenario, estimator_kind: str, controller_kind: str, cfg: SimConfig,
              seeds) -> list[EpisodeTrace]:
    """Run one episode per seed in lockstep; each trace matches ``run_episode`` for its seed."""
    if controller_kind not in EPISODE_CONTROLLERS:
        raise ValueError(f"unknown controller {controller_kind}")
    if (controller_kind == "scripted") != (scenario.uav_script is not None):
        raise ValueError("scripted controller goes with a scripted-UAV scenario and vice versa")
    seeds = [int(s) for s in seeds]
    nb, H = len(seeds), scenario.horizon
    rngs = [(rng_stream(s, _STREAM_TARGET), rng_stream(s, _STREAM_RANGE), rng_stream(s, _STREAM_BEARING))
            for s in seeds]
    noise_std = cfg.truth_noise_scale * np.sqrt(np.diag(cfg.process_cov))
    estimator = _BatchEstimator(estimator_kind, cfg, nb)
    bearing_cfgs: dict[float, SimConfig] = {}

    targets = [scenario.initial_target() for _ in seeds]
    if scenario.uav_script is not None:
        uavs = [scenario.uav_script(0) for _ in seeds]
    else:
        yaw0 = _yaw_toward(scenario.uav_init[:3], scenario.target_init[:3], 0.0)
        uavs = [UavState(scenario.uav_init, rotation_z(yaw0)) for _ in seeds]
    yaws = [_yaw_toward(u.position, t.position, 0.0) for u, t in zip(uavs, targets)]

    rec = {name: np.full((nb, H, 6), np.nan) for name in ("target", "uav", "est")}
    cov_pos = np.full((nb, H, 3, 3), np.nan)
    vecs = {name: np.full((nb, H), np.nan) for name in ("R", "h_near", "h_far", "d_true", "d_hat", "z_r")}
    angles = np.full((nb, H, 2), np.nan)
    u_rec = np.zeros((nb, H, 3))
    statuses = [[] for _ in seeds]

    for k in range(H):
        scale = float(scenario.degrade[k])
        p_out = float(scenario.p_out[k])
        if p_out not in bearing_cfgs:
            bearing_cfgs[p_out] = cfg.replace(p_out=p_out)
        cfg_k = bearing_cfgs[p_out]
        sigma_r = cfg.sigma_r * (scale if scenario.degrade_range else 1.0)
        z_rs, z_bs = [], []
        for b in range(nb):
            target, uav = targets[b], uavs[b]
            rec["target"][b, k] = target.state
            rec["uav"][b, k] = uav.state
            _, rng_r, rng_b = rngs[b]
            try:
                d = true_range(uav.position, target.position)
                z_r = measure_range(d, rng_r, sigma_r)
                truth_angles = true_bearing_angles(uav.rotation, uav.position, target.position)
                z_b = measure_bearing(truth_angles, rng_b, cfg_k, scale=scale)
            except DegenerateGeometry:
                d, z_r, z_b = 0.0, None, None
            vecs["d_true"][b, k] = d
            if z_r is not None:
                vecs["z_r"][b, k] = z_r.z_r
            if z_b is not None:
                angles[b, k] = z_b.angles
            z_rs.append(z_r)
            z_bs.append(z_b)

        beliefs = estimator.update(uavs, z_rs, z_bs)

        for b in range(nb):
            belief, uav = beliefs[b], uavs[b]
            if belief is not None:
                rec["est"][b, k] = belief.mean
                cov_pos[b, k] = belief.position_cov
                vecs["R"][b, k] = confidence_radius(belief.position_cov, cfg.alpha_risk)
                vecs["d_hat"][b, k] = float(np.linalg.norm(belief.position - uav.position))
            if controller_kind == "scripted":
                statuses[b].append("scripted")
                uav_next = scenario.uav_script(k + 1)
            else:
                if belief is None:
                    u = np.clip(-cfg.k_vr * uav.velocity, cfg.u_min, cfg.u_max)
                    statuses[b].append("fallback")
                else:
                    cmd = compute_control(belief, uav, cfg, kind=controller_kind)
                    u = cmd.u
                    statuses[b].append(cmd.qp_status)
                    if cmd.envelope is not None:
                        vecs["h_near"][b, k] = cmd.envelope.h_near
                        vecs["h_far"][b, k] = cmd.envelope.h_far
                    yaws[b] = _yaw_toward(uav.position, belief.position, yaws[b])
                u_rec[b, k] = u
                uav_next = step_uav(uav, u, cfg.dt, cfg.u_min, cfg.u_max, rotation=rotation_z(yaws[b]))
            noise = noise_std * rngs[b][0].standard_normal(6)
            targets[b] = step_target(targets[b], scenario.target_accel[k], cfg.dt, noise, a_max=scenario.a_max)
            uavs[b] = uav_next

    smoothed = estimator.smoothed(rec["est"])
    degrade = np.asarray(scenario.degrade, float)
    return [
        EpisodeTrace(
            target=rec["target"][b], uav=rec["uav"][b], est=rec["est"][b], est_cov_pos=cov_pos[b],
            smoothed=smoothed[b], R=vecs["R"][b], u=u_rec[b], qp_status=statuses[b],
            h_near=vecs["h_near"][b], h_far=vecs["h_far"][b], d_true=vecs["d_true"][b],
            d_hat=vecs["d_hat"][b], z_r=vecs["z_r"][b], z_angles=angles[b], degrade=degrade.copy(),
            estimator=estimator_kind, controller=controller_kind, seed=seeds[b],
        )
        for b in range(nb)
    ]


def _rmse(est: np.ndarray, truth: np.ndarray) -> float:
    err = np.linalg.norm(est[:, :3] - truth[:, :3], axis=1)
    err = err[np.isfinite(err)]
    return float(np.sqrt(np.mean(err**2))) if err.size else math.nan


def degraded_r_ratio(trace: EpisodeTrace) -> float:
    """Median R inside the degraded-sensing window over the median outside it."""
    inside = trace.degrade > 1.0
    r_in = trace.R[inside & np.isfinite(trace.R)]
    r_out = trace.R[~inside & np.isfinite(trace.R)]
    if not r_in.size or not r_out.size:
        return math.nan
    return float(np.median(r_in) / np.median(r_out))


def compute_metrics(trace: EpisodeTrace, cfg: SimConfig) -> RunMetrics:
    """Position RMSE uses the smoothed trajectory (identical to online for the EKF).

    Coverage compares the online error against the online confidence radius.
    """
    d = trace.d_true
    err = np.linalg.norm(trace.est[:, :3] - trace.target[:, :3], axis=1)
    ok = np.isfinite(err) & np.isfinite(trace.R)
    covered = int(np.sum(err[ok] <= trace.R[ok]))
    return RunMetrics(
        rmse=_rmse(trace.smoothed, trace.target),
        rmse_online=_rmse(trace.est, trace.target),
        violation_steps=int(np.sum((d < cfg.d_min) | (d > cfg.d_max))),
        min_d=float(np.min(d)),
        max_d=float(np.max(d)),
        mean_R=float(np.nanmean(trace.R)),
        max_R=float(np.nanmax(trace.R)),
        n_relaxed=sum(s == "relaxed" for s in trace.qp_status),
        n_fallback=sum(s == "fallback" for s in trace.qp_status),
        coverage=covered / int(ok.sum()) if ok.any() else math.nan,
        n_covered=covered,
        n_checked=int(ok.sum()),
        r_ratio=degraded_r_ratio(trace),
    )
