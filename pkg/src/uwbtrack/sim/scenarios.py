"""Target trajectories, UAV scripts and sensing schedules for the two studies."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..core import SimConfig, rotation_z, state6
from ..dynamics import TargetState, UavState

# (amplitude, angular rate, phase) per axis for the estimation-study path
_EST_PATH = (
    ((4.0, 0.21, 0.0), (1.5, 0.47, 0.3)),
    ((3.0, 0.17, 1.1), (1.0, 0.39, 2.0)),
    ((0.5, 0.23, 0.4), (0.25, 0.53, 1.7)),
)
_EST_CENTER = np.array([0.0, 0.0, 1.2])
_EST_STANDOFF = 3.5
_EST_ORBIT_RATE = 0.12
_EST_UAV_LIFT = 0.6


@dataclass
class Scenario:
    """Everything about an episode that is not random.

    ``target_accel`` holds the scripted acceleration applied over each step.
    ``uav_script`` maps a step index to the UAV state when the UAV path is
    scripted (open loop); None means the controller flies it. ``yaw_script``
    gives the sensor yaw per step, or None to point at the current estimate.
    ``degrade`` is the per-step multiplier on the bearing noise std (and on
    the reported std), ``degrade_range`` extends it to the range channel.
    """

    name: str
    horizon: int
    dt: float
    target_init: np.ndarray
    target_accel: np.ndarray
    uav_init: np.ndarray
    degrade: np.ndarray
    p_out: np.ndarray
    uav_script: Callable[[int], UavState] | None = None
    yaw_script: Callable[[int], float] | None = None
    degrade_range: bool = False
    a_max: float = math.inf

    def __post_init__(self):
        norms = np.linalg.norm(self.target_accel, axis=1)
        if np.any(norms > self.a_max + 1e-12):
            raise ValueError("scripted target acceleration exceeds a_max")

    @property
    def degraded_mask(self) -> np.ndarray:
        return self.degrade > 1.0

    def initial_target(self) -> TargetState:
        return TargetState(self.target_init)


def estimation_path(t):
    """Nominal smooth target path: position, velocity, acceleration at times ``t``."""
    t = np.asarray(t, float)
    p = np.zeros(t.shape + (3,))
    v = np.zeros_like(p)
    a = np.zeros_like(p)
    for axis, terms in enumerate(_EST_PATH):
        for amp, w, phi in terms:
            arg = w * t + phi
            p[..., axis] += amp * np.sin(arg)
            v[..., axis] += amp * w * np.cos(arg)
            a[..., axis] -= amp * w * w * np.sin(arg)
    p += _EST_CENTER
    return p, v, a


def _estimation_uav(t: float):
    p_t, v_t, _ = estimation_path(t)
    psi = math.pi + _EST_ORBIT_RATE * t
    off = _EST_STANDOFF * np.array([math.cos(psi), math.sin(psi), 0.0])
    off_dot = _EST_STANDOFF * _EST_ORBIT_RATE * np.array([-math.sin(psi), math.cos(psi), 0.0])
    p = p_t + off + np.array([0.0, 0.0, _EST_UAV_LIFT])
    return p, v_t + off_dot, psi + math.pi


def scenario_estimation(cfg: SimConfig, horizon: int | None = None) -> Scenario:
    """Smooth 3D target path watched from a scripted orbiting UAV (open loop)."""
    dt = cfg.dt
    horizon = cfg.estimation_horizon if horizon is None else horizon
    t = np.arange(horizon) * dt
    p0, v0, _ = estimation_path(0.0)
    # midpoint acceleration keeps the discrete path close to the analytic one
    _, _, a_mid = estimation_path(t + 0.5 * dt)
    a_max = max(cfg.a_max, float(np.max(np.linalg.norm(a_mid, axis=1))))
    if a_max > cfg.a_max:
        raise ValueError("estimation path acceleration exceeds a_max; raise a_max")
    p_u, v_u, _ = _estimation_uav(0.0)

    def uav_script(k: int) -> UavState:
        p, v, yaw = _estimation_uav(k * dt)
        return UavState(state6(p, v), rotation_z(yaw))

    def yaw_script(k: int) -> float:
        return _estimation_uav(k * dt)[2]

    return Scenario(
        name="estimation",
        horizon=horizon,
        dt=dt,
        target_init=state6(p0, v0),
        target_accel=a_mid,
        uav_init=state6(p_u, v_u),
        degrade=np.ones(horizon),
        p_out=np.full(horizon, cfg.p_out),
        uav_script=uav_script,
        yaw_script=yaw_script,
        a_max=cfg.a_max,
    )


@dataclass(frozen=True)
class ControlProfile:
    """Timing of the staged motion (seconds) and its cruise speed."""

    t_start: float = 3.0
    accel: float = 0.8
    cruise_speed: float = 1.5
    t_brake: float = 14.0
    degrade_start: float = 10.0
    degrade_end: float = 20.0
    uav_lift: float = 0.5


def scenario_control(cfg: SimConfig, profile: ControlProfile | None = None,
                     degrade_range: bool = True) -> Scenario:
    """Accelerate, cruise, brake at ``a_max``; sensing degrades mid-run.

    The UAV starts behind the target at the desired standoff, slightly above.
    """
    prof = profile or ControlProfile()
    dt, H = cfg.dt, cfg.horizon
    if prof.accel > cfg.a_max:
        raise ValueError("profile acceleration exceeds a_max")
    accel = np.zeros((H, 3))
    t_acc_end = prof.t_start + prof.cruise_speed / prof.accel
    t_stop = prof.t_brake + prof.cruise_speed / cfg.a_max
    for k in range(H):
        t0, t1 = k * dt, (k + 1) * dt
        # fraction of the step spent in each phase keeps velocity continuous
        acc = _overlap(t0, t1, prof.t_start, t_acc_end) * prof.accel
        brk = _overlap(t0, t1, prof.t_brake, t_stop) * cfg.a_max
        accel[k, 0] = (acc - brk) / dt
    degrade = np.ones(H)
    t = np.arange(H) * dt
    degrade[(t >= prof.degrade_start) & (t < prof.degrade_end)] = cfg.degrade_factor
    target0 = state6([0.0, 0.0, 1.0], [0.0, 0.0, 0.0])
    uav0 = state6([-cfg.d_star, 0.0, 1.0 + prof.uav_lift], [0.0, 0.0, 0.0])
    return Scenario(
        name="control",
        horizon=H,
        dt=dt,
        target_init=target0,
        target_accel=accel,
        uav_init=uav0,
        degrade=degrade,
        p_out=np.full(H, cfg.p_out),
        degrade_range=degrade_range,
        a_max=cfg.a_max,
    )


def _overlap(a0: float, a1: float, b0: float, b1: float) -> float:
    return max(0.0, min(a1, b1) - max(a0, b0))
