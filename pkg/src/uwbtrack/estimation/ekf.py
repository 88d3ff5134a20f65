"""Single-epoch initialization and the extended Kalman filter baseline."""

from __future__ import annotations

import math

import numpy as np

from ..core import SimConfig, make_transition_matrices
from ..sensing import BearingMeasurement, RangeMeasurement, angles_to_unit, wrap_angle
from .factors import GaussianBelief


def initialize_belief(pose, z_r: RangeMeasurement, z_b: BearingMeasurement, cfg: SimConfig) -> GaussianBelief:
    """Back-project one range/bearing pair into a 6-state Gaussian.

    Position covariance is the first-order image of the range and angle
    noise; velocity gets an independent ``sigma_v0`` spread.
    """
    if z_r is None or z_b is None:
        raise ValueError("initialization needs both a range and a bearing")
    R = np.asarray(pose.rotation, float)
    az, el = z_b.azimuth, z_b.elevation
    u = angles_to_unit((az, el))
    ca, sa, ce, se = math.cos(az), math.sin(az), math.cos(el), math.sin(el)
    du_daz = np.array([-ce * sa, ce * ca, 0.0])
    du_del = np.array([-se * ca, -se * sa, ce])
    J = R.T @ np.column_stack([u, z_r.z_r * du_daz, z_r.z_r * du_del])
    noise = np.zeros((3, 3))
    noise[0, 0] = z_r.sigma_r**2
    noise[1:, 1:] = z_b.cov
    cov = np.zeros((6, 6))
    cov[:3, :3] = J @ noise @ J.T
    # keeps the block invertible at the poles and for zero-noise inputs
    cov[:3, :3] += 1e-12 * np.eye(3)
    cov[3:, 3:] = cfg.sigma_v0**2 * np.eye(3)
    mean = np.concatenate([np.asarray(pose.position, float) + z_r.z_r * (R.T @ u), np.zeros(3)])
    return GaussianBelief(mean, cov)


def bearing_model(x: np.ndarray, p_R: np.ndarray, R: np.ndarray):
    """Predicted (azimuth, elevation) and their Jacobian w.r.t. the 6-state."""
    r_s = R @ (x[:3] - p_R)
    xs, ys, zs = r_s
    rho2 = xs * xs + ys * ys
    rho = math.sqrt(rho2)
    d2 = rho2 + zs * zs
    h = np.array([math.atan2(ys, xs), math.atan2(zs, rho)])
    d_s = np.array([
        [-ys / rho2, xs / rho2, 0.0],
        [-xs * zs / (rho * d2), -ys * zs / (rho * d2), rho / d2],
    ])
    H = np.zeros((2, 6))
    H[:, :3] = d_s @ R
    return h, H


def _update(x, P, innov, H, Rm):
    S = H @ P @ H.T + Rm
    if not np.all(np.isfinite(S)) or np.linalg.eigvalsh(np.atleast_2d(S))[0] <= 0:
        return x, P, False
    K = np.linalg.solve(S, H @ P).T
    x = x + K @ innov
    I_KH = np.eye(len(x)) - K @ H
    P = I_KH @ P @ I_KH.T + K @ Rm @ K.T
    return x, 0.5 * (P + P.T), True


def ekf_step(belief: GaussianBelief, pose, z_r: RangeMeasurement | None, z_b: BearingMeasurement | None,
             cfg: SimConfig) -> GaussianBelief:
    """Predict with the constant-velocity model, then update on range and angles."""
    A, _ = make_transition_matrices(cfg.dt)
    x = A @ belief.mean
    P = A @ belief.cov @ A.T + cfg.process_cov
    p_R = np.asarray(pose.position, float)
    R = np.asarray(pose.rotation, float)
    degraded = False

    if z_r is not None:
        diff = x[:3] - p_R
        d = float(np.linalg.norm(diff))
        if d > 1e-9:
            H = np.zeros((1, 6))
            H[0, :3] = diff / d
            x, P, ok = _update(x, P, np.array([z_r.z_r - d]), H, np.array([[z_r.sigma_r**2]]))
            if not ok:
                P, degraded = 2.0 * P, True
        else:
            degraded = True

    if z_b is not None:
        r_s = R @ (x[:3] - p_R)
        if math.hypot(r_s[0], r_s[1]) > 1e-9:
            h, H = bearing_model(x, p_R, R)
            innov = z_b.angles - h
            innov[0] = wrap_angle(innov[0])
            x, P, ok = _update(x, P, innov, H, np.asarray(z_b.cov, float))
            if not ok:
                P, degraded = 2.0 * P, True
        else:
            degraded = True
    return GaussianBelief(x, P, degraded)


class EkfTracker:
    """Stateful wrapper that initializes from the first measurement pair."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.belief: GaussianBelief | None = None

    def update(self, pose, z_r, z_b) -> GaussianBelief:
        if self.belief is None:
            self.belief = initialize_belief(pose, z_r, z_b, self.cfg)
        else:
            self.belief = ekf_step(self.belief, pose, z_r, z_b, self.cfg)
        return self.belief
