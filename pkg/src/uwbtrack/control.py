"""Covariance-aware CLF-CBF standoff controller.

Pipeline per step: confidence radius from the position covariance, dead-zoned
tracking errors, reference acceleration from the quadratic CLF, two
second-order barrier half-spaces on the estimated range, and a QP safety
filter with input and speed boxes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import DegenerateGeometry, SimConfig, chi2_quantile
from .estimation.factors import GaussianBelief
from .qpsolver import QpProblem, kkt_residuals, solve

D_FLOOR = 0.05
R_CLAMP_FRACTION = 0.45
SLACK_WEIGHT = 1e4
E_Z = np.array([0.0, 0.0, 1.0])

CONTROLLER_KINDS = ("ca_clf_cbf", "fixed_clf_cbf", "clf_only")


@dataclass(frozen=True)
class RelativeKinematics:
    d_hat: float
    n_hat: np.ndarray
    v_r_hat: float
    v_tau_hat: np.ndarray
    e_z_hat: float
    v_z_hat: float


@dataclass(frozen=True)
class SafetyEnvelope:
    R: float
    d_min_eff: float
    d_max_eff: float
    h_near: float
    h_far: float


@dataclass
class ControlCommand:
    u: np.ndarray
    qp_status: str
    active_constraints: set = field(default_factory=set)
    u_ref: np.ndarray | None = None
    R: float = 0.0
    envelope: SafetyEnvelope | None = None
    kinematics: RelativeKinematics | None = None
    kkt: dict | None = None


def confidence_radius(cov_pos, alpha_risk: float) -> float:
    """Sphere radius bounding the (1 - alpha) position confidence ellipsoid."""
    cov = np.asarray(cov_pos, float)
    lam_max = max(float(np.linalg.eigvalsh(0.5 * (cov + cov.T))[-1]), 0.0)
    return math.sqrt(chi2_quantile(3, 1.0 - alpha_risk) * lam_max)


def relative_kinematics(belief: GaussianBelief, uav) -> RelativeKinematics:
    rel = belief.position - uav.position
    d_hat = float(np.linalg.norm(rel))
    if d_hat <= D_FLOOR:
        raise DegenerateGeometry(f"estimated range {d_hat:.3g} m below the {D_FLOOR} m floor")
    n_hat = rel / d_hat
    v_rel = belief.velocity - uav.velocity
    v_r = float(n_hat @ v_rel)
    return RelativeKinematics(
        d_hat=d_hat,
        n_hat=n_hat,
        v_r_hat=v_r,
        v_tau_hat=v_rel - v_r * n_hat,
        e_z_hat=float(uav.position[2] - belief.position[2]),
        v_z_hat=float(uav.velocity[2] - belief.velocity[2]),
    )


def _deadzone(x: float, R: float) -> float:
    return max(abs(x) - R, 0.0) * float(np.sign(x))


def deadzone_errors(d_hat: float, e_z_hat: float, R: float, d_star: float) -> tuple[float, float]:
    if R < 0:
        raise ValueError("confidence radius must be non-negative")
    return _deadzone(d_hat - d_star, R), _deadzone(e_z_hat, R)


def clf_value(kin: RelativeKinematics, errors, cfg: SimConfig) -> float:
    e_r, e_z = errors
    return 0.5 * (cfg.k_r * e_r**2 + cfg.k_vr * kin.v_r_hat**2 + cfg.k_z * e_z**2
                  + cfg.k_vz * kin.v_z_hat**2 + cfg.k_tau * float(kin.v_tau_hat @ kin.v_tau_hat))


def reference_accel(kin: RelativeKinematics, errors, cfg: SimConfig) -> np.ndarray:
    e_r, e_z = errors
    return ((cfg.k_r * e_r + cfg.k_vr * kin.v_r_hat) * kin.n_hat
            + cfg.k_tau * kin.v_tau_hat
            - (cfg.k_z * e_z + cfg.k_vz * kin.v_z_hat) * E_Z)


def safety_envelope(d_hat: float, R: float, cfg: SimConfig) -> SafetyEnvelope:
    """Range limits tightened by ``R``; the shrink saturates so the limits never cross."""
    if R < 0:
        raise ValueError("confidence radius must be non-negative")
    R_c = min(R, R_CLAMP_FRACTION * (cfg.d_max - cfg.d_min))
    lo, hi = cfg.d_min + R_c, cfg.d_max - R_c
    return SafetyEnvelope(R=R, d_min_eff=lo, d_max_eff=hi, h_near=d_hat - lo, h_far=hi - d_hat)


def hocbf_halfspaces(kin: RelativeKinematics, env: SafetyEnvelope, cfg: SimConfig):
    """Rows ``(g, b)`` meaning ``g @ u <= b`` for the near and far barriers.

    Worst-case target acceleration along the line of sight is ``a_max``.
    """
    w = cfg.omega
    centripetal = float(kin.v_tau_hat @ kin.v_tau_hat) / kin.d_hat
    near = (kin.n_hat.copy(), -cfg.a_max + centripetal + 2 * w * kin.v_r_hat + w * w * env.h_near)
    far = (-kin.n_hat, -cfg.a_max - centripetal - 2 * w * kin.v_r_hat + w * w * env.h_far)
    return near, far


ROW_NAMES = ("near", "far", "u_max_x", "u_max_y", "u_max_z", "u_min_x", "u_min_y", "u_min_z",
             "v_max_x", "v_max_y", "v_max_z", "v_min_x", "v_min_y", "v_min_z")


def _box_rows(v: np.ndarray, cfg: SimConfig):
    eye = np.eye(3)
    G = np.vstack([eye, -eye, cfg.dt * eye, -cfg.dt * eye])
    h = np.concatenate([
        np.full(3, cfg.u_max), np.full(3, -cfg.u_min),
        cfg.v_max - v, cfg.v_max + v,
    ])
    return G, h


def _fallback(uav, cfg: SimConfig, R: float = 0.0) -> ControlCommand:
    u = np.clip(-cfg.k_vr * uav.velocity, cfg.u_min, cfg.u_max)
    return ControlCommand(u=u, qp_status="fallback", R=R)


def compute_control(belief: GaussianBelief, uav, cfg: SimConfig, kind: str = "ca_clf_cbf") -> ControlCommand:
    """Safety-filtered acceleration command for one step.

    ``kind`` selects the covariance-aware controller, the fixed-margin variant
    (zero radius in the envelope) or the CLF-only variant (no barrier rows).
    """
    if kind not in CONTROLLER_KINDS:
        raise ValueError(f"unknown controller kind {kind}")
    R = confidence_radius(belief.position_cov, cfg.alpha_risk)
    try:
        kin = relative_kinematics(belief, uav)
    except DegenerateGeometry:
        return _fallback(uav, cfg, R)
    errors = deadzone_errors(kin.d_hat, kin.e_z_hat, R, cfg.d_star)
    u_ref = reference_accel(kin, errors, cfg)
    env = safety_envelope(kin.d_hat, 0.0 if kind == "fixed_clf_cbf" else R, cfg)

    G_box, h_box = _box_rows(uav.velocity, cfg)
    if kind == "clf_only":
        G, h, names = G_box, h_box, ROW_NAMES[2:]
    else:
        (g_n, b_n), (g_f, b_f) = hocbf_halfspaces(kin, env, cfg)
        G = np.vstack([g_n, g_f, G_box])
        h = np.concatenate([[b_n, b_f], h_box])
        names = ROW_NAMES

    try:
        problem = QpProblem(np.eye(3), -u_ref, G, h)
        sol = solve(problem)
    except (np.linalg.LinAlgError, ValueError):
        cmd = _fallback(uav, cfg, R)
        cmd.u_ref, cmd.envelope, cmd.kinematics = u_ref, env, kin
        return cmd
    status = "optimal"
    if sol.status == "infeasible" and kind != "clf_only":
        sol, problem = _solve_relaxed(u_ref, G, h)
        status = "relaxed"
    if sol.status != "optimal":
        cmd = _fallback(uav, cfg, R)
        cmd.u_ref, cmd.envelope, cmd.kinematics = u_ref, env, kin
        return cmd
    u = sol.x[:3]
    # a tiny clip guards solver rounding against the hard actuator box
    u = np.clip(u, cfg.u_min, cfg.u_max)
    return ControlCommand(
        u=u,
        qp_status=status,
        active_constraints={names[i] if i < len(names) else "slack" for i in sol.active},
        u_ref=u_ref,
        R=R,
        envelope=env,
        kinematics=kin,
        kkt=kkt_residuals(problem, sol.x, sol.duals),
    )


def _solve_relaxed(u_ref, G, h):
    """Soften the two barrier rows with one shared non-negative slack."""
    m = G.shape[0]
    Gs = np.zeros((m + 1, 4))
    Gs[:m, :3] = G
    Gs[:2, 3] = -1.0
    Gs[m, 3] = -1.0
    hs = np.concatenate([h, [0.0]])
    P = np.diag([1.0, 1.0, 1.0, SLACK_WEIGHT])
    q = np.concatenate([-u_ref, [0.0]])
    problem = QpProblem(P, q, Gs, hs)
    return solve(problem), problem
