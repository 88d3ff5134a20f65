"""Factor definitions, Cauchy loss and residual/Jacobian kernels.

Kernels take a leading sample axis so the window can evaluate every range or
bearing factor in one numpy call; ``evaluate_factor`` runs the same kernels on
a single factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from ..sensing import SMALL_ANGLE, cross_batch, tangent_basis_batch

if TYPE_CHECKING:
    from .window import FactorGraphWindow

FACTOR_KINDS = ("prior", "dynamics", "range", "bearing", "position")
_MIN_DIST = 1e-9
_EYE3 = np.eye(3)


def cauchy_loss(s, c: float):
    """Cauchy robust loss of a squared whitened residual ``s``."""
    c2 = c * c
    return c2 * np.log1p(np.asarray(s, float) / c2)


def cauchy_weight(s, c: float):
    """Derivative of :func:`cauchy_loss` w.r.t. ``s``; the IRLS weight."""
    return 1.0 / (1.0 + np.asarray(s, float) / (c * c))


@dataclass
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray
    degraded: bool = False

    @property
    def position(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[3:]

    @property
    def position_cov(self) -> np.ndarray:
        return self.cov[:3, :3]


@dataclass
class Factor:
    """One term of the MAP objective.

    ``info`` is the inverse noise covariance of the residual. ``pose`` carries
    the UAV position and rotation for range/bearing factors. ``measurement`` is
    the prior mean, the range, the unit bearing or the position fix.
    """

    kind: str
    nodes: tuple[int, ...]
    measurement: np.ndarray | float | None
    info: np.ndarray
    robust: bool = False
    pose: tuple[np.ndarray, np.ndarray] | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FACTOR_KINDS:
            raise ValueError(f"unknown factor kind {self.kind}")
        if self.robust and self.kind != "bearing":
            raise ValueError("only bearing factors may be robust")


def range_kernel(P: np.ndarray, p_R: np.ndarray, z: np.ndarray):
    """Residuals ``z - |p_T - p_R|`` and d/dp_T (n,3); also a validity mask."""
    diff = P - p_R
    d = np.linalg.norm(diff, axis=1)
    valid = d > _MIN_DIST
    d_safe = np.where(valid, d, 1.0)
    r = z - d
    J = -diff / d_safe[:, None]
    return r, J, valid


def bearing_kernel(P: np.ndarray, p_R: np.ndarray, R: np.ndarray, z: np.ndarray,
                   B: np.ndarray | None = None, jac: bool = True):
    """Tangent-plane bearing residuals ``B' Log_h(z)`` and d/dp_T (n,2,3).

    ``B`` defaults to the tangent basis at each predicted bearing ``h``; pass
    it to hold the basis fixed while perturbing the state (the Jacobian never
    differentiates ``B``). Returns ``(r, J, B, valid)``; rows with coincident
    points or antipodal bearings are invalid and zeroed.
    """
    diff = (R @ (P - p_R)[:, :, None])[:, :, 0]
    dist = np.sqrt(np.sum(diff * diff, axis=1))
    valid = dist > _MIN_DIST
    if not valid.all():
        dist = np.where(valid, dist, 1.0)
    h = diff / dist[:, None]
    c = np.sum(h * z, axis=1)
    cr = cross_batch(h, z)
    s = np.sqrt(np.sum(cr * cr, axis=1))
    theta = np.arctan2(s, c)
    small = theta < SMALL_ANGLE
    antipodal = (s < 1e-9) & (c < 0)
    # antipodal rows are invalid; route them through the safe branch too
    small |= antipodal
    any_small = small.any()
    if any_small:
        valid &= ~antipodal
        s_safe = np.where(small, 1.0, s)
        f = np.where(small, 1.0, theta / s_safe)
    else:
        s_safe = s
        f = theta / s
    if B is None:
        B = tangent_basis_batch(h)
    d = z - c[:, None] * h
    log = f[:, None] * d
    if any_small:
        log[small] = (z - h)[small]
    Bt = B.transpose(0, 2, 1)
    r = (Bt @ log[:, :, None])[:, :, 0]
    if not jac:
        if not valid.all():
            r[~valid] = 0.0
        return r, None, B, valid
    # dLog/dh = -(f'/sin) d z' - f (c I + h z'); with B'h = 0 and the tangent
    # projection of dh/dp this collapses to the expression below
    fp_s = (s - theta * c) / s_safe**3
    fc = f * c
    if any_small:
        fp_s[small] = 0.0
        fc[small] = 1.0
    M = (fp_s[:, None] * (Bt @ z[:, :, None])[:, :, 0])[:, :, None] * d[:, None, :] + fc[:, None, None] * Bt
    J = M @ R
    J /= -dist[:, None, None]
    if not valid.all():
        r[~valid] = 0.0
        J[~valid] = 0.0
    return r, J, B, valid


def bearing_angle_kernel(P: np.ndarray, p_R: np.ndarray, z_world: np.ndarray, jac: bool = True):
    """Squared bearing angle error and its derivatives w.r.t. p_T.

    With isotropic bearing information ``w I`` the whitened bearing cost is
    ``w theta^2`` whatever tangent basis is used, so no basis is built and the
    angle is taken in the world frame (``z_world = R' z``). Returns
    ``(theta2, grad, gn, hess, valid)`` where ``grad`` and ``hess`` are the
    gradient and Hessian of ``theta^2 / 2`` and ``gn`` is ``J'J`` of the
    tangent residual (its Gauss-Newton curvature).
    """
    z = z_world
    q = P - p_R
    rho = np.sqrt(np.sum(q * q, axis=1))
    valid = rho > _MIN_DIST
    if not valid.all():
        rho = np.where(valid, rho, 1.0)
    h = q / rho[:, None]
    c = np.sum(h * z, axis=1)
    cr = cross_batch(h, z)
    s = np.sqrt(np.sum(cr * cr, axis=1))
    theta = np.arctan2(s, c)
    small = theta < SMALL_ANGLE
    antipodal = (s < 1e-9) & (c < 0)
    small |= antipodal
    any_small = small.any()
    valid &= ~antipodal
    theta2 = theta * theta
    if not jac:
        return theta2 * valid, None, None, None, valid
    s_safe = np.where(small, 1.0, s) if any_small else s
    f = theta / s_safe
    a = (s - theta * c) / s_safe**3
    kappa = (1.0 - theta * c / s_safe) / s_safe**2
    if any_small:
        f[small] = 1.0
        a[small] = 0.0
        kappa[small] = 1.0 / 3.0
    b = f * c
    d = z - c[:, None] * h
    inv_rho2 = (1.0 / (rho * rho))[:, None, None]
    grad = -(f / rho)[:, None] * d
    dd = d[:, :, None] * d[:, None, :]
    proj = _EYE3 - h[:, :, None] * h[:, None, :]
    gn = ((a * a * s * s + 2.0 * a * b)[:, None, None] * dd + (b * b)[:, None, None] * proj) * inv_rho2
    dh = d[:, :, None] * h[:, None, :]
    hess = (kappa[:, None, None] * dd + f[:, None, None] * (dh + dh.transpose(0, 2, 1))
            + (f * c)[:, None, None] * proj) * inv_rho2
    if not valid.all():
        bad = ~valid
        theta2[bad] = 0.0
        grad[bad] = 0.0
        gn[bad] = 0.0
        hess[bad] = 0.0
    return theta2, grad, gn, hess, valid


def _pos_jac(J3: np.ndarray) -> np.ndarray:
    J = np.zeros(J3.shape[:-1] + (6,))
    J[..., :3] = J3
    return J


def evaluate_factor(f: Factor, window: "FactorGraphWindow", basis: np.ndarray | None = None, states=None):
    """Residual and Jacobian blocks (w.r.t. full 6-states) for one factor.

    ``states`` overrides the window means (indexable by node); ``basis`` fixes
    the bearing tangent basis. Returns ``(residual, {node: J})``; the residual
    is None when the geometry is degenerate.
    """
    X = window.means if states is None else states
    if f.kind == "prior":
        (i,) = f.nodes
        return X[i] - f.measurement, {i: np.eye(6)}
    if f.kind == "dynamics":
        i, j = f.nodes
        A = window.A
        return X[j] - A @ X[i], {i: -A, j: np.eye(6)}
    if f.kind == "position":
        (i,) = f.nodes
        return f.measurement - X[i][:3], {i: _pos_jac(-np.eye(3))}
    (i,) = f.nodes
    p_R, R = f.pose
    P = np.asarray(X[i][:3], float)[None]
    if f.kind == "range":
        r, J, valid = range_kernel(P, p_R[None], np.array([f.measurement]))
        if not valid[0]:
            return None, {}
        return r, {i: _pos_jac(J)}
    r, J, _, valid = bearing_kernel(P, p_R[None], R[None], np.asarray(f.measurement)[None],
                                    None if basis is None else np.asarray(basis)[None])
    if not valid[0]:
        return None, {}
    return r[0], {i: _pos_jac(J[0])}
