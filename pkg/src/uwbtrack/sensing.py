"""UWB range/angle measurement generation and bearing geometry on the unit sphere.

The batched kernels at the bottom (``*_batch``) are what the estimator uses;
the scalar functions above wrap them or mirror them for single samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DegenerateGeometry, SimConfig

SMALL_ANGLE = 1e-6
_COINCIDENT = 1e-12
_EYE3 = np.eye(3)


@dataclass(frozen=True)
class RangeMeasurement:
    z_r: float
    sigma_r: float


@dataclass(frozen=True)
class BearingMeasurement:
    azimuth: float
    elevation: float
    cov: np.ndarray

    @property
    def angles(self) -> np.ndarray:
        return np.array([self.azimuth, self.elevation])


def wrap_angle(a):
    """Wrap to (-pi, pi]; angles already in range come back unchanged."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + math.pi, 2.0 * math.pi) - math.pi
    w = np.where(w <= -math.pi, w + 2.0 * math.pi, w)
    w = np.where((a > -math.pi) & (a <= math.pi), a, w)
    return w if w.ndim else float(w)


def true_range(p_R, p_T) -> float:
    d = float(np.linalg.norm(np.asarray(p_T, float) - np.asarray(p_R, float)))
    if d < _COINCIDENT:
        raise DegenerateGeometry("target coincides with the UAV")
    return d


def measure_range(d: float, rng: np.random.Generator, sigma_r: float) -> RangeMeasurement:
    if not d > 0:
        raise ValueError("range must be positive")
    noise = sigma_r * rng.standard_normal() if sigma_r > 0 else 0.0
    return RangeMeasurement(d + noise, sigma_r)


def true_bearing_angles(rotation, p_R, p_T) -> tuple[float, float]:
    r_s = np.asarray(rotation, float) @ (np.asarray(p_T, float) - np.asarray(p_R, float))
    if np.linalg.norm(r_s) < _COINCIDENT:
        raise DegenerateGeometry("target coincides with the UAV")
    horiz = math.hypot(r_s[0], r_s[1])
    if horiz == 0.0:
        raise DegenerateGeometry("target on the sensor z-axis; azimuth undefined")
    return math.atan2(r_s[1], r_s[0]), math.atan2(r_s[2], horiz)


def measure_bearing(truth, rng: np.random.Generator, cfg: SimConfig, scale: float = 1.0) -> BearingMeasurement:
    """Noisy azimuth/elevation with outlier mixture.

    ``scale`` multiplies the nominal noise std and the reported covariance
    (sensing degradation). Outlier samples use ``cfg.sigma_out`` and are not
    flagged: the reported covariance is always the nominal one.
    """
    az, el = truth
    sig = scale * np.array([cfg.sigma_az, cfg.sigma_el])
    # draw both branches so the stream advances identically regardless of outcome
    is_outlier = rng.random() < cfg.p_out
    gauss = rng.standard_normal(2)
    noise = gauss * (cfg.sigma_out if is_outlier else sig)
    return BearingMeasurement(
        azimuth=wrap_angle(az + noise[0]),
        elevation=float(np.clip(el + noise[1], -math.pi / 2, math.pi / 2)),
        cov=np.diag(sig**2),
    )


def angles_to_unit(b) -> np.ndarray:
    if isinstance(b, BearingMeasurement):
        az, el = b.azimuth, b.elevation
    else:
        az, el = b
    ce = math.cos(el)
    return np.array([ce * math.cos(az), ce * math.sin(az), math.sin(el)])


def unit_to_angles(n) -> tuple[float, float]:
    n = np.asarray(n, float)
    return math.atan2(n[1], n[0]), math.atan2(n[2], math.hypot(n[0], n[1]))


def predicted_unit_bearing(rotation, p_R, p_T) -> np.ndarray:
    r_s = np.asarray(rotation, float) @ (np.asarray(p_T, float) - np.asarray(p_R, float))
    norm = np.linalg.norm(r_s)
    if norm < _COINCIDENT:
        raise DegenerateGeometry("target coincides with the UAV")
    return r_s / norm


def tangent_basis(n) -> np.ndarray:
    """Orthonormal 3x2 basis of the tangent plane at unit vector ``n``.

    Seeds Gram-Schmidt with the canonical axis least aligned with ``n``.
    """
    return tangent_basis_batch(np.asarray(n, float)[None, :])[0]


def bearing_residual(z, h, B) -> np.ndarray:
    """Tangent-plane coordinates of the spherical log of ``z`` at ``h``."""
    return np.asarray(B, float).T @ sphere_log(h, z)


def sphere_log(h, z) -> np.ndarray:
    h = np.asarray(h, float)
    z = np.asarray(z, float)
    log, _ = sphere_log_batch(h[None, :], z[None, :])
    return log[0]


# batched kernels, leading axis indexes samples


def tangent_basis_batch(n: np.ndarray) -> np.ndarray:
    seed = _EYE3[np.argmin(np.abs(n), axis=1)]
    b1 = seed - np.sum(seed * n, axis=1, keepdims=True) * n
    b1 /= np.sqrt(np.sum(b1 * b1, axis=1, keepdims=True))
    B = np.empty(n.shape + (2,))
    B[:, :, 0] = b1
    B[:, :, 1] = cross_batch(n, b1)
    return B


def cross_batch(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # np.cross pays for axis juggling that dominates at these sizes
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    out[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    out[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return out


def sphere_log_batch(h: np.ndarray, z: np.ndarray):
    """Log map at ``h`` of ``z``; returns (log vectors, angles).

    Raises DegenerateGeometry for antipodal pairs.
    """
    c = np.sum(h * z, axis=1)
    s = np.sqrt(np.sum(cross_batch(h, z) ** 2, axis=1))
    theta = np.arctan2(s, c)
    if np.any((s < 1e-12) & (c < 0)):
        raise DegenerateGeometry("antipodal bearing; log map undefined")
    small = theta < SMALL_ANGLE
    f = np.where(small, 1.0, theta / np.where(small, 1.0, s))
    log_exact = f[:, None] * (z - c[:, None] * h)
    log = np.where(small[:, None], z - h, log_exact)
    return log, theta
