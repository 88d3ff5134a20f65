"""Shared math helpers, random streams and the simulation config schema."""

from __future__ import annotations

import dataclasses
import functools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammainc

ROTATION_TOL = 1e-9
SYM_TOL = 1e-12
PSD_TOL = 1e-10


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input.

    ``line`` and ``key`` locate the problem when it came from a file.
    """

    def __init__(self, message: str, *, line: int | None = None, key: str | None = None):
        self.message = message
        self.line = line
        self.key = key
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key '{key}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class DegenerateGeometry(ValueError):
    """Two bodies coincide, or a direction is undefined."""


def vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError(f"non-finite vector {v}")
    return v


def state6(position, velocity) -> np.ndarray:
    return np.concatenate([vec3(position), vec3(velocity)])


def as_rotation(R) -> np.ndarray:
    """Validate a 3x3 proper rotation matrix and return it as a float array."""
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    if np.max(np.abs(R.T @ R - np.eye(3))) > ROTATION_TOL:
        raise ValueError("rotation is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > ROTATION_TOL:
        raise ValueError("rotation determinant is not +1")
    return R


def rotation_z(yaw: float) -> np.ndarray:
    """Frame rotation taking world vectors into a frame yawed by ``yaw``.

    The sensor x-axis points along world heading ``yaw``, so a world vector at
    that heading maps onto sensor x.
    """
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def as_sym_matrix(M, dim: int | None = None) -> np.ndarray:
    """Validate a symmetric positive semidefinite matrix of size 2, 3 or 6."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = M.shape[0]
    if M.shape != (n, n) or n not in (1, 2, 3, 6):
        raise ValueError(f"bad covariance shape {M.shape}")
    if dim is not None and n != dim:
        raise ValueError(f"expected {dim}x{dim} matrix, got {n}x{n}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(M - M.T)) > SYM_TOL:
        raise ValueError("matrix is not symmetric")
    if np.linalg.eigvalsh(M)[0] < -PSD_TOL:
        raise ValueError("matrix is not positive semidefinite")
    return M


def make_transition_matrices(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Constant-velocity transition ``A`` and acceleration input ``B``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    eye = np.eye(3)
    A = np.eye(6)
    A[:3, 3:] = dt * eye
    B = np.vstack([0.5 * dt * dt * eye, dt * eye])
    return A, B


@functools.lru_cache(maxsize=256)
def chi2_quantile(dof: int, prob: float) -> float:
    """Inverse chi-square CDF by bisection on the regularized lower gamma."""
    if int(dof) != dof or not 1 <= dof <= 10:
        raise ValueError(f"dof must be an integer in 1..10, got {dof}")
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must lie in (0, 1), got {prob}")
    k = 0.5 * dof
    lo, hi = 0.0, 1.0
    while gammainc(k, 0.5 * hi) < prob:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gammainc(k, 0.5 * mid) < prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def rng_stream(seed: int, stream_id: int = 0) -> np.random.Generator:
    """Independent, reproducible generator for ``(seed, stream_id)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


DEG = math.pi / 180.0


@dataclass(frozen=True)
class SimConfig:
    """Flat parameter set shared by sensing, estimation, control and the harness.

    Timing, gains, the barrier rate, the Cauchy knee and the window length are
    tunable; the defaults are the values used by the studies.
    Angles are radians, lengths meters, accelerations per axis in m/s^2.
    """

    dt: float = 0.05
    horizon: int = 600
    sigma_r: float = 0.05
    sigma_az: float = 3.0 * DEG
    sigma_el: float = 3.0 * DEG
    p_out: float = 0.0
    sigma_out: float = 25.0 * DEG
    d_star: float = 3.0
    d_min: float = 2.0
    d_max: float = 4.5
    u_min: float = -3.0
    u_max: float = 3.0
    v_max: float = 2.5
    a_max: float = 1.0
    alpha_risk: float = 0.05
    omega: float = 1.5
    k_r: float = 1.0
    k_vr: float = 2.0
    k_z: float = 1.5
    k_vz: float = 2.0
    k_tau: float = 0.8
    cauchy_c: float = 2.0
    window_size: int = 20
    seed: int = 0
    # estimator process model and initial velocity spread
    sigma_tp: float = 0.01
    sigma_tv: float = 0.05
    sigma_v0: float = 1.0
    # std multiplier on the process noise injected into the simulated target
    truth_noise_scale: float = 0.2
    # sensing degradation factor used by the control scenario
    degrade_factor: float = 3.0
    n_runs: int = 50
    jobs: int = 1
    # experiment selection for the harness and the CLI (comma-separated lists)
    estimation_horizon: int = 200
    p_grid: str = "0,0.1,0.2,0.3,0.4,0.5"
    estimators: str = "ekf,fg_plain,fg_robust"
    controllers: str = "clf_only,fixed_clf_cbf,ca_clf_cbf"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.dt > 0:
            raise ConfigError("dt must be positive", key="dt")
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1", key="horizon")
        if not 0.0 <= self.p_out <= 1.0:
            raise ConfigError("p_out must lie in [0, 1]", key="p_out")
        if not self.d_min < self.d_star < self.d_max:
            raise ConfigError("require d_min < d_star < d_max", key="d_star")
        if self.d_min <= 0:
            raise ConfigError("d_min must be positive", key="d_min")
        for name in ("k_r", "k_vr", "k_z", "k_vz", "k_tau", "omega", "cauchy_c"):
            if not getattr(self, name) > 0:
                raise ConfigError("gain must be positive", key=name)
        if not 0.0 < self.alpha_risk < 1.0:
            raise ConfigError("alpha_risk must lie in (0, 1)", key="alpha_risk")
        if self.window_size < 2:
            raise ConfigError("window_size must be at least 2", key="window_size")
        if not self.u_min < 0 < self.u_max:
            raise ConfigError("require u_min < 0 < u_max", key="u_min")
        for name in ("sigma_r", "sigma_az", "sigma_el", "sigma_out", "sigma_tp", "sigma_tv", "sigma_v0",
                     "truth_noise_scale", "v_max", "a_max"):
            if getattr(self, name) < 0:
                raise ConfigError("must be non-negative", key=name)
        if self.degrade_factor < 1:
            raise ConfigError("degrade_factor must be >= 1", key="degrade_factor")
        if self.n_runs < 1:
            raise ConfigError("n_runs must be at least 1", key="n_runs")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1", key="jobs")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer", key="seed")
        if self.estimation_horizon < 1:
            raise ConfigError("estimation_horizon must be at least 1", key="estimation_horizon")
        try:
            grid = self.p_grid_values
        except ValueError:
            raise ConfigError("p_grid must be comma-separated numbers", key="p_grid") from None
        if not grid or any(not 0.0 <= p <= 1.0 for p in grid):
            raise ConfigError("p_grid values must lie in [0, 1]", key="p_grid")
        _check_names(self.estimators, ("ekf", "fg_plain", "fg_robust"), "estimators")
        _check_names(self.controllers, ("clf_only", "fixed_clf_cbf", "ca_clf_cbf"), "controllers")

    @property
    def p_grid_values(self) -> tuple[float, ...]:
        return tuple(float(p) for p in _split(self.p_grid))

    @property
    def estimator_list(self) -> tuple[str, ...]:
        return _split(self.estimators)

    @property
    def controller_list(self) -> tuple[str, ...]:
        return _split(self.controllers)

    @property
    def bearing_cov(self) -> np.ndarray:
        return np.diag([self.sigma_az**2, self.sigma_el**2])

    @property
    def process_cov(self) -> np.ndarray:
        return np.diag([self.sigma_tp**2] * 3 + [self.sigma_tv**2] * 3)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def with_overrides(self, overrides: dict[str, str]) -> "SimConfig":
        """Apply textual ``key -> value`` overrides, coercing to field types."""
        changes = {key: _coerce(key, value) for key, value in overrides.items()}
        return self.replace(**changes)

    def to_text(self) -> str:
        lines = [f"{f.name} = {_format_value(getattr(self, f.name))}" for f in dataclasses.fields(self)]
        return "\n".join(lines) + "\n"


def _split(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _check_names(text: str, allowed: tuple[str, ...], key: str) -> None:
    names = _split(text)
    if not names:
        raise ConfigError("empty list", key=key)
    for name in names:
        if name not in allowed:
            raise ConfigError(f"unknown name {name!r}; expected one of {', '.join(allowed)}", key=key)
    if len(set(names)) != len(names):
        raise ConfigError("duplicate names", key=key)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(SimConfig)}


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(key: str, raw: str, line: int | None = None):
    if key not in _FIELD_TYPES:
        raise ConfigError("unknown config key", line=line, key=key)
    kind = _FIELD_TYPES[key]
    text = raw.strip()
    try:
        if kind == "int":
            return int(text, 0)
        if kind == "str":
            return text
        return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {text!r} as {kind}", line=line, key=key) from None


def parse_config_text(text: str, base: SimConfig | None = None) -> SimConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, blank lines are skipped."""
    changes: dict[str, object] = {}
    first_line: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (part.strip() for part in body.split("=", 1))
        if key in changes:
            raise ConfigError("duplicate key", line=lineno, key=key)
        changes[key] = _coerce(key, value, line=lineno)
        first_line[key] = lineno
    try:
        return dataclasses.replace(base or SimConfig(), **changes)
    except ConfigError as exc:
        raise ConfigError(exc.message, line=first_line.get(exc.key), key=exc.key) from None


def load_config(path: str | Path, base: SimConfig | None = None) -> SimConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"), base)
