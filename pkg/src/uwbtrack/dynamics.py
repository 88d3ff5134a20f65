"""Discrete double-integrator propagation for the UAV and the target."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import as_rotation, make_transition_matrices, vec3

_BOX_TOL = 1e-9


@dataclass(frozen=True)
class UavState:
    state: np.ndarray
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=float).reshape(6))
        object.__setattr__(self, "rotation", as_rotation(self.rotation))

    @property
    def position(self) -> np.ndarray:
        return self.state[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[3:]


@dataclass(frozen=True)
class TargetState:
    state: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.state, dtype=float).reshape(6)
        if not np.all(np.isfinite(s)):
            raise ValueError("target state must be finite")
        object.__setattr__(self, "state", s)

    @property
    def position(self) -> np.ndarray:
        return self.state[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.state[3:]


def _propagate(state: np.ndarray, accel: np.ndarray, dt: float) -> np.ndarray:
    if dt == 0:
        return state.copy()
    A, B = make_transition_matrices(dt)
    return A @ state + B @ accel


def step_uav(x: UavState, u, dt: float, u_min=-np.inf, u_max=np.inf, rotation=None) -> UavState:
    """Advance the UAV one step; ``rotation`` is the next sensor attitude (kept if None)."""
    u = vec3(u)
    if np.any(u < np.asarray(u_min) - _BOX_TOL) or np.any(u > np.asarray(u_max) + _BOX_TOL):
        raise ValueError(f"command {u} violates the input box; controller bug")
    if dt < 0:
        raise ValueError("dt must be non-negative")
    R = x.rotation if rotation is None else rotation
    return UavState(_propagate(x.state, u, dt), R)


def step_target(x: TargetState, a_true, dt: float, noise=None, a_max: float = np.inf) -> TargetState:
    """Advance the target with a scripted acceleration plus additive 6-vector noise."""
    a = vec3(a_true)
    if np.linalg.norm(a) > a_max + 1e-12:
        raise ValueError(f"target acceleration {np.linalg.norm(a)} exceeds a_max={a_max}")
    if dt < 0:
        raise ValueError("dt must be non-negative")
    nxt = _propagate(x.state, a, dt)
    if noise is not None:
        nxt = nxt + np.asarray(noise, dtype=float).reshape(6)
    return TargetState(nxt)


def altitude_error(uav: UavState, target: TargetState) -> float:
    return float(uav.position[2] - target.position[2])
