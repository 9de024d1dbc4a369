"""Triple-integrator preview model of one CoM axis.

With piecewise-constant jerk over sampling periods of length ``dt`` the
state (position, velocity, acceleration) evolves linearly, so the whole
horizon stacks into ``X = state_matrix @ x0 + input_matrix @ jerks``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ModelError


@dataclass(frozen=True)
class PreviewParams:
    steps: int
    dt: float

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "dt", float(self.dt))


@dataclass(frozen=True)
class AxisState:
    position: float = 0.0
    velocity: float = 0.0
    acceleration: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ModelError(f"non-finite axis state {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.position, self.velocity, self.acceleration], dtype=float)

    @classmethod
    def from_array(cls, values) -> "AxisState":
        p, v, a = (float(x) for x in values)
        return cls(p, v, a)


@dataclass(frozen=True)
class PreviewMatrices:
    params: PreviewParams
    pos_state: np.ndarray
    pos_input: np.ndarray
    vel_state: np.ndarray
    vel_input: np.ndarray
    acc_state: np.ndarray
    acc_input: np.ndarray

    @property
    def steps(self) -> int:
        return self.params.steps

    @property
    def dt(self) -> float:
        return self.params.dt

    def predict(self, state: AxisState, jerks) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Positions, velocities and accelerations at steps 1..N."""
        x0 = state.as_array()
        u = np.asarray(jerks, dtype=float)
        return (
            self.pos_state @ x0 + self.pos_input @ u,
            self.vel_state @ x0 + self.vel_input @ u,
            self.acc_state @ x0 + self.acc_input @ u,
        )


def transition(dt: float) -> tuple[np.ndarray, np.ndarray]:
    A = np.array([[1.0, dt, dt * dt / 2.0], [0.0, 1.0, dt], [0.0, 0.0, 1.0]])
    B = np.array([dt ** 3 / 6.0, dt * dt / 2.0, dt])
    return A, B


def propagate_axis(state: AxisState, jerk: float, dt: float) -> AxisState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not np.isfinite(jerk):
        raise ModelError(f"non-finite jerk {jerk}")
    p, v, a = state.position, state.velocity, state.acceleration
    return AxisState(
        p + v * dt + a * dt * dt / 2.0 + jerk * dt ** 3 / 6.0,
        v + a * dt + jerk * dt * dt / 2.0,
        a + jerk * dt,
    )


@lru_cache(maxsize=32)
def _build(steps: int, dt: float) -> PreviewMatrices:
    A, B = transition(dt)
    state_rows = np.zeros((steps, 3, 3))
    input_cols = np.zeros((steps, steps, 3))
    power = np.eye(3)
    for k in range(steps):
        power = A @ power
        state_rows[k] = power
    # Effect of jerk i on the state after step k (k >= i) is A^(k-i) B.
    impulse = np.zeros((steps, 3))
    impulse[0] = B
    for d in range(1, steps):
        impulse[d] = A @ impulse[d - 1]
    for k in range(steps):
        for i in range(k + 1):
            input_cols[k, i] = impulse[k - i]

    mats = {}
    for row, name in enumerate(("pos", "vel", "acc")):
        state = np.ascontiguousarray(state_rows[:, row, :])
        inp = np.ascontiguousarray(input_cols[:, :, row])
        state.setflags(write=False)
        inp.setflags(write=False)
        mats[f"{name}_state"] = state
        mats[f"{name}_input"] = inp
    return PreviewMatrices(PreviewParams(steps, dt), **mats)


def build_preview_matrices(params: PreviewParams) -> PreviewMatrices:
    """Stacked horizon operators, cached per (steps, dt); the arrays are read-only."""
    return _build(params.steps, params.dt)
