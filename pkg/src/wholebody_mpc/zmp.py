"""Centroidal ZMP relations with one external contact.

Conventions: gravity acts along -z with magnitude ``g``; the contact force
``f`` is the force exerted by the environment on the robot at ``point``;
the feet are coplanar at z = 0 and the centroidal angular momentum is
constant.  Under those assumptions the ZMP is

    zmp = (m c cdd_z - m c_z cdd + m g c + p_z f_xy - p_xy f_z) / D,
    D   = m (cdd_z + g) - f_z,

where D is the vertical load carried by the feet.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularContactError, StructuralError, UnloadedRobotError
from .preview import PreviewMatrices

GRAVITY = 9.81


@dataclass(frozen=True)
class CentroidalParams:
    mass: float
    gravity: float = GRAVITY

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.gravity > 0:
            raise ValueError("gravity must be positive")


@dataclass(frozen=True)
class ExternalContact:
    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    point: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        f = np.asarray(self.force, dtype=float).reshape(3)
        p = np.asarray(self.point, dtype=float).reshape(3)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(p))):
            raise ValueError("contact force and point must be finite")
        object.__setattr__(self, "force", f)
        object.__setattr__(self, "point", p)

    @classmethod
    def none(cls) -> "ExternalContact":
        return cls()


@dataclass(frozen=True)
class ZmpCoefficients:
    """Per-step coefficients of ``zmp = a c - b cdd + j``."""

    a: float
    b: float
    j: np.ndarray


@dataclass(frozen=True)
class ZmpPreviewOperators:
    """``zmp[:, axis] = zmp_state @ x0[axis] + zmp_input @ jerks[axis] + zmp_offset[:, axis]``."""

    zmp_state: np.ndarray
    zmp_input: np.ndarray
    zmp_offset: np.ndarray

    def predict(self, state, jerks, axis: int) -> np.ndarray:
        return self.zmp_state @ state.as_array() + self.zmp_input @ np.asarray(jerks) + self.zmp_offset[:, axis]


def vertical_load(params: CentroidalParams, com_acc_z: float, force_z: float) -> float:
    return params.mass * (com_acc_z + params.gravity) - force_z


def _checked_load(params, com_acc_z, force_z) -> float:
    D = vertical_load(params, com_acc_z, force_z)
    if not D > 0:
        raise UnloadedRobotError(D)
    return D


def zmp_lipm(com_xy, com_acc_xy, com_z: float, gravity: float = GRAVITY) -> np.ndarray:
    if not gravity > 0:
        raise ValueError("gravity must be positive")
    return np.asarray(com_xy, dtype=float) - com_z * np.asarray(com_acc_xy, dtype=float) / gravity


def zmp_full(params: CentroidalParams, com, com_acc, contact: ExternalContact) -> np.ndarray:
    c = np.asarray(com, dtype=float)
    cdd = np.asarray(com_acc, dtype=float)
    f, p = contact.force, contact.point
    m, g = params.mass, params.gravity
    D = _checked_load(params, cdd[2], f[2])
    num = m * c[:2] * cdd[2] - m * c[2] * cdd[:2] + m * g * c[:2] + p[2] * f[:2] - p[:2] * f[2]
    return num / D


def zmp_coefficients(params: CentroidalParams, com_z: float, com_acc_z: float,
                     contact: ExternalContact) -> ZmpCoefficients:
    f, p = contact.force, contact.point
    D = _checked_load(params, com_acc_z, f[2])
    m, g = params.mass, params.gravity
    j = (p[2] * f[:2] - p[:2] * f[2]) / D
    return ZmpCoefficients(a=m * (g + com_acc_z) / D, b=m * com_z / D, j=j)


def lipm_coefficients(com_z: float, gravity: float = GRAVITY) -> ZmpCoefficients:
    return ZmpCoefficients(a=1.0, b=com_z / gravity, j=np.zeros(2))


def build_zmp_preview(coeffs_per_step, matrices: PreviewMatrices) -> ZmpPreviewOperators:
    coeffs = list(coeffs_per_step)
    if len(coeffs) != matrices.steps:
        raise StructuralError(
            f"got {len(coeffs)} coefficient sets for a horizon of {matrices.steps} steps"
        )
    a = np.array([c.a for c in coeffs])
    b = np.array([c.b for c in coeffs])
    j = np.array([np.asarray(c.j, dtype=float).reshape(2) for c in coeffs])
    return ZmpPreviewOperators(
        zmp_state=a[:, None] * matrices.pos_state - b[:, None] * matrices.acc_state,
        zmp_input=a[:, None] * matrices.pos_input - b[:, None] * matrices.acc_input,
        zmp_offset=j,
    )


def delta_zmp(params: CentroidalParams, com, com_acc, contact: ExternalContact) -> np.ndarray:
    """ZMP shift relative to the linear inverted pendulum caused by the contact
    and the vertical CoM acceleration."""
    c = np.asarray(com, dtype=float)
    cdd = np.asarray(com_acc, dtype=float)
    f, p = contact.force, contact.point
    m, g = params.mass, params.gravity
    D = _checked_load(params, cdd[2], f[2])
    return (
        p[2] * f[:2] / D
        + (-p[:2] - c[2] * cdd[:2] / g + c[:2]) * f[2] / D
        + m * c[2] * cdd[:2] * cdd[2] / (g * D)
    )


def force_from_delta(params: CentroidalParams, com, com_acc, contact_point, delta, fz: float) -> np.ndarray:
    """Tangential contact force that produces ZMP shift ``delta`` given the
    vertical force ``fz``."""
    slope, offset = tangential_force_map(params, com, com_acc, contact_point, delta)
    return slope * fz + offset


def tangential_force_map(params: CentroidalParams, com, com_acc, contact_point, delta):
    """``(slope, offset)`` with ``f_xy = slope * f_z + offset``; both are 2-vectors."""
    c = np.asarray(com, dtype=float)
    cdd = np.asarray(com_acc, dtype=float)
    p = np.asarray(contact_point, dtype=float)
    dz = np.asarray(delta, dtype=float)
    if p[2] == 0:
        raise SingularContactError("contact point lies on the feet plane (p_z = 0)")
    m, g = params.mass, params.gravity
    slope = (p[:2] + c[2] * cdd[:2] / g - c[:2] - dz) / p[2]
    offset = (m * (g + cdd[2]) * dz - m * c[2] * cdd[:2] * cdd[2] / g) / p[2]
    return slope, offset


def acceleration_shift_gain(params: CentroidalParams, com_z: float, com_acc_z: float) -> float:
    """ZMP shift per unit horizontal acceleration produced by vertical
    acceleration alone (no contact force)."""
    D = _checked_load(params, com_acc_z, 0.0)
    return params.mass * com_z * com_acc_z / (params.gravity * D)
