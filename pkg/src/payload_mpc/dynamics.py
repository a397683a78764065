"""Reduced centroidal dynamics of a legged floating mass.

The state collects the CoM position, the stacked 6D momentum (linear first,
angular second, both in the inertial frame) and one position per contact
point.  Inputs are a 6D wrench per active contact, expressed in the inertial
frame about the contact point, plus a commanded linear velocity per inactive
(swing) contact.  A carried payload enters as an external wrench pair acting
at two grip points.

All types are immutable value data and every operation is a pure function,
so everything here is safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

GRAVITY = 9.81


def gravity_vector() -> np.ndarray:
    """Extended gravity direction (0, 0, g, 0, 0, 0); enters the momentum balance as -m * g_vec."""
    return np.array([0.0, 0.0, GRAVITY, 0.0, 0.0, 0.0])


def _vec(x, n: int, name: str) -> np.ndarray:
    try:
        arr = np.asarray(x, dtype=float).reshape(n)
    except (ValueError, TypeError) as exc:
        raise ConfigurationError(f"{name} must be a {n}-vector: {exc}") from exc
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} must be finite, got {arr}")
    return arr


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix S(v) with S(v) @ u == np.cross(v, u)."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def wrench_transport_map(application_point, com_position) -> np.ndarray:
    """6x6 map carrying a wrench applied at a point to an equivalent wrench about the CoM.

    Block form [[I, 0], [S(p - c), I]]: forces are preserved, moments pick up
    the lever-arm cross product.
    """
    p = _vec(application_point, 3, "application_point")
    c = _vec(com_position, 3, "com_position")
    out = np.eye(6)
    out[3:, :3] = skew(p - c)
    return out


@dataclass(frozen=True)
class Wrench:
    """6D contact wrench: force (N) and moment (N*m) about the application point."""

    force: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _vec(self.force, 3, "force"))
        object.__setattr__(self, "moment", _vec(self.moment, 3, "moment"))

    @classmethod
    def zero(cls) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_array(cls, a) -> "Wrench":
        a = _vec(a, 6, "wrench")
        return cls(a[:3], a[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.moment])


def rotate_wrench(rotation: np.ndarray, wrench: Wrench) -> Wrench:
    """Re-express a wrench via the frame rotation R (force and moment rotate alike)."""
    r = np.asarray(rotation, dtype=float).reshape(3, 3)
    return Wrench(r @ wrench.force, r @ wrench.moment)


@dataclass(frozen=True)
class RobotConstants:
    mass: float  # kg
    gravity_vector: np.ndarray = field(default_factory=gravity_vector)  # m/s^2, extended to 6D

    def __post_init__(self):
        if not (np.isfinite(self.mass) and self.mass > 0):
            raise ConfigurationError(f"mass must be positive, got {self.mass}")
        object.__setattr__(self, "gravity_vector", _vec(self.gravity_vector, 6, "gravity_vector"))


@dataclass(frozen=True)
class CentroidalState:
    """MPC state: CoM position (m), 6D momentum (kg*m/s, kg*m^2/s), contact positions (m)."""

    com_position: np.ndarray
    momentum: np.ndarray
    contact_positions: np.ndarray  # (n_contacts, 3)

    def __post_init__(self):
        object.__setattr__(self, "com_position", _vec(self.com_position, 3, "com_position"))
        object.__setattr__(self, "momentum", _vec(self.momentum, 6, "momentum"))
        feet = np.asarray(self.contact_positions, dtype=float)
        if feet.ndim != 2 or feet.shape[1] != 3:
            raise ConfigurationError(f"contact_positions must be (n, 3), got shape {feet.shape}")
        if not np.all(np.isfinite(feet)):
            raise ConfigurationError("contact_positions must be finite")
        object.__setattr__(self, "contact_positions", feet)

    @property
    def n_contacts(self) -> int:
        return self.contact_positions.shape[0]

    @property
    def linear_momentum(self) -> np.ndarray:
        return self.momentum[:3]

    @property
    def angular_momentum(self) -> np.ndarray:
        return self.momentum[3:]

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.com_position, self.momentum, self.contact_positions.ravel()])

    @classmethod
    def from_vector(cls, vec, n_contacts: int) -> "CentroidalState":
        vec = np.asarray(vec, dtype=float).reshape(9 + 3 * n_contacts)
        return cls(vec[:3], vec[3:9], vec[9:].reshape(n_contacts, 3))


@dataclass(frozen=True)
class ContactPoint:
    """One potential contact: pose, activity flag and its surface geometry."""

    position: np.ndarray
    orientation: np.ndarray  # rotation matrix, contact frame -> inertial
    active: int  # 1 = in contact (position frozen), 0 = swing
    surface: object  # ContactSurface; duck-typed to keep this module surface-agnostic
    vertex_offsets: np.ndarray = None  # (4, 3) corners in the contact frame

    def __post_init__(self):
        object.__setattr__(self, "position", _vec(self.position, 3, "contact position"))
        rot = np.asarray(self.orientation, dtype=float).reshape(3, 3)
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9:
            raise ConfigurationError("contact orientation is not orthonormal")
        if np.linalg.det(rot) < 0:
            raise ConfigurationError("contact orientation must be right-handed (det +1)")
        object.__setattr__(self, "orientation", rot)
        if self.active not in (0, 1, True, False):
            raise ConfigurationError(f"active flag must be 0 or 1, got {self.active}")
        object.__setattr__(self, "active", int(self.active))
        offsets = self.vertex_offsets
        if offsets is None:
            offsets = self.surface.corner_offsets()
        offsets = np.asarray(offsets, dtype=float).reshape(4, 3)
        object.__setattr__(self, "vertex_offsets", offsets)


@dataclass(frozen=True)
class ContactConfiguration:
    contacts: tuple

    def __post_init__(self):
        object.__setattr__(self, "contacts", tuple(self.contacts))

    @property
    def n_contacts(self) -> int:
        return len(self.contacts)

    @property
    def activity(self) -> np.ndarray:
        return np.array([c.active for c in self.contacts], dtype=float)


@dataclass(frozen=True)
class PayloadDisturbance:
    """External wrench pair from a carried load, applied at the two grip points."""

    left_wrench: Wrench
    right_wrench: Wrench
    left_point: np.ndarray
    right_point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "left_point", _vec(self.left_point, 3, "left_point"))
        object.__setattr__(self, "right_point", _vec(self.right_point, 3, "right_point"))

    @classmethod
    def zero(cls) -> "PayloadDisturbance":
        return cls(Wrench.zero(), Wrench.zero(), np.zeros(3), np.zeros(3))

    def total_force(self) -> np.ndarray:
        return self.left_wrench.force + self.right_wrench.force

    def translated(self, offset) -> "PayloadDisturbance":
        """Same wrenches with both grip points shifted by `offset`."""
        offset = _vec(offset, 3, "offset")
        return PayloadDisturbance(
            self.left_wrench, self.right_wrench, self.left_point + offset, self.right_point + offset
        )


@dataclass(frozen=True)
class ControlInput:
    """Per-contact wrench parameters and commanded contact velocities."""

    xi: np.ndarray  # (n_contacts, 6), dimensionless
    contact_velocities: np.ndarray  # (n_contacts, 3), m/s

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        vel = np.asarray(self.contact_velocities, dtype=float)
        if xi.ndim != 2 or xi.shape[1] != 6:
            raise ConfigurationError(f"xi must be (n, 6), got {xi.shape}")
        if vel.shape != (xi.shape[0], 3):
            raise ConfigurationError(f"contact_velocities must be ({xi.shape[0]}, 3), got {vel.shape}")
        if not (np.all(np.isfinite(xi)) and np.all(np.isfinite(vel))):
            raise ConfigurationError("control input must be finite")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "contact_velocities", vel)


def centroidal_dynamics(
    state: CentroidalState,
    contacts: ContactConfiguration,
    wrenches,
    velocities,
    payload: PayloadDisturbance,
    constants: RobotConstants,
) -> CentroidalState:
    """Continuous-time state derivative.

    CoM velocity is the linear momentum over the mass; the momentum rate sums
    the active contact wrenches and the payload wrenches transported to the
    CoM minus gravity; swing contacts move with their commanded velocity
    while active contacts stay put.

    Wrenches must already be expressed in the inertial frame about the contact
    points held in `state.contact_positions`.
    """
    n_c = contacts.n_contacts
    if len(wrenches) != n_c or len(velocities) != n_c or state.n_contacts != n_c:
        raise ConfigurationError(
            f"contact count mismatch: {n_c} contacts, {len(wrenches)} wrenches, "
            f"{len(velocities)} velocities, state has {state.n_contacts}"
        )
    com = state.com_position
    h_dot = -constants.mass * constants.gravity_vector
    for contact, wrench, position in zip(contacts.contacts, wrenches, state.contact_positions):
        if contact.active:
            h_dot = h_dot + np.concatenate(
                [wrench.force, wrench.moment + np.cross(position - com, wrench.force)]
            )
    for grip_wrench, grip_point in (
        (payload.left_wrench, payload.left_point),
        (payload.right_wrench, payload.right_point),
    ):
        h_dot = h_dot + np.concatenate(
            [grip_wrench.force, grip_wrench.moment + np.cross(grip_point - com, grip_wrench.force)]
        )
    com_dot = state.linear_momentum / constants.mass
    feet_dot = np.array(
        [(1.0 - c.active) * _vec(v, 3, "contact velocity") for c, v in zip(contacts.contacts, velocities)]
    )
    return CentroidalState(com_dot, h_dot, feet_dot)


def euler_step(
    state: CentroidalState,
    wrenches,
    velocities,
    payload: PayloadDisturbance,
    contacts: ContactConfiguration,
    constants: RobotConstants,
    dt: float,
) -> CentroidalState:
    """One explicit Euler step of the centroidal dynamics.

    Active contact positions are carried over unchanged (bitwise), matching
    the gated derivative exactly.
    """
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    deriv = centroidal_dynamics(state, contacts, wrenches, velocities, payload, constants)
    active = contacts.activity[:, None].astype(bool)
    feet = np.where(
        active,
        state.contact_positions,
        state.contact_positions + dt * deriv.contact_positions,
    )
    return CentroidalState(
        state.com_position + dt * deriv.com_position,
        state.momentum + dt * deriv.momentum,
        feet,
    )
