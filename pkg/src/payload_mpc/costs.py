"""Cost tasks of the receding-horizon controller.

All tasks are weighted quadratic penalties evaluated on a rolled-out state
trajectory (flat state vectors, one row per stage) and the per-stage inputs.
The payload-attenuation task compares the commanded contact wrenches against
a feedforward target: the minimum-norm wrench distribution cancelling the
payload (via the pseudo-inverse of the stacked CoM transport maps) plus an
even share of the robot weight over the active contacts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import parametrize_batch
from .dynamics import RobotConstants
from .errors import ConfigurationError, InfeasiblePhaseError
from .shooting import cross as _cross


def _weight_matrix(value, n: int, name: str) -> np.ndarray:
    mat = np.asarray(value, dtype=float)
    if mat.ndim == 0:
        mat = float(mat) * np.eye(n)
    elif mat.ndim == 1:
        mat = np.diag(mat.astype(float))
    if mat.shape != (n, n):
        raise ConfigurationError(f"{name} must be {n}x{n}, got {mat.shape}")
    if np.abs(mat - mat.T).max() > 1e-12:
        raise ConfigurationError(f"{name} must be symmetric")
    if np.linalg.eigvalsh(mat).min() < -1e-10:
        raise ConfigurationError(f"{name} must be positive semidefinite")
    return mat


@dataclass
class Weights:
    """Penalty matrices for the controller tasks.

    Defaults: angular momentum 100*I, CoM diag(1, 1, 1000), footsteps 200*I,
    payload attenuation diag(100, 100, 100, 10, 10, 10) per contact
    (strong on forces, softer on moments), parameter regularization 10*I,
    plus a small swing-velocity regularizer that keeps the swing inputs
    well conditioned.  The last two entries only matter for the
    explicitly-constrained baseline controller.
    """

    q_h: np.ndarray = field(default_factory=lambda: 100.0 * np.eye(3))
    q_c: np.ndarray = field(default_factory=lambda: np.diag([1.0, 1.0, 1000.0]))
    q_pc: np.ndarray = field(default_factory=lambda: 200.0 * np.eye(3))
    q_d: np.ndarray = field(default_factory=lambda: np.diag([100.0, 100.0, 100.0, 10.0, 10.0, 10.0]))
    q_xi: np.ndarray = field(default_factory=lambda: 10.0 * np.eye(6))
    q_v: np.ndarray = field(default_factory=lambda: 0.01 * np.eye(3))
    # baseline-only: wrench similarity across feet in double support, and a
    # small magnitude regularizer that pins down otherwise-free swing wrenches
    q_force_similarity: np.ndarray = field(
        default_factory=lambda: np.diag([100.0, 100.0, 100.0, 10.0, 10.0, 10.0])
    )
    q_wrench_reg: np.ndarray = field(default_factory=lambda: 1e-3 * np.eye(6))

    def __post_init__(self):
        self.q_h = _weight_matrix(self.q_h, 3, "q_h")
        self.q_c = _weight_matrix(self.q_c, 3, "q_c")
        self.q_pc = _weight_matrix(self.q_pc, 3, "q_pc")
        self.q_d = _weight_matrix(self.q_d, 6, "q_d")
        self.q_xi = _weight_matrix(self.q_xi, 6, "q_xi")
        self.q_v = _weight_matrix(self.q_v, 3, "q_v")
        self.q_force_similarity = _weight_matrix(self.q_force_similarity, 6, "q_force_similarity")
        self.q_wrench_reg = _weight_matrix(self.q_wrench_reg, 6, "q_wrench_reg")

    def without_payload_task(self) -> "Weights":
        """Copy with the payload-attenuation weight zeroed (ablation)."""
        return Weights(
            q_h=self.q_h,
            q_c=self.q_c,
            q_pc=self.q_pc,
            q_d=np.zeros((6, 6)),
            q_xi=self.q_xi,
            q_v=self.q_v,
            q_force_similarity=self.q_force_similarity,
            q_wrench_reg=self.q_wrench_reg,
        )


def _quad(err: np.ndarray, weight: np.ndarray) -> float:
    # err rows are vectors; total 0.5 * sum_k err_k' W err_k
    flat = np.asarray(err, dtype=float).reshape(-1, weight.shape[0])
    return 0.5 * float(np.einsum("ki,ij,kj->", flat, weight, flat))


def split_states(states: np.ndarray, n_contacts: int):
    """Views into a (K, 9 + 3*n_c) stacked-state array: com, momentum, feet."""
    states = np.asarray(states, dtype=float)
    com = states[..., 0:3]
    momentum = states[..., 3:9]
    feet = states[..., 9:].reshape(states.shape[:-1] + (n_contacts, 3))
    return com, momentum, feet


def tracking_cost(states: np.ndarray, refs, weights: Weights) -> float:
    """Angular-momentum damping plus CoM reference tracking, summed over stages.

    Linear momentum is deliberately left unpenalized; the CoM term shapes it
    indirectly.
    """
    n_c = refs.n_contacts
    com, momentum, _ = split_states(states, n_c)
    if com.shape[0] != refs.horizon + 1:
        raise ConfigurationError(
            f"trajectory has {com.shape[0]} stages, references expect {refs.horizon + 1}"
        )
    return _quad(momentum[:, 3:], weights.q_h) + _quad(com - refs.com_refs, weights.q_c)


def footstep_cost(states: np.ndarray, refs, weights: Weights) -> float:
    """Quadratic penalty on contact positions vs. their planned references."""
    _, _, feet = split_states(states, refs.n_contacts)
    err = feet - refs.footstep_refs.transpose(1, 0, 2)  # (K+1, n_c, 3)
    return _quad(err, weights.q_pc)


def parameter_regularization_cost(xi_traj: np.ndarray, weights: Weights) -> float:
    """Penalty pulling the wrench parameters toward the interior point at xi = 0."""
    return _quad(np.asarray(xi_traj, dtype=float), weights.q_xi)


def velocity_regularization_cost(velocities: np.ndarray, weights: Weights) -> float:
    return _quad(np.asarray(velocities, dtype=float), weights.q_v)


def payload_compensation_targets(
    states: np.ndarray,
    activity: np.ndarray,
    payload,
    constants: RobotConstants,
):
    """Per-stage, per-contact wrench targets cancelling the held payload.

    `payload` is a `shooting.PayloadArrays` (or a sequence of
    `PayloadDisturbance`, one per stage).  Returns (targets (K, n_c, 6),
    solve cache) where targets are only meaningful where `activity` is 1.
    The cache carries the stacked transport products needed by the analytic
    gradient.
    """
    from .shooting import PayloadArrays

    if not isinstance(payload, PayloadArrays):
        payload = PayloadArrays.from_hold(payload)
    activity = np.asarray(activity, dtype=float)
    steps, n_c = activity.shape
    com, _, feet = split_states(states, n_c)
    com = com[:steps]
    feet = feet[:steps]
    n_active = activity.sum(axis=1)
    if np.any(n_active < 1):
        raise InfeasiblePhaseError("payload attenuation needs at least one active contact per stage")

    r = feet - com[:, None, :]  # (K, n_c, 3) contact lever arms
    rx = _skew_batch(r)  # (K, n_c, 3, 3)
    # M = sum_i gamma_i * A_i A_i' with A_i = [[I, 0], [S(r_i), I]]
    eye_scaled = n_active[:, None, None] * np.eye(3)
    m_mat = np.empty((steps, 6, 6))
    m_mat[:, :3, :3] = eye_scaled
    s_sum = np.einsum("ki,kiab->kab", activity, rx)
    m_mat[:, :3, 3:] = -s_sum  # S' = -S
    m_mat[:, 3:, :3] = s_sum
    m_mat[:, 3:, 3:] = np.einsum("ki,kiab,kicb->kac", activity, rx, rx) + eye_scaled

    # wrench of the payload about the current CoM, negated
    b = np.empty((steps, 6))
    b[:, :3] = -payload.force_sum
    b[:, 3:] = -(payload.pivot_moment - _cross(com, payload.force_sum))

    c = np.linalg.solve(m_mat, b[..., None])[..., 0]  # (K, 6)
    # A_i' c = (c1 - r_i x c2, c2)
    targets = np.empty((steps, n_c, 6))
    targets[..., :3] = c[:, None, :3] - _cross(r, c[:, None, 3:])
    targets[..., 3:] = c[:, None, 3:]
    gravity_share = (constants.mass / n_active)[:, None, None] * constants.gravity_vector[None, None, :]
    targets = targets + gravity_share
    cache = {"m": m_mat, "c": c, "r": r, "n_active": n_active}
    return targets, cache


def payload_attenuation_from_wrenches(
    wrenches: np.ndarray,
    states: np.ndarray,
    payload,
    activity: np.ndarray,
    constants: RobotConstants,
    weights: Weights,
) -> float:
    """Payload-attenuation penalty given already-computed inertial wrenches (K, n_c, 6)."""
    targets, _ = payload_compensation_targets(states, activity, payload, constants)
    residual = (wrenches - targets) * activity[..., None]
    return _quad(residual, weights.q_d)


def payload_attenuation_cost(
    xi_traj: np.ndarray,
    states: np.ndarray,
    payload_hold,
    gait: np.ndarray,
    orientations: np.ndarray,
    surfaces,
    constants: RobotConstants,
    weights: Weights,
) -> float:
    """Distance of the commanded wrenches from the payload-cancelling distribution.

    `xi_traj` is (K, n_c, 6); wrenches are mapped through the parametrization
    and rotated into the inertial frame before comparison.  Only active
    contacts contribute.
    """
    xi_traj = np.asarray(xi_traj, dtype=float)
    steps, n_c = xi_traj.shape[:2]
    activity = np.asarray(gait, dtype=float)[:, :steps].T  # (K, n_c)
    wrenches = wrenches_from_parameters(xi_traj, orientations, surfaces)
    return payload_attenuation_from_wrenches(wrenches, states, payload_hold, activity, constants, weights)


def wrenches_from_parameters(xi_traj: np.ndarray, orientations: np.ndarray, surfaces) -> np.ndarray:
    """Map parameters (K, n_c, 6) to inertial-frame wrenches via the parametrization."""
    xi_traj = np.asarray(xi_traj, dtype=float)
    steps, n_c = xi_traj.shape[:2]
    out = np.empty_like(xi_traj)
    for i in range(n_c):
        local = parametrize_batch(xi_traj[:, i, :], surfaces[i])
        rot = np.asarray(orientations[i], dtype=float)
        out[:, i, :3] = local[:, :3] @ rot.T
        out[:, i, 3:] = local[:, 3:] @ rot.T
    return out


def _skew_batch(v: np.ndarray) -> np.ndarray:
    """Skew matrices for an (..., 3) array of vectors."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape + (3,))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out
