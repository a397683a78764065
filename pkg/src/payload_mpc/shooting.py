"""Single-shooting rollout of the centroidal dynamics and its reverse-mode adjoint.

States are flat vectors (com 3, momentum 6, contact positions 3 per contact).
Inputs are per-stage inertial-frame wrenches (applied only where the contact
is active) and swing velocities (applied only where it is not).  The adjoint
walks the Euler recursion backwards and accumulates exact gradients with
respect to every input; stage-wise cost gradients enter as seeds on the
states, wrenches and velocities.

This is the optimizer's hot path: payload terms and everything without a
sequential dependency are precomputed in batch, the per-step loops touch as
few small arrays as possible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import RobotConstants


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product over trailing axes; avoids np.cross's axis bookkeeping overhead."""
    a = np.asarray(a)
    b = np.asarray(b)
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


@dataclass(frozen=True)
class PayloadArrays:
    """Held payload flattened to arrays over the horizon (K stages, 2 grips)."""

    forces: np.ndarray  # (K, 2, 3)
    moments: np.ndarray  # (K, 2, 3)
    points: np.ndarray  # (K, 2, 3)
    force_sum: np.ndarray  # (K, 3)
    pivot_moment: np.ndarray  # (K, 3) sum of moments + points x forces (about the origin)

    @classmethod
    def from_hold(cls, payload_hold) -> "PayloadArrays":
        forces = np.array([[p.left_wrench.force, p.right_wrench.force] for p in payload_hold])
        moments = np.array([[p.left_wrench.moment, p.right_wrench.moment] for p in payload_hold])
        points = np.array([[p.left_point, p.right_point] for p in payload_hold])
        return cls(
            forces=forces,
            moments=moments,
            points=points,
            force_sum=forces.sum(axis=1),
            pivot_moment=(moments + cross(points, forces)).sum(axis=1),
        )


def rollout(
    x0: np.ndarray,
    wrenches: np.ndarray,  # (K, n_c, 6) inertial frame, about the contact points
    velocities: np.ndarray,  # (K, n_c, 3)
    activity: np.ndarray,  # (K, n_c) in {0, 1}
    payload: PayloadArrays,
    constants: RobotConstants,
    dt: float,
) -> np.ndarray:
    """Forward Euler rollout; returns the (K+1, nx) state trajectory."""
    steps, n_c = activity.shape
    gated = wrenches * activity[..., None]
    gated_f = gated[:, :, :3]
    # moment of the payload about the current CoM: pivot_moment - com x force_sum
    total_force = gated_f.sum(axis=1) + payload.force_sum  # (K, 3)
    base_moment = gated[:, :, 3:].sum(axis=1) + payload.pivot_moment  # (K, 3), feet term added per step
    swing_delta = (dt * (1.0 - activity)[..., None] * velocities).reshape(steps, n_c * 3)
    mg = constants.mass * constants.gravity_vector
    inv_mass_dt = dt / constants.mass
    states = np.empty((steps + 1, x0.size))
    states[0] = x0
    for k in range(steps):
        x = states[k]
        out = states[k + 1]
        com = x[0:3]
        feet = x[9:].reshape(n_c, 3)
        moment = base_moment[k] + cross(feet, gated_f[k]).sum(axis=0) - cross(com, total_force[k])
        out[0:3] = com + inv_mass_dt * x[3:6]
        out[3:6] = x[3:6] + dt * (total_force[k] - mg[:3])
        out[6:9] = x[6:9] + dt * (moment - mg[3:])
        out[9:] = x[9:] + swing_delta[k]
    return states


def rollout_adjoint(
    states: np.ndarray,
    wrenches: np.ndarray,
    activity: np.ndarray,
    payload: PayloadArrays,
    constants: RobotConstants,
    dt: float,
    state_seeds: np.ndarray,  # (K+1, nx) stage-cost gradients w.r.t. the states
):
    """Backward sweep; returns (wrench gradients (K, n_c, 6), velocity gradients (K, n_c, 3)).

    Only the dynamics path is accumulated here; direct input-cost gradients
    are the caller's business.
    """
    steps, n_c = activity.shape
    gated_f = wrenches[:, :, :3] * activity[..., None]
    total_force = gated_f.sum(axis=1) + payload.force_sum  # (K, 3)
    inv_mass_dt = dt / constants.mass
    wrench_grads = np.zeros((steps, n_c, 6))
    velocity_grads = np.empty((steps, n_c, 3))
    lam = state_seeds[steps].copy()
    for k in range(steps - 1, -1, -1):
        x = states[k]
        com = x[0:3]
        feet = x[9:].reshape(n_c, 3)
        gamma = activity[k]
        lam_hm = lam[6:9]
        # input gradients: transported wrench hits the momentum, velocity moves swing feet
        r = feet - com[None, :]
        gd = dt * gamma[:, None]
        wrench_grads[k, :, :3] = gd * (lam[3:6][None, :] - cross(r, lam_hm[None, :]))
        wrench_grads[k, :, 3:] = gd * lam_hm[None, :]
        velocity_grads[k] = dt * (1.0 - gamma)[:, None] * lam[9:].reshape(n_c, 3)
        # pull the adjoint through the step
        new_lam = lam + state_seeds[k]
        new_lam[0:3] += dt * cross(lam_hm, total_force[k])
        new_lam[3:6] += inv_mass_dt * lam[0:3]
        new_lam[9:] += (dt * cross(gated_f[k], lam_hm[None, :])).ravel()
        lam = new_lam
    return wrench_grads, velocity_grads


def payload_cost_state_seeds(
    states: np.ndarray,
    activity: np.ndarray,
    payload: PayloadArrays,
    constants: RobotConstants,
    q_d: np.ndarray,
    wrenches: np.ndarray,
):
    """Gradients of the payload-attenuation cost.

    Returns (state seeds (K+1, nx), direct wrench gradients (K, n_c, 6)).
    The state dependence runs through the pseudo-inverse wrench targets; the
    reverse-mode algebra differentiates the batched linear solves against the
    stacked transport maps directly.
    """
    from .costs import payload_compensation_targets  # local import to avoid a cycle

    steps, n_c = activity.shape
    nx = states.shape[1]
    targets, cache = payload_compensation_targets(states, activity, payload, constants)
    mask = activity[..., None]
    residual = (wrenches - targets) * mask
    v = (residual @ q_d) * mask  # (K, n_c, 6), rows v_i = Q_d rho_i
    m_mat, c, r = cache["m"], cache["c"], cache["r"]
    # w = sum_i A_i v_i, h = M^{-1} w, all batched over stages
    w_vec = np.concatenate(
        [v[:, :, :3].sum(axis=1), (v[:, :, 3:] + cross(r, v[:, :, :3])).sum(axis=1)], axis=1
    )
    h = np.linalg.solve(m_mat, w_vec[..., None])[..., 0]  # (K, 6)
    c1, c2 = c[:, None, :3], c[:, None, 3:]
    h1, h2 = h[:, None, :3], h[:, None, 3:]
    z1 = c1 - cross(r, c2)  # (K, n_c, 3) top block of A_i' c
    zeta1 = h1 - cross(r, h2)
    d_r = (-cross(z1, h2) - cross(zeta1, c2) + cross(v[:, :, :3], c2)) * mask
    d_q = -cross(payload.forces, h[:, None, 3:]).sum(axis=1)  # (K, 3)
    seeds = np.zeros((steps + 1, nx))
    seeds[:steps, 9:] = -d_r.reshape(steps, n_c * 3)
    seeds[:steps, 0:3] = d_r.sum(axis=1) + d_q
    return seeds, v
