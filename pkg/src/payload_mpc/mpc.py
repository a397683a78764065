"""Receding-horizon problem built on the wrench parametrization.

Decision variables per stage are one parameter 6-vector per contact plus one
swing velocity 3-vector per contact; states are eliminated by forward rollout
(single shooting).  Because commanded wrenches come out of the parametrization
they satisfy the contact-stability conditions by construction, so the only
inequality constraints left are boxes on the footstep tracking errors.
Gradients are exact reverse-mode accumulation through the rollout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import costs as _costs
from . import shooting as _shooting
from .contact import (
    invert_parametrization,
    parametrization_jacobian_batch,
    surface_offsets,
)
from .costs import Weights
from .dynamics import CentroidalState, ControlInput, PayloadDisturbance, RobotConstants, Wrench
from .errors import ConfigurationError, InversionError, SolverFailure
from .solver import NlpFunctions, SolverOptions, SolverResult, solve

BOUND_MODE_BOX = "box"
BOUND_MODE_NORM = "norm"

# merit-function trust guard: exp(50) N is far beyond any physical wrench, and
# the parameter regularizer diverges long before, so rejecting these points
# with an infinite objective cannot cut off a minimizer; it only keeps the
# line search from wandering into overflow territory
_XI3_GUARD = 50.0


@dataclass
class MpcConfig:
    horizon: int = 10  # prediction steps
    dt: float = 0.2  # s, controller period
    footstep_bound_lower: np.ndarray = field(default_factory=lambda: np.array([-0.05, -0.05, -0.001]))
    footstep_bound_upper: np.ndarray = field(default_factory=lambda: np.array([0.05, 0.05, 0.001]))
    footstep_bound_mode: str = BOUND_MODE_BOX
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {self.horizon}")
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        lb = np.asarray(self.footstep_bound_lower, dtype=float).reshape(3)
        ub = np.asarray(self.footstep_bound_upper, dtype=float).reshape(3)
        if np.any(lb > 0) or np.any(ub < 0):
            raise ConfigurationError("footstep bounds must satisfy lb <= 0 <= ub componentwise")
        self.footstep_bound_lower = lb
        self.footstep_bound_upper = ub
        if self.footstep_bound_mode not in (BOUND_MODE_BOX, BOUND_MODE_NORM):
            raise ConfigurationError(f"unknown footstep_bound_mode {self.footstep_bound_mode!r}")


@dataclass
class HorizonReferences:
    """Reference window for one controller period: horizon+1 samples of everything."""

    com_refs: np.ndarray  # (K+1, 3)
    footstep_refs: np.ndarray  # (n_c, K+1, 3)
    gait: np.ndarray  # (n_c, K+1) activity flags
    contact_orientations: np.ndarray  # (n_c, 3, 3)

    def __post_init__(self):
        self.com_refs = np.asarray(self.com_refs, dtype=float)
        self.footstep_refs = np.asarray(self.footstep_refs, dtype=float)
        self.gait = np.asarray(self.gait)
        self.contact_orientations = np.asarray(self.contact_orientations, dtype=float)
        if self.com_refs.ndim != 2 or self.com_refs.shape[1] != 3:
            raise ConfigurationError(f"com_refs must be (K+1, 3), got {self.com_refs.shape}")
        samples = self.com_refs.shape[0]
        n_c = self.footstep_refs.shape[0]
        if self.footstep_refs.shape != (n_c, samples, 3):
            raise ConfigurationError(
                f"footstep_refs must be (n_c, {samples}, 3), got {self.footstep_refs.shape}"
            )
        if self.gait.shape != (n_c, samples):
            raise ConfigurationError(f"gait must be (n_c, {samples}), got {self.gait.shape}")
        if not np.isin(self.gait, (0, 1)).all():
            raise ConfigurationError("gait flags must be 0 or 1")
        if self.contact_orientations.shape != (n_c, 3, 3):
            raise ConfigurationError(
                f"contact_orientations must be (n_c, 3, 3), got {self.contact_orientations.shape}"
            )

    @property
    def horizon(self) -> int:
        return self.com_refs.shape[0] - 1

    @property
    def n_contacts(self) -> int:
        return self.footstep_refs.shape[0]


def hold_payload_over_horizon(estimate: PayloadDisturbance, n_steps: int):
    """Zero-order hold: the current payload estimate is assumed over every stage."""
    if n_steps < 1:
        raise ConfigurationError(f"n_steps must be >= 1, got {n_steps}")
    return (estimate,) * n_steps


def footstep_bound_residuals(states: np.ndarray, refs: HorizonReferences, config: MpcConfig) -> np.ndarray:
    """Inequality residuals (positive = satisfied) of the footstep error bounds.

    Errors are expressed in each contact frame.  Box mode emits lower and
    upper residuals per axis (6 per contact-stage); norm mode emits a single
    upper residual on the error norm (the printed lower bound is vacuous for
    non-negative bounds).  Stage 0 is the measured state and carries no
    residuals.
    """
    n_c = refs.n_contacts
    _, _, feet = _costs.split_states(states, n_c)
    steps = feet.shape[0] - 1
    err_world = feet[1:] - refs.footstep_refs.transpose(1, 0, 2)[1:]  # (K, n_c, 3)
    err = np.einsum("iba,kib->kia", refs.contact_orientations, err_world)  # R' e, contact frame
    if config.footstep_bound_mode == BOUND_MODE_BOX:
        lower = err - config.footstep_bound_lower
        upper = config.footstep_bound_upper - err
        return np.concatenate([lower, upper], axis=2).reshape(steps * n_c * 6)
    norm = np.linalg.norm(err, axis=2)
    return (config.footstep_bound_upper[0] - norm).reshape(steps * n_c)


class HorizonProblem:
    """One discrete MPC instance: rollout model, cost tasks and bound residuals.

    The decision vector stacks, stage by stage, the parameter 6-vectors of
    every contact followed by the swing velocities of every contact
    (length horizon * n_contacts * 9).
    """

    def __init__(
        self,
        state: CentroidalState,
        refs: HorizonReferences,
        payload_estimate: PayloadDisturbance,
        weights: Weights,
        config: MpcConfig,
        constants: RobotConstants,
        surfaces,
    ):
        if refs.horizon != config.horizon:
            raise ConfigurationError(
                f"references cover {refs.horizon} steps, config expects {config.horizon}"
            )
        if state.n_contacts != refs.n_contacts:
            raise ConfigurationError(
                f"state has {state.n_contacts} contacts, references {refs.n_contacts}"
            )
        if len(surfaces) != refs.n_contacts:
            raise ConfigurationError("one surface per contact required")
        self.state = state
        self.refs = refs
        self.weights = weights
        self.config = config
        self.constants = constants
        self.surfaces = tuple(surfaces)
        self.horizon = config.horizon
        self.n_contacts = refs.n_contacts
        self.payload_hold = hold_payload_over_horizon(payload_estimate, self.horizon)
        self._payload = _shooting.PayloadArrays.from_hold(self.payload_hold)
        self.activity = np.asarray(refs.gait, dtype=float)[:, : self.horizon].T.copy()  # (K, n_c)
        self.dim = self.horizon * self.n_contacts * 9
        self.use_payload_task = bool(np.any(weights.q_d))
        self._x0 = state.as_vector()

    # -- decision vector layout ------------------------------------------------

    def decode(self, z: np.ndarray):
        """Split a decision vector into xi (K, n_c, 6) and velocities (K, n_c, 3)."""
        z = np.asarray(z, dtype=float).reshape(self.horizon, self.n_contacts * 9)
        xi = z[:, : self.n_contacts * 6].reshape(self.horizon, self.n_contacts, 6)
        vel = z[:, self.n_contacts * 6 :].reshape(self.horizon, self.n_contacts, 3)
        return xi, vel

    def encode(self, xi: np.ndarray, velocities: np.ndarray) -> np.ndarray:
        z = np.concatenate(
            [
                xi.reshape(self.horizon, self.n_contacts * 6),
                velocities.reshape(self.horizon, self.n_contacts * 3),
            ],
            axis=1,
        )
        return z.reshape(self.dim)

    # -- model ------------------------------------------------------------------

    def _wrenches_world(self, xi: np.ndarray) -> np.ndarray:
        return _costs.wrenches_from_parameters(xi, self.refs.contact_orientations, self.surfaces)

    def rollout(self, z: np.ndarray) -> np.ndarray:
        xi, vel = self.decode(z)
        wrenches = self._wrenches_world(xi)
        return _shooting.rollout(
            self._x0, wrenches, vel, self.activity, self._payload, self.constants, self.config.dt
        )

    # -- objective and constraints ----------------------------------------------

    def cost_breakdown(self, z: np.ndarray) -> dict:
        xi, vel = self.decode(z)
        if np.abs(xi[..., 2]).max() > _XI3_GUARD:
            return {"total": np.inf}
        states = self.rollout(z)
        parts = {
            "tracking": _costs.tracking_cost(states, self.refs, self.weights),
            "footsteps": _costs.footstep_cost(states, self.refs, self.weights),
            "parameter_reg": _costs.parameter_regularization_cost(xi, self.weights),
            "velocity_reg": _costs.velocity_regularization_cost(vel, self.weights),
        }
        if self.use_payload_task:
            parts["payload"] = _costs.payload_attenuation_cost(
                xi,
                states,
                self.payload_hold,
                self.refs.gait,
                self.refs.contact_orientations,
                self.surfaces,
                self.constants,
                self.weights,
            )
        else:
            parts["payload"] = 0.0
        parts["total"] = sum(parts.values())
        return parts

    def objective(self, z: np.ndarray) -> float:
        return float(self.cost_breakdown(z)["total"])

    def constraints(self, z: np.ndarray) -> np.ndarray:
        return footstep_bound_residuals(self.rollout(z), self.refs, self.config)

    @property
    def num_constraints(self) -> int:
        per_stage = 6 if self.config.footstep_bound_mode == BOUND_MODE_BOX else 1
        return self.horizon * self.n_contacts * per_stage

    def gradient(self, z: np.ndarray, constraint_weights=None) -> np.ndarray:
        """Exact gradient of objective + s . constraints via one reverse sweep."""
        xi, vel = self.decode(z)
        wrenches = self._wrenches_world(xi)
        states = _shooting.rollout(
            self._x0, wrenches, vel, self.activity, self._payload, self.constants, self.config.dt
        )
        steps, n_c = self.horizon, self.n_contacts
        nx = states.shape[1]
        seeds = np.zeros((steps + 1, nx))
        com, momentum, feet = _costs.split_states(states, n_c)
        # tracking task
        seeds[:, 0:3] += (com - self.refs.com_refs) @ self.weights.q_c
        seeds[:, 6:9] += momentum[:, 3:] @ self.weights.q_h
        # footstep task
        feet_err = feet - self.refs.footstep_refs.transpose(1, 0, 2)
        seeds[:, 9:] += (feet_err @ self.weights.q_pc).reshape(steps + 1, n_c * 3)
        # payload task: direct wrench gradient plus pseudo-inverse state terms
        wrench_direct = np.zeros((steps, n_c, 6))
        if self.use_payload_task:
            payload_seeds, wrench_direct = _shooting.payload_cost_state_seeds(
                states, self.activity, self._payload, self.constants, self.weights.q_d, wrenches
            )
            seeds += payload_seeds
        # footstep bound residuals, folded in through their stage states
        if constraint_weights is not None and constraint_weights.size:
            seeds += self._constraint_state_seeds(states, constraint_weights)
        wrench_adj, vel_adj = _shooting.rollout_adjoint(
            states, wrenches, self.activity, self._payload, self.constants, self.config.dt, seeds
        )
        wrench_total = wrench_adj + wrench_direct
        # chain through the contact rotation and the parametrization Jacobian
        xi_grad = np.empty_like(xi)
        for i in range(n_c):
            rot = self.refs.contact_orientations[i]
            local = np.empty((steps, 6))
            local[:, :3] = wrench_total[:, i, :3] @ rot
            local[:, 3:] = wrench_total[:, i, 3:] @ rot
            jac = parametrization_jacobian_batch(xi[:, i, :], self.surfaces[i])
            xi_grad[:, i, :] = np.einsum("kab,ka->kb", jac, local)
        xi_grad += xi @ self.weights.q_xi
        vel_grad = vel_adj + vel @ self.weights.q_v
        return self.encode(xi_grad, vel_grad)

    def _constraint_state_seeds(self, states: np.ndarray, s: np.ndarray) -> np.ndarray:
        steps, n_c = self.horizon, self.n_contacts
        seeds = np.zeros_like(states)
        rots = self.refs.contact_orientations
        if self.config.footstep_bound_mode == BOUND_MODE_BOX:
            sw = s.reshape(steps, n_c, 6)
            # d(e - lb)/dp = R', d(ub - e)/dp = -R'
            delta = sw[..., :3] - sw[..., 3:]
            seeds[1:, 9:] = np.einsum("iab,kib->kia", rots, delta).reshape(steps, n_c * 3)
        else:
            sw = s.reshape(steps, n_c)
            _, _, feet = _costs.split_states(states, n_c)
            err_world = feet[1:] - self.refs.footstep_refs.transpose(1, 0, 2)[1:]
            err = np.einsum("iba,kib->kia", rots, err_world)
            norm = np.linalg.norm(err, axis=2, keepdims=True)
            unit = np.where(norm > 1e-12, err / np.maximum(norm, 1e-12), 0.0)
            contrib = -sw[..., None] * np.einsum("iab,kib->kia", rots, unit)
            seeds[1:, 9:] = contrib.reshape(steps, n_c * 3)
        return seeds

    # -- solver plumbing ---------------------------------------------------------

    def evaluator(self) -> NlpFunctions:
        def value(z):
            xi, vel = self.decode(z)
            if np.abs(xi[..., 2]).max() > _XI3_GUARD:
                return np.inf, np.zeros(self.num_constraints)
            wrenches = self._wrenches_world(xi)
            states = _shooting.rollout(
                self._x0, wrenches, vel, self.activity, self._payload, self.constants, self.config.dt
            )
            # reject blown-up rollouts (line-search overshoot): far beyond any
            # physical trajectory, and lever arms this large would make the
            # payload-target solve numerically singular
            if not np.isfinite(states).all() or np.abs(states).max() > 1e6:
                return np.inf, np.zeros(self.num_constraints)
            f = (
                _costs.tracking_cost(states, self.refs, self.weights)
                + _costs.footstep_cost(states, self.refs, self.weights)
                + _costs.parameter_regularization_cost(xi, self.weights)
                + _costs.velocity_regularization_cost(vel, self.weights)
            )
            if self.use_payload_task:
                f += _costs.payload_attenuation_from_wrenches(
                    wrenches, states, self._payload, self.activity, self.constants, self.weights
                )
            residuals = footstep_bound_residuals(states, self.refs, self.config)
            return float(f), residuals

        return NlpFunctions(
            dim=self.dim,
            num_constraints=self.num_constraints,
            value=value,
            gradient=self.gradient,
            metric_diag=self.curvature_metric(),
        )

    def curvature_metric(self) -> np.ndarray:
        """Per-variable inverse-curvature estimates seeding the quasi-Newton matrix.

        Variable stiffness spans six orders of magnitude (payload-task force
        directions versus gated swing velocities), which cripples an
        unpreconditioned L-BFGS.  Order-of-magnitude structural estimates are
        enough: force-direction curvature from the payload task and the
        tracking tasks mapped through the rollout sensitivity, swing-velocity
        curvature from the footstep task.
        """
        steps, n_c = self.horizon, self.n_contacts
        dt = self.config.dt
        mass = self.constants.mass
        w = self.weights
        qd_f = float(np.diag(w.q_d)[:3].mean())
        qd_m = float(np.diag(w.q_d)[3:].mean())
        q_xi_d = np.diag(w.q_xi)
        q_h_m = float(np.diag(w.q_h).mean())
        q_c_max = float(np.diag(w.q_c).max())
        q_pc_m = float(np.diag(w.q_pc).mean())
        q_v_d = np.diag(w.q_v)
        curvature = np.empty((steps, n_c, 9))
        for k in range(steps):
            remaining = steps - k
            n_active = max(self.activity[k].sum(), 1.0)
            share = mass * 9.81 / n_active
            # cost per unit squared force: payload task plus momentum and CoM
            # tracking mapped through the one-step impulse response of the
            # rollout (a stage force acts for a single period)
            curv_force = (
                qd_f
                + q_h_m * dt * dt * remaining
                + q_c_max * dt**4 * remaining**3 / (3.0 * mass * mass)
            )
            curv_moment = qd_m + q_h_m * dt * dt * remaining
            for i in range(n_c):
                gamma = self.activity[k, i]
                d = surface_offsets(self.surfaces[i])
                mu_c, mu_z = self.surfaces[i].mu_c, self.surfaces[i].mu_z
                c = curvature[k, i]
                c[0] = q_xi_d[0] + gamma * curv_force * (mu_c * share) ** 2
                c[1] = q_xi_d[1] + gamma * curv_force * (mu_c * share) ** 2
                c[2] = q_xi_d[2] + gamma * curv_force * share**2
                c[3] = q_xi_d[3] + gamma * curv_moment * (d.delta_y * share) ** 2
                c[4] = q_xi_d[4] + gamma * curv_moment * (d.delta_x * share) ** 2
                c[5] = q_xi_d[5] + gamma * curv_moment * (mu_z * share) ** 2
                # swing velocity: footstep tracking over the remaining stages
                # plus, once the foot lands inside the horizon, the lever-arm
                # coupling of its frozen position into the accumulated angular
                # momentum (hence the cubic stage count)
                landed_after = int(self.activity[k + 1 :, i].sum()) if gamma < 0.5 else 0
                lever = q_h_m * dt**4 * (mass * 9.81) ** 2 * landed_after**3 / 3.0
                c[6:] = q_v_d + (1.0 - gamma) * (q_pc_m * dt * dt * remaining + lever)
        metric = np.empty((steps, n_c * 9))
        metric[:, : n_c * 6] = (1.0 / curvature[:, :, :6]).reshape(steps, n_c * 6)
        metric[:, n_c * 6 :] = (1.0 / curvature[:, :, 6:]).reshape(steps, n_c * 3)
        return metric.reshape(self.dim)

    # -- warm starts ---------------------------------------------------------------

    def initial_warm_start(self) -> np.ndarray:
        """Static gravity-share guess: invert the per-contact share of the weight."""
        xi = np.zeros((self.horizon, self.n_contacts, 6))
        mass = self.constants.mass
        share_cache = {}
        for k in range(self.horizon):
            active = self.activity[k]
            n_active = max(int(active.sum()), 1)
            for i in range(self.n_contacts):
                if not active[i]:
                    continue
                key = (i, n_active)
                if key not in share_cache:
                    rot = self.refs.contact_orientations[i]
                    share = np.concatenate([rot.T @ [0.0, 0.0, mass * 9.81 / n_active], np.zeros(3)])
                    try:
                        share_cache[key] = invert_parametrization(
                            Wrench.from_array(share), self.surfaces[i]
                        )
                    except InversionError:
                        share_cache[key] = np.zeros(6)
                xi[k, i] = share_cache[key]
        return self.encode(xi, np.zeros((self.horizon, self.n_contacts, 3)))

    def shift_warm_start(self, z: np.ndarray) -> np.ndarray:
        """Drop the first stage, duplicate the last one."""
        blocks = np.asarray(z, dtype=float).reshape(self.horizon, self.n_contacts * 9)
        return np.concatenate([blocks[1:], blocks[-1:]], axis=0).reshape(self.dim)

    def first_input(self, z: np.ndarray):
        """Stage-0 command: parameters, inertial-frame wrenches, swing velocities."""
        xi, vel = self.decode(z)
        wrenches_world = self._wrenches_world(xi[:1])[0]
        wrenches = [
            Wrench.from_array(wrenches_world[i]) if self.activity[0, i] else Wrench.zero()
            for i in range(self.n_contacts)
        ]
        return xi[0].copy(), wrenches, vel[0].copy()


@dataclass
class ControlStep:
    """Outcome of one receding-horizon update."""

    xi: np.ndarray  # (n_c, 6) stage-0 parameters
    wrenches: list  # inertial-frame Wrench per contact (zero for swing contacts)
    contact_velocities: np.ndarray  # (n_c, 3)
    warm_start: np.ndarray  # shifted solution for the next period
    stats: SolverResult

    @property
    def input(self) -> ControlInput:
        return ControlInput(self.xi, self.contact_velocities)


def build_mpc_problem(
    state: CentroidalState,
    refs: HorizonReferences,
    payload_estimate: PayloadDisturbance,
    weights: Weights,
    config: MpcConfig,
    constants: RobotConstants,
    surfaces,
) -> HorizonProblem:
    return HorizonProblem(state, refs, payload_estimate, weights, config, constants, surfaces)


def receding_horizon_step(problem, warm_start=None) -> ControlStep:
    """Solve the horizon problem and return the first input plus a shifted warm start.

    Raises `SolverFailure` (with the last iterate attached) when the solver
    returns a non-finite iterate; degraded-but-usable outcomes are reported
    through `stats.status` instead.
    """
    z0 = problem.initial_warm_start() if warm_start is None else np.asarray(warm_start, dtype=float)
    result = solve(problem.evaluator(), z0, problem.config.solver)
    if not np.all(np.isfinite(result.z)) or not np.isfinite(result.objective):
        raise SolverFailure("solver returned a non-finite iterate", result=result)
    xi0, wrenches, velocities = problem.first_input(result.z)
    return ControlStep(
        xi=xi0,
        wrenches=wrenches,
        contact_velocities=velocities,
        warm_start=problem.shift_warm_start(result.z),
        stats=result,
    )
