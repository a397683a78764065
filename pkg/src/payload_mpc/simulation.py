"""Closed-loop reduced-model experiments.

Every controller period: slice the reference window, hold the current payload
estimate over the horizon, solve the receding-horizon problem, then apply the
first input zero-order-held to a plant integrated with the same centroidal
dynamics at a finer step.  The payload's grip points track the simulated CoM
(the load is carried), and the payload-blind controller variant simply
receives a zero estimate while the plant keeps the disturbance.

Logs are recorded per plant tick and exported to CSV with a fixed header.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .baseline import baseline_receding_horizon_step, build_constrained_mpc
from .contact import ContactSurface, stability_margins
from .costs import Weights
from .dynamics import (
    CentroidalState,
    ContactConfiguration,
    ContactPoint,
    PayloadDisturbance,
    RobotConstants,
    euler_step,
)
from .errors import ConfigurationError, SolverFailure
from .gait import GaitParameters, generate_gait_schedule, generate_nominal_com_reference, payload_from_mass
from .mpc import HorizonReferences, MpcConfig, build_mpc_problem, receding_horizon_step
from .solver import SolverOptions

CONTROLLER_PARAM = "param"
CONTROLLER_BASELINE = "baseline"
CONTROLLER_PARAM_NO_PAYLOAD_TASK = "param-no-td"
CONTROLLERS = (CONTROLLER_PARAM, CONTROLLER_BASELINE, CONTROLLER_PARAM_NO_PAYLOAD_TASK)

# practical solver settings for closed-loop runs: the absolute 1e-6 library
# default is below the line-search noise floor of these cost magnitudes
def default_run_solver_options() -> SolverOptions:
    return SolverOptions(max_iterations=200, kkt_tolerance=3e-3)


@dataclass
class PayloadSpec:
    mass: float = 0.0  # kg
    left_offset: tuple = (0.25, 0.1, -0.1325)  # m, CoM-relative grip points
    right_offset: tuple = (0.25, -0.1, -0.1325)
    onset_time: float = 0.0  # s

    def validate(self) -> None:
        if self.mass < 0:
            raise ConfigurationError(f"payload mass must be >= 0, got {self.mass}")
        if self.onset_time < 0:
            raise ConfigurationError(f"payload onset_time must be >= 0, got {self.onset_time}")


@dataclass
class Scenario:
    constants: RobotConstants = field(default_factory=lambda: RobotConstants(mass=1.0))
    surface: ContactSurface = field(default_factory=lambda: ContactSurface(-0.2, 0.2, -0.075, 0.075))
    gait: GaitParameters = field(default_factory=GaitParameters)
    payload: PayloadSpec = field(default_factory=PayloadSpec)
    controller: str = CONTROLLER_PARAM
    plant_dt: float = 0.01  # s
    duration: float = 8.0  # s
    seed: int = 0
    weights: Weights = field(default_factory=Weights)
    mpc: MpcConfig = field(default_factory=lambda: MpcConfig(solver=default_run_solver_options()))

    def validate(self) -> None:
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.duration <= 0:
            raise ConfigurationError(f"duration must be positive, got {self.duration}")
        if self.plant_dt <= 0:
            raise ConfigurationError(f"plant_dt must be positive, got {self.plant_dt}")
        ratio = self.mpc.dt / self.plant_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ConfigurationError(
                f"plant_dt={self.plant_dt} must divide the controller period {self.mpc.dt}"
            )
        self.payload.validate()
        self.gait.validate(self.mpc.dt)


def with_controller(scenario: Scenario, controller: str) -> Scenario:
    return dataclasses.replace(scenario, controller=controller)


def default_payload_scenario(**overrides) -> Scenario:
    """Carry-walk demo: 1 kg floating mass with a 1.5 kg payload held ahead.

    The support rectangles extend toward the toes so the stationary center of
    pressure demanded by the forward payload (0.15 m ahead of each ankle)
    sits at the interior rest point of the wrench parametrization.
    """
    base = dict(
        constants=RobotConstants(mass=1.0),
        surface=ContactSurface(-0.05, 0.35, -0.075, 0.075),
        gait=GaitParameters(),
        payload=PayloadSpec(mass=1.5),
        duration=8.0,
    )
    base.update(overrides)
    return Scenario(**base)


@dataclass
class SimLog:
    """Per-plant-tick record of one closed-loop run."""

    n_contacts: int
    times: np.ndarray
    com: np.ndarray  # (T, 3)
    com_ref: np.ndarray  # (T, 3)
    momentum: np.ndarray  # (T, 6)
    feet: np.ndarray  # (T, n_c, 3)
    feet_ref: np.ndarray  # (T, n_c, 3)
    feet_active: np.ndarray  # (T, n_c)
    wrenches: np.ndarray  # (T, n_c, 6) applied, inertial frame
    xi: np.ndarray  # (T, n_c, 6)
    payload_fz_total: np.ndarray  # (T,)
    costs: np.ndarray  # (T, 4) tracking, footsteps, payload, parameter_reg
    solve_ms: np.ndarray  # (T,)
    iterations: np.ndarray  # (T,)
    status: list  # (T,) strings
    completed: bool = True
    failure_reason: str = ""
    # per-controller-tick solver records (benchmark views)
    solve_ms_per_tick: np.ndarray = None
    iterations_per_tick: np.ndarray = None
    status_per_tick: list = None

    def tracking_error(self) -> np.ndarray:
        return self.com - self.com_ref

    def summary(self) -> dict:
        err = self.tracking_error()
        horizontal = np.linalg.norm(err[:, :2], axis=1)
        return {
            "completed": self.completed,
            "failure_reason": self.failure_reason,
            "duration_s": float(self.times[-1]) if self.times.size else 0.0,
            "final_com_error_m": [float(v) for v in err[-1]] if err.size else [],
            "max_horizontal_error_m": float(horizontal.max()) if horizontal.size else 0.0,
            "mean_horizontal_error_m": float(horizontal.mean()) if horizontal.size else 0.0,
            "max_height_deviation_m": float(np.abs(err[:, 2]).max()) if err.size else 0.0,
            "mean_solve_ms": float(np.mean(self.solve_ms_per_tick)) if self.solve_ms_per_tick is not None and len(self.solve_ms_per_tick) else 0.0,
            "mean_iterations": float(np.mean(self.iterations_per_tick)) if self.iterations_per_tick is not None and len(self.iterations_per_tick) else 0.0,
            "cost_totals": [float(v) for v in self.costs.sum(axis=0)] if self.costs.size else [],
        }

    def csv_header(self) -> list:
        header = ["t", "com_x", "com_y", "com_z", "ref_com_x", "ref_com_y", "ref_com_z",
                  "hl_x", "hl_y", "hl_z", "hw_x", "hw_y", "hw_z"]
        for i in range(1, self.n_contacts + 1):
            header += [f"c{i}_{a}" for a in "xyz"]
            header += [f"c{i}_ref_{a}" for a in "xyz"]
            header += [f"c{i}_active"]
            header += [f"f{i}_{a}" for a in "xyz"]
            header += [f"m{i}_{a}" for a in "xyz"]
            header += [f"xi_{i}_{j}" for j in range(1, 7)]
        header += ["d_fz_total", "cost_Th", "cost_Tpc", "cost_Td", "cost_Txi",
                   "solve_ms", "iterations", "status"]
        return header

    def to_csv(self, path) -> None:
        import csv as _csv

        with open(path, "w", newline="") as handle:
            writer = _csv.writer(handle)
            writer.writerow(self.csv_header())
            for t in range(len(self.times)):
                row = [f"{self.times[t]:.6f}"]
                row += [f"{v:.9g}" for v in self.com[t]]
                row += [f"{v:.9g}" for v in self.com_ref[t]]
                row += [f"{v:.9g}" for v in self.momentum[t]]
                for i in range(self.n_contacts):
                    row += [f"{v:.9g}" for v in self.feet[t, i]]
                    row += [f"{v:.9g}" for v in self.feet_ref[t, i]]
                    row += [int(self.feet_active[t, i])]
                    row += [f"{v:.9g}" for v in self.wrenches[t, i]]
                    row += [f"{v:.9g}" for v in self.xi[t, i]]
                row += [f"{self.payload_fz_total[t]:.9g}"]
                row += [f"{v:.9g}" for v in self.costs[t]]
                row += [f"{self.solve_ms[t]:.3f}", int(self.iterations[t]), self.status[t]]
                writer.writerow(row)

    def write_summary(self, path) -> None:
        with open(path, "w") as handle:
            json.dump(self.summary(), handle, indent=2)


def _reference_window(schedule, com_refs, tick, horizon):
    window = slice(tick, tick + horizon + 1)
    return (
        com_refs[window],
        schedule.footstep_refs[:, window, :],
        schedule.activity[:, window],
    )


def _payload_at(spec: PayloadSpec, com: np.ndarray, t: float) -> PayloadDisturbance:
    if spec.mass <= 0 or t < spec.onset_time - 1e-12:
        return PayloadDisturbance.zero()
    return payload_from_mass(spec.mass, spec.left_offset, spec.right_offset).translated(com)


def run_closed_loop(scenario: Scenario) -> SimLog:
    """Simulate one scenario; deterministic for a fixed scenario and seed."""
    scenario.validate()
    config = scenario.mpc
    horizon = config.horizon
    n_mpc_ticks = int(round(scenario.duration / config.dt))
    substeps = int(round(config.dt / scenario.plant_dt))
    schedule = generate_gait_schedule(scenario.gait, config, min_ticks=n_mpc_ticks + horizon + 1)
    com_refs = generate_nominal_com_reference(schedule, scenario.gait)
    n_c = schedule.n_contacts
    surfaces = [scenario.surface] * n_c
    orientations = np.tile(np.eye(3), (n_c, 1, 1))

    weights = scenario.weights
    payload_blind = scenario.controller == CONTROLLER_PARAM_NO_PAYLOAD_TASK
    if payload_blind:
        weights = weights.without_payload_task()

    feet0 = schedule.footstep_refs[:, 0, :].copy()
    state = CentroidalState(com_refs[0], np.zeros(6), feet0)

    total_plant_ticks = n_mpc_ticks * substeps
    log = SimLog(
        n_contacts=n_c,
        times=np.zeros(total_plant_ticks),
        com=np.zeros((total_plant_ticks, 3)),
        com_ref=np.zeros((total_plant_ticks, 3)),
        momentum=np.zeros((total_plant_ticks, 6)),
        feet=np.zeros((total_plant_ticks, n_c, 3)),
        feet_ref=np.zeros((total_plant_ticks, n_c, 3)),
        feet_active=np.zeros((total_plant_ticks, n_c), dtype=int),
        wrenches=np.zeros((total_plant_ticks, n_c, 6)),
        xi=np.zeros((total_plant_ticks, n_c, 6)),
        payload_fz_total=np.zeros(total_plant_ticks),
        costs=np.zeros((total_plant_ticks, 4)),
        solve_ms=np.zeros(total_plant_ticks),
        iterations=np.zeros(total_plant_ticks, dtype=int),
        status=[""] * total_plant_ticks,
        solve_ms_per_tick=np.zeros(n_mpc_ticks),
        iterations_per_tick=np.zeros(n_mpc_ticks, dtype=int),
        status_per_tick=[""] * n_mpc_ticks,
    )

    warm = None
    row = 0
    for tick in range(n_mpc_ticks):
        t = tick * config.dt
        com_window, feet_window, gait_window = _reference_window(schedule, com_refs, tick, horizon)
        refs = HorizonReferences(com_window, feet_window, gait_window, orientations)
        payload_true = _payload_at(scenario.payload, state.com_position, t)
        estimate = PayloadDisturbance.zero() if payload_blind else payload_true
        if scenario.controller == CONTROLLER_BASELINE:
            problem = build_constrained_mpc(
                state, refs, estimate, weights, config, scenario.constants, surfaces
            )
            stepper = baseline_receding_horizon_step
        else:
            problem = build_mpc_problem(
                state, refs, estimate, weights, config, scenario.constants, surfaces
            )
            stepper = receding_horizon_step
        start = time.perf_counter()
        try:
            step = stepper(problem, warm)
        except SolverFailure as failure:
            log = _truncate_log(log, row, tick)
            log.completed = False
            log.failure_reason = str(failure)
            return log
        solve_ms = 1000.0 * (time.perf_counter() - start)
        warm = step.warm_start
        breakdown = problem.cost_breakdown(step.stats.z)
        active = schedule.activity[:, tick].astype(float)
        # stability audit of the applied wrenches (parametrized controllers
        # satisfy it by construction; the baseline within solver tolerance)
        for i in range(n_c):
            if active[i]:
                margins = stability_margins(step.wrenches[i].as_array(), scenario.surface)
                slack = -1e-12 if scenario.controller != CONTROLLER_BASELINE else -1e-5
                if margins.min() < slack:
                    log = _truncate_log(log, row, tick)
                    log.completed = False
                    log.failure_reason = (
                        f"applied wrench violates contact stability at t={t:.2f}s "
                        f"(contact {i}, margins {margins})"
                    )
                    return log
        log.solve_ms_per_tick[tick] = solve_ms
        log.iterations_per_tick[tick] = step.stats.iterations
        log.status_per_tick[tick] = step.stats.status
        wrench_rows = np.array([w.as_array() for w in step.wrenches])
        cost_row = np.array(
            [
                breakdown.get("tracking", 0.0),
                breakdown.get("footsteps", 0.0),
                breakdown.get("payload", 0.0),
                breakdown.get("parameter_reg", breakdown.get("input_reg", 0.0)),
            ]
        )
        contacts = ContactConfiguration(
            tuple(
                ContactPoint(state.contact_positions[i], orientations[i], int(active[i]), scenario.surface)
                for i in range(n_c)
            )
        )
        for sub in range(substeps):
            t_plant = t + sub * scenario.plant_dt
            payload_plant = _payload_at(scenario.payload, state.com_position, t_plant)
            alpha = sub / substeps
            log.times[row] = t_plant
            log.com[row] = state.com_position
            # references interpolated to plant resolution (they are piecewise
            # linear across controller ticks)
            log.com_ref[row] = (1 - alpha) * com_refs[tick] + alpha * com_refs[tick + 1]
            log.feet_ref[row] = (
                (1 - alpha) * schedule.footstep_refs[:, tick, :]
                + alpha * schedule.footstep_refs[:, tick + 1, :]
            )
            log.momentum[row] = state.momentum
            log.feet[row] = state.contact_positions
            log.feet_active[row] = schedule.activity[:, tick]
            log.wrenches[row] = wrench_rows
            log.xi[row] = step.xi
            log.payload_fz_total[row] = payload_plant.total_force()[2]
            log.costs[row] = cost_row
            log.solve_ms[row] = solve_ms
            log.iterations[row] = step.stats.iterations
            log.status[row] = step.stats.status
            state = euler_step(
                state,
                step.wrenches,
                step.contact_velocities,
                payload_plant,
                contacts,
                scenario.constants,
                scenario.plant_dt,
            )
            row += 1
    return log


def _truncate_log(log: SimLog, rows: int, ticks: int) -> SimLog:
    return dataclasses.replace(
        log,
        times=log.times[:rows],
        com=log.com[:rows],
        com_ref=log.com_ref[:rows],
        momentum=log.momentum[:rows],
        feet=log.feet[:rows],
        feet_ref=log.feet_ref[:rows],
        feet_active=log.feet_active[:rows],
        wrenches=log.wrenches[:rows],
        xi=log.xi[:rows],
        payload_fz_total=log.payload_fz_total[:rows],
        costs=log.costs[:rows],
        solve_ms=log.solve_ms[:rows],
        iterations=log.iterations[:rows],
        status=log.status[:rows],
        solve_ms_per_tick=log.solve_ms_per_tick[:ticks],
        iterations_per_tick=log.iterations_per_tick[:ticks],
        status_per_tick=log.status_per_tick[:ticks],
    )


def run_shared_trace(scenario: Scenario, report) -> None:
    """Benchmark mode: baseline re-solves the parametrized loop's exact problems.

    The parametrized controller drives the plant; at every tick the baseline
    solves the same state/reference/payload instance open loop.  Removes
    trajectory divergence from the timing comparison.
    """
    from .baseline import TickTiming

    scenario.validate()
    config = scenario.mpc
    horizon = config.horizon
    n_mpc_ticks = int(round(scenario.duration / config.dt))
    substeps = int(round(config.dt / scenario.plant_dt))
    schedule = generate_gait_schedule(scenario.gait, config, min_ticks=n_mpc_ticks + horizon + 1)
    com_refs = generate_nominal_com_reference(schedule, scenario.gait)
    n_c = schedule.n_contacts
    surfaces = [scenario.surface] * n_c
    orientations = np.tile(np.eye(3), (n_c, 1, 1))
    feet0 = schedule.footstep_refs[:, 0, :].copy()
    state = CentroidalState(com_refs[0], np.zeros(6), feet0)
    warm_param = None
    warm_base = None
    for tick in range(n_mpc_ticks):
        t = tick * config.dt
        com_window, feet_window, gait_window = _reference_window(schedule, com_refs, tick, horizon)
        refs = HorizonReferences(com_window, feet_window, gait_window, orientations)
        payload_true = _payload_at(scenario.payload, state.com_position, t)
        param_problem = build_mpc_problem(
            state, refs, payload_true, scenario.weights, config, scenario.constants, surfaces
        )
        start = time.perf_counter()
        step = receding_horizon_step(param_problem, warm_param)
        report.append(
            TickTiming(tick, "param", 1000.0 * (time.perf_counter() - start), step.stats.iterations, step.stats.status)
        )
        warm_param = step.warm_start
        base_problem = build_constrained_mpc(
            state, refs, payload_true, scenario.weights, config, scenario.constants, surfaces
        )
        start = time.perf_counter()
        base_step = baseline_receding_horizon_step(base_problem, warm_base)
        report.append(
            TickTiming(tick, "baseline", 1000.0 * (time.perf_counter() - start), base_step.stats.iterations, base_step.stats.status)
        )
        warm_base = base_step.warm_start
        contacts = ContactConfiguration(
            tuple(
                ContactPoint(state.contact_positions[i], orientations[i], int(schedule.activity[i, tick]), scenario.surface)
                for i in range(n_c)
            )
        )
        for sub in range(substeps):
            payload_plant = _payload_at(scenario.payload, state.com_position, t + sub * scenario.plant_dt)
            state = euler_step(
                state, step.wrenches, step.contact_velocities, payload_plant, contacts,
                scenario.constants, scenario.plant_dt,
            )
