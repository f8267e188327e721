"""Closed-loop orchestration: the planning loop, the torque-level leg
controllers, and the simulated plant.

The plant is the hybrid kinodynamic model itself, stepped at the plant rate
with scripted contact switching, state-additive disturbance impulses, and
optional measurement noise on the body states. Replanning runs at the MPC
rate in a deterministic interleaved mode: the plan computed at a control
tick is used from that tick onward, so the controller never acts on a plan
older than one MPC period.

Stance legs receive the planner's ground-reaction feedback law evaluated at
the true state; swing legs are driven kinematically by the commanded joint
velocities implied by the Bezier/IK tracking layer. Joint torques for both
are computed and logged for consistency checking, but do not drive this
kinodynamic plant.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import gait, problem as problem_mod, robot
from .dynamics import (
    BODY,
    GimbalLock,
    OMEGA,
    POS,
    THETA,
    VEL,
    grf_slice,
    integrate_step,
    joint_vel_slice,
    pack_state,
    y_slice,
)
from .gait import TOUCHDOWN
from .reference import generate_reference, neutral_foothold
from .robot import LEGS, LegIndex, OutOfWorkspace
from .rotations import euler_to_rotation, skew
from .scenario import HORIZON, PLAN_DT, Scenario, SimConfig
from .solver import DdpSolution, RolloutDiverged, solve, warm_start_replan


class SimulationDiverged(RuntimeError):
    """Plant state exceeded the configured bound."""


@dataclass
class Plan:
    """Immutable snapshot of one solve, timestamped at its window start."""

    solution: DdpSolution
    t0: float
    window: object
    foot_targets: dict = field(default_factory=dict)  # leg -> (p_world, t_touchdown)
    converged: bool = True
    stale: bool = False

    def step_index(self, t: float) -> int:
        k = int(np.floor((t - self.t0) / PLAN_DT + 1e-9))
        return min(max(k, 0), self.solution.us.shape[0] - 1)


@dataclass
class SolveRecord:
    t: float
    wall_ms: float
    iterations: int
    cost: float
    violation: float
    status: str
    kind: str  # "first" | "replan"


@dataclass
class RunLog:
    times: np.ndarray
    states: np.ndarray     # (n, 24)
    controls: np.ndarray   # (n, 24)
    torques: np.ndarray    # (n, 12)
    contacts: np.ndarray   # (n, 4)
    plan_t0: np.ndarray    # (n,)
    events: list
    telemetry: list
    summary: dict
    diverged: bool


def initial_state(scenario: Scenario) -> np.ndarray:
    """Schedule-consistent standing state at the first commanded height."""
    params = scenario.params
    h = scenario.script.command_at(scenario.schedule.start).height
    p = np.array([0.0, 0.0, h])
    flags = scenario.schedule.flags_at_step(0)
    ys = []
    for leg in LEGS:
        if flags[leg.idx]:
            foot = robot.forward_kinematics(params, leg, params.default_angles(leg), p)
            ys.append(np.array([foot[0], foot[1], 0.0]))
        else:
            ys.append(params.default_angles(leg).copy())
    return pack_state(np.zeros(3), p, np.zeros(3), np.zeros(3), ys)


class MpcController:
    """Receding-horizon planner: cold solve once, feedback-warm-started replans."""

    def __init__(self, scenario: Scenario, replan_iters: int | None = None,
                 feedback_warmstart: bool | None = None):
        self.scenario = scenario
        overrides = {}
        if replan_iters is not None:
            overrides["replan_iters"] = replan_iters
        if feedback_warmstart is not None:
            overrides["use_feedback_warmstart"] = feedback_warmstart
        self.options = replace(scenario.solver, **overrides) if overrides else scenario.solver
        self.prev: DdpSolution | None = None
        self._prev_t0 = 0.0
        self._prev_plan: Plan | None = None

    def replan(self, x_measured: np.ndarray, t: float) -> Plan:
        """Build and solve the window at t; on total rollout failure the
        previous plan is kept (stale) and retried next period."""
        scn = self.scenario
        win = gait.window(scn.schedule, t, HORIZON)
        ref = generate_reference(scn.script, win, x_measured, scn.params)
        prob = problem_mod.build_problem(scn.params, scn.weights, win, ref, x_measured, self.options)
        if self.prev is None:
            sol = solve(prob, self.options)
        else:
            shift = int(round((win.start - self._prev_t0) / PLAN_DT))
            try:
                sol = warm_start_replan(self.prev, x_measured, prob, self.options, shift=shift)
            except RolloutDiverged:
                return replace(self._prev_plan, converged=False, stale=True)
        self.prev = sol
        self._prev_t0 = win.start
        plan = Plan(
            solution=sol,
            t0=win.start,
            window=win,
            foot_targets=self._foot_targets(sol, win),
            converged=sol.converged,
        )
        self._prev_plan = plan
        return plan

    def _foot_targets(self, sol: DdpSolution, win) -> dict:
        """Planned foothold for each leg's next touchdown inside the window."""
        targets = {}
        for ph in gait.segment_phases(win):
            for leg, kind in ph.events.items():
                if kind == TOUCHDOWN and leg not in targets and ph.end < win.n_steps:
                    targets[leg] = (
                        sol.xs[ph.end][y_slice(leg)].copy(),
                        win.start + ph.end * PLAN_DT,
                    )
        return targets


def stance_torque(params, plan: Plan, leg: LegIndex, t: float, x_measured: np.ndarray):
    """Jacobian-transpose stance torque with the body-state feedback term.

    Returns (torques, clamped); the hip frame is taken body-axis-aligned.
    Total over its inputs: an unreachable foothold (body displaced beyond
    the leg workspace) yields zero torque rather than an error.
    """
    k = plan.step_index(t)
    sol = plan.solution
    lam = sol.us[k][grf_slice(leg)].copy()
    gains_block = sol.gains[k][grf_slice(leg), BODY]
    lam += gains_block @ (x_measured[BODY] - sol.xs[k][BODY])
    try:
        q = _stance_joint_angles(params, leg, x_measured)
    except OutOfWorkspace:
        return np.zeros(3), True
    tau = robot.leg_jacobian(params, leg, q).T @ lam
    clamped = np.clip(tau, -params.torque_limit, params.torque_limit)
    return clamped, bool(np.any(clamped != tau))


def _stance_joint_angles(params, leg, x):
    R = euler_to_rotation(x[THETA])
    return robot.inverse_kinematics_world(params, leg, x[y_slice(leg)], x[POS], R)


def swing_foot_trajectory(p_start, p_target, phase, apex_height, duration):
    """Cubic Bezier swing arc lifted by apex_height; returns (position, velocity)."""
    phase = float(np.clip(phase, 0.0, 1.0))
    lift = np.array([0.0, 0.0, apex_height])
    p0 = np.asarray(p_start, dtype=float)
    p3 = np.asarray(p_target, dtype=float)
    p1 = p0 + lift
    p2 = p3 + lift
    c = 1.0 - phase
    pos = (c**3) * p0 + 3 * (c**2) * phase * p1 + 3 * c * (phase**2) * p2 + (phase**3) * p3
    dpos = 3 * (c**2) * (p1 - p0) + 6 * c * phase * (p2 - p1) + 3 * (phase**2) * (p3 - p2)
    return pos, dpos / max(duration, 1e-9)


@dataclass
class SwingTracker:
    """Per-leg swing bookkeeping between takeoff and the next touchdown."""

    leg: LegIndex
    t_liftoff: float = 0.0
    t_touchdown: float = 0.0
    p_start: np.ndarray | None = None
    last_q_des: np.ndarray | None = None
    last_qd_des: np.ndarray | None = None
    ik_failed: bool = False

    def phase(self, t: float) -> float:
        span = max(self.t_touchdown - self.t_liftoff, 1e-9)
        return float(np.clip((t - self.t_liftoff) / span, 0.0, 1.0))


def swing_targets(params, control, tracker: SwingTracker, plan: Plan, t, x):
    """Desired joint position/velocity for a swing leg from the Bezier arc.

    IK failures hold the last feasible target and set the tracker flag.
    """
    leg = tracker.leg
    target = None
    if plan is not None and leg in plan.foot_targets:
        target = plan.foot_targets[leg][0]
    if target is None:
        rel = neutral_foothold(params, leg)
        target = np.array([x[3] + rel[0], x[4] + rel[1], 0.0])
    duration = max(tracker.t_touchdown - tracker.t_liftoff, 1e-9)
    pos, vel = swing_foot_trajectory(tracker.p_start, target, tracker.phase(t),
                                     control.swing_apex, duration)
    R = euler_to_rotation(x[THETA])
    try:
        q_des = robot.inverse_kinematics_world(params, leg, pos, x[POS], R)
        # hip-frame velocity of the swing target, accounting for body motion
        p_hip = R.T @ (pos - x[POS]) - params.hip_offset(leg)
        v_hip = R.T @ (vel - x[VEL]) - skew(x[OMEGA]) @ (params.hip_offset(leg) + p_hip)
        J = robot.leg_jacobian(params, leg, q_des)
        qd_des = np.linalg.solve(J, v_hip) if abs(np.linalg.det(J)) > 1e-9 else np.zeros(3)
        tracker.last_q_des = q_des
        tracker.last_qd_des = qd_des
        tracker.ik_failed = False
    except OutOfWorkspace:
        if tracker.last_q_des is None:
            tracker.last_q_des = params.default_angles(leg).copy()
            tracker.last_qd_des = np.zeros(3)
        q_des, qd_des = tracker.last_q_des, tracker.last_qd_des
        tracker.ik_failed = True
    return q_des, qd_des


def swing_torque(params, control, q_des, qd_des, q, qd):
    """Joint-PD swing torque, clamped to the actuator limits."""
    tau = control.swing_kp * (q_des - q) + control.swing_kd * (qd_des - qd)
    clamped = np.clip(tau, -params.torque_limit, params.torque_limit)
    return clamped, bool(np.any(clamped != tau))


def step_plant(x, u, s, dt_plant, params, disturbance=None, bound=1e3):
    """One plant tick of the kinodynamic model plus optional state impulse.

    A gimbal-locked attitude counts as divergence: the body has pitched
    through the vertical and the simulation cannot meaningfully continue.
    """
    if disturbance is not None:
        x = x + disturbance
    try:
        x_next = integrate_step(x, u, s, dt_plant, params)
    except GimbalLock as exc:
        raise SimulationDiverged(str(exc)) from exc
    peak = float(np.max(np.abs(x_next)))
    if peak > bound or peak != peak:
        raise SimulationDiverged("plant state exceeded bound")
    return x_next


def run_closed_loop(
    scenario: Scenario,
    sim: SimConfig | None = None,
    replan_iters: int | None = None,
    feedback_warmstart: bool | None = None,
    duration: float | None = None,
) -> RunLog:
    """Deterministic interleaved closed-loop run; returns the full log."""
    sim = sim or scenario.sim
    params = scenario.params
    sched = scenario.schedule
    dt_plant = 1.0 / sim.plant_rate
    total = scenario.duration if duration is None else duration
    n_ticks = int(round(total * sim.plant_rate))
    rng = np.random.default_rng(sim.seed)

    controller = MpcController(scenario, replan_iters=replan_iters,
                               feedback_warmstart=feedback_warmstart)

    x = initial_state(scenario)
    flags_prev = sched.flags_at_step(0).copy()

    times = np.zeros(n_ticks)
    states = np.zeros((n_ticks, 24))
    controls = np.zeros((n_ticks, 24))
    torques = np.zeros((n_ticks, 12))
    contacts = np.zeros((n_ticks, 4), dtype=bool)
    plan_t0s = np.zeros(n_ticks)
    events = []
    telemetry = []
    trackers = {leg: SwingTracker(leg=leg) for leg in LEGS}
    last_uj = {leg: np.zeros(3) for leg in LEGS}
    clamp_active = {leg: False for leg in LEGS}

    # legs starting in swing behave as if they lifted off at t=0
    for leg in LEGS:
        if not flags_prev[leg.idx]:
            tr = trackers[leg]
            tr.t_liftoff = 0.0
            tr.t_touchdown = _next_touchdown(sched, leg, 0.0, total)
            tr.p_start = robot.forward_kinematics(params, leg, x[y_slice(leg)], x[POS])

    plan = None
    diverged = False
    pending = sorted(sim.disturbances, key=lambda d: d.time)
    pending_idx = 0

    for tick in range(n_ticks):
        t = tick * dt_plant
        flags = sched.flags_at_time(t)

        # scheduled contact switches: apply reset maps leg by leg
        if np.any(flags != flags_prev):
            for leg in LEGS:
                was, now = flags_prev[leg.idx], flags[leg.idx]
                if was and not now:
                    tr = trackers[leg]
                    tr.t_liftoff = t
                    tr.t_touchdown = _next_touchdown(sched, leg, t, total)
                    tr.p_start = x[y_slice(leg)].copy()
                    tr.last_q_des = None
                    tr.ik_failed = False
                    x[y_slice(leg)] = params.default_angles(leg)
                    last_uj[leg][:] = 0.0
                    events.append((t, "takeoff", leg.value, ""))
                elif now and not was:
                    q_pre = x[y_slice(leg)]
                    foot = robot.forward_kinematics(
                        params, leg, q_pre, x[POS], euler_to_rotation(x[THETA])
                    )
                    x[y_slice(leg)] = foot
                    events.append((t, "touchdown", leg.value, f"height={foot[2]:.4f}"))
            flags_prev = flags.copy()

        # scripted disturbances due at this tick
        impulse = None
        while pending_idx < len(pending) and pending[pending_idx].time <= t + 1e-9:
            impulse = pending[pending_idx].delta if impulse is None else impulse + pending[pending_idx].delta
            events.append((t, "disturbance", -1, ""))
            pending_idx += 1
        if impulse is not None:
            x = x + impulse

        # replanning at the MPC rate
        if tick % sim.ticks_per_plan == 0:
            x_meas = x.copy()
            if sim.noise_std > 0:
                x_meas[BODY] += rng.normal(0.0, sim.noise_std, 12)
            t_wall = time.perf_counter()
            plan = controller.replan(x_meas, t)
            wall_ms = (time.perf_counter() - t_wall) * 1e3
            sol = plan.solution
            telemetry.append(
                SolveRecord(
                    t=t, wall_ms=wall_ms, iterations=sol.iterations, cost=sol.cost,
                    violation=sol.max_violation,
                    status="stale_plan" if plan.stale else sol.status,
                    kind="first" if tick == 0 else "replan",
                )
            )
            if plan.stale:
                events.append((t, "replan_failed", -1, "reusing previous plan"))
            elif not plan.converged and tick == 0:
                events.append((t, "solver_not_converged", -1, sol.status))

        # control and torque layers
        u = np.zeros(24)
        tau_row = np.zeros(12)
        k = plan.step_index(t)
        sol = plan.solution
        dx = x - sol.xs[k]
        for leg in LEGS:
            if flags[leg.idx]:
                gs = grf_slice(leg)
                u[gs] = sol.us[k][gs] + sol.gains[k][gs, :] @ dx
                tau, clamped = stance_torque(params, plan, leg, t, x)
            else:
                tr = trackers[leg]
                q_des, qd_des = swing_targets(params, scenario.control, tr, plan, t, x)
                if tr.ik_failed and not clamp_active[leg]:
                    events.append((t, "swing_ik_hold", leg.value, ""))
                q = x[y_slice(leg)]
                uj = qd_des + scenario.control.swing_track_gain * (q_des - q)
                u[joint_vel_slice(leg)] = uj
                tau, clamped = swing_torque(params, scenario.control, q_des, qd_des,
                                            q, last_uj[leg])
                last_uj[leg] = uj.copy()
            if clamped and not clamp_active[leg]:
                events.append((t, "torque_clamp", leg.value, ""))
            clamp_active[leg] = clamped
            tau_row[3 * leg.idx:3 * leg.idx + 3] = tau

        times[tick] = t
        states[tick] = x
        controls[tick] = u
        torques[tick] = tau_row
        contacts[tick] = flags
        plan_t0s[tick] = plan.t0

        try:
            x = step_plant(x, u, flags, dt_plant, params, bound=sim.state_bound)
        except SimulationDiverged:
            diverged = True
            events.append((t, "divergence", -1, ""))
            break

    n_done = tick + 1 if diverged else n_ticks
    log = RunLog(
        times=times[:n_done],
        states=states[:n_done],
        controls=controls[:n_done],
        torques=torques[:n_done],
        contacts=contacts[:n_done],
        plan_t0=plan_t0s[:n_done],
        events=events,
        telemetry=telemetry,
        summary={},
        diverged=diverged,
    )
    log.summary = summarize(log, scenario)
    return log


def _next_touchdown(sched, leg, t, total) -> float:
    dt = sched.dt
    k = int(np.floor((t - sched.start) / dt + 1e-9)) + 1
    k_max = int(np.ceil((total + HORIZON) / dt)) + 1
    while k < k_max and not sched.flags_at_step(k)[leg.idx]:
        k += 1
    return sched.start + k * dt


def flight_windows(log: RunLog) -> list:
    """Realized (t_start, t_end, apex_height) intervals with all legs off."""
    airborne = ~np.any(log.contacts, axis=1)
    out = []
    i = 0
    n = len(airborne)
    dt = log.times[1] - log.times[0] if n > 1 else 0.0
    while i < n:
        if airborne[i]:
            j = i
            while j < n and airborne[j]:
                j += 1
            apex = float(np.max(log.states[i:j, 5]))
            out.append((log.times[i], log.times[j - 1] + dt, apex))
            i = j
        else:
            i += 1
    return out


def summarize(log: RunLog, scenario: Scenario) -> dict:
    flights = flight_windows(log)
    z = log.states[:, 5]
    z_ref = np.array([scenario.script.height_profile(t)[0] for t in log.times])
    replans = [r.wall_ms for r in log.telemetry if r.kind == "replan"]
    summary = {
        "scenario": scenario.name,
        "diverged": bool(log.diverged),
        "duration": float(log.times[-1]) if len(log.times) else 0.0,
        "flight_windows": [(float(a), float(b)) for a, b, _ in flights],
        "flight_apexes": [float(c) for _, _, c in flights],
        "height_rmse": float(np.sqrt(np.mean((z - z_ref) ** 2))),
        "max_replan_iterations": max((r.iterations for r in log.telemetry if r.kind == "replan"), default=0),
        "max_violation": max((r.violation for r in log.telemetry), default=0.0),
        "solve_ms": {
            "mean": float(np.mean(replans)) if replans else 0.0,
            "std": float(np.std(replans)) if replans else 0.0,
            "max": float(np.max(replans)) if replans else 0.0,
            "min": float(np.min(replans)) if replans else 0.0,
            "count": len(replans),
        },
        "events": {kind: sum(1 for e in log.events if e[1] == kind)
                   for kind in {e[1] for e in log.events}},
    }
    return summary
