"""Assembly of the quadruped optimal-control problem for the DDP solver.

Bridges the contact schedule, reference trajectory, model dynamics, and cost
terms into the solver's phase-structured problem: per-phase dynamics and
batched derivatives, touchdown height equalities at swing-to-stance
boundaries, and the friction-cone barrier plus a small commanded-joint-
velocity regularizer folded into the stage cost.
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from . import costs as costmod
from . import dynamics, gait
from .costs import CostWeights, cone_rows, relaxed_log_barrier
from .dynamics import BODY, N_CONTROL, N_STATE, grf_slice, joint_vel_slice, y_slice
from .gait import ContactSchedule
from .reference import ReferenceTrajectory
from .robot import LEGS, RobotParams
from .solver import Constraint, OcProblem, PhaseSpec, RolloutDiverged, SolverOptions


def control_mask(contact: np.ndarray) -> np.ndarray:
    """Active control entries for a contact pattern: stance GRFs, swing joint rates."""
    mask = np.zeros(N_CONTROL, dtype=bool)
    for leg in LEGS:
        if contact[leg.idx]:
            mask[grf_slice(leg)] = True
        else:
            mask[joint_vel_slice(leg)] = True
    return mask


def _stage_cost_closures(
    contact: np.ndarray,
    x_ref: np.ndarray,
    lam_ref_flat: np.ndarray,
    weights: CostWeights,
    params: RobotParams,
    opts: SolverOptions,
    dt: float,
):
    """Batched stage cost and derivatives for one phase (fixed contact flags)."""
    stance = [leg for leg in LEGS if contact[leg.idx]]
    swing = [leg for leg in LEGS if not contact[leg.idx]]
    qb2 = 2.0 * weights.body
    qf2 = 2.0 * weights.foot
    qj2 = 2.0 * weights.joint
    rg2 = 2.0 * weights.grf
    C = cone_rows(params.friction)
    bw = opts.barrier_weight
    bd = opts.barrier_delta
    ujr = opts.uj_reg

    lxx_const = np.zeros((N_STATE, N_STATE))
    lxx_const[BODY, BODY] = qb2
    luu_const = np.zeros((N_CONTROL, N_CONTROL))
    for leg in stance:
        lxx_const[y_slice(leg), y_slice(leg)] = qf2
        luu_const[grf_slice(leg), grf_slice(leg)] = rg2
    for leg in swing:
        lxx_const[y_slice(leg), y_slice(leg)] = qj2
        luu_const[joint_vel_slice(leg), joint_vel_slice(leg)] = 2.0 * ujr * np.eye(3)
    lxx_const *= dt
    luu_const *= dt

    def cost_batch(ks, xs, us):
        dx = xs - x_ref[ks]
        vals = np.einsum("mi,ij,mj->m", dx[:, BODY], weights.body, dx[:, BODY])
        for leg in stance:
            dy = dx[:, y_slice(leg)]
            vals += np.einsum("mi,ij,mj->m", dy, weights.foot, dy)
            dl = us[:, grf_slice(leg)] - lam_ref_flat[ks][:, 3 * leg.idx : 3 * leg.idx + 3]
            vals += np.einsum("mi,ij,mj->m", dl, weights.grf, dl)
            r = us[:, grf_slice(leg)] @ C.T
            b, _, _ = relaxed_log_barrier(r, bd)
            vals += bw * np.sum(b, axis=1)
        for leg in swing:
            dq = dx[:, y_slice(leg)]
            vals += np.einsum("mi,ij,mj->m", dq, weights.joint, dq)
            uj = us[:, joint_vel_slice(leg)]
            vals += ujr * np.sum(uj * uj, axis=1)
        return vals * dt

    def derivs_batch(ks, xs, us):
        m = xs.shape[0]
        dx = xs - x_ref[ks]
        lx = np.zeros((m, N_STATE))
        lu = np.zeros((m, N_CONTROL))
        lx[:, BODY] = dx[:, BODY] @ qb2
        lxx = np.broadcast_to(lxx_const, (m, N_STATE, N_STATE)).copy()
        luu = np.broadcast_to(luu_const, (m, N_CONTROL, N_CONTROL)).copy()
        for leg in stance:
            ys = y_slice(leg)
            lx[:, ys] = dx[:, ys] @ qf2
            gs = grf_slice(leg)
            dl = us[:, gs] - lam_ref_flat[ks][:, 3 * leg.idx : 3 * leg.idx + 3]
            lu[:, gs] = dl @ rg2
            r = us[:, gs] @ C.T
            _, db, d2b = relaxed_log_barrier(r, bd)
            lu[:, gs] += bw * (db @ C)
            luu[:, gs, gs] += (bw * dt) * np.einsum("ki,mk,kj->mij", C, d2b, C)
        for leg in swing:
            ys = y_slice(leg)
            lx[:, ys] = dx[:, ys] @ qj2
            js = joint_vel_slice(leg)
            lu[:, js] = 2.0 * ujr * us[:, js]
        return lx * dt, lu * dt, lxx, luu

    return cost_batch, derivs_batch


def _boundary_reset(events: dict, params: RobotParams, contact_before: np.ndarray):
    """Composed reset map and Jacobian for all events at one phase boundary."""
    items = sorted(events.items(), key=lambda kv: kv[0].value)

    def reset(x):
        out = x
        for leg, kind in items:
            if kind == gait.TOUCHDOWN:
                out = dynamics.reset_touchdown(out, leg, params, contact_before)
            else:
                out = dynamics.reset_takeoff(out, leg, params, contact_before)
        return out

    def reset_jacobian(x):
        P = np.eye(N_STATE)
        for leg, kind in items:
            P = dynamics.reset_jacobian(x, leg, kind, params) @ P
        return P

    return reset, reset_jacobian


def build_problem(
    params: RobotParams,
    weights: CostWeights,
    win: ContactSchedule,
    reference: ReferenceTrajectory,
    x0: np.ndarray,
    options: SolverOptions,
) -> OcProblem:
    """Multi-phase problem over one planning window."""
    n = win.n_steps
    dt = win.dt
    x_ref = reference.x_ref
    lam_ref_flat = reference.lambda_ref.reshape(n, 12)
    k0_abs = int(round(win.start / dt))

    phases = []
    for ph in gait.segment_phases(win):
        cost_batch, derivs_batch = _stage_cost_closures(
            ph.contact, x_ref, lam_ref_flat, weights, params, options, dt
        )
        s = ph.contact
        if _kernels.HAVE_NUMBA:
            s_bool = np.ascontiguousarray(s, dtype=np.bool_)
            mass, inertia, iinv, grav = params.mass, params.inertia, params.inertia_inv, params.gravity

            def step(x, u, s_bool=s_bool):
                # gimbal-locked states come back NaN and fail the rollout guard
                return _kernels.hkd_step(x, u, s_bool, dt, mass, inertia, iinv, grav)

            def linearize(xs, us, s_bool=s_bool):
                return _kernels.hkd_linearize(
                    np.ascontiguousarray(xs), np.ascontiguousarray(us), s_bool, dt, inertia, iinv, mass
                )

        else:

            def step(x, u, s=s):
                # attitude-singular rollouts are line-search failures, not errors
                try:
                    return dynamics.integrate_step(x, u, s, dt, params)
                except dynamics.GimbalLock as exc:
                    raise RolloutDiverged(str(exc)) from exc

            def linearize(xs, us, s=s):
                return dynamics.linearize_rollout(xs, us, s, dt, params)

        reset = reset_jac = None
        if ph.events:
            reset, reset_jac = _boundary_reset(ph.events, params, ph.contact)
        constraints = []
        for leg, kind in ph.events.items():
            if kind != gait.TOUCHDOWN:
                continue

            def td_fun(x, leg=leg):
                return np.array([costmod.touchdown_residual(x, leg, params)])

            def td_jac(x, leg=leg):
                _, grad = costmod.touchdown_residual_grad(x, leg, params)
                return grad[None, :]

            constraints.append(
                Constraint(
                    key=(int(leg.value), "touchdown", k0_abs + ph.end),
                    fun=td_fun,
                    jac=td_jac,
                    dim=1,
                )
            )
        phases.append(
            PhaseSpec(
                start=ph.start,
                end=ph.end,
                step=step,
                linearize=linearize,
                cost=cost_batch,
                cost_derivs=derivs_batch,
                control_mask=control_mask(ph.contact),
                contact=ph.contact,
                reset=reset,
                reset_jacobian=reset_jac,
                constraints=constraints,
            )
        )

    s_term = phases[-1].contact

    def term_cost(x):
        v, _, _ = costmod.terminal_cost(x, x_ref[n], s_term, weights)
        return v

    def term_derivs(x):
        _, gx, gxx = costmod.terminal_cost(x, x_ref[n], s_term, weights)
        return gx, gxx

    u_init = np.zeros((n, N_CONTROL))
    u_init[:, :12] = lam_ref_flat

    return OcProblem(
        n_x=N_STATE,
        n_u=N_CONTROL,
        N=n,
        dt=dt,
        x0=np.asarray(x0, dtype=float).copy(),
        phases=phases,
        terminal_cost=term_cost,
        terminal_derivs=term_derivs,
        u_init=u_init,
    )
