"""Multi-phase constrained differential dynamic programming.

The solver works on a generic multi-phase optimal-control problem: per-phase
dynamics with reset maps and reset Jacobians at phase boundaries, batched
cost handles, phase-terminal equality constraints handled by an augmented
Lagrangian outer loop, and per-step inequalities folded into the stage cost
by the problem builder (relaxed barrier).

The backward sweep propagates the value-function expansion through the reset
maps, regularizes the control Hessian Levenberg-style before inversion, and
produces time-varying feedback gains. The forward sweep is a backtracking
line search over the feedforward step with the feedback law applied around
the previous nominal trajectory. Replanning reuses the shifted previous
solution, its feedback gains for the first rollout, and the previous
Lagrange multipliers (penalty reset to its initial value).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

_DEF_ALPHAS = tuple(0.5**i for i in range(10))


class NonPositiveCurvature(RuntimeError):
    """Control Hessian not positive definite at the current regularization."""


class RolloutDiverged(RuntimeError):
    """Forward rollout exceeded the state-norm bound."""


@dataclass
class Constraint:
    """Vector-valued equality constraint at a phase boundary (pre-reset state)."""

    key: tuple
    fun: object          # x -> (dim,)
    jac: object          # x -> (dim, n_x)
    dim: int


@dataclass
class PhaseSpec:
    """One constant-mode phase of the horizon [start, end)."""

    start: int
    end: int
    step: object                     # (x, u) -> x_next
    linearize: object                # (xs, us) -> (A (m,nx,nx), B (m,nx,nu))
    cost: object                     # (ks, xs, us) -> (m,)
    cost_derivs: object              # (ks, xs, us) -> (lx, lu, lxx, luu)
    control_mask: np.ndarray         # (n_u,) bool, active control entries
    contact: np.ndarray | None = None
    reset: object | None = None      # applied to x[end] when end < N
    reset_jacobian: object | None = None
    constraints: list = field(default_factory=list)


@dataclass
class OcProblem:
    n_x: int
    n_u: int
    N: int
    dt: float
    x0: np.ndarray
    phases: list
    terminal_cost: object            # x -> float
    terminal_derivs: object          # x -> (gx, gxx)
    u_init: np.ndarray               # (N, n_u)

    def constraint_keys(self):
        return [c.key for ph in self.phases for c in ph.constraints]


@dataclass
class AlState:
    """Augmented-Lagrangian bookkeeping for the phase-terminal equalities."""

    multipliers: dict
    sigma: float
    sigma0: float
    growth: float = 10.0
    sigma_max: float = 1e8

    @classmethod
    def fresh(cls, problem: OcProblem, sigma0: float, growth: float = 10.0, sigma_max: float = 1e8):
        mult = {}
        for ph in problem.phases:
            for c in ph.constraints:
                mult[c.key] = np.zeros(c.dim)
        return cls(multipliers=mult, sigma=sigma0, sigma0=sigma0, growth=growth, sigma_max=sigma_max)


@dataclass
class SolverOptions:
    max_al_iters: int = 10
    max_ddp_iters: int = 100
    replan_iters: int = 3
    alphas: tuple = _DEF_ALPHAS
    reg_init: float = 0.0
    reg_min: float = 1e-9
    reg_max: float = 1e8
    reg_grow: float = 10.0
    tol_cost: float = 1e-9           # expected-decrease convergence threshold (relative)
    tol_constraint: float = 1e-4
    sigma0: float = 2e4
    sigma_growth: float = 10.0
    sigma_max: float = 1e8
    use_feedback_warmstart: bool = True
    barrier_weight: float = 1e-3
    barrier_delta: float = 0.01
    uj_reg: float = 1e-3
    rollout_bound: float = 1e4

    def __post_init__(self):
        if self.replan_iters > self.max_ddp_iters:
            raise ValueError("replan iteration cap must not exceed the first-solve cap")


@dataclass
class Trajectory:
    xs: np.ndarray                   # (N+1, n_x), post-reset at boundaries
    us: np.ndarray                   # (N, n_u)
    pre_reset: dict                  # boundary index -> pre-reset state


@dataclass
class BackwardPass:
    gains: np.ndarray                # (N, n_u, n_x)
    feedforward: np.ndarray          # (N, n_u)
    dv1: float
    dv2: float
    vx0: np.ndarray                  # value gradient at the initial state
    vxx0: np.ndarray                 # value curvature at the initial state

    def expected_decrease(self, alpha: float) -> float:
        return -(alpha * self.dv1 + 0.5 * alpha * alpha * self.dv2)


@dataclass
class DdpSolution:
    xs: np.ndarray
    us: np.ndarray
    gains: np.ndarray
    feedforward: np.ndarray
    pre_reset: dict
    cost: float                      # tracking + barrier cost (no AL terms)
    al_cost: float                   # cost including AL terms
    max_violation: float
    multipliers: dict
    sigma: float
    iterations: int
    converged: bool
    status: str
    trace: list
    init_cost: float = np.nan
    init_diverged: bool = False
    init_xs: np.ndarray | None = None

    def violations(self, problem: OcProblem) -> dict:
        out = {}
        for ph in problem.phases:
            xm = self.pre_reset.get(ph.end, self.xs[ph.end])
            for c in ph.constraints:
                out[c.key] = c.fun(xm)
        return out


def rollout(
    problem: OcProblem,
    x0: np.ndarray,
    us: np.ndarray,
    nominal: Trajectory | None = None,
    gains: np.ndarray | None = None,
    feedforward: np.ndarray | None = None,
    alpha: float = 1.0,
    use_feedback: bool = False,
    bound: float = 1e4,
) -> Trajectory:
    """Integrate the system with u[k] = us[k] + alpha*du[k] + K[k](x[k]-x*[k])."""
    n = problem.N
    xs = np.empty((n + 1, problem.n_x))
    out_us = np.empty((n, problem.n_u))
    xs[0] = x0
    pre_reset = {}
    for ph in problem.phases:
        for k in range(ph.start, ph.end):
            u = us[k]
            if feedforward is not None:
                u = u + alpha * feedforward[k]
            if use_feedback and gains is not None and nominal is not None:
                u = u + gains[k] @ (xs[k] - nominal.xs[k])
            out_us[k] = u
            xs[k + 1] = ph.step(xs[k], u)
            peak = float(np.max(np.abs(xs[k + 1])))
            if peak > bound or peak != peak:  # NaN-safe bound check
                raise RolloutDiverged(f"state bound exceeded at step {k + 1}")
        e = ph.end
        pre_reset[e] = xs[e].copy()
        if e < n and ph.reset is not None:
            xs[e] = ph.reset(xs[e])
    return Trajectory(xs=xs, us=out_us, pre_reset=pre_reset)


def trajectory_cost(problem: OcProblem, traj: Trajectory) -> float:
    """Stage plus terminal cost, excluding AL terms."""
    total = 0.0
    for ph in problem.phases:
        ks = np.arange(ph.start, ph.end)
        total += float(np.sum(ph.cost(ks, traj.xs[ph.start:ph.end], traj.us[ph.start:ph.end])))
    return total + float(problem.terminal_cost(traj.xs[problem.N]))


def al_penalty(problem: OcProblem, traj: Trajectory, al: AlState) -> tuple[float, float]:
    """AL contribution and max constraint violation for a trajectory."""
    extra = 0.0
    viol = 0.0
    for ph in problem.phases:
        if not ph.constraints:
            continue
        xm = traj.pre_reset.get(ph.end, traj.xs[ph.end])
        for c in ph.constraints:
            g = np.atleast_1d(c.fun(xm))
            lam = al.multipliers.get(c.key)
            if lam is None:
                lam = np.zeros(c.dim)
            extra += float(lam @ g + 0.5 * al.sigma * (g @ g))
            viol = max(viol, float(np.max(np.abs(g))))
    return extra, viol


def _linearize_all(problem: OcProblem, traj: Trajectory):
    """Batched dynamics and cost derivatives along the trajectory."""
    n = problem.N
    As = np.empty((n, problem.n_x, problem.n_x))
    Bs = np.empty((n, problem.n_x, problem.n_u))
    lxs = np.empty((n, problem.n_x))
    lus = np.empty((n, problem.n_u))
    lxxs = np.empty((n, problem.n_x, problem.n_x))
    luus = np.empty((n, problem.n_u, problem.n_u))
    for ph in problem.phases:
        sl = slice(ph.start, ph.end)
        ks = np.arange(ph.start, ph.end)
        As[sl], Bs[sl] = ph.linearize(traj.xs[sl], traj.us[sl])
        lxs[sl], lus[sl], lxxs[sl], luus[sl] = ph.cost_derivs(ks, traj.xs[sl], traj.us[sl])
    return As, Bs, lxs, lus, lxxs, luus


def _sweep_phase_numpy(As, Bs, lxs, lus, lxxs, luus, act, reg, vx, vxx, gains, ff):
    """Reference implementation of the per-phase value recursion."""
    m = As.shape[0]
    dv1 = 0.0
    dv2 = 0.0
    reg_eye = reg * np.eye(act.size)
    for k in range(m - 1, -1, -1):
        A, B = As[k], Bs[k]
        ba = B[:, act]
        qx = lxs[k] + A.T @ vx
        qu = lus[k][act] + ba.T @ vx
        vxx_a = vxx @ A
        qxx = lxxs[k] + A.T @ vxx_a
        qux = ba.T @ vxx_a
        quu = luus[k][np.ix_(act, act)] + ba.T @ vxx @ ba
        quu = 0.5 * (quu + quu.T) + reg_eye
        try:
            cho = np.linalg.cholesky(quu)
        except np.linalg.LinAlgError:
            return dv1, dv2, k
        rhs = np.concatenate([qu[:, None], qux], axis=1)
        sol = np.linalg.solve(cho.T, np.linalg.solve(cho, rhs))
        kff = -sol[:, 0]
        K = -sol[:, 1:]
        ff[k, act] = kff
        gains[k][act, :] = K
        dv1 += float(kff @ qu)
        dv2 += float(kff @ quu @ kff)
        new_vx = qx + K.T @ (quu @ kff) + K.T @ qu + qux.T @ kff
        new_vxx = qxx + K.T @ quu @ K + K.T @ qux + qux.T @ K
        vx[:] = new_vx
        vxx[:] = 0.5 * (new_vxx + new_vxx.T)
    return dv1, dv2, -1


def backward_sweep(
    problem: OcProblem,
    traj: Trajectory,
    al: AlState,
    regularization: float,
    ws=None,
) -> BackwardPass:
    """DDP backward sweep with reset-map pullback and AL boundary terms."""
    if ws is None:
        ws = _linearize_all(problem, traj)
    As, Bs, lxs, lus, lxxs, luus = ws
    n = problem.N
    n_x, n_u = problem.n_x, problem.n_u

    gains = np.zeros((n, n_u, n_x))
    feedforward = np.zeros((n, n_u))
    dv1 = 0.0
    dv2 = 0.0

    vx, vxx = problem.terminal_derivs(traj.xs[n])
    vx = np.ascontiguousarray(vx, dtype=float)
    vxx = np.ascontiguousarray(0.5 * (vxx + vxx.T), dtype=float)
    sweep = _kernels.sweep_phase if _kernels.HAVE_NUMBA else _sweep_phase_numpy

    for ph in reversed(problem.phases):
        e = ph.end
        xm = traj.pre_reset.get(e, traj.xs[e])
        if e < n and ph.reset_jacobian is not None:
            P = ph.reset_jacobian(xm)
            vx = P.T @ vx
            vxx = np.ascontiguousarray(P.T @ vxx @ P)
        for c in ph.constraints:
            g = np.atleast_1d(c.fun(xm))
            G = np.atleast_2d(c.jac(xm))
            lam = al.multipliers.get(c.key)
            if lam is None:
                lam = np.zeros(c.dim)
            vx = vx + G.T @ (lam + al.sigma * g)
            vxx = vxx + al.sigma * (G.T @ G)
        act = np.flatnonzero(ph.control_mask)
        dv1_p, dv2_p, fail = sweep(
            As[ph.start:e], Bs[ph.start:e], lxs[ph.start:e], lus[ph.start:e],
            lxxs[ph.start:e], luus[ph.start:e], act, regularization,
            vx, vxx, gains[ph.start:e], feedforward[ph.start:e],
        )
        dv1 += dv1_p
        dv2 += dv2_p
        if fail >= 0:
            raise NonPositiveCurvature(f"Quu not PD at step {ph.start + fail}")

    return BackwardPass(gains=gains, feedforward=feedforward, dv1=dv1, dv2=dv2, vx0=vx, vxx0=vxx)


def forward_sweep(
    problem: OcProblem,
    nominal: Trajectory,
    bp: BackwardPass,
    alpha: float,
    al: AlState,
    use_feedback: bool = True,
    bound: float = 1e4,
) -> tuple[Trajectory, float]:
    """Line-search rollout; returns the trajectory and its AL-augmented cost."""
    traj, al_cost, _ = _forward_sweep_full(problem, nominal, bp, alpha, al, use_feedback, bound)
    return traj, al_cost


def _forward_sweep_full(problem, nominal, bp, alpha, al, use_feedback=True, bound=1e4):
    traj = rollout(
        problem,
        nominal.xs[0],
        nominal.us,
        nominal=nominal,
        gains=bp.gains if use_feedback else None,
        feedforward=bp.feedforward,
        alpha=alpha,
        use_feedback=use_feedback,
        bound=bound,
    )
    cost = trajectory_cost(problem, traj)
    extra, _ = al_penalty(problem, traj, al)
    return traj, cost + extra, cost


def solve(
    problem: OcProblem,
    options: SolverOptions | None = None,
    init: Trajectory | None = None,
    al: AlState | None = None,
    max_iters: int | None = None,
    init_info: dict | None = None,
) -> DdpSolution:
    """AL outer loop around line-searched DDP iterations.

    Never raises on non-convergence: the returned solution carries a status
    of 'converged', 'iteration_budget', 'stalled', or 'curvature_failure'
    and the best trajectory found.
    """
    opts = options or SolverOptions()
    budget = opts.max_ddp_iters if max_iters is None else max_iters
    if al is None:
        al = AlState.fresh(problem, opts.sigma0, opts.sigma_growth, opts.sigma_max)
    if init is None:
        traj = rollout(problem, problem.x0, problem.u_init, bound=opts.rollout_bound)
    else:
        traj = init

    cost = trajectory_cost(problem, traj)
    extra, violation = al_penalty(problem, traj, al)
    al_cost = cost + extra

    trace = []
    reg = opts.reg_init
    iterations = 0
    status = "iteration_budget"
    converged = False
    bp = None

    for outer in range(opts.max_al_iters):
        inner_done = False
        while iterations < budget:
            ws = _linearize_all(problem, traj)
            while True:
                try:
                    bp = backward_sweep(problem, traj, al, reg, ws)
                    break
                except NonPositiveCurvature:
                    reg = max(reg * opts.reg_grow, opts.reg_min)
                    if reg > opts.reg_max:
                        status = "curvature_failure"
                        inner_done = True
                        break
            if inner_done:
                break
            expected = bp.expected_decrease(1.0)
            if expected <= opts.tol_cost * (1.0 + abs(al_cost)):
                inner_done = True
                break
            accepted = False
            for alpha in opts.alphas:
                try:
                    new_traj, new_al_cost, new_cost = _forward_sweep_full(
                        problem, traj, bp, alpha, al, use_feedback=True, bound=opts.rollout_bound
                    )
                except RolloutDiverged:
                    continue
                if new_al_cost < al_cost:
                    accepted = True
                    break
            iterations += 1
            if accepted:
                traj = new_traj
                al_cost = new_al_cost
                cost = new_cost
                reg = 0.0 if reg <= opts.reg_min else reg / opts.reg_grow
                trace.append(
                    dict(outer=outer, iteration=iterations, al_cost=al_cost, cost=cost,
                         alpha=alpha, reg=reg, accepted=True, sigma=al.sigma)
                )
            else:
                reg = max(reg * opts.reg_grow, opts.reg_min)
                trace.append(
                    dict(outer=outer, iteration=iterations, al_cost=al_cost, cost=cost,
                         alpha=0.0, reg=reg, accepted=False, sigma=al.sigma)
                )
                if reg > opts.reg_max:
                    status = "stalled"
                    break

        extra, violation = al_penalty(problem, traj, al)
        al_cost = cost + extra
        if violation < opts.tol_constraint:
            status = "converged"
            converged = True
            break
        if status in ("curvature_failure", "stalled"):
            break
        # multiplier update on the current trajectory, penalty growth
        _update_multipliers(problem, traj, al)
        if iterations >= budget:
            status = "iteration_budget"
            break
        al.sigma = min(al.sigma * al.growth, al.sigma_max)
        extra, violation = al_penalty(problem, traj, al)
        al_cost = cost + extra

    if bp is None:
        # never swept (immediately converged): one sweep for the gains,
        # which then correspond exactly to the returned trajectory
        refresh_reg = max(reg, opts.reg_min)
        while True:
            try:
                bp = backward_sweep(problem, traj, al, refresh_reg)
                break
            except NonPositiveCurvature:
                refresh_reg *= opts.reg_grow
                if refresh_reg > opts.reg_max:
                    raise

    _, violation = al_penalty(problem, traj, al)
    sol = DdpSolution(
        xs=traj.xs,
        us=traj.us,
        gains=bp.gains,
        feedforward=bp.feedforward,
        pre_reset=traj.pre_reset,
        cost=trajectory_cost(problem, traj),
        al_cost=al_cost,
        max_violation=violation,
        multipliers={k: v.copy() for k, v in al.multipliers.items()},
        sigma=al.sigma,
        iterations=iterations,
        converged=converged,
        status=status,
        trace=trace,
    )
    if init_info:
        sol.init_cost = init_info.get("cost", np.nan)
        sol.init_diverged = init_info.get("diverged", False)
        sol.init_xs = init_info.get("xs")
    return sol


def _update_multipliers(problem: OcProblem, traj: Trajectory, al: AlState) -> None:
    for ph in problem.phases:
        if not ph.constraints:
            continue
        xm = traj.pre_reset.get(ph.end, traj.xs[ph.end])
        for c in ph.constraints:
            g = np.atleast_1d(c.fun(xm))
            lam = al.multipliers.get(c.key)
            if lam is None:
                lam = np.zeros(c.dim)
            al.multipliers[c.key] = lam + al.sigma * g


def shift_guess(
    prev: DdpSolution, problem: OcProblem, shift: int = 1
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shift the previous solution by `shift` control periods, holding the tail."""
    n = problem.N
    shift = min(max(int(shift), 0), n)
    us = np.vstack([prev.us[shift:], np.repeat(prev.us[-1:], shift, axis=0)])
    xs = np.vstack([prev.xs[shift:], np.repeat(prev.xs[-1:], shift, axis=0)])
    gains = np.concatenate([prev.gains[shift:], np.repeat(prev.gains[-1:], shift, axis=0)], axis=0)
    # re-mask to the new problem's phase structure
    for ph in problem.phases:
        mask = ph.control_mask
        us[ph.start:ph.end, ~mask] = 0.0
        gains[ph.start:ph.end][:, ~mask, :] = 0.0
    return xs[: n + 1], us[:n], gains[:n]


def warm_start_replan(
    prev: DdpSolution,
    new_x0: np.ndarray,
    problem: OcProblem,
    options: SolverOptions,
    shift: int = 1,
) -> DdpSolution:
    """Receding-horizon re-solve warm-started from the previous solution.

    The initial rollout applies the previous feedback gains around the shifted
    nominal (when enabled); Lagrange multipliers are inherited by constraint
    identity, new ones start at zero, and the penalty restarts at sigma0.
    Raises RolloutDiverged when neither the warm-started nor the cold initial
    rollout stays bounded.
    """
    xs_g, us_g, gains_g = shift_guess(prev, problem, shift)
    al = AlState.fresh(problem, options.sigma0, options.sigma_growth, options.sigma_max)
    for key in al.multipliers:
        if key in prev.multipliers:
            al.multipliers[key] = prev.multipliers[key].copy()

    nominal = Trajectory(xs=xs_g, us=us_g, pre_reset={})
    init_info = {"diverged": False}
    try:
        traj = rollout(
            problem,
            new_x0,
            us_g,
            nominal=nominal,
            gains=gains_g if options.use_feedback_warmstart else None,
            alpha=0.0,
            use_feedback=options.use_feedback_warmstart,
            bound=options.rollout_bound,
        )
        cost = trajectory_cost(problem, traj)
        extra, _ = al_penalty(problem, traj, al)
        init_info["cost"] = cost + extra
        init_info["xs"] = traj.xs.copy()
    except RolloutDiverged:
        init_info["diverged"] = True
        init_info["cost"] = np.inf
        traj = rollout(problem, new_x0, problem.u_init, bound=options.rollout_bound)

    return solve(
        problem,
        options,
        init=traj,
        al=al,
        max_iters=options.replan_iters,
        init_info=init_info,
    )
