"""Partially feasible distributed SQO driver.

Each iteration solves the x- and y-subproblems independently, accepts the
combined direction when the two inequality multipliers agree well enough,
and otherwise falls back to the joint subproblem. An Armijo search on the
augmented Lagrangian picks the step, and the equality multiplier is then
moved by ``xi`` times the new residual. Iterates never leave the set cut
out by the inequality and range constraints.

``SolverParams(distributed=False)`` always uses the joint subproblem
(the non-distributed baseline).
"""

from __future__ import annotations

import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .alf import (
    AlfContext,
    HessianBlocks,
    SolverState,
    alf_gradient_u,
    alf_value,
    build_coupled_qp,
    build_split_x_qp,
    build_split_y_qp,
    linearize,
    make_hessian_blocks,
)
from .problem import TwoBlockProblem, eval_objective, is_partially_feasible, measure_feasibility, range_violation
from .qp import QpError, QpSolution, solve_qp

log = logging.getLogger(__name__)


class TerminationMode(str, enum.Enum):
    ABSOLUTE = "abs"
    RELATIVE = "rel"


class HessianMode(str, enum.Enum):
    EXACT_REGULARIZED = "exact"
    IDENTITY = "identity"


class TerminationReason(str, enum.Enum):
    KKT_EXACT = "KktExact"
    ABSOLUTE_TOL = "AbsoluteTol"
    RELATIVE_TOL = "RelativeTol"
    MAX_ITER = "MaxIter"
    LINE_SEARCH_FAIL = "LineSearchFail"

    @property
    def success(self) -> bool:
        return self in (self.KKT_EXACT, self.ABSOLUTE_TOL, self.RELATIVE_TOL)


class SolverError(RuntimeError):
    pass


class InfeasibleStart(SolverError):
    pass


class SubproblemFailure(SolverError):
    def __init__(self, iteration: int, subproblem: str, cause: QpError):
        super().__init__(f"iteration {iteration}: {subproblem} subproblem failed: {cause}")
        self.iteration = iteration
        self.subproblem = subproblem
        self.cause = cause


class LineSearchFail(SolverError):
    def __init__(self, message: str, trials: int = 0):
        super().__init__(message)
        self.trials = trials


@dataclass(frozen=True)
class SolverParams:
    """Scalar knobs of the method. Defaults follow the academic experiments."""

    rho: float = 0.45
    sigma: float = 0.9
    c: float = 1.0
    beta: float = 1.0
    xi: float = 0.001
    tau1: float = 1.01
    tau2: float = 1.01
    M: float = 500.0
    M1: float = 7000.0
    M2: float = 0.0
    eps: float = 1e-8
    termination: TerminationMode = TerminationMode.ABSOLUTE
    max_iter: int = 1000
    max_linesearch: int = 100
    hessian_mode: HessianMode = HessianMode.EXACT_REGULARIZED
    eta0: float = 1e-4
    distributed: bool = True
    kkt_tol: float = 1e-9
    feas_tol: float = 1e-8
    kkt_stop_tol: float = 1e-12
    parallel: bool = False

    def __post_init__(self):
        object.__setattr__(self, "termination", TerminationMode(self.termination))
        object.__setattr__(self, "hessian_mode", HessianMode(self.hessian_mode))
        checks = [
            (0 < self.rho < 1, "rho must lie in (0, 1)"),
            (0 < self.sigma < 1, "sigma must lie in (0, 1)"),
            (0 <= self.c <= 1, "c must lie in [0, 1]"),
            (self.beta > 0, "beta must be positive"),
            (self.xi > 0, "xi must be positive"),
            (self.tau1 > 0 and self.tau2 > 0, "tau1 and tau2 must be positive"),
            (self.M > 0 and self.M1 > 0, "M and M1 must be positive"),
            (self.M2 >= 0, "M2 must be nonnegative"),
            (self.eps > 0, "eps must be positive"),
            (self.eta0 > 0, "eta0 must be positive"),
            (int(self.max_iter) >= 1, "max_iter must be at least 1"),
            (int(self.max_linesearch) >= 1, "max_linesearch must be at least 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)

    @classmethod
    def academic(cls, **overrides) -> "SolverParams":
        return cls(**overrides)

    @classmethod
    def epd(cls, valve_point: bool = False, **overrides) -> "SolverParams":
        base = dict(
            rho=0.45 if valve_point else 0.49,
            sigma=0.85 if valve_point else 0.8,
            beta=75.0 if valve_point else 200.0,
            xi=0.001,
            termination=TerminationMode.RELATIVE,
            eps=0.005,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["termination"] = self.termination.value
        out["hessian_mode"] = self.hessian_mode.value
        return out


@dataclass
class IterationRecord:
    k: int
    alf: float  # L_beta(w_k)
    alf_trial: float  # L_beta(u_{k+1}, lam_k)
    alf_next: float  # L_beta(w_{k+1})
    objective: float  # F(u_{k+1})
    d_norm: float
    metric_sq: float  # |d|^2 in the matrix used by the line search
    dir_deriv: float  # grad_u L_beta(w_k)' d
    eps_abs: float
    eps_rel: float
    step: float
    c_max: float
    split: bool
    eq_res_norm: float  # |A x_{k+1} + B y_{k+1} - b|
    ineq_violation: float  # at u_{k+1}
    range_violation: float
    fullstep_violation: float  # at u_k + c_max d
    linesearch_trials: int
    qp_iterations: int


@dataclass
class SolveReport:
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    objective: float
    feasibility_eq: float
    feasibility_ineq: float
    feasibility_range: float
    n_iter: int
    n_split_iter: int
    termination_reason: TerminationReason
    trace: list[IterationRecord]
    wall_time: float
    alf0: float
    kkt_residual_at_stop: float | None = None
    duals: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    problem_name: str = ""

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @property
    def splitting_ratio(self) -> float:
        return self.n_split_iter / self.n_iter if self.n_iter else 0.0

    @property
    def converged(self) -> bool:
        return TerminationReason(self.termination_reason).success


@dataclass(frozen=True)
class ComplexityAudit:
    C0: float
    N0: float
    eta_estimate: float
    bound_satisfied: bool
    trace_monotone: bool
    worst_ratio: float  # max over k of min_eps / bound (<= 1 when satisfied)


# ---------------------------------------------------------------------------
# building blocks


def check_splitting_valid(mu_x, mu_y, d_u, eq_res, params: SolverParams) -> bool:
    """Accept the split direction when the two inequality multipliers agree."""
    mu_x = np.asarray(mu_x, dtype=float)
    mu_y = np.asarray(mu_y, dtype=float)
    if mu_x.shape != mu_y.shape:
        raise ValueError("multiplier vectors differ in length")
    if min(np.linalg.norm(mu_x), np.linalg.norm(mu_y)) > params.M:
        return False
    gap = np.linalg.norm(mu_x - mu_y)
    allowed = params.M1 * (
        np.linalg.norm(d_u) ** params.tau1 + params.M2 * np.linalg.norm(eq_res) ** params.tau2
    )
    return bool(gap <= allowed)


class LineSearchResult(NamedTuple):
    step: float
    point: np.ndarray
    value: float
    trials: int


def armijo_search(ctx: AlfContext, u_k, d_u, metric_sq: float, c_max: float, params: SolverParams, alf_k=None):
    """Largest ``t = c_max * sigma**i`` with sufficient decrease of the ALF.

    The acceptance test carries an allowance of a few ulps of ``|L(w_k)|`` so
    that vanishing directions are not rejected by rounding alone.
    """
    if not 0 < c_max <= 1:
        raise ValueError("c_max must lie in (0, 1]")
    if metric_sq < 0:
        raise ValueError("metric_sq must be nonnegative")
    u_k = np.asarray(u_k, dtype=float)
    d_u = np.asarray(d_u, dtype=float)
    if alf_k is None:
        alf_k = alf_value(ctx, u_k)
    slack = 16 * np.finfo(float).eps * max(1.0, abs(alf_k))
    t = c_max
    for trial in range(1, params.max_linesearch + 1):
        u_t = u_k + t * d_u
        val = alf_value(ctx, u_t)
        if val <= alf_k - params.rho * t * metric_sq + slack:
            return LineSearchResult(t, u_t, val, trial)
        t *= params.sigma
    raise LineSearchFail(f"no acceptable step after {params.max_linesearch} trials", params.max_linesearch)


def update_multiplier(lambda_k, eq_res_next, xi: float) -> np.ndarray:
    if not xi > 0:
        raise ValueError("xi must be positive")
    return np.asarray(lambda_k, dtype=float) + xi * np.asarray(eq_res_next, dtype=float)


def termination_metrics(u_k, u_next, eq_res_next, b) -> tuple[float, float]:
    """Absolute and relative accuracy measures of one step."""
    u_k = np.asarray(u_k, dtype=float)
    stacked = np.concatenate([np.asarray(u_next, dtype=float) - u_k, np.asarray(eq_res_next, dtype=float)])
    eps_abs = float(np.linalg.norm(stacked))
    denom = float(np.linalg.norm(np.concatenate([u_k, np.asarray(b, dtype=float)]))) + 1.0
    return eps_abs, eps_abs / denom


def regularized_hessian(H_raw, eta0: float = 1e-4) -> np.ndarray:
    """Shift ``H`` by a multiple of the identity based on its smallest eigenvalue.

    ``gamma > eta0``: unchanged; ``|gamma| <= eta0``: shifted to ``eta0``;
    ``gamma < -eta0``: shifted by ``-2 gamma``.
    """
    H = np.asarray(H_raw, dtype=float)
    if H.size == 0:
        return H.copy()
    offdiag = H - np.diag(np.diagonal(H))
    if not np.any(offdiag):
        gamma = float(np.diagonal(H).min())
    else:
        gamma = float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
    if not np.isfinite(gamma):
        raise np.linalg.LinAlgError("eigenvalue computation failed")
    if gamma > eta0:
        shift = 0.0
    elif abs(gamma) <= eta0:
        shift = -gamma + eta0
    else:
        shift = -2.0 * gamma
    return H + shift * np.eye(H.shape[0])


def hessian_blocks(problem: TwoBlockProblem, x, y, params: SolverParams) -> HessianBlocks:
    if params.hessian_mode is HessianMode.IDENTITY:
        Hx, Hy = np.eye(problem.n1), np.eye(problem.n2)
    else:
        Hx = regularized_hessian(problem.hess_f(x), params.eta0)
        Hy = regularized_hessian(problem.hess_theta(y), params.eta0)
    return make_hessian_blocks(problem, Hx, Hy, params.beta)


def kkt_residual(problem: TwoBlockProblem, u, lam, mu, alpha_x, gamma_x, alpha_y, gamma_y) -> float:
    """Infinity norm of the first-order optimality system of the full problem."""
    p = problem
    x, y = p.split(u)
    lam, mu = np.asarray(lam, float), np.asarray(mu, float)
    alpha_x, gamma_x = np.asarray(alpha_x, float), np.asarray(gamma_x, float)
    alpha_y, gamma_y = np.asarray(alpha_y, float), np.asarray(gamma_y, float)
    sx = p.grad_f(x) - p.A.T @ lam + p.E.T @ mu + p.C.T @ (gamma_x - alpha_x)
    sy = p.grad_theta(y) - p.B.T @ lam + p.F.T @ mu + p.D.T @ (gamma_y - alpha_y)
    eq = p.eq_residual(x, y)
    h = p.ineq_residual(x, y)
    Cx, Dy = p.C @ x, p.D @ y

    def side(mult, gap, finite):
        return np.abs(mult * np.where(finite, gap, 0.0))

    with np.errstate(invalid="ignore"):
        comp = [
            np.abs(mu * h),
            side(alpha_x, Cx - p.l, np.isfinite(p.l)),
            side(gamma_x, p.v - Cx, np.isfinite(p.v)),
            side(alpha_y, Dy - p.s, np.isfinite(p.s)),
            side(gamma_y, p.r - Dy, np.isfinite(p.r)),
        ]
    parts = [np.abs(sx), np.abs(sy), np.abs(eq), *comp]
    parts += [-mu, -alpha_x, -gamma_x, -alpha_y, -gamma_y]
    parts.append(np.maximum(h, 0.0))
    worst = max((float(a.max()) for a in parts if a.size), default=0.0)
    worst = max(worst, range_violation(p.C, p.l, p.v, x), range_violation(p.D, p.s, p.r, y), 0.0)
    return worst


def _duals(problem: TwoBlockProblem, split: bool, sol_x, sol_y, sol_u) -> dict:
    if split:
        return dict(
            mu=sol_x.mu, mu_y=sol_y.mu,
            alpha_x=sol_x.alpha, gamma_x=sol_x.gamma,
            alpha_y=sol_y.alpha, gamma_y=sol_y.gamma,
        )
    l1 = problem.l1
    return dict(
        mu=sol_u.mu, mu_y=sol_u.mu,
        alpha_x=sol_u.alpha[:l1], gamma_x=sol_u.gamma[:l1],
        alpha_y=sol_u.alpha[l1:], gamma_y=sol_u.gamma[l1:],
    )


def _max_violation(problem, u) -> float:
    rep = measure_feasibility(problem, u)
    return max(rep.ineq_violation, rep.range_violation)


# ---------------------------------------------------------------------------
# driver


def solve(problem: TwoBlockProblem, u0, lambda0=None, params: SolverParams | None = None) -> SolveReport:
    """Run the method from a partially feasible ``u0``.

    Returns a report for every outcome except start/subproblem failures,
    which raise `InfeasibleStart` / `SubproblemFailure`.
    """
    params = params or SolverParams()
    if not problem.smooth:
        raise SolverError("problem is flagged nonsmooth; it can be evaluated but not solved")
    started = time.perf_counter()
    u = np.array(u0, dtype=float).reshape(-1)
    x, y = problem.split(u)
    if not is_partially_feasible(problem, u, params.feas_tol):
        rep = measure_feasibility(problem, u)
        raise InfeasibleStart(
            f"start violates inequalities by {rep.ineq_violation:.3e} and ranges by {rep.range_violation:.3e}"
        )
    lam = np.zeros(problem.m1) if lambda0 is None else np.array(lambda0, dtype=float).reshape(-1)
    if lam.shape != (problem.m1,):
        raise ValueError(f"lambda0 must have length {problem.m1}")

    c = params.c
    hints: dict[str, object] = {}
    trace: list[IterationRecord] = []
    n_split = 0
    reason = TerminationReason.MAX_ITER
    kkt_at_stop = None
    duals: dict = {}
    ctx = AlfContext(problem, params.beta, lam)
    alf_k = alf_value(ctx, u)
    alf0 = alf_k
    pool = ThreadPoolExecutor(max_workers=2) if params.parallel else None

    def run_qp(name, qp, start):
        try:
            sol = solve_qp(qp, warm_start=hints.get(name), kkt_tol=params.kkt_tol, x0=start)
        except QpError as err:
            raise SubproblemFailure(k, name, err) from err
        hints[name] = sol.active_set
        return sol

    try:
        for k in range(params.max_iter):
            hess = hessian_blocks(problem, x, y, params)
            st: SolverState = linearize(ctx, x, y, hess, params.feas_tol)
            st.alf_value = alf_k
            split = False
            qp_its = 0
            if params.distributed:
                qx, qy = build_split_x_qp(st, c), build_split_y_qp(st, c)
                if pool is not None:
                    fx = pool.submit(run_qp, "x", qx, x)
                    fy = pool.submit(run_qp, "y", qy, y)
                    st.sol_x, st.sol_y = fx.result(), fy.result()
                else:
                    st.sol_x, st.sol_y = run_qp("x", qx, x), run_qp("y", qy, y)
                qp_its += st.sol_x.iterations + st.sol_y.iterations
                d = np.concatenate([st.sol_x.z - x, st.sol_y.z - y])
                split = check_splitting_valid(st.sol_x.mu, st.sol_y.mu, d, st.eq_res, params)
            if split:
                H_tilde = hess.calHu
                c_max = 1.0 / (2.0 - c)
                n_split += 1
            else:
                st.sol_u = run_qp("u", build_coupled_qp(st), u)
                qp_its += st.sol_u.iterations
                d = st.sol_u.z - u
                H_tilde = hess.coupled
                c_max = 1.0
            st.direction, st.c_max, st.used_splitting = d, c_max, split

            metric_sq = float(d @ H_tilde @ d)
            gx, gy = st.grad_alf()
            dir_deriv = float(np.concatenate([gx, gy]) @ d)
            full_viol = _max_violation(problem, u + c_max * d)

            try:
                ls = armijo_search(ctx, u, d, metric_sq, c_max, params, alf_k)
            except LineSearchFail:
                log.warning("line search failed at iteration %d", k)
                reason = TerminationReason.LINE_SEARCH_FAIL
                duals = _duals(problem, split, st.sol_x, st.sol_y, st.sol_u)
                break
            st.step = ls.step
            u_next = ls.point
            x_next, y_next = problem.split(u_next)
            r_next = problem.eq_residual(x_next, y_next)
            lam_next = update_multiplier(lam, r_next, params.xi)
            ctx_next = AlfContext(problem, params.beta, lam_next)
            alf_next = alf_value(ctx_next, u_next)
            eps_abs, eps_rel = termination_metrics(u, u_next, r_next, problem.b)
            feas = measure_feasibility(problem, u_next)

            trace.append(
                IterationRecord(
                    k=k,
                    alf=alf_k,
                    alf_trial=ls.value,
                    alf_next=alf_next,
                    objective=eval_objective(problem, u_next),
                    d_norm=float(np.linalg.norm(d)),
                    metric_sq=metric_sq,
                    dir_deriv=dir_deriv,
                    eps_abs=eps_abs,
                    eps_rel=eps_rel,
                    step=ls.step,
                    c_max=c_max,
                    split=split,
                    eq_res_norm=float(np.linalg.norm(r_next)),
                    ineq_violation=feas.ineq_violation,
                    range_violation=feas.range_violation,
                    fullstep_violation=full_viol,
                    linesearch_trials=ls.trials,
                    qp_iterations=qp_its,
                )
            )
            duals = _duals(problem, split, st.sol_x, st.sol_y, st.sol_u)

            stop = None
            if eps_abs <= params.kkt_stop_tol:
                stop = TerminationReason.KKT_EXACT
                kkt_at_stop = kkt_residual(
                    problem, u, lam, duals["mu"], duals["alpha_x"], duals["gamma_x"],
                    duals["alpha_y"], duals["gamma_y"],
                )
            elif params.termination is TerminationMode.ABSOLUTE and eps_abs < params.eps:
                stop = TerminationReason.ABSOLUTE_TOL
            elif params.termination is TerminationMode.RELATIVE and eps_rel < params.eps:
                stop = TerminationReason.RELATIVE_TOL

            u, x, y, lam, ctx, alf_k = u_next, x_next, y_next, lam_next, ctx_next, alf_next
            if stop is not None:
                reason = stop
                break
    finally:
        if pool is not None:
            pool.shutdown()

    feas = measure_feasibility(problem, u)
    return SolveReport(
        x=x.copy(),
        y=y.copy(),
        lam=lam.copy(),
        objective=eval_objective(problem, u),
        feasibility_eq=feas.eq_residual_inf,
        feasibility_ineq=feas.ineq_violation,
        feasibility_range=feas.range_violation,
        n_iter=len(trace),
        n_split_iter=n_split if reason is not TerminationReason.LINE_SEARCH_FAIL else sum(r.split for r in trace),
        termination_reason=reason,
        trace=trace,
        wall_time=time.perf_counter() - started,
        alf0=alf0,
        kkt_residual_at_stop=kkt_at_stop,
        duals={key: np.asarray(val, dtype=float).copy() for key, val in duals.items()},
        params=params.to_dict(),
        problem_name=problem.name,
    )


# ---------------------------------------------------------------------------
# post-run checks


def check_trace_invariants(report: SolveReport, params: SolverParams | None = None, tol: float = 1e-8) -> dict[str, float]:
    """Worst violation of each per-iteration property over a trace.

    Keys: ``descent`` (ALF decrease including the multiplier term),
    ``feasibility`` (iterates stay partially feasible), ``full_step``
    (the longest admissible step stays feasible), ``direction`` (slope bound
    on the search direction). A value ``<= tol`` means the property holds.
    """
    params = params or SolverParams(**_param_kwargs(report.params))
    worst = dict(descent=0.0, feasibility=0.0, full_step=0.0, direction=0.0)
    for rec in report.trace:
        drop = params.xi * rec.eq_res_norm**2 + rec.step * params.rho * rec.metric_sq
        worst["descent"] = max(worst["descent"], rec.alf_next - (rec.alf - drop))
        worst["feasibility"] = max(worst["feasibility"], rec.ineq_violation, rec.range_violation)
        worst["full_step"] = max(worst["full_step"], rec.fullstep_violation)
        # slope <= -|d|^2 + tol (1 + |d|^2); report the excess over tol |d|^2
        excess = rec.dir_deriv + rec.metric_sq - tol * rec.d_norm**2
        worst["direction"] = max(worst["direction"], excess)
    return worst


def _param_kwargs(d: dict) -> dict:
    names = SolverParams.__dataclass_fields__.keys()
    return {k: v for k, v in d.items() if k in names}


def audit_complexity(report: SolveReport, params: SolverParams | None = None, tol: float = 1e-8) -> ComplexityAudit:
    """Check the worst-case bound ``min_{i<=k} eps_i <= sqrt(C0/N0) / sqrt(k+1)``.

    ``eta`` is the smallest Rayleigh quotient of the line-search matrix seen
    along the directions, and the C0 anchor is the lower of the final
    objective and the final ALF value. A trace whose ALF values do not
    decrease makes the audit fail outright.
    """
    params = params or SolverParams(**_param_kwargs(report.params))
    trace = report.trace
    monotone = True
    prev = report.alf0
    for rec in trace:
        drop = params.xi * rec.eq_res_norm**2 + rec.step * params.rho * rec.metric_sq
        if rec.alf_next > rec.alf - drop + tol or abs(rec.alf - prev) > tol * max(1.0, abs(prev)):
            monotone = False
        prev = rec.alf_next
    rayleigh = [rec.metric_sq / rec.d_norm**2 for rec in trace if rec.d_norm > 0]
    eta = min(rayleigh) if rayleigh else math.inf
    N0 = min(params.rho * eta, params.xi)
    finals = [report.objective] + [rec.alf_next for rec in trace]
    C0 = report.alf0 - min(finals)
    worst = 0.0
    best_eps = math.inf
    ok = monotone
    for k, rec in enumerate(trace):
        best_eps = min(best_eps, rec.eps_abs)
        bound = math.sqrt(max(C0, 0.0) / N0) / math.sqrt(k + 1)
        if best_eps > bound * (1 + 1e-9) + 1e-12:
            ok = False
        if bound > 0:
            worst = max(worst, best_eps / bound)
        elif best_eps > 0:
            worst = math.inf
    return ComplexityAudit(C0=C0, N0=N0, eta_estimate=eta, bound_satisfied=ok, trace_monotone=monotone, worst_ratio=worst)
