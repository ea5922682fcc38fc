"""Augmented Lagrangian of the equality block and QP subproblem assembly.

The merit function is::

    L_beta(x, y, lam) = f(x) + theta(y) - lam'(Ax + By - b) + beta/2 |Ax + By - b|^2

Inequality and range constraints are kept out of it and handled by the QP
subproblems directly. Every QP built here uses the absolute point (``x``,
``y`` or ``(x, y)``) as its decision variable; constant terms are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .problem import TwoBlockProblem, dense
from .qp import QpProblem, QpSolution


@dataclass(frozen=True)
class AlfContext:
    problem: TwoBlockProblem
    beta: float
    lam: np.ndarray

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        lam = np.array(self.lam, dtype=float).reshape(-1)
        if lam.shape != (self.problem.m1,):
            raise ValueError(f"multiplier must have length {self.problem.m1}")
        object.__setattr__(self, "lam", lam)


def alf_value(ctx: AlfContext, u) -> float:
    p = ctx.problem
    x, y = p.split(u)
    r = p.eq_residual(x, y)
    return p.f(x) + p.theta(y) - float(ctx.lam @ r) + 0.5 * ctx.beta * float(r @ r)


def alf_gradient_u(ctx: AlfContext, u) -> np.ndarray:
    """Stacked ``(grad_x L, grad_y L)``."""
    p = ctx.problem
    x, y = p.split(u)
    w = ctx.lam - ctx.beta * p.eq_residual(x, y)
    gx = p.grad_f(x) - p.A.T @ w
    gy = p.grad_theta(y) - p.B.T @ w
    return np.concatenate([gx, gy])


@dataclass(frozen=True)
class HessianBlocks:
    """Block models ``Hx, Hy`` and the penalised blocks ``Hx + beta A'A``, ``Hy + beta B'B``."""

    Hx: np.ndarray
    Hy: np.ndarray
    calHx: np.ndarray
    calHy: np.ndarray
    coupled: np.ndarray  # blkdiag(Hx, Hy) + beta [A B]'[A B]

    @property
    def calHu(self) -> np.ndarray:
        return sla.block_diag(self.calHx, self.calHy)


def make_hessian_blocks(problem: TwoBlockProblem, Hx, Hy, beta: float) -> HessianBlocks:
    A, B = dense(problem.A), dense(problem.B)
    Hx = np.asarray(Hx, dtype=float)
    Hy = np.asarray(Hy, dtype=float)
    calHx = Hx + beta * (A.T @ A)
    calHy = Hy + beta * (B.T @ B)
    AB = np.hstack([A, B])
    coupled = sla.block_diag(Hx, Hy) + beta * (AB.T @ AB)
    return HessianBlocks(Hx, Hy, calHx, calHy, coupled)


@dataclass
class SolverState:
    """Quantities at the current iterate ``w_k = (x_k, y_k, lam_k)``.

    The first block of fields is all the QP builders read; the rest is
    filled in by the outer loop as an iteration proceeds.
    """

    ctx: AlfContext
    x: np.ndarray
    y: np.ndarray
    grad_f: np.ndarray
    grad_theta: np.ndarray
    hess: HessianBlocks
    h: np.ndarray  # E x_k + F y_k - d
    eq_res: np.ndarray  # A x_k + B y_k - b
    feas_tol: float = 1e-8

    alf_value: float = float("nan")
    sol_x: QpSolution | None = None
    sol_y: QpSolution | None = None
    sol_u: QpSolution | None = None
    direction: np.ndarray | None = None
    step: float = float("nan")
    c_max: float = float("nan")
    used_splitting: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def problem(self) -> TwoBlockProblem:
        return self.ctx.problem

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])

    @property
    def lam(self) -> np.ndarray:
        return self.ctx.lam

    def grad_alf(self) -> tuple[np.ndarray, np.ndarray]:
        w = self.lam - self.ctx.beta * self.eq_res
        p = self.problem
        return self.grad_f - p.A.T @ w, self.grad_theta - p.B.T @ w

    def clamped_h(self) -> np.ndarray:
        """``h_k`` with roundoff-level positive entries set to zero."""
        h = self.h.copy()
        h[(h > 0) & (h <= self.feas_tol)] = 0.0
        return h


def linearize(ctx: AlfContext, x, y, hess: HessianBlocks, feas_tol: float = 1e-8) -> SolverState:
    p = ctx.problem
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return SolverState(
        ctx=ctx,
        x=x,
        y=y,
        grad_f=p.grad_f(x),
        grad_theta=p.grad_theta(y),
        hess=hess,
        h=p.ineq_residual(x, y),
        eq_res=p.eq_residual(x, y),
        feas_tol=feas_tol,
    )


def _check_c(c):
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"c must lie in [0, 1], got {c}")


def build_split_x_qp(state: SolverState, c: float) -> QpProblem:
    """x-subproblem: ``E x <= d - F y_k + (c/2) h_k`` and ``l <= C x <= v``."""
    _check_c(c)
    p = state.problem
    gx, _ = state.grad_alf()
    H = state.hess.calHx
    rhs = p.d - p.F @ state.y + 0.5 * c * state.clamped_h()
    return QpProblem(H, gx - H @ state.x, dense(p.E), rhs, dense(p.C), p.l, p.v)


def build_split_y_qp(state: SolverState, c: float) -> QpProblem:
    """y-subproblem: ``F y <= d - E x_k + (c/2) h_k`` and ``s <= D y <= r``."""
    _check_c(c)
    p = state.problem
    _, gy = state.grad_alf()
    H = state.hess.calHy
    rhs = p.d - p.E @ state.x + 0.5 * c * state.clamped_h()
    return QpProblem(H, gy - H @ state.y, dense(p.F), rhs, dense(p.D), p.s, p.r)


def build_coupled_qp(state: SolverState) -> QpProblem:
    """Joint subproblem in ``u = (x, y)`` with the full coupled matrix."""
    p = state.problem
    H = state.hess.coupled
    gx, gy = state.grad_alf()
    g = np.concatenate([gx, gy]) - H @ state.u
    G = np.hstack([dense(p.E), dense(p.F)])
    R = sla.block_diag(dense(p.C), dense(p.D)) if p.l1 + p.l2 else np.zeros((0, p.n1 + p.n2))
    lo = np.concatenate([p.l, p.s])
    hi = np.concatenate([p.v, p.r])
    return QpProblem(H, g, G, p.d, R, lo, hi)


def sqo_model_value(state: SolverState, u) -> float:
    """Objective of the joint subproblem at ``u`` (linearised F plus the ALF terms).

    Only differences between two points are meaningful to compare with the
    assembled QPs, since those drop constants.
    """
    p = state.problem
    x, y = p.split(u)
    dx, dy = x - state.x, y - state.y
    hb = state.hess
    r = p.eq_residual(x, y)
    return float(
        state.grad_f @ dx
        + 0.5 * dx @ hb.Hx @ dx
        + state.grad_theta @ dy
        + 0.5 * dy @ hb.Hy @ dy
        - state.lam @ r
        + 0.5 * state.ctx.beta * r @ r
    )
