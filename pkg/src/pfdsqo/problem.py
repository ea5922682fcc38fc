"""Two-block linearly constrained problems and their feasibility measures.

A problem has the form::

    min  f(x) + theta(y)
    s.t. A x + B y = b
         E x + F y <= d
         l <= C x <= v
         s <= D y <= r

Bounds ``l, v, s, r`` may contain ``-inf``/``+inf``; an infinite side is
simply never active.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

# Constraint matrices with at least this many columns are kept sparse.
SPARSE_MIN_COLS = 200


class EvaluationError(ArithmeticError):
    """A user callback returned a non-finite value."""

    def __init__(self, block: str, what: str):
        super().__init__(f"non-finite {what} returned by the {block}-block callback")
        self.block = block
        self.what = what


def as_constraint_matrix(M, n_cols: int | None = None):
    """Return ``M`` as CSR when it is wide, otherwise as a dense float array."""
    if sp.issparse(M):
        M = sp.csr_matrix(M, dtype=float)
        if M.shape[1] < SPARSE_MIN_COLS:
            return M.toarray()
        return M
    M = np.asarray(M, dtype=float)
    if M.ndim == 1 and M.size == 0:
        M = M.reshape(0, n_cols if n_cols is not None else 0)
    if M.ndim != 2:
        raise ValueError(f"constraint matrix must be 2-D, got shape {M.shape}")
    if M.shape[1] >= SPARSE_MIN_COLS:
        return sp.csr_matrix(M)
    return M


def dense(M) -> np.ndarray:
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


def _vec(v, n: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape != (n,):
        raise ValueError(f"{name} must have length {n}, got {v.shape[0]}")
    return v


def _empty(n_rows: int, n_cols: int):
    return np.zeros((n_rows, n_cols))


@dataclass(frozen=True)
class TwoBlockProblem:
    """Objective callbacks and constraint data of a two-block problem.

    Missing constraint blocks may be passed as ``None``; they become
    matrices with zero rows. Instances are immutable after construction.
    """

    f_eval: Callable[[np.ndarray], float]
    f_grad: Callable[[np.ndarray], np.ndarray]
    f_hess: Callable[[np.ndarray], np.ndarray]
    theta_eval: Callable[[np.ndarray], float]
    theta_grad: Callable[[np.ndarray], np.ndarray]
    theta_hess: Callable[[np.ndarray], np.ndarray]
    n1: int
    n2: int
    A: object = None
    B: object = None
    b: np.ndarray | None = None
    E: object = None
    F: object = None
    d: np.ndarray | None = None
    C: object = None
    l: np.ndarray | None = None
    v: np.ndarray | None = None
    D: object = None
    s: np.ndarray | None = None
    r: np.ndarray | None = None
    smooth: bool = True
    name: str = field(default="problem", compare=False)

    def __post_init__(self):
        n1, n2 = int(self.n1), int(self.n2)
        if n1 < 0 or n2 < 0:
            raise ValueError("block sizes must be nonnegative")

        def pair(P, Q, rhs, label):
            m = None
            for M in (P, Q):
                if M is not None:
                    m = np.shape(M)[0] if not sp.issparse(M) else M.shape[0]
                    break
            if m is None:
                m = 0 if rhs is None else np.asarray(rhs).reshape(-1).size
            P = _empty(m, n1) if P is None else as_constraint_matrix(P, n1)
            Q = _empty(m, n2) if Q is None else as_constraint_matrix(Q, n2)
            if P.shape != (m, n1) or Q.shape != (m, n2):
                raise ValueError(
                    f"{label} block shapes {P.shape}, {Q.shape} inconsistent with "
                    f"({m}, {n1}) / ({m}, {n2})"
                )
            rhs = np.zeros(m) if rhs is None else _vec(rhs, m, f"{label} rhs")
            return P, Q, rhs

        A, B, b = pair(self.A, self.B, self.b, "equality")
        E, F, d = pair(self.E, self.F, self.d, "inequality")

        def ranges(M, lo, hi, n, label):
            if M is None:
                m = 0 if lo is None else np.asarray(lo).reshape(-1).size
                M = _empty(m, n)
            M = as_constraint_matrix(M, n)
            m = M.shape[0]
            if M.shape[1] != n:
                raise ValueError(f"{label} matrix has {M.shape[1]} columns, expected {n}")
            lo = np.full(m, -np.inf) if lo is None else _vec(lo, m, f"{label} lower")
            hi = np.full(m, np.inf) if hi is None else _vec(hi, m, f"{label} upper")
            if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
                raise ValueError(f"{label} bounds contain NaN")
            if np.any(lo == np.inf) or np.any(hi == -np.inf):
                raise ValueError(f"{label} bounds must satisfy lower < +inf and upper > -inf")
            if not np.all(lo < hi):
                bad = int(np.flatnonzero(~(lo < hi))[0])
                raise ValueError(f"{label} bounds need lower < upper (row {bad})")
            return M, lo, hi

        C, l, v = ranges(self.C, self.l, self.v, n1, "x-range")
        D, s, r = ranges(self.D, self.s, self.r, n2, "y-range")

        for key, val in dict(A=A, B=B, b=b, E=E, F=F, d=d, C=C, l=l, v=v, D=D, s=s, r=r).items():
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, key, val)
        object.__setattr__(self, "n1", n1)
        object.__setattr__(self, "n2", n2)

    @property
    def m1(self) -> int:
        return self.A.shape[0]

    @property
    def m2(self) -> int:
        return self.E.shape[0]

    @property
    def l1(self) -> int:
        return self.C.shape[0]

    @property
    def l2(self) -> int:
        return self.D.shape[0]

    @property
    def scale(self) -> tuple[int, int, int, int, int, int]:
        """``(n1, n2; m1, m2; l1, l2)``."""
        return (self.n1, self.n2, self.m1, self.m2, self.l1, self.l2)

    def split(self, u) -> tuple[np.ndarray, np.ndarray]:
        u = np.asarray(u, dtype=float).reshape(-1)
        if u.size != self.n1 + self.n2:
            raise ValueError(f"point has length {u.size}, expected {self.n1 + self.n2}")
        return u[: self.n1], u[self.n1 :]

    def eq_residual(self, x, y) -> np.ndarray:
        return self.A @ x + self.B @ y - self.b

    def ineq_residual(self, x, y) -> np.ndarray:
        return self.E @ x + self.F @ y - self.d

    # Checked callback wrappers. They never cache.

    def f(self, x) -> float:
        return _checked_scalar(self.f_eval(x), "x", "value")

    def theta(self, y) -> float:
        return _checked_scalar(self.theta_eval(y), "y", "value")

    def grad_f(self, x) -> np.ndarray:
        return _checked_array(self.f_grad(x), (self.n1,), "x", "gradient")

    def grad_theta(self, y) -> np.ndarray:
        return _checked_array(self.theta_grad(y), (self.n2,), "y", "gradient")

    def hess_f(self, x) -> np.ndarray:
        return _checked_array(self.f_hess(x), (self.n1, self.n1), "x", "Hessian")

    def hess_theta(self, y) -> np.ndarray:
        return _checked_array(self.theta_hess(y), (self.n2, self.n2), "y", "Hessian")


def _checked_scalar(val, block, what) -> float:
    val = float(val)
    if not np.isfinite(val):
        raise EvaluationError(block, what)
    return val


def _checked_array(val, shape, block, what) -> np.ndarray:
    val = dense(val) if sp.issparse(val) else np.asarray(val, dtype=float)
    val = val.reshape(shape)
    if not np.all(np.isfinite(val)):
        raise EvaluationError(block, what)
    return val


@dataclass(frozen=True)
class Iterate:
    """Primal-dual point ``w = (x, y, lambda)``."""

    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        for key in ("x", "y", "lam"):
            val = np.array(getattr(self, key), dtype=float).reshape(-1)
            if not np.all(np.isfinite(val)):
                raise ValueError(f"iterate component {key} has non-finite entries")
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def u(self) -> np.ndarray:
        return np.concatenate([self.x, self.y])


@dataclass(frozen=True)
class FeasibilityReport:
    eq_residual_inf: float
    ineq_violation: float
    range_violation: float
    h: np.ndarray

    @property
    def max_violation(self) -> float:
        return max(self.eq_residual_inf, self.ineq_violation, self.range_violation)


def eval_objective(p: TwoBlockProblem, u) -> float:
    """``F(x, y) = f(x) + theta(y)``."""
    x, y = p.split(u)
    return p.f(x) + p.theta(y)


def range_violation(M, lo, hi, z) -> float:
    if M.shape[0] == 0:
        return 0.0
    Mz = M @ z
    with np.errstate(invalid="ignore"):
        below = np.where(np.isfinite(lo), lo - Mz, 0.0)
        above = np.where(np.isfinite(hi), Mz - hi, 0.0)
    return float(max(0.0, below.max(), above.max()))


def measure_feasibility(p: TwoBlockProblem, u) -> FeasibilityReport:
    x, y = p.split(u)
    eq = p.eq_residual(x, y)
    h = p.ineq_residual(x, y)
    eq_inf = float(np.max(np.abs(eq))) if eq.size else 0.0
    ineq = float(max(0.0, h.max())) if h.size else 0.0
    rng = max(range_violation(p.C, p.l, p.v, x), range_violation(p.D, p.s, p.r, y))
    return FeasibilityReport(eq_inf, ineq, rng, h)


def is_partially_feasible(p: TwoBlockProblem, u, tol: float = 0.0) -> bool:
    """Membership in ``(X x Y) ∩ {Ex + Fy <= d}`` up to ``tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    rep = measure_feasibility(p, u)
    return rep.ineq_violation <= tol and rep.range_violation <= tol
