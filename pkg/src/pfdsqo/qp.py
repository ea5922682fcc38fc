"""Strictly convex QP engine.

Problems have the form::

    min  1/2 z'Hz + g'z
    s.t. G z <= h
         lo <= R z <= hi      (infinite sides dropped)

`solve_qp` is a primal active-set method working in the range space of
the Cholesky factor of ``H``; `oracle_solve_qp` enumerates candidate
active sets and exists to cross-check it on small instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

DEFAULT_KKT_TOL = 1e-9


class QpError(RuntimeError):
    pass


class NotPositiveDefinite(QpError):
    pass


class Infeasible(QpError):
    pass


class TooLarge(QpError):
    pass


class CycleLimit(QpError):
    def __init__(self, message: str, best: "QpSolution | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ActiveSet:
    """Indices of active general rows, lower range rows and upper range rows."""

    ineq: tuple[int, ...] = ()
    lower: tuple[int, ...] = ()
    upper: tuple[int, ...] = ()


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    G_ineq: np.ndarray | None = None
    h_ineq: np.ndarray | None = None
    R_mat: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        H = np.array(self.H, dtype=float)
        n = H.shape[0]
        if H.shape != (n, n):
            raise ValueError(f"H must be square, got {H.shape}")
        g = np.array(self.g, dtype=float).reshape(-1)
        if g.shape != (n,):
            raise ValueError(f"g must have length {n}")
        G = np.zeros((0, n)) if self.G_ineq is None else np.array(self.G_ineq, dtype=float).reshape(-1, n)
        h = np.zeros(G.shape[0]) if self.h_ineq is None else np.array(self.h_ineq, dtype=float).reshape(-1)
        if h.shape != (G.shape[0],):
            raise ValueError("h_ineq length does not match G_ineq rows")
        R = np.zeros((0, n)) if self.R_mat is None else np.array(self.R_mat, dtype=float).reshape(-1, n)
        q = R.shape[0]
        lo = np.full(q, -np.inf) if self.lo is None else np.array(self.lo, dtype=float).reshape(-1)
        hi = np.full(q, np.inf) if self.hi is None else np.array(self.hi, dtype=float).reshape(-1)
        if lo.shape != (q,) or hi.shape != (q,):
            raise ValueError("range bounds do not match R_mat rows")
        finite = np.isfinite(lo) & np.isfinite(hi)
        if np.any(lo[finite] >= hi[finite]):
            raise ValueError("range bounds need lo < hi")
        for key, val in dict(H=H, g=g, G_ineq=G, h_ineq=h, R_mat=R, lo=lo, hi=hi).items():
            val.setflags(write=False)
            object.__setattr__(self, key, val)

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def p(self) -> int:
        return self.G_ineq.shape[0]

    @property
    def q(self) -> int:
        return self.R_mat.shape[0]

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.H @ z + self.g @ z)


@dataclass(frozen=True)
class QpSolution:
    z: np.ndarray
    mu: np.ndarray
    alpha: np.ndarray
    gamma: np.ndarray
    active_set: ActiveSet = field(default_factory=ActiveSet)
    iterations: int = 0


def kkt_violation(qp: QpProblem, sol: QpSolution) -> dict[str, float]:
    """Stationarity, feasibility, complementarity and dual-sign residuals."""
    z = sol.z
    stat = qp.H @ z + qp.g + qp.G_ineq.T @ sol.mu + qp.R_mat.T @ (sol.gamma - sol.alpha)
    Gz = qp.G_ineq @ z
    Rz = qp.R_mat @ z
    lo_f = np.isfinite(qp.lo)
    hi_f = np.isfinite(qp.hi)
    primal = [Gz - qp.h_ineq, (qp.lo - Rz)[lo_f], (Rz - qp.hi)[hi_f]]
    comp = [
        sol.mu * (qp.h_ineq - Gz),
        (sol.alpha * np.where(lo_f, Rz - np.where(lo_f, qp.lo, 0.0), 0.0)),
        (sol.gamma * np.where(hi_f, np.where(hi_f, qp.hi, 0.0) - Rz, 0.0)),
    ]

    def top(parts, absval=False):
        vals = [np.abs(a) if absval else a for a in parts if a.size]
        return float(max([0.0] + [a.max() for a in vals]))

    return {
        "stationarity": float(np.max(np.abs(stat))) if stat.size else 0.0,
        "primal": top(primal),
        "complementarity": top(comp, absval=True),
        "dual_sign": top([-sol.mu, -sol.alpha, -sol.gamma]),
    }


# ---------------------------------------------------------------------------
# active-set engine


class _Rows:
    """All finite one-sided constraints as ``a_i' z <= b_i``.

    Ordering: general rows, then lower range sides, then upper range sides.
    """

    def __init__(self, A, b, kind=None, src=None, p=0, q=0):
        self.A = A
        self.b = b
        self.kind = np.zeros(b.size, int) if kind is None else kind
        self.src = np.arange(b.size) if src is None else src
        self.p, self.q = p, q
        self.norms = np.linalg.norm(A, axis=1) if A.size else np.zeros(A.shape[0])
        self.lookup = {(int(k), int(s)): i for i, (k, s) in enumerate(zip(self.kind, self.src))}

    @classmethod
    def from_qp(cls, qp: QpProblem) -> "_Rows":
        lo_idx = np.flatnonzero(np.isfinite(qp.lo))
        hi_idx = np.flatnonzero(np.isfinite(qp.hi))
        A = np.vstack([qp.G_ineq, -qp.R_mat[lo_idx], qp.R_mat[hi_idx]])
        b = np.concatenate([qp.h_ineq, -qp.lo[lo_idx], qp.hi[hi_idx]])
        kind = np.concatenate([np.zeros(qp.p, int), np.ones(lo_idx.size, int), np.full(hi_idx.size, 2)])
        src = np.concatenate([np.arange(qp.p), lo_idx, hi_idx]).astype(int)
        return cls(A, b, kind, src, qp.p, qp.q)

    def __len__(self):
        return self.b.size

    def from_hint(self, hint: ActiveSet | None) -> list[int]:
        if hint is None:
            return []
        out = []
        for kind, idx in ((0, hint.ineq), (1, hint.lower), (2, hint.upper)):
            for s in idx:
                i = self.lookup.get((kind, int(s)))
                if i is not None:
                    out.append(i)
        return sorted(out)

    def to_solution(self, z, W, nu, iterations) -> QpSolution:
        mu = np.zeros(self.p)
        alpha = np.zeros(self.q)
        gamma = np.zeros(self.q)
        act = {0: [], 1: [], 2: []}
        for i, val in zip(W, nu):
            kind, s = int(self.kind[i]), int(self.src[i])
            (mu, alpha, gamma)[kind][s] = val
            act[kind].append(s)
        aset = ActiveSet(*(tuple(sorted(act[k])) for k in range(3)))
        return QpSolution(z, mu, alpha, gamma, aset, iterations)


class _WorkingSet:
    """Working set kept as a QR factorisation of ``V = L^{-1} A_W'``.

    With ``V = Q R`` the multipliers are ``nu = -R^{-1} Q'y`` and the step is
    ``p = -L^{-T}(y - Q Q'y)``. Adding a row appends a column by
    re-orthogonalised Gram-Schmidt; dropping one restores the triangle with
    Givens rotations.
    """

    def __init__(self, L, rows: _Rows):
        self.L = L
        self.rows = rows
        self.n = L.shape[0]
        self.idx: list[int] = []
        self.Q = np.zeros((self.n, self.n))
        self.R = np.zeros((self.n, self.n))

    @property
    def w(self) -> int:
        return len(self.idx)

    def column(self, i):
        return sla.solve_triangular(self.L, self.rows.A[i], lower=True, check_finite=False)

    def add(self, i, v=None, tol=0.0) -> bool:
        """Append row ``i``; refuse (return False) if it is dependent within ``tol``."""
        v = self.column(i) if v is None else v
        w = self.w
        if w >= self.n:
            return False
        Qw = self.Q[:, :w]
        r = Qw.T @ v
        res = v - Qw @ r
        r2 = Qw.T @ res
        res -= Qw @ r2
        r += r2
        rho = np.linalg.norm(res)
        if rho <= tol * np.linalg.norm(v) or rho == 0.0:
            return False
        self.Q[:, w] = res / rho
        self.R[:w, w] = r
        self.R[w, : w + 1] = 0.0
        self.R[w, w] = rho
        self.idx.append(i)
        return True

    def drop(self, pos):
        w = self.w
        R, Q = self.R, self.Q
        R[:w, pos : w - 1] = R[:w, pos + 1 : w].copy()
        R[:w, w - 1] = 0.0
        for j in range(pos, w - 1):
            a, b = R[j, j], R[j + 1, j]
            h = np.hypot(a, b)
            if h == 0.0:
                continue
            c, s = a / h, b / h
            rj, rj1 = R[j, j:w - 1].copy(), R[j + 1, j:w - 1].copy()
            R[j, j:w - 1] = c * rj + s * rj1
            R[j + 1, j:w - 1] = -s * rj + c * rj1
            R[j + 1, j] = 0.0
            qj, qj1 = Q[:, j].copy(), Q[:, j + 1].copy()
            Q[:, j] = c * qj + s * qj1
            Q[:, j + 1] = -s * qj + c * qj1
        R[w - 1, :] = 0.0
        Q[:, w - 1] = 0.0
        self.idx.pop(pos)

    def seed(self, candidates, tol=1e-9):
        """Add a linearly independent subset of ``candidates``, in order."""
        candidates = list(candidates)
        if not candidates:
            return
        if self.w:
            Vc = sla.solve_triangular(self.L, self.rows.A[candidates].T, lower=True, check_finite=False)
            for j, i in enumerate(candidates):
                self.add(i, Vc[:, j], tol)
            return
        Vc = sla.solve_triangular(self.L, self.rows.A[candidates].T, lower=True, check_finite=False)
        norms = np.linalg.norm(Vc, axis=0)
        # |R_jj| of an unpivoted QR is the part of column j outside the span
        # of the columns before it.
        R = sla.qr(Vc, mode="r", check_finite=False)[0]
        diag = np.zeros(len(candidates))
        k = min(R.shape)
        diag[:k] = np.abs(np.diagonal(R)[:k])
        keep = [j for j in range(len(candidates)) if norms[j] > 0 and diag[j] > tol * norms[j]]
        if not keep:
            return
        Qk, Rk = sla.qr(Vc[:, keep], mode="economic", check_finite=False)
        w = len(keep)
        self.Q[:, :w] = Qk
        self.R[:w, :w] = Rk
        self.idx = [candidates[j] for j in keep]

    def solve(self, y):
        """Multipliers ``nu`` and step ``p`` for ``L^{-1}(Hz+g) = y``."""
        w = self.w
        if w == 0:
            nu = np.zeros(0)
            rhs = y
        else:
            Qw = self.Q[:, :w]
            qy = Qw.T @ y
            nu = -sla.solve_triangular(self.R[:w, :w], qy, lower=False, check_finite=False)
            rhs = y - Qw @ qy
        p = -sla.solve_triangular(self.L, rhs, lower=True, trans="T", check_finite=False)
        return nu, p


def _cholesky(H):
    if not np.allclose(H, H.T, rtol=0.0, atol=1e-12 * (1.0 + np.abs(H).max(initial=0.0))):
        raise NotPositiveDefinite("H is not symmetric")
    try:
        return np.linalg.cholesky(0.5 * (H + H.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("Cholesky factorization of H failed") from exc


def _active_set_loop(H, L, g, rows: _Rows, z, W0, kkt_tol, max_iter):
    """Primal active-set iterations from a feasible ``z``.

    Returns ``(z, working indices, multipliers, iterations)``.
    """
    n = z.size
    ws = _WorkingSet(L, rows)
    ws.seed(W0)
    at_min = False
    degenerate = 0
    bland = False
    in_ws = np.zeros(len(rows), bool)
    in_ws[ws.idx] = True

    for it in range(1, max_iter + 1):
        gk = H @ z + g
        y = sla.solve_triangular(L, gk, lower=True, check_finite=False)
        nu, p = ws.solve(y)
        if not at_min:
            pmax = np.abs(p).max(initial=0.0)
            # p comes from y - QQ'y; its cancellation error scales with the free Newton step
            p_free = sla.solve_triangular(L, y, lower=True, trans="T", check_finite=False)
            p_tol = 1e-14 * (1.0 + np.abs(z).max(initial=0.0)) + 1e-12 * np.abs(p_free).max(initial=0.0)
            if pmax <= p_tol:
                at_min = True
            else:
                Ap = rows.A @ p if len(rows) else np.zeros(0)
                block = (~in_ws) & (Ap > 1e-11 * pmax * rows.norms)
                alpha, j = 1.0, -1
                if np.any(block):
                    cand = np.flatnonzero(block)
                    slack = np.maximum(rows.b[cand] - rows.A[cand] @ z, 0.0)
                    steps = slack / Ap[cand]
                    # stable sort keeps the smallest row index first among ties
                    for k in np.argsort(steps, kind="stable"):
                        if steps[k] >= 1.0:
                            break
                        # a row in the span of the working set has a'p = 0 exactly;
                        # a positive value is rounding and the row does not block
                        if ws.add(int(cand[k]), tol=1e-10):
                            alpha, j = float(steps[k]), int(cand[k])
                            break
                z = z + alpha * p
                if j >= 0:
                    in_ws[j] = True
                    degenerate = degenerate + 1 if alpha * pmax <= 1e-14 * (1.0 + np.abs(z).max()) else 0
                    bland = bland or degenerate > 25
                else:
                    at_min = True
                continue
        # z minimises the objective on the current working set
        if not ws.idx:
            return z, [], nu, it
        dtol = kkt_tol * (1.0 + np.abs(gk).max(initial=0.0))
        if nu.min() >= -dtol:
            return z, list(ws.idx), np.maximum(nu, 0.0), it
        neg = np.flatnonzero(nu < -dtol)
        if bland:
            pos = int(neg[np.argmin(np.asarray(ws.idx)[neg])])
        else:
            pos = int(np.argmin(nu))
        in_ws[ws.idx[pos]] = False
        ws.drop(pos)
        at_min = False

    nu, _ = ws.solve(sla.solve_triangular(L, H @ z + g, lower=True, check_finite=False))
    err = CycleLimit(f"active-set iteration cap {max_iter} reached")
    err.state = (z, list(ws.idx), np.maximum(nu, 0.0), max_iter)
    raise err


def _phase_one(rows: _Rows, z_ref, kkt_tol, max_iter):
    """Feasible point from ``z_ref`` by a penalised squared-violation QP.

    Works on ``(z, s)`` with ``H = I``: minimise
    ``1/2|z - z_ref|^2 + 1/2|s|^2 + M*sum(s)`` subject to ``a_i'z - s_i <= b_i``
    and ``s >= 0`` for rows violated at ``z_ref``; the start ``(z_ref, viol)``
    is feasible by construction. ``M`` grows until ``s`` vanishes.
    """
    n = z_ref.size
    viol = rows.A @ z_ref - rows.b if len(rows) else np.zeros(0)
    bad = np.flatnonzero(viol > 0.0)
    if bad.size == 0:
        return z_ref
    nb = bad.size
    A_aug = np.zeros((len(rows) + nb, n + nb))
    A_aug[: len(rows), :n] = rows.A
    A_aug[bad, n + np.arange(nb)] = -1.0
    A_aug[len(rows) + np.arange(nb), n + np.arange(nb)] = -1.0
    b_aug = np.concatenate([rows.b, np.zeros(nb)])
    aug = _Rows(A_aug, b_aug)
    H = np.eye(n + nb)
    w = np.concatenate([z_ref, viol[bad]])
    W: list[int] = []
    scale = 1.0 + np.abs(rows.b).max(initial=0.0) + np.abs(z_ref).max(initial=0.0)
    penalty = 1e2
    while True:
        g = np.concatenate([-z_ref, np.full(nb, penalty)])
        w, W, _, _ = _active_set_loop(H, H, g, aug, w, W, kkt_tol, max_iter)
        if w[n:].max() <= 1e-10 * scale:
            return w[:n]
        if penalty >= 1e10:
            raise Infeasible(
                f"no feasible point: minimal total violation {w[n:].sum():.3e}"
            )
        penalty *= 1e2


def solve_qp(
    qp: QpProblem,
    warm_start: ActiveSet | None = None,
    kkt_tol: float = DEFAULT_KKT_TOL,
    x0=None,
    max_iter: int | None = None,
) -> QpSolution:
    """Solve ``qp`` by a primal active-set method.

    Args:
        qp: the problem; ``H`` must be symmetric positive definite.
        warm_start: active set of a nearby solve. Only the members active
            at the starting point are used.
        kkt_tol: tolerance for dual signs and feasibility checks.
        x0: feasible starting point. When missing or infeasible a phase-1
            QP supplies one.
        max_iter: active-set iteration cap (default ``10*(n + rows) + 50``).

    Raises:
        NotPositiveDefinite, Infeasible, CycleLimit.
    """
    L = _cholesky(qp.H)
    rows = _Rows.from_qp(qp)
    if max_iter is None:
        max_iter = 10 * (qp.n + len(rows)) + 50

    ftol = kkt_tol * (1.0 + np.abs(rows.b))
    z = None
    if x0 is not None:
        z = np.array(x0, dtype=float).reshape(-1)
        if z.shape != (qp.n,):
            raise ValueError(f"x0 must have length {qp.n}")
        if len(rows) and np.any(rows.A @ z - rows.b > ftol):
            z_ref, z = z, None
        else:
            z_ref = z
    else:
        z_ref = np.zeros(qp.n)
    if z is None:
        z = _phase_one(rows, z_ref, kkt_tol, max_iter)

    W0 = []
    if warm_start is not None and len(rows):
        hint = rows.from_hint(warm_start)
        if hint:
            slack = rows.b[hint] - rows.A[hint] @ z
            W0 = [i for i, s in zip(hint, slack) if abs(s) <= ftol[i]]

    try:
        z, W, nu, its = _active_set_loop(qp.H, L, qp.g, rows, z, W0, kkt_tol, max_iter)
    except CycleLimit as err:
        err.best = rows.to_solution(*err.state)
        raise
    return rows.to_solution(z, W, nu, its)


# ---------------------------------------------------------------------------
# enumeration oracle


def oracle_solve_qp(qp: QpProblem, kkt_tol: float = DEFAULT_KKT_TOL, max_constraints: int = 20) -> QpSolution:
    """Exact minimiser by trying every linearly independent candidate active set.

    Candidates are visited by size and then lexicographically; the first one
    whose equality-constrained minimiser is primal feasible with nonnegative
    multipliers is returned.
    """
    n = qp.n
    G = [(qp.G_ineq[i], qp.h_ineq[i], ("mu", i, 1.0)) for i in range(qp.p)]
    for j in range(qp.q):
        if np.isfinite(qp.lo[j]):
            G.append((-qp.R_mat[j], -qp.lo[j], ("alpha", j, 1.0)))
        if np.isfinite(qp.hi[j]):
            G.append((qp.R_mat[j], qp.hi[j], ("gamma", j, 1.0)))
    m = len(G)
    if m > max_constraints:
        raise TooLarge(f"{m} one-sided constraints exceed the enumeration bound {max_constraints}")
    try:
        Hinv = np.linalg.inv(qp.H)
        np.linalg.cholesky(qp.H)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("H is not positive definite") from exc

    A_all = np.array([a for a, _, _ in G]).reshape(m, n)
    b_all = np.array([b for _, b, _ in G])
    ptol = kkt_tol * (1.0 + np.abs(b_all))
    z_free = -Hinv @ qp.g
    count = 0
    for size in range(0, min(n, m) + 1):
        for S in itertools.combinations(range(m), size):
            tags = [G[i][2][:2] for i in S]
            if len({t[1] for t in tags if t[0] != "mu"}) < sum(t[0] != "mu" for t in tags):
                continue  # both sides of one range row
            count += 1
            if size == 0:
                z, nu = z_free, np.zeros(0)
            else:
                AS = A_all[list(S)]
                Sch = AS @ Hinv @ AS.T
                ev = np.linalg.eigvalsh(Sch)
                if ev[0] <= 1e-10 * max(ev[-1], 1e-300):
                    continue
                nu = np.linalg.solve(Sch, AS @ z_free - b_all[list(S)])
                z = z_free - Hinv @ (AS.T @ nu)
            if m and np.any(A_all @ z - b_all > ptol):
                continue
            dtol = kkt_tol * (1.0 + np.abs(qp.H @ z + qp.g).max(initial=0.0))
            if nu.size and nu.min() < -dtol:
                continue
            mu, alpha, gamma = np.zeros(qp.p), np.zeros(qp.q), np.zeros(qp.q)
            act = {"mu": [], "alpha": [], "gamma": []}
            for i, val in zip(S, nu):
                kind, j, _ = G[i][2]
                {"mu": mu, "alpha": alpha, "gamma": gamma}[kind][j] = max(val, 0.0)
                act[kind].append(j)
            aset = ActiveSet(tuple(sorted(act["mu"])), tuple(sorted(act["alpha"])), tuple(sorted(act["gamma"])))
            return QpSolution(z, mu, alpha, gamma, aset, count)
    raise Infeasible("no candidate active set satisfies the KKT conditions")
