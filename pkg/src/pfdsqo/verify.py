"""Self-checks: QP engine against enumeration, derivatives against finite
differences, and per-iteration properties of benchmark runs."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .alf import AlfContext, alf_gradient_u, alf_value
from .bench import (
    build_epd,
    build_hs118,
    default_units_path,
    epd_lambda0,
    find_feasible_start,
    load_units_file,
    with_valve_point,
)
from .problem import TwoBlockProblem
from .qp import Infeasible, QpProblem, oracle_solve_qp, solve_qp
from .solver import SolverParams, SolveReport, audit_complexity, check_trace_invariants, solve


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


# ---------------------------------------------------------------------------
# QP engine


def random_qp(rng: np.random.Generator, max_n: int = 4, max_rows: int = 8, infeasible: bool = False) -> QpProblem:
    """Strictly convex instance with at most ``max_rows`` one-sided constraints.

    Feasible instances are built around a random interior point. With
    ``infeasible`` a general row is paired with its negation and an
    inconsistent right-hand side.
    """
    n = int(rng.integers(1, max_n + 1))
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = 3 * rng.normal(size=n)
    z0 = rng.normal(size=n)
    p = int(rng.integers(0, 4))
    q = int(rng.integers(0, 3))
    G = rng.normal(size=(p, n))
    h = G @ z0 + rng.uniform(0, 1, p)
    R = rng.normal(size=(q, n))
    lo = R @ z0 - rng.uniform(0.1, 2, q)
    hi = R @ z0 + rng.uniform(0.1, 2, q)
    lo[rng.random(q) < 0.2] = -np.inf
    hi[rng.random(q) < 0.2] = np.inf
    if infeasible:
        a = rng.normal(size=n)
        G = np.vstack([G, a, -a])
        h = np.concatenate([h, [a @ z0 - 1.0], [-(a @ z0) - 1.0]])
    rows = G.shape[0] + int(np.isfinite(lo).sum() + np.isfinite(hi).sum())
    if rows > max_rows:
        keep = max(0, G.shape[0] - (rows - max_rows))
        G, h = G[-keep:] if keep else G[:0], h[-keep:] if keep else h[:0]
    return QpProblem(H, g, G, h, R, lo, hi)


def check_qp_oracle(n_instances: int = 1000, seed: int = 0, infeasible_share: float = 0.1) -> CheckResult:
    rng = np.random.default_rng(seed)
    started = time.perf_counter()
    worst_z = worst_dual = 0.0
    misclassified = n_infeasible = 0
    for _ in range(n_instances):
        qp = random_qp(rng, infeasible=rng.random() < infeasible_share)
        try:
            ref = oracle_solve_qp(qp)
        except Infeasible:
            ref = None
        try:
            sol = solve_qp(qp)
        except Infeasible:
            sol = None
        if (ref is None) != (sol is None):
            misclassified += 1
            continue
        if ref is None:
            n_infeasible += 1
            continue
        worst_z = max(worst_z, float(np.abs(sol.z - ref.z).max()))
        for a, b in ((sol.mu, ref.mu), (sol.alpha, ref.alpha), (sol.gamma, ref.gamma)):
            if a.size:
                worst_dual = max(worst_dual, float(np.abs(a - b).max()))
    elapsed = time.perf_counter() - started
    ok = worst_z <= 1e-8 and worst_dual <= 1e-6 and misclassified == 0
    detail = (
        f"{n_instances} instances, primal diff {worst_z:.1e}, dual diff {worst_dual:.1e}, "
        f"{n_infeasible} infeasible, misclassified {misclassified}, {elapsed:.2f} s"
    )
    return CheckResult("qp-oracle", ok, detail)


# ---------------------------------------------------------------------------
# derivatives


def _fd_gradient(fun, z, rel_step=1e-6):
    g = np.empty_like(z)
    for i in range(z.size):
        h = rel_step * max(1.0, abs(z[i]))
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (fun(z + e) - fun(z - e)) / (2 * h)
    return g


def _fd_jacobian(grad, z, rel_step=1e-6):
    J = np.empty((z.size, z.size))
    for i in range(z.size):
        h = rel_step * max(1.0, abs(z[i]))
        e = np.zeros_like(z)
        e[i] = h
        J[:, i] = (grad(z + e) - grad(z - e)) / (2 * h)
    return J


def _rel_err(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(1.0, np.linalg.norm(b)))


def derivative_errors(problem: TwoBlockProblem, points, beta: float = 1.0, lam=None):
    """Worst relative gradient error of the ALF and worst Hessian error of ``f``/``theta``."""
    lam = np.zeros(problem.m1) if lam is None else lam
    ctx = AlfContext(problem, beta, lam)
    g_err = h_err = 0.0
    for u in points:
        g_err = max(g_err, _rel_err(alf_gradient_u(ctx, u), _fd_gradient(lambda z: alf_value(ctx, z), u)))
        x, y = problem.split(u)
        h_err = max(h_err, _rel_err(problem.hess_f(x), _fd_jacobian(problem.grad_f, x)))
        h_err = max(h_err, _rel_err(problem.hess_theta(y), _fd_jacobian(problem.grad_theta, y)))
    return g_err, h_err


def _sample_points(problem: TwoBlockProblem, anchor, rng, count, spread):
    return [anchor + spread * rng.uniform(-1, 1, anchor.size) for _ in range(count)]


def benchmark_problems():
    """Small members of each family used by the derivative and invariant checks."""
    fam = load_units_file(default_units_path())
    out = []
    for q in (6, 20):
        p, split = build_hs118(q)
        out.append((p, split, None))
    for f in (fam, with_valve_point(fam)):
        p, split = build_epd(f)
        out.append((p, split, epd_lambda0(f)))
    return out


def check_derivatives(seed: int = 0, n_points: int = 20) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for problem, split, lam in benchmark_problems():
        start = find_feasible_start(problem, split)
        pts = _sample_points(problem, start, rng, n_points, spread=5.0)
        if split.start is not None:
            # include the point where the delta=1 ripple would have a kink
            pts[0] = split.start.copy()
        beta = 200.0 if problem.m1 else 1.0
        g_err, h_err = derivative_errors(problem, pts, beta=beta, lam=lam)
        results.append(
            CheckResult(
                f"derivatives {problem.name}",
                g_err <= 1e-6 and h_err <= 1e-4,
                f"gradient rel err {g_err:.1e}, Hessian rel err {h_err:.1e} over {n_points} points",
            )
        )
    return results


# ---------------------------------------------------------------------------
# runs


def invariant_result(name: str, report: SolveReport, params: SolverParams, tol: float = 1e-8) -> CheckResult:
    worst = check_trace_invariants(report, params, tol)
    audit = audit_complexity(report, params, tol)
    ok = all(v <= tol for v in worst.values()) and audit.bound_satisfied
    parts = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return CheckResult(f"invariants {name}", ok, f"{parts}, complexity ratio {audit.worst_ratio:.2e}")


def check_runs(quick: bool = True) -> list[CheckResult]:
    results = []
    qs = (5, 20) if quick else (5, 50, 100)
    for q in qs:
        p, split = build_hs118(q)
        params = SolverParams(c=1.0)
        rep = solve(p, find_feasible_start(p, split), params=params)
        results.append(invariant_result(p.name, rep, params))
    fam = load_units_file(default_units_path())
    for vp in (False, True):
        f = with_valve_point(fam) if vp else fam
        p, split = build_epd(f)
        params = SolverParams.epd(valve_point=vp)
        rep = solve(p, find_feasible_start(p, split), epd_lambda0(f), params)
        results.append(invariant_result(p.name, rep, params))
    return results


def run_all(seed: int = 0, quick: bool = True) -> list[CheckResult]:
    return [check_qp_oracle(seed=seed), *check_derivatives(seed), *check_runs(quick)]
