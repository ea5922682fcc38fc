import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import hs118_run, quadratic_problem
from pfdsqo import bench
from pfdsqo.alf import AlfContext, alf_value
from pfdsqo.solver import (
    InfeasibleStart,
    LineSearchFail,
    SolverError,
    SolverParams,
    TerminationMode,
    TerminationReason,
    armijo_search,
    audit_complexity,
    check_splitting_valid,
    check_trace_invariants,
    kkt_residual,
    regularized_hessian,
    solve,
    termination_metrics,
    update_multiplier,
)

P = SolverParams()


# splitting criterion

def test_equal_multipliers_accepted():
    mu = np.array([3.0, 4.0])
    assert check_splitting_valid(mu, mu, np.zeros(4), np.zeros(0), P)


def test_no_inequalities_accepted():
    assert check_splitting_valid(np.zeros(0), np.zeros(0), np.ones(3), np.ones(2), P)


def test_large_multipliers_rejected():
    M = P.M
    assert not check_splitting_valid([M + 1, 0.0], [M + 2, 0.0], np.zeros(3), np.zeros(0), P)


def test_gap_bound_uses_step_and_residual():
    params = SolverParams(M1=1.0, tau1=1.0, tau2=1.0, M2=2.0)
    # gap 1 against 1 * (0.5 + 2 * 0.25)
    assert check_splitting_valid([1.0], [2.0], [0.5], [0.25], params)
    assert not check_splitting_valid([1.0], [2.0], [0.4], [0.25], params)


def test_multiplier_length_mismatch():
    with pytest.raises(ValueError):
        check_splitting_valid([1.0], [1.0, 2.0], [0.0], [], P)


# line search

def test_zero_direction_takes_full_step(rng):
    p = quadratic_problem(np.ones(2), np.zeros(2), np.ones(1), np.zeros(1))
    ctx = AlfContext(p, 1.0, np.zeros(0))
    u = rng.normal(size=3)
    for c_max in (1.0, 2.0 / 3.0):
        res = armijo_search(ctx, u, np.zeros(3), 0.0, c_max, P)
        assert res.step == c_max and res.trials == 1
        np.testing.assert_array_equal(res.point, u)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 0.49))
def test_exact_model_accepts_unit_step(h, a, u0, rho):
    # 1-D ALF h/2 (u - a)^2 with the Newton direction: decrease h d^2/2 >= rho h d^2
    p = quadratic_problem([h], [a], np.zeros(0), np.zeros(0))
    ctx = AlfContext(p, 1.0, np.zeros(0))
    d = a - u0
    res = armijo_search(ctx, [u0], [d], h * d * d, 1.0, SolverParams(rho=rho))
    assert res.step == 1.0


def test_backtracking_on_long_direction():
    p = quadratic_problem([1.0], [0.0], np.zeros(0), np.zeros(0))
    ctx = AlfContext(p, 1.0, np.zeros(0))
    res = armijo_search(ctx, [1.0], [-4.0], 1.0, 1.0, SolverParams(sigma=0.5))
    # t = 1, 0.5 fail; t = 0.25 lands on the minimiser
    assert res.step == 0.25 and res.trials == 3
    assert res.value < alf_value(ctx, [1.0])


def test_ascent_direction_fails():
    p = quadratic_problem([1.0], [0.0], np.zeros(0), np.zeros(0))
    ctx = AlfContext(p, 1.0, np.zeros(0))
    with pytest.raises(LineSearchFail):
        armijo_search(ctx, [1.0], [1.0], 1.0, 1.0, SolverParams(max_linesearch=20))


def test_first_hs118_step_decreases_alf():
    *_, rep = hs118_run(20, 1.0)
    first = rep.trace[0]
    assert first.alf_next < first.alf
    assert first.linesearch_trials <= 61


# multiplier and termination

def test_update_multiplier_examples():
    np.testing.assert_array_equal(update_multiplier([1.0, 2.0], [0.0, 0.0], 0.001), [1.0, 2.0])
    np.testing.assert_allclose(update_multiplier([0.0, 0.0], [1.0, -2.0], 0.001), [0.001, -0.002])
    assert update_multiplier([], [], 0.001).shape == (0,)
    with pytest.raises(ValueError):
        update_multiplier([0.0], [1.0], 0.0)


def test_termination_metrics_examples():
    assert termination_metrics([1.0, 2.0], [1.0, 2.0], [0.0], [0.0]) == (0.0, 0.0)
    # |(x_k, b)| = |(0, 8, 0)| + ... chosen so the norm is 9 with no equality rows
    u_k = np.array([0.0, 0.0, 9.0])
    eps_abs, eps_rel = termination_metrics(u_k, u_k + [3.0, 4.0, 0.0], [], [])
    assert eps_abs == 5.0
    assert eps_rel == 0.5


# regularisation

def test_regularized_identity_unchanged():
    np.testing.assert_array_equal(regularized_hessian(np.eye(3), 1e-4), np.eye(3))


def test_regularized_negative_branch():
    np.testing.assert_allclose(regularized_hessian(np.diag([-1.0, 2.0]), 1e-4), np.diag([1.0, 4.0]))


def test_regularized_middle_branch():
    out = regularized_hessian(np.diag([0.0, 1.0]), 1e-4)
    assert np.linalg.eigvalsh(out)[0] == pytest.approx(1e-4, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_regularized_is_positive_definite_shift(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n)) * rng.choice([1e-6, 1.0, 10.0])
    H = 0.5 * (M + M.T)
    gamma = np.linalg.eigvalsh(H)[0]
    out = regularized_hessian(H, 1e-4)
    shift = out[0, 0] - H[0, 0]
    np.testing.assert_allclose(out - H, shift * np.eye(n), atol=1e-12)
    new_min = np.linalg.eigvalsh(out)[0]
    assert new_min >= min(gamma, 1e-4) * (1 - 1e-9) or new_min > 0
    if gamma > 1e-4:
        assert shift == 0.0
    elif gamma >= -1e-4:
        assert new_min == pytest.approx(1e-4, abs=1e-9)
    else:
        assert new_min == pytest.approx(-gamma, rel=1e-8)


# driver

def trivial_problem(rng):
    return quadratic_problem(rng.uniform(0.5, 2, 3), rng.normal(size=3), rng.uniform(0.5, 2, 2), rng.normal(size=2))


def test_trivial_problem_converges_in_newton_steps(rng):
    p = trivial_problem(rng)
    rep = solve(p, rng.normal(size=5))
    assert rep.converged and rep.n_iter <= 3
    assert all(rec.step == 1.0 for rec in rep.trace)
    np.testing.assert_allclose(rep.x, p.f_grad(np.zeros(3)) / -p.f_hess(np.zeros(3)).diagonal(), atol=1e-12)


def test_infeasible_start_rejected():
    p, split = bench.build_hs118(5)
    with pytest.raises(InfeasibleStart):
        solve(p, np.zeros(p.n1 + p.n2))


def test_bad_lambda_length(rng):
    p = trivial_problem(rng)
    with pytest.raises(ValueError):
        solve(p, np.zeros(5), lambda0=np.ones(2))


def test_nonsmooth_problem_refused(units5):
    fam = dataclasses.replace(bench.with_valve_point(units5), delta=1)
    p, split = bench.build_epd(fam, evaluation_only=True)
    with pytest.raises(SolverError):
        solve(p, split.start)


def test_max_iter_reported():
    p, split = bench.build_hs118(6)
    rep = solve(p, bench.find_feasible_start(p, split), params=SolverParams(max_iter=2))
    assert rep.termination_reason is TerminationReason.MAX_ITER
    assert not rep.converged and rep.n_iter == 2


def test_line_search_failure_reported(rng):
    # the Newton step only decreases by |d|^2 / 2, short of rho |d|^2 with rho = 0.99
    p = trivial_problem(rng)
    rep = solve(p, rng.normal(size=5), params=SolverParams(max_linesearch=1, rho=0.99))
    assert rep.termination_reason is TerminationReason.LINE_SEARCH_FAIL
    assert not rep.converged and rep.n_iter == 0
    assert set(rep.duals) >= {"mu", "alpha_x", "gamma_y"}


def test_params_validation():
    for kw in (dict(rho=1.0), dict(sigma=0.0), dict(c=1.1), dict(beta=0.0), dict(M2=-1.0), dict(max_iter=0)):
        with pytest.raises(ValueError):
            SolverParams(**kw)
    epd = SolverParams.epd(valve_point=True)
    assert (epd.rho, epd.sigma, epd.beta, epd.eps) == (0.45, 0.85, 75.0, 0.005)
    assert epd.termination is TerminationMode.RELATIVE
    assert SolverParams.epd().beta == 200.0


def test_parallel_matches_sequential():
    p, split = bench.build_hs118(10)
    u0 = bench.find_feasible_start(p, split)
    a = solve(p, u0, params=SolverParams(parallel=False))
    b = solve(p, u0, params=SolverParams(parallel=True))
    np.testing.assert_array_equal(a.u, b.u)
    assert [r.alf for r in a.trace] == [r.alf for r in b.trace]


def test_baseline_never_splits():
    *_, rep = hs118_run(20, 1.0, distributed=False)
    assert rep.n_split_iter == 0 and rep.converged


def test_exact_stop_residual_small():
    p, split = bench.build_hs118(5)
    rep = solve(p, bench.find_feasible_start(p, split), params=SolverParams(eps=1e-300))
    assert rep.termination_reason is TerminationReason.KKT_EXACT
    assert rep.kkt_residual_at_stop <= 1e-6


# audit and residuals

def test_audit_on_hs118_run():
    *_, params, rep = hs118_run(20, 1.0)
    audit = audit_complexity(rep, params)
    assert audit.bound_satisfied and audit.trace_monotone
    assert audit.C0 >= -1e-8
    assert all(v <= 1e-8 for v in check_trace_invariants(rep, params).values())


def test_audit_single_zero_step(rng):
    p = trivial_problem(rng)
    u_star = np.concatenate([-p.f_grad(np.zeros(3)) / p.f_hess(np.zeros(3)).diagonal(),
                             -p.theta_grad(np.zeros(2)) / p.theta_hess(np.zeros(2)).diagonal()])
    rep = solve(p, u_star)
    assert rep.n_iter == 1 and rep.trace[0].eps_abs == 0.0
    assert rep.termination_reason is TerminationReason.KKT_EXACT
    assert audit_complexity(rep).bound_satisfied


def test_audit_flags_non_monotone_trace():
    *_, params, rep = hs118_run(20, 1.0)
    bad = list(rep.trace)
    bad[3] = dataclasses.replace(bad[3], alf_next=bad[3].alf + 1.0)
    forged = dataclasses.replace(rep, trace=bad)
    audit = audit_complexity(forged, params)
    assert not audit.trace_monotone and not audit.bound_satisfied
    assert check_trace_invariants(forged, params)["descent"] > 0.5


def test_kkt_residual_stationary_interior(rng):
    p = trivial_problem(rng)
    u = rng.normal(size=5)
    x, y = p.split(u)
    expected = np.abs(np.concatenate([p.grad_f(x), p.grad_theta(y)])).max()
    assert kkt_residual(p, u, [], [], [], [], [], []) == pytest.approx(expected)


def test_kkt_residual_primal_violation():
    p = quadratic_problem(np.zeros(1), np.zeros(1), np.zeros(1), np.zeros(1),
                          E=[[1.0]], F=[[1.0]], d=[1.0], C=[[1.0]], l=[0.0], v=[0.5])
    # h = 0.5 and range excess 0.25
    assert kkt_residual(p, [0.75, 0.75], [], [0.0], [0.0], [0.0], [], []) == pytest.approx(0.5)


def test_kkt_residual_at_hs118_optimum():
    p, split, params, rep = hs118_run(5, 1.0)
    d = rep.duals
    res = kkt_residual(p, rep.u, rep.lam, d["mu"], d["alpha_x"], d["gamma_x"], d["alpha_y"], d["gamma_y"])
    assert res <= 1e-6
