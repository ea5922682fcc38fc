import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import quadratic_problem
from pfdsqo import bench
from pfdsqo.alf import (
    AlfContext,
    alf_gradient_u,
    alf_value,
    build_coupled_qp,
    build_split_x_qp,
    build_split_y_qp,
    linearize,
    make_hessian_blocks,
    sqo_model_value,
)
from pfdsqo.problem import eval_objective
from pfdsqo.qp import kkt_violation, solve_qp
from pfdsqo.verify import _fd_gradient


def coupled_instance(rng, n1=3, n2=2, m1=2, m2=2):
    """Random quadratic instance with every constraint class present."""
    return quadratic_problem(
        rng.uniform(0.5, 2, n1),
        rng.normal(size=n1),
        rng.uniform(0.5, 2, n2),
        rng.normal(size=n2),
        A=rng.normal(size=(m1, n1)),
        B=rng.normal(size=(m1, n2)),
        b=rng.normal(size=m1),
        E=rng.normal(size=(m2, n1)),
        F=rng.normal(size=(m2, n2)),
        d=np.full(m2, 3.0),
        C=np.eye(n1),
        l=-2 * np.ones(n1),
        v=2 * np.ones(n1),
        D=np.eye(n2),
        s=-2 * np.ones(n2),
        r=2 * np.ones(n2),
    )


def state_at(p, x, y, beta=1.0, lam=None):
    lam = np.zeros(p.m1) if lam is None else lam
    ctx = AlfContext(p, beta, lam)
    hess = make_hessian_blocks(p, p.hess_f(x), p.hess_theta(y), beta)
    return linearize(ctx, x, y, hess)


def test_no_equalities_reduces_to_objective(rng):
    p, split = bench.build_hs118(6)
    u = bench.find_feasible_start(p, split)
    ctx = AlfContext(p, 3.0, np.zeros(0))
    assert alf_value(ctx, u) == eval_objective(p, u)


def test_pure_penalty_value():
    p = quadratic_problem(np.zeros(2), np.zeros(2), np.zeros(1), np.zeros(1),
                          A=np.eye(2), B=np.zeros((2, 1)), b=np.zeros(2))
    ctx = AlfContext(p, 2.0, np.zeros(2))
    assert alf_value(ctx, [1.0, 1.0, 0.0]) == 2.0


def test_value_term_by_term(rng):
    p = coupled_instance(rng)
    lam = rng.normal(size=2)
    ctx = AlfContext(p, 1.7, lam)
    u = rng.normal(size=5)
    x, y = u[:3], u[3:]
    r = [sum(p.A[i, j] * x[j] for j in range(3)) + sum(p.B[i, j] * y[j] for j in range(2)) - p.b[i] for i in range(2)]
    expected = p.f(x) + p.theta(y)
    for i in range(2):
        expected += -lam[i] * r[i] + 0.5 * 1.7 * r[i] ** 2
    assert alf_value(ctx, u) == pytest.approx(expected, rel=1e-12)


def test_beta_must_be_positive(rng):
    p = coupled_instance(rng)
    with pytest.raises(ValueError):
        AlfContext(p, 0.0, np.zeros(2))
    with pytest.raises(ValueError):
        AlfContext(p, 1.0, np.zeros(3))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    p = coupled_instance(rng)
    ctx = AlfContext(p, float(rng.uniform(0.1, 10)), rng.normal(size=2))
    u = rng.normal(size=5)
    fd = _fd_gradient(lambda z: alf_value(ctx, z), u)
    g = alf_gradient_u(ctx, u)
    assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))


def test_gradient_without_coupling(rng):
    p, split = bench.build_hs118(6)
    u = bench.find_feasible_start(p, split)
    x, y = p.split(u)
    g = alf_gradient_u(AlfContext(p, 5.0, np.zeros(0)), u)
    np.testing.assert_array_equal(g, np.concatenate([p.grad_f(x), p.grad_theta(y)]))


def test_gradient_vanishes_at_stationary_point(rng):
    hx, ax = rng.uniform(1, 2, 2), rng.normal(size=2)
    hy, ay = rng.uniform(1, 2, 1), rng.normal(size=1)
    p = quadratic_problem(hx, ax, hy, ay, A=np.ones((1, 2)), B=np.ones((1, 1)), b=[0.0])
    ctx = AlfContext(p, 1.0, np.zeros(1))
    # the ALF is a strictly convex quadratic: solve its normal equations
    H = np.diag(np.concatenate([hx, hy])) + np.ones((3, 3))
    u_star = np.linalg.solve(H, np.concatenate([hx * ax, hy * ay]))
    assert np.abs(alf_gradient_u(ctx, u_star)).max() <= 1e-10


def test_c_zero_rhs_is_unperturbed(rng):
    p = coupled_instance(rng)
    st_ = state_at(p, 0.1 * rng.normal(size=3), 0.1 * rng.normal(size=2))
    qx, qy = build_split_x_qp(st_, 0.0), build_split_y_qp(st_, 0.0)
    np.testing.assert_array_equal(qx.h_ineq, p.d - p.F @ st_.y)
    np.testing.assert_array_equal(qy.h_ineq, p.d - p.E @ st_.x)


def test_active_inequalities_make_c_irrelevant(rng):
    p = coupled_instance(rng)
    x = 0.1 * rng.normal(size=3)
    y = 0.1 * rng.normal(size=2)
    # move d so every row is active at (x, y)
    p2 = quadratic_problem(np.ones(3), np.zeros(3), np.ones(2), np.zeros(2),
                           E=p.E, F=p.F, d=p.E @ x + p.F @ y)
    st_ = state_at(p2, x, y)
    for build in (build_split_x_qp, build_split_y_qp):
        np.testing.assert_allclose(build(st_, 0.0).h_ineq, build(st_, 1.0).h_ineq, atol=1e-15)


def test_c_out_of_range(rng):
    st_ = state_at(coupled_instance(rng), np.zeros(3), np.zeros(2))
    with pytest.raises(ValueError):
        build_split_x_qp(st_, 1.5)
    with pytest.raises(ValueError):
        build_split_y_qp(st_, -0.1)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_current_point_feasible_for_split_qps(seed, c):
    rng = np.random.default_rng(seed)
    p = coupled_instance(rng)
    x, y = rng.uniform(-0.3, 0.3, 3), rng.uniform(-0.3, 0.3, 2)
    if np.any(p.ineq_residual(x, y) > 0):
        return
    st_ = state_at(p, x, y)
    qx, qy = build_split_x_qp(st_, c), build_split_y_qp(st_, c)
    assert np.all(qx.G_ineq @ x <= qx.h_ineq + 1e-12)
    assert np.all(qy.G_ineq @ y <= qy.h_ineq + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_qp_objective_is_model_difference(seed):
    rng = np.random.default_rng(seed)
    p = coupled_instance(rng)
    st_ = state_at(p, rng.normal(size=3), rng.normal(size=2), beta=2.5, lam=rng.normal(size=2))
    qu, qx, qy = build_coupled_qp(st_), build_split_x_qp(st_, 0.5), build_split_y_qp(st_, 0.5)
    base = sqo_model_value(st_, st_.u)
    for _ in range(10):
        z = rng.normal(size=5)
        zx = np.concatenate([z[:3], st_.y])
        zy = np.concatenate([st_.x, z[3:]])
        for qp, point, arg in ((qu, z, z), (qx, zx, z[:3]), (qy, zy, z[3:])):
            cur = st_.u if qp is qu else (st_.x if qp is qx else st_.y)
            lhs = qp.objective(arg) - qp.objective(cur)
            rhs = sqo_model_value(st_, point) - base
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_coupled_separates_without_coupling(rng):
    n1, n2 = 3, 2
    E = np.vstack([rng.normal(size=(2, n1)), np.zeros((1, n1))])
    F = np.vstack([np.zeros((2, n2)), rng.normal(size=(1, n2))])
    p = quadratic_problem(rng.uniform(0.5, 2, n1), 3 * rng.normal(size=n1), rng.uniform(0.5, 2, n2),
                          3 * rng.normal(size=n2), E=E, F=F, d=np.ones(3),
                          C=np.eye(n1), l=-np.ones(n1), v=np.ones(n1))
    st_ = state_at(p, np.zeros(n1), np.zeros(n2))
    zu = solve_qp(build_coupled_qp(st_)).z
    zx = solve_qp(build_split_x_qp(st_, 0.0)).z
    zy = solve_qp(build_split_y_qp(st_, 0.0)).z
    np.testing.assert_allclose(zu, np.concatenate([zx, zy]), atol=1e-8)


def test_coupled_zero_gradient_interior(rng):
    p = coupled_instance(rng)
    # the unconstrained minimiser of f + theta, with nothing else active
    hx = p.hess_f(np.zeros(3)).diagonal()
    x = -p.grad_f(np.zeros(3)) / hx
    y = -p.grad_theta(np.zeros(2)) / p.hess_theta(np.zeros(2)).diagonal()
    p0 = quadratic_problem(hx, x, p.hess_theta(y).diagonal(), y, E=p.E, F=p.F, d=p.E @ x + p.F @ y + 1.0)
    st_ = state_at(p0, x, y)
    sol = solve_qp(build_coupled_qp(st_))
    np.testing.assert_allclose(sol.z, st_.u, atol=1e-12)


def test_coupled_solution_satisfies_kkt(rng):
    p = coupled_instance(rng)
    st_ = state_at(p, np.zeros(3), np.zeros(2), beta=4.0, lam=rng.normal(size=2))
    qp = build_coupled_qp(st_)
    sol = solve_qp(qp)
    assert max(kkt_violation(qp, sol).values()) <= 1e-8


def test_positive_roundoff_residuals_are_clamped(rng):
    p = quadratic_problem(np.ones(1), np.zeros(1), np.ones(1), np.zeros(1), E=[[1.0]], F=[[0.0]], d=[1.0 - 1e-10])
    st_ = state_at(p, np.ones(1), np.zeros(1))
    assert st_.h[0] > 0
    assert st_.clamped_h()[0] == 0.0
