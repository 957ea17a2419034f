import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import ive

from shape_pde.elliptic import (SolverError, SparseSystem, assemble_and_solve, ball_comparison_w,
                                max_principle_holds, solve_ode_1d)
from shape_pde.grid import Grid, interpolate


def _loop_operator(grid, a, c):
    """Five-point operator assembled node by node, free nodes only, row-major order."""
    nx, ny = grid.n
    hx, hy = grid.h
    free = [(i, j) for i in range(1, nx - 1) for j in range(1, ny - 1)]
    index = {p: k for k, p in enumerate(free)}
    A = np.zeros((len(free), len(free)))
    for (i, j), k in index.items():
        A[k, k] = 2 * a / hx ** 2 + 2 * a / hy ** 2 + c
        for (di, dj), hh in (((1, 0), hx), ((-1, 0), hx), ((0, 1), hy), ((0, -1), hy)):
            q = (i + di, j + dj)
            if q in index:
                A[k, index[q]] = -a / hh ** 2
    return A


def test_assembly_matches_loop_stencil_on_non_square_grid():
    grid = Grid((0.0, -1.0), (1.0, 2.0), (6, 9))
    system = SparseSystem(grid, 0.3, 2.0)
    np.testing.assert_allclose(system.matrix.toarray(), _loop_operator(grid, 0.3, 2.0), rtol=1e-13, atol=1e-10)


def test_operator_is_symmetric_positive_definite():
    grid = Grid.cube(0, 1, 12, 2)
    A = SparseSystem(grid, 0.01, 1.0).matrix
    assert abs(A - A.T).max() == 0
    assert np.linalg.eigvalsh(A.toarray()).min() > 0


@pytest.mark.parametrize("method", ["cg", "lu"])
@pytest.mark.parametrize("a", [1.0, 1e-2, 1e-4])
def test_constant_solution(method, a):
    grid = Grid.cube(-1, 1, 41, 2)
    u, rep = assemble_and_solve(grid, a, 1.0, 1.0, 1.0, method=method)
    np.testing.assert_allclose(u.values, 1.0, atol=1e-9)
    assert rep.converged


def test_ode_oracle_agreement_1d():
    a = 0.01
    grid = Grid((-2.0,), (2.0,), (2049,))
    x = grid.axes()[0]
    f = np.where(np.abs(x) > 1, 1.0, 0.0)
    f[np.isclose(np.abs(x), 1.0)] = 0.5  # node on the jump carries the mean
    u, _ = assemble_and_solve(grid, a, 1.0, f, 1.0, tol=1e-12)
    ref = solve_ode_1d(a, [-2, -1, 1, 2], [1.0, 0.0, 1.0], (1.0, 1.0))(x)
    assert np.max(np.abs(u.values - ref)) <= 1e-4


def test_bound_check():
    grid = Grid.cube(-1, 1, 33, 2)
    x = grid.coords
    f = np.where(np.hypot(x[..., 0], x[..., 1]) > 0.5, 2.0, 0.0)
    u, _ = assemble_and_solve(grid, 0.05, 1.0, f, 1.0, method="lu")
    assert u.values.max() <= 2.0
    assert max_principle_holds(u, f, 1.0)


# closed-form 1-D solution -------------------------------------------------------------

def test_ode_homogeneous_is_cosh_ratio():
    a = 0.01
    sol = solve_ode_1d(a, [-1.0, 1.0], [0.0], (1.0, 1.0))
    x = np.linspace(-1, 1, 201)
    np.testing.assert_allclose(sol(x), np.cosh(x / 0.1) / np.cosh(10.0), rtol=1e-12)
    assert float(sol(0.0)) == pytest.approx(9.0799859e-5, rel=1e-7)
    # -sqrt(a) log u(0) = 0.1 log cosh(10)
    assert -0.1 * math.log(float(sol(0.0))) == pytest.approx(0.93068, abs=1e-5)


def test_varadhan_transform_tends_to_distance():
    vals = [-math.sqrt(a) * math.log(float(solve_ode_1d(a, [-1.0, 1.0], [0.0], (1.0, 1.0))(0.0)))
            for a in (1e-1, 1e-2, 1e-3, 1e-4)]
    errs = [abs(v - 1.0) for v in vals]
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    assert errs[-1] < 0.01


def test_ode_polynomial_pieces_satisfy_equation():
    a = 0.05
    sol = solve_ode_1d(a, [-2.0, -1.0, 1.0, 2.0], [(-1.0, -1.0), 0.0, (-1.0, 1.0)], (1.0, 1.0))
    x = np.linspace(1.1, 1.9, 50)
    h = 1e-4
    upp = (sol(x + h) - 2 * sol(x) + sol(x - h)) / h ** 2
    np.testing.assert_allclose(-a * upp + sol(x), x - 1.0, atol=1e-5)
    # C^1 across the breakpoints
    for b in (-1.0, 1.0):
        assert float(sol(b - 1e-9)) == pytest.approx(float(sol(b + 1e-9)), abs=1e-8)


def test_ode_tiny_a_is_finite():
    sol = solve_ode_1d(1e-6, [-2.0, -1.0, 1.0, 2.0], [1.0, 0.0, 1.0], (1.0, 1.0))
    u = sol(np.linspace(-2, 2, 101))
    assert np.all(np.isfinite(u)) and np.all(u >= 0) and np.all(u <= 1)


def test_ode_bad_input():
    with pytest.raises(ValueError):
        solve_ode_1d(0.0, [0.0, 1.0], [0.0], (1.0, 1.0))
    with pytest.raises(ValueError):
        solve_ode_1d(0.1, [0.0, 1.0, 0.5], [0.0, 0.0], (1.0, 1.0))


# ball comparison function ------------------------------------------------------------

def test_ball_comparison_examples():
    assert float(ball_comparison_w(0.01, 2.0, 1.0, 2, 1.0)) == pytest.approx(2.0)
    assert float(ball_comparison_w(0.01, 1.0, 1.0, 1, 0.0)) == pytest.approx(1 / math.cosh(10.0))


@pytest.mark.parametrize("r", [0.0, 0.25, 0.5, 0.9])
def test_ball_comparison_2d_matches_bessel(r):
    s = 0.1
    expect = ive(0, r / s) / ive(0, 1 / s) * math.exp((r - 1) / s)
    assert float(ball_comparison_w(0.01, 1.0, 1.0, 2, r)) == pytest.approx(expect, rel=1e-8)


@pytest.mark.parametrize("r", [0.1, 0.5, 0.9])
def test_ball_comparison_3d_matches_sinh_form(r):
    s = math.sqrt(0.02)
    expect = 1.0 * math.sinh(r / s) / r * 1.0 / math.sinh(1.0 / s)
    assert float(ball_comparison_w(0.02, 1.0, 1.0, 3, r)) == pytest.approx(expect, rel=1e-8)


@given(st.floats(1e-3, 1.0), st.integers(1, 3))
def test_ball_comparison_is_monotone_in_r(a, N):
    r = np.linspace(0, 1, 21)
    w = ball_comparison_w(a, 1.0, 1.0, N, r)
    assert np.all(np.diff(w) >= 0) and np.all(w <= 1.0) and np.all(w > 0)


def test_grid_solve_matches_ball_comparison_along_radius():
    """Box Dirichlet data from the exact radial solution; the grid solve must reproduce it."""
    a = 0.01
    grid = Grid.cube(-1, 1, 256, 2)
    x = grid.coords
    r = np.hypot(x[..., 0], x[..., 1])
    s = math.sqrt(a)
    exact = ive(0, r / s) * np.exp(r / s - 1.5 / s) / ive(0, 1.5 / s)  # M = 1 on the circle r = 1.5
    u, _ = assemble_and_solve(grid, a, 1.0, 0.0, exact, tol=1e-12, method="lu")
    rr = np.linspace(0, 0.95, 20)
    along = np.stack([rr, np.zeros_like(rr)], axis=-1)
    w = ball_comparison_w(a, 1.0, 1.5, 2, rr)
    rel = np.abs(interpolate(u, along) - w) / w
    assert rel.max() <= 5e-3


# properties -----------------------------------------------------------------------------

@given(st.integers(0, 10_000))
def test_comparison_principle_random_pairs(seed):
    rng = np.random.default_rng(seed)
    grid = Grid.cube(0, 1, 17, 2)
    f1 = rng.uniform(0, 1, grid.shape)
    f2 = f1 + rng.uniform(0, 1, grid.shape)
    g1 = rng.uniform(0, 1, grid.shape)
    g2 = g1 + rng.uniform(0, 1, grid.shape)
    system = SparseSystem(grid, 10 ** rng.uniform(-3, 0), 1.0)
    u1, _ = system.solve(f1, g1, method="lu")
    u2, _ = system.solve(f2, g2, method="lu")
    assert np.all(u1.values <= u2.values)


@given(st.integers(0, 10_000))
def test_lu_and_cg_agree(seed):
    rng = np.random.default_rng(seed)
    grid = Grid((0, 0), (1, 1.5), (15, 21))
    c = rng.uniform(0, 2, grid.shape)
    f = rng.normal(size=grid.shape)
    system = SparseSystem(grid, 0.05, c)
    u1, _ = system.solve(f, 0.3, tol=1e-12, method="cg")
    u2, _ = system.solve(f, 0.3, tol=1e-12, method="lu")
    np.testing.assert_allclose(u1.values, u2.values, atol=1e-9)


def test_second_order_convergence():
    def solve(n):
        grid = Grid.cube(0, 1, n, 2)
        x, y = grid.coords[..., 0], grid.coords[..., 1]
        ue = np.sin(np.pi * x) * np.cos(np.pi * y) + x * y
        a = 0.1
        f = a * 2 * np.pi ** 2 * np.sin(np.pi * x) * np.cos(np.pi * y) + ue
        u, _ = assemble_and_solve(grid, a, 1.0, f, ue, tol=1e-12, method="lu")
        return np.abs(u.values - ue).max()

    errs = [solve(n) for n in (17, 33, 65)]
    slopes = [math.log2(e1 / e2) for e1, e2 in zip(errs, errs[1:])]
    assert min(slopes) >= 1.9


def test_fixed_nodes_keep_their_values():
    grid = Grid.cube(-1, 1, 33, 2)
    x = grid.coords
    fixed = np.hypot(x[..., 0], x[..., 1]) < 0.3
    g = np.where(fixed, 0.0, 1.0)
    u, _ = assemble_and_solve(grid, 0.05, 1.0, 1.0, g, fixed=fixed, method="lu")
    assert np.all(u.values[fixed] == 0.0)
    assert np.all(u.values[~fixed] > 0)


def test_lu_direct_solve_keeps_tiny_values_positive():
    """Exponentially small interior values stay positive with nonnegative data."""
    grid = Grid.cube(-2, 2, 201, 2)
    x = grid.coords
    f = np.where(np.hypot(x[..., 0], x[..., 1]) > 1, 1.0, 0.0)
    u, _ = assemble_and_solve(grid, 4e-3, 1.0, f, 1.0, tol=1e-12, method="lu")
    assert u.values.min() > 0
    assert u.values.min() < 1e-6


# errors ----------------------------------------------------------------------------

def test_solver_errors():
    grid = Grid.cube(0, 1, 33, 2)
    with pytest.raises(SolverError) as exc:
        assemble_and_solve(grid, 1.0, 0.0, 1.0, 0.0, maxit=2)
    assert exc.value.report is not None and not exc.value.report.converged
    with pytest.raises(ValueError):
        SparseSystem(grid, 0.0, 1.0)
    with pytest.raises(ValueError):
        SparseSystem(grid, 1.0, -1.0)
    with pytest.raises(ValueError):
        SparseSystem(grid, 1.0, 1.0).solve(1.0, tol=0.5)
    with pytest.raises(ValueError):
        SparseSystem(grid, 1.0, 1.0).solve(1.0, method="gmres")


def test_zero_data_gives_zero():
    grid = Grid.cube(0, 1, 9, 2)
    u, rep = assemble_and_solve(grid, 1.0, 1.0, 0.0, 0.0)
    assert np.all(u.values == 0) and rep.iterations == 0
