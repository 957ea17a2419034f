"""Finite-difference solver for ``-a*Lap(u) + c*u = f`` with Dirichlet data, plus 1-D
and radial closed-form oracles used to validate it."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy import integrate
from scipy.sparse.linalg import LinearOperator, cg, splu

from .grid import Grid, ScalarField


class SolverError(RuntimeError):
    def __init__(self, message: str, report: "SolveReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float  # CG: ||b - A x|| / ||b||; LU: normwise backward error
    tol: float
    converged: bool


def _second_difference(n: int, h: float) -> sp.csr_matrix:
    e = np.ones(n)
    return sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="csr") / h ** 2


def _as_node_array(grid: Grid, v) -> np.ndarray:
    if isinstance(v, ScalarField):
        v = v.values
    arr = np.asarray(v, dtype=float)
    return np.broadcast_to(arr, grid.shape)


class SparseSystem:
    """Assembled operator over the free nodes of a grid.

    Face nodes are always Dirichlet nodes; ``fixed`` marks extra interior nodes
    carrying prescribed values. Dirichlet values are eliminated into the
    right-hand side, so the free-node matrix is a principal submatrix of an
    SPD matrix and stays SPD.
    """

    def __init__(self, grid: Grid, a: float, c, fixed: np.ndarray | None = None):
        if not a > 0:
            raise ValueError("diffusion coefficient a must be positive")
        c = _as_node_array(grid, c)
        if np.any(c < 0):
            raise ValueError("reaction coefficient c must be nonnegative (operator would not be SPD)")
        self.grid, self.a = grid, float(a)
        self.c = c
        fixed_mask = np.array(grid.face_mask)
        if fixed is not None:
            fixed_mask |= np.asarray(fixed, dtype=bool)
        self.fixed = fixed_mask
        self.free = ~fixed_mask

        full = None
        for ax in range(grid.dim):
            factors = [_second_difference(k, h) if i == ax else sp.identity(k, format="csr")
                       for i, (k, h) in enumerate(zip(grid.n, grid.h))]
            term = factors[0]
            for fac in factors[1:]:
                term = sp.kron(term, fac, format="csr")
            full = term if full is None else full + term
        full = (-self.a * full + sp.diags(c.ravel())).tocsr()

        free_idx = np.flatnonzero(self.free.ravel())
        fixed_idx = np.flatnonzero(self.fixed.ravel())
        rows = full[free_idx]
        self.matrix = rows[:, free_idx].tocsr()
        self.coupling = rows[:, fixed_idx].tocsr()
        self._free_idx, self._fixed_idx = free_idx, fixed_idx
        self.diagonal = self.matrix.diagonal()
        self._lu = None

    def default_maxit(self) -> int:
        # 20*sqrt(nodes) alone starves 1-D problems, whose CG count scales with n
        return int(20 * max(math.sqrt(self.grid.size), max(self.grid.n)))

    def _factor(self):
        if self._lu is None:
            # diagonal pivots under a symmetric ordering keep every Schur complement an
            # M-matrix, so substitution with nonnegative data never subtracts
            self._lu = splu(self.matrix.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                            options=dict(SymmetricMode=True))
        return self._lu

    def solve(self, f, gD=0.0, tol: float = 1e-10, maxit: int | None = None,
              method: str = "cg") -> tuple[ScalarField, SolveReport]:
        """Solve for the free nodes by Jacobi-preconditioned CG or by sparse LU (``method="lu"``).

        The LU path ignores ``maxit``, reports zero iterations and measures the
        normwise backward error ``|b - Ax|_inf / (|A|_inf |x|_inf + |b|_inf)``
        against ``tol``.
        """
        if not (0 < tol <= 1e-2):
            raise ValueError("tol must lie in (0, 1e-2]")
        if method not in ("cg", "lu"):
            raise ValueError("method must be 'cg' or 'lu'")
        grid = self.grid
        f = _as_node_array(grid, f).ravel()
        g = _as_node_array(grid, gD).ravel()
        b = f[self._free_idx] - self.coupling @ g[self._fixed_idx]
        maxit = self.default_maxit() if maxit is None else int(maxit)

        u = np.array(g, dtype=float)
        bnorm = float(np.linalg.norm(b))
        if bnorm == 0.0:
            u[self._free_idx] = 0.0
            return ScalarField(grid, u.reshape(grid.shape)), SolveReport(0, 0.0, tol, True)

        if method == "lu":
            x = self._factor().solve(b)
            # normwise backward error: the relative residual of a direct solve scales with cond(A)
            anorm = float(abs(self.matrix).sum(axis=1).max())
            res = float(np.abs(b - self.matrix @ x).max()) / (anorm * float(np.abs(x).max()) + float(np.abs(b).max()))
            report = SolveReport(0, res, tol, res <= tol)
            if not report.converged:
                raise SolverError(f"LU residual {res:.3e} exceeds tolerance", report)
            u[self._free_idx] = x
            return ScalarField(grid, u.reshape(grid.shape)), report

        inv_d = 1.0 / self.diagonal
        precond = LinearOperator(self.matrix.shape, matvec=lambda r: inv_d * r, dtype=float)
        count = [0]

        def _tick(_):
            count[0] += 1

        x, info = cg(self.matrix, b, x0=np.zeros_like(b), rtol=tol, atol=0.0, maxiter=maxit, M=precond, callback=_tick)
        res = float(np.linalg.norm(b - self.matrix @ x)) / bnorm
        report = SolveReport(count[0], res, tol, info == 0)
        if info != 0:
            raise SolverError(f"CG did not converge in {maxit} iterations (relative residual {res:.3e})", report)
        u[self._free_idx] = x
        return ScalarField(grid, u.reshape(grid.shape)), report


def assemble_and_solve(grid: Grid, a: float, c, f, gD=0.0, tol: float = 1e-10,
                       maxit: int | None = None, fixed: np.ndarray | None = None, method: str = "cg"):
    """Solve ``-a*Lap(u) + c*u = f`` with ``u = gD`` on the box faces (and on ``fixed`` nodes).

    Returns ``(u, report)``; ``u`` carries the Dirichlet values on the fixed nodes.
    """
    return SparseSystem(grid, a, c, fixed).solve(f, gD, tol, maxit, method)


def max_principle_holds(u: ScalarField, f, gD) -> bool:
    """``0 < u <= max(sup f, sup gD)`` at every node."""
    grid = u.grid
    f = _as_node_array(grid, f)
    g = _as_node_array(grid, gD)
    bound = max(float(f.max()), float(g[grid.face_mask].max()))
    return bool(np.all(u.values > 0) and np.all(u.values <= bound))


# closed-form oracles ---------------------------------------------------------

def _particular_coeffs(coeffs: np.ndarray, a: float) -> np.ndarray:
    """Polynomial particular solution of ``-a u'' + u = p``: ``sum_k a^k p^(2k)``."""
    p = np.polynomial.Polynomial(coeffs)
    out = p.copy()
    term = p
    k = 1
    while term.degree() >= 2:
        term = term.deriv(2)
        out = out + (a ** k) * term
        k += 1
    return out


class OdeSolution1D:
    """Exact solution of ``-a u'' + u = f`` on ``[x_0, x_K]`` with polynomial pieces of ``f``.

    On each piece ``[x_k, x_{k+1}]``
    ``u = P_k(x) + A_k exp(-(x - x_k)/s) + B_k exp((x - x_{k+1})/s)``, ``s = sqrt(a)``;
    both exponentials are bounded by one on their piece, which keeps the
    matching system well conditioned for tiny ``a``.
    """

    def __init__(self, a: float, nodes: np.ndarray, polys, A: np.ndarray, B: np.ndarray):
        self.a, self.s = a, math.sqrt(a)
        self.nodes, self.polys, self.A, self.B = nodes, polys, A, B

    def _piece(self, x):
        return np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.polys) - 1)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self._piece(x)
        out = np.empty_like(x)
        for j, p in enumerate(self.polys):
            m = k == j
            if np.any(m):
                xm = x[m]
                out[m] = (p(xm) + self.A[j] * np.exp(-(xm - self.nodes[j]) / self.s)
                          + self.B[j] * np.exp((xm - self.nodes[j + 1]) / self.s))
        return out


def solve_ode_1d(a: float, breakpoints: Sequence[float], pieces: Sequence, gD: tuple[float, float]) -> OdeSolution1D:
    """Closed-form solution on ``[breakpoints[0], breakpoints[-1]]``.

    ``pieces[k]`` is the right-hand side on ``[breakpoints[k], breakpoints[k+1]]``,
    either a constant or polynomial coefficients (lowest degree first).
    ``u`` and ``u'`` are continuous across interior breakpoints.
    """
    if not a > 0:
        raise ValueError("a must be positive")
    nodes = np.asarray(breakpoints, dtype=float)
    K = len(nodes) - 1
    if K < 1 or len(pieces) != K or np.any(np.diff(nodes) <= 0):
        raise ValueError("need increasing breakpoints and one piece per interval")
    s = math.sqrt(a)
    polys = [_particular_coeffs(np.atleast_1d(np.asarray(p, dtype=float)), a) for p in pieces]
    L = np.diff(nodes)
    decay = np.exp(-L / s)

    M = np.zeros((2 * K, 2 * K))
    rhs = np.zeros(2 * K)
    # u(x_0) = g0
    M[0, 0], M[0, 1] = 1.0, decay[0]
    rhs[0] = gD[0] - polys[0](nodes[0])
    row = 1
    for k in range(K - 1):
        x = nodes[k + 1]
        pl, pr = polys[k], polys[k + 1]
        # value continuity: left piece at its right end, right piece at its left end
        M[row, 2 * k], M[row, 2 * k + 1] = decay[k], 1.0
        M[row, 2 * k + 2], M[row, 2 * k + 3] = -1.0, -decay[k + 1]
        rhs[row] = pr(x) - pl(x)
        row += 1
        M[row, 2 * k], M[row, 2 * k + 1] = -decay[k] / s, 1.0 / s
        M[row, 2 * k + 2], M[row, 2 * k + 3] = 1.0 / s, -decay[k + 1] / s
        rhs[row] = pr.deriv()(x) - pl.deriv()(x)
        row += 1
    M[row, 2 * K - 2], M[row, 2 * K - 1] = decay[-1], 1.0
    rhs[row] = gD[1] - polys[-1](nodes[-1])
    coef = np.linalg.solve(M, rhs)
    assert np.all(np.isfinite(coef)), "matching system is singular"
    return OdeSolution1D(a, nodes, polys, coef[0::2], coef[1::2])


def ball_comparison_w(a: float, M: float, eps: float, N: int, r) -> np.ndarray:
    """Radial solution of ``-a Lap w + w = 0`` in ``B_eps`` with ``w = M`` on the sphere.

    ``w(r) = M * I(r) / I(eps)`` with ``I(rho) = int_0^pi cosh(rho cos t / sqrt(a)) sin^(N-2) t dt``
    for ``N >= 2`` and ``M cosh(r/sqrt(a)) / cosh(eps/sqrt(a))`` for ``N = 1``.
    Integrals are scaled by ``exp(-eps/sqrt(a))`` so nothing overflows.
    """
    s = math.sqrt(a)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(r > eps * (1 + 1e-12)):
        raise ValueError("need 0 <= r <= eps")
    if N == 1:
        return M * np.exp((r - eps) / s) * (1 + np.exp(-2 * r / s)) / (1 + np.exp(-2 * eps / s))

    def scaled_integral(rho: float) -> float:
        def integrand(t):
            c = rho * math.cos(t)
            return 0.5 * (math.exp((c - eps) / s) + math.exp((-c - eps) / s)) * math.sin(t) ** (N - 2)

        # symmetric about pi/2; the mass concentrates near t = 0 as a -> 0
        width = min(math.pi / 2, 10 * math.sqrt(s / max(rho, s)))
        pts = [p for p in (width / 10, width) if p < math.pi / 2]
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, _ = integrate.quad(integrand, 0.0, math.pi / 2, points=pts or None,
                                        epsabs=0.0, epsrel=1e-13, limit=400)
            except integrate.IntegrationWarning as exc:
                raise ArithmeticError(f"radial quadrature did not converge: {exc}") from exc
        return 2 * val

    denom = scaled_integral(eps)
    flat = np.array([scaled_integral(float(v)) for v in r.ravel()])
    return M * flat.reshape(r.shape) / denom
