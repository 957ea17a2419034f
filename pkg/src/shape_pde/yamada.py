"""Normal vector fields from the vector elliptic equations of Yamada type.

Per component ``i`` the strong form solved on the grid is

    -a Lap(s_i) + c s_i = -d_i chi_A,   s_i = 0 on the box faces,

with ``c = 1 - chi_A`` (``variant="eq1"``) or ``c = 1`` (``variant="eq2"``).
The surface term is carried by the central difference of the supersampled
indicator, a smeared surface delta about two cells wide.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .elliptic import SolveReport, SparseSystem
from .grid import Grid, ScalarField, VectorField, central_gradient, discrete_norms, interpolate, rasterize_indicator
from .shapes import Shape, ShapeError

VARIANTS = ("eq1", "eq2")


@dataclass(frozen=True, eq=False)
class YamadaSolution:
    variant: str
    a: float
    s: VectorField
    shape: Shape
    grid: Grid
    chi: ScalarField
    reports: tuple[SolveReport, ...] = ()


def check_margin(grid: Grid, shape: Shape, cells: float = 4.0) -> float:
    """Distance from the shape's bounding box to the grid faces; raises below ``cells * h``."""
    b = shape.bounds()
    if b is None:
        return math.inf
    lo, hi = b
    margin = float(min(np.min(lo - np.asarray(grid.lo)), np.min(np.asarray(grid.hi) - hi)))
    if margin < cells * float(grid.h.max()):
        raise ShapeError(f"shape closure must stay {cells:g} cells inside the grid box (margin {margin:.4g})")
    return margin


def solve_normal_field(grid: Grid, shape: Shape, a: float, variant: str = "eq1", supersample: int = 4,
                       tol: float = 1e-10, maxit: int | None = None, threads: int = 1) -> YamadaSolution:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    check_margin(grid, shape)
    chi = rasterize_indicator(grid, shape, supersample)
    c = 1.0 - chi.values if variant == "eq1" else 1.0
    system = SparseSystem(grid, a, c)
    rhs = -central_gradient(chi).values

    def one(i):
        return system.solve(rhs[..., i], 0.0, tol, maxit)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(grid.dim)))
    else:
        results = [one(i) for i in range(grid.dim)]
    s = np.stack([u.values for u, _ in results], axis=-1)
    return YamadaSolution(variant, float(a), VectorField(grid, s), shape, grid, chi, tuple(r for _, r in results))


# test functions -------------------------------------------------------------

def _smoothstep(s: np.ndarray) -> np.ndarray:
    """C-infinity transition from 0 (s <= 0) to 1 (s >= 1)."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        e0 = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        e1 = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1 - s, 1.0)), 0.0)
    return e0 / (e0 + e1)


def face_bump(grid: Grid, width: float) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth cutoff: 0 on the box faces, 1 farther than ``width`` from every face."""
    lo, hi = np.asarray(grid.lo), np.asarray(grid.hi)

    def bump(x):
        x = np.asarray(x, dtype=float)
        d = np.minimum(x - lo, hi - x)
        return np.prod(_smoothstep(d / width), axis=-1)

    return bump


def pairing_panel(grid: Grid, shape: Shape) -> dict[str, Callable[[np.ndarray], np.ndarray]]:
    """Constant, coordinate and oscillatory vector fields times a face bump equal to 1 near the shape."""
    margin = check_margin(grid, shape)
    width = 0.5 * margin if math.isfinite(margin) else 0.25 * float(np.min(np.asarray(grid.hi) - np.asarray(grid.lo)))
    bump = face_bump(grid, width)
    dim = grid.dim
    span = np.asarray(grid.hi) - np.asarray(grid.lo)
    panel = {}
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        panel[f"const_{i}"] = lambda x, e=e: bump(x)[..., None] * e
    panel["coord"] = lambda x: bump(x)[..., None] * np.asarray(x, dtype=float)

    def oscillatory(x):
        x = np.asarray(x, dtype=float)
        k = 2 * np.pi / span
        # component i varies along axis i, so the field has nonzero divergence and flux
        comps = [np.sin(k[i] * x[..., i] + 0.3 * (i + 1)) for i in range(dim)]
        return bump(x)[..., None] * np.stack(comps, axis=-1)

    panel["oscillatory"] = oscillatory
    return panel


@dataclass(frozen=True)
class Pairing:
    lhs: float
    rhs: float

    @property
    def gap(self) -> float:
        return abs(self.lhs - self.rhs)


def weak_vs_surface_pairing(sol: YamadaSolution, phi: Callable[[np.ndarray], np.ndarray],
                            m: int = 4096) -> Pairing:
    """Volume pairing of ``s`` with ``phi`` against the boundary flux of ``phi``.

    The volume integral runs over the exterior (weights ``1 - chi``) for ``eq1``
    and over the whole box for ``eq2``; ``phi`` is multiplied by a face bump so
    it vanishes near the box faces.
    """
    grid = sol.grid
    bump = face_bump(grid, 2.0 * float(grid.h.max()))
    x = grid.coords
    phi_nodes = phi(x) * bump(x)[..., None]
    w = np.array(grid.quadrature_weights)
    if sol.variant == "eq1":
        w = w * (1.0 - sol.chi.values)
    lhs = float(np.sum(w * np.sum(sol.s.values * phi_nodes, axis=-1)))
    samples = sol.shape.sample_boundary(m)
    phi_b = phi(samples.points) * bump(samples.points)[..., None]
    rhs = float(np.sum(samples.weights * np.sum(samples.normals * phi_b, axis=-1)))
    return Pairing(lhs, rhs)


def h1_energy(sol: YamadaSolution) -> float:
    """``a * sqrt(|s|_H1^2 + ||s||_L2^2)`` with the discrete norms."""
    l2, h1 = discrete_norms(sol.s)
    return sol.a * math.sqrt(h1 ** 2 + l2 ** 2)


@dataclass(frozen=True)
class TraceDirections:
    points: np.ndarray
    directions: np.ndarray  # unit vectors; zero rows where degenerate
    degenerate: np.ndarray  # bool per point

    def __iter__(self):
        return iter(zip(self.points, self.directions))


def boundary_trace_directions(sol: YamadaSolution, m: int = 64, floor: float = 1e-14,
                              points: np.ndarray | None = None) -> TraceDirections:
    """Normalized interpolated ``s`` at ``m`` boundary samples (or at given ``points``)."""
    pts = sol.shape.sample_boundary(m).points if points is None else np.atleast_2d(points)
    v = interpolate(sol.s, pts)
    norm = np.linalg.norm(v, axis=-1)
    bad = norm <= floor
    dirs = np.where(bad[:, None], 0.0, v / np.where(bad, 1.0, norm)[:, None])
    return TraceDirections(pts, dirs, bad)
