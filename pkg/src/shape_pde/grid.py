"""Uniform node-centred Cartesian grids, fields on them, and stencil operators."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .shapes import Shape


@dataclass(frozen=True)
class Grid:
    """Nodes ``lo + i*h`` for ``i = 0..n-1`` on every axis, box faces included."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        if not (len(self.lo) == len(self.hi) == len(self.n)):
            raise ValueError("lo, hi and n must have the same length")
        if any(k < 3 for k in self.n):
            raise ValueError("need at least 3 nodes per axis")
        if any(b <= a for a, b in zip(self.lo, self.hi)):
            raise ValueError("grid box needs lo < hi")

    @classmethod
    def cube(cls, lo: float, hi: float, n: int, dim: int) -> "Grid":
        return cls((lo,) * dim, (hi,) * dim, (n,) * dim)

    @classmethod
    def with_spacing(cls, lo, hi, hmax: float) -> "Grid":
        """Finest box-conforming grid whose spacing does not exceed ``hmax`` on any axis."""
        lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
        n = np.ceil((hi - lo) / hmax - 1e-9).astype(int) + 1
        return cls(tuple(lo), tuple(hi), tuple(np.maximum(n, 3)))

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @cached_property
    def h(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / (np.asarray(self.n) - 1)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, k) for a, b, k in zip(self.lo, self.hi, self.n)]

    @cached_property
    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(*n, dim)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        out = np.stack(mesh, axis=-1)
        out.flags.writeable = False
        return out

    @cached_property
    def face_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            idx[ax] = 0
            mask[tuple(idx)] = True
            idx[ax] = -1
            mask[tuple(idx)] = True
        mask.flags.writeable = False
        return mask

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Tensor trapezoid weights: constants integrate exactly over the box."""
        w = np.ones(self.n)
        for ax, h in enumerate(self.h):
            w1 = np.full(self.n[ax], h)
            w1[0] = w1[-1] = h / 2
            shape = [1] * self.dim
            shape[ax] = -1
            w = w * w1.reshape(shape)
        w.flags.writeable = False
        return w

    def contains_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((x >= lo) & (x <= hi), axis=-1)


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    ncomp = 1


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: Grid
    values: np.ndarray  # (*n, dim)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (*self.grid.shape, self.grid.dim):
            raise ValueError(f"vector field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def ncomp(self) -> int:
        return self.grid.dim

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., i])


def rasterize_indicator(grid: Grid, shape: Shape, supersample: int = 4) -> ScalarField:
    """Fraction of the ``s**N`` sub-cell points around each node that lie in ``shape``.

    Sub-points sit at the centres of an ``s``-fold subdivision of the cell
    ``[x - h/2, x + h/2]``; ``s = 1`` samples the node itself.
    """
    if shape.dim != grid.dim:
        raise ValueError("shape and grid dimensions differ")
    if supersample < 1:
        raise ValueError("supersample must be >= 1")
    s = int(supersample)
    frac = ((np.arange(s) + 0.5) / s - 0.5)
    acc = np.zeros(grid.shape)
    x = grid.coords
    for offs in itertools.product(frac, repeat=grid.dim):
        acc += shape.contains(x + np.asarray(offs) * grid.h)
    return ScalarField(grid, acc / s ** grid.dim)


def central_gradient(field: ScalarField) -> VectorField:
    """Second-order central differences inside, first-order one-sided on the box faces."""
    g = np.gradient(field.values, *field.grid.h, edge_order=1)
    if field.grid.dim == 1:
        g = [g]
    return VectorField(field.grid, np.stack(g, axis=-1))


def discrete_norms(field: ScalarField | VectorField) -> tuple[float, float]:
    """Trapezoid-weighted ``(L2, H1 seminorm)``; vector fields sum over components."""
    grid = field.grid
    w = grid.quadrature_weights
    comps = [field] if isinstance(field, ScalarField) else [field.component(i) for i in range(field.ncomp)]
    l2 = h1 = 0.0
    for c in comps:
        l2 += float(np.sum(w * c.values ** 2))
        h1 += float(np.sum(w[..., None] * central_gradient(c).values ** 2))
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def interpolate(field: ScalarField | VectorField, x) -> np.ndarray:
    """Multilinear interpolation at one point ``(dim,)`` or a batch ``(m, dim)``."""
    grid = field.grid
    x = np.asarray(x, dtype=float)
    if not np.all(grid.contains_point(x)):
        raise ValueError("interpolation point outside the grid box")
    interp = RegularGridInterpolator(grid.axes(), field.values, method="linear", bounds_error=False)
    single = x.ndim == 1
    out = interp(np.atleast_2d(x))
    return out[0] if single else out


def write_field_csv(field: ScalarField | VectorField, path: str | Path) -> None:
    """Dump nodes in row-major order: ``i,j[,k],x,y[,z]`` then ``value`` or ``vx,vy[,vz]``."""
    grid = field.grid
    idx_names = ["i", "j", "k"][: grid.dim]
    x_names = ["x", "y", "z"][: grid.dim]
    val_names = ["value"] if isinstance(field, ScalarField) else ["vx", "vy", "vz"][: grid.dim]
    idx = np.indices(grid.shape).reshape(grid.dim, -1).T
    xs = grid.coords.reshape(-1, grid.dim)
    vals = field.values.reshape(grid.size, -1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(idx_names + x_names + val_names)
        for i, x, v in zip(idx, xs, vals):
            w.writerow([*map(int, i), *(f"{c:.17g}" for c in x), *(f"{c:.17g}" for c in v)])
