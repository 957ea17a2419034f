"""Analytic catalog of test shapes with exact geometric oracles.

Every shape is an open region ``A`` of R^N. Points are passed as arrays whose
last axis has length ``dim``; all oracles broadcast over leading axes.

Sign convention for signed distances: negative inside ``A``, positive outside,
zero on the boundary. Normals are outward unit vectors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class ShapeError(ValueError):
    """Invalid shape data or an oracle called outside its domain."""


@dataclass(frozen=True)
class BoundarySamples:
    points: np.ndarray   # (m, N)
    normals: np.ndarray  # (m, N), outward unit
    weights: np.ndarray  # (m,), surface measure

    def __len__(self) -> int:
        return len(self.weights)

    def __iter__(self):
        return iter(zip(self.points, self.normals, self.weights))


@dataclass(frozen=True)
class CornerInfo:
    """A non-smooth boundary point of a planar shape.

    ``inner_angle`` is the opening angle of ``A`` at ``point`` measured inside
    ``A``. ``n1`` and ``n2`` are the one-sided limits of the outward normal along
    the incoming and outgoing boundary edges (counter-clockwise traversal).
    With this orientation the unsigned angle between ``-n1`` and ``-n2`` is
    ``|pi - inner_angle|``.
    """

    point: np.ndarray
    inner_angle: float
    n1: np.ndarray
    n2: np.ndarray

    @property
    def direction(self) -> np.ndarray:
        s = self.n1 + self.n2
        return s / np.linalg.norm(s)


def _as_points(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != dim:
        raise ShapeError(f"point dimension {x.shape[-1] if x.ndim else 0} does not match shape dimension {dim}")
    return x


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _split_count(m: int, sizes: Sequence[float]) -> list[int]:
    """Distribute ``m`` samples over pieces proportionally to ``sizes`` (each >= 1)."""
    sizes = np.asarray(sizes, dtype=float)
    raw = m * sizes / sizes.sum()
    counts = np.maximum(1, np.floor(raw).astype(int))
    # hand out the remainder to the largest fractional parts
    rest = m - counts.sum()
    if rest > 0:
        order = np.argsort(-(raw - np.floor(raw)))
        for k in order[:rest]:
            counts[k] += 1
    return counts.tolist()


def _segment_samples(p: np.ndarray, q: np.ndarray, k: int):
    """Equispaced midpoint samples on the segment pq with normal rotated by -pi/2."""
    d = q - p
    length = float(np.hypot(*d))
    s = (np.arange(k) + 0.5) / k
    pts = p + s[:, None] * d
    nrm = np.array([d[1], -d[0]]) / length
    return pts, np.tile(nrm, (k, 1)), np.full(k, length / k)


class Shape:
    """Base class; subclasses implement the oracles below."""

    dim: int

    def contains(self, x) -> np.ndarray:
        raise NotImplementedError

    def signed_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    def normal(self, x) -> np.ndarray:
        """Outward normal of the boundary point nearest to ``x``."""
        raise NotImplementedError

    def sample_boundary(self, m: int) -> BoundarySamples:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Axis-aligned bounding box of the closure, ``None`` if empty, error if unbounded."""
        raise NotImplementedError

    def corners(self) -> list[CornerInfo]:
        return []

    @property
    def has_exact_distance(self) -> bool:
        return True


@dataclass(frozen=True)
class Ball(Shape):
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0:
            raise ShapeError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def _rel(self, x):
        return _as_points(x, self.dim) - np.asarray(self.center)

    def contains(self, x):
        return np.linalg.norm(self._rel(x), axis=-1) < self.radius

    def signed_distance(self, x):
        return np.linalg.norm(self._rel(x), axis=-1) - self.radius

    def normal(self, x):
        return _unit(self._rel(x))

    def bounds(self):
        c = np.asarray(self.center)
        return c - self.radius, c + self.radius

    def sample_boundary(self, m: int) -> BoundarySamples:
        c, r, n = np.asarray(self.center), self.radius, self.dim
        if n == 1:
            nrm = np.array([[-1.0], [1.0]])
            return BoundarySamples(c + r * nrm, nrm, np.ones(2))
        if n == 2:
            th = 2 * np.pi * np.arange(m) / m
            nrm = np.stack([np.cos(th), np.sin(th)], axis=-1)
            return BoundarySamples(c + r * nrm, nrm, np.full(m, 2 * np.pi * r / m))
        if n == 3:
            # Fibonacci lattice: equal-area cells on the sphere
            k = np.arange(m) + 0.5
            z = 1 - 2 * k / m
            phi = np.pi * (1 + 5 ** 0.5) * k
            rho = np.sqrt(1 - z * z)
            nrm = np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
            return BoundarySamples(c + r * nrm, nrm, np.full(m, 4 * np.pi * r * r / m))
        raise ShapeError("ball boundary sampling is implemented for N <= 3")


@dataclass(frozen=True)
class Box(Shape):
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or not all(a < b for a, b in zip(self.lo, self.hi)):
            raise ShapeError("box needs lo < hi componentwise")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def _q(self, x):
        x = _as_points(x, self.dim)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.abs(x - (lo + hi) / 2) - (hi - lo) / 2, x

    def contains(self, x):
        q, _ = self._q(x)
        return np.all(q < 0, axis=-1)

    def signed_distance(self, x):
        q, _ = self._q(x)
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(axis=-1), 0.0)
        return outside + inside

    def normal(self, x):
        q, x = self._q(x)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        sgn = np.where(x >= (lo + hi) / 2, 1.0, -1.0)
        out = np.maximum(q, 0.0)
        is_out = np.any(q > 0, axis=-1, keepdims=True)
        face = (q == q.max(axis=-1, keepdims=True)).astype(float)
        v = np.where(is_out, out, face) * sgn
        return _unit(v)

    def bounds(self):
        return np.asarray(self.lo), np.asarray(self.hi)

    def as_polygon(self) -> "Polygon2D":
        if self.dim != 2:
            raise ShapeError("only 2-D boxes convert to polygons")
        (x0, y0), (x1, y1) = self.lo, self.hi
        return Polygon2D(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))

    def sample_boundary(self, m: int) -> BoundarySamples:
        if self.dim == 2:
            return self.as_polygon().sample_boundary(m)
        if self.dim != 3:
            raise ShapeError("box boundary sampling is implemented for N in {2, 3}")
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        ext = hi - lo
        faces = []
        for ax in range(3):
            u, v = [i for i in range(3) if i != ax]
            for side in (0, 1):
                faces.append((ax, side, u, v, ext[u] * ext[v]))
        counts = _split_count(m, [f[4] for f in faces])
        pts, nrms, wts = [], [], []
        for (ax, side, u, v, area), k in zip(faces, counts):
            nu = max(1, int(round(math.sqrt(k * ext[u] / ext[v]))))
            nv = max(1, int(round(k / nu)))
            su = lo[u] + ext[u] * (np.arange(nu) + 0.5) / nu
            sv = lo[v] + ext[v] * (np.arange(nv) + 0.5) / nv
            U, V = np.meshgrid(su, sv, indexing="ij")
            p = np.empty((nu * nv, 3))
            p[:, u], p[:, v] = U.ravel(), V.ravel()
            p[:, ax] = hi[ax] if side else lo[ax]
            nrm = np.zeros((nu * nv, 3))
            nrm[:, ax] = 1.0 if side else -1.0
            pts.append(p)
            nrms.append(nrm)
            wts.append(np.full(nu * nv, area / (nu * nv)))
        return BoundarySamples(np.concatenate(pts), np.concatenate(nrms), np.concatenate(wts))

    def corners(self):
        if self.dim != 2:
            raise ShapeError("corner metadata is defined for planar shapes")
        return self.as_polygon().corners()


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0) and (orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


@dataclass(frozen=True)
class Polygon2D(Shape):
    """Simple polygon with counter-clockwise vertex order."""

    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise ShapeError("polygon needs at least three 2-D vertices")
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))
        x, y = v[:, 0], v[:, 1]
        area2 = np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
        if area2 <= 0:
            raise ShapeError("polygon vertices must be counter-clockwise")
        k = len(v)
        for i in range(k):
            for j in range(i + 2, k):
                if i == 0 and j == k - 1:
                    continue
                if _segments_cross(v[i], v[(i + 1) % k], v[j], v[(j + 1) % k]):
                    raise ShapeError("polygon is not simple")

    dim = 2

    @property
    def _v(self) -> np.ndarray:
        return np.asarray(self.vertices)

    def _edge_distance(self, x):
        v = self._v
        w = np.roll(v, -1, axis=0)
        best = np.full(x.shape[:-1], np.inf)
        for p, q in zip(v, w):
            d = q - p
            s = np.clip(((x - p) @ d) / (d @ d), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(x - (p + s[..., None] * d), axis=-1))
        return best

    def _inside_crossing(self, x):
        v = self._v
        w = np.roll(v, -1, axis=0)
        px, py = x[..., 0], x[..., 1]
        inside = np.zeros(x.shape[:-1], dtype=bool)
        for (x0, y0), (x1, y1) in zip(v, w):
            straddle = (y0 > py) != (y1 > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = x0 + (py - y0) * (x1 - x0) / (y1 - y0)
            inside ^= straddle & (px < xc)
        return inside

    def contains(self, x):
        x = _as_points(x, 2)
        return self._inside_crossing(x) & (self._edge_distance(x) > 0)

    def signed_distance(self, x):
        x = _as_points(x, 2)
        d = self._edge_distance(x)
        return np.where(self._inside_crossing(x), -d, d)

    def normal(self, x):
        x = _as_points(x, 2)
        v = self._v
        w = np.roll(v, -1, axis=0)
        best = np.full(x.shape[:-1], np.inf)
        out = np.zeros(x.shape)
        for p, q in zip(v, w):
            d = q - p
            s = np.clip(((x - p) @ d) / (d @ d), 0.0, 1.0)
            dist = np.linalg.norm(x - (p + s[..., None] * d), axis=-1)
            nrm = np.array([d[1], -d[0]]) / np.hypot(*d)
            better = dist < best
            best = np.where(better, dist, best)
            out = np.where(better[..., None], nrm, out)
        return out

    def bounds(self):
        v = self._v
        return v.min(axis=0), v.max(axis=0)

    def perimeter(self) -> float:
        v = self._v
        return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())

    def sample_boundary(self, m: int) -> BoundarySamples:
        v = self._v
        w = np.roll(v, -1, axis=0)
        lengths = np.linalg.norm(w - v, axis=1)
        counts = _split_count(m, lengths)
        parts = [_segment_samples(p, q, k) for p, q, k in zip(v, w, counts)]
        return BoundarySamples(*(np.concatenate([pt[i] for pt in parts]) for i in range(3)))

    def corners(self, tol: float = 1e-9) -> list[CornerInfo]:
        v = self._v
        k = len(v)
        out = []
        for i in range(k):
            p_prev, p, p_next = v[i - 1], v[i], v[(i + 1) % k]
            d_in, d_out = p - p_prev, p_next - p
            turn = math.atan2(d_in[0] * d_out[1] - d_in[1] * d_out[0], d_in @ d_out)
            phi = math.pi - turn
            if abs(phi - math.pi) < tol:
                continue
            n1 = np.array([d_in[1], -d_in[0]]) / np.hypot(*d_in)
            n2 = np.array([d_out[1], -d_out[0]]) / np.hypot(*d_out)
            out.append(CornerInfo(p.copy(), phi, n1, n2))
        return out


@dataclass(frozen=True)
class HalfSpace(Shape):
    """The open half-space ``{x : (normal, x) < offset}``; ``normal`` points outward."""

    normal_vec: tuple[float, ...]
    offset: float = 0.0

    def __post_init__(self):
        n = np.asarray(self.normal_vec, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ShapeError("half-space normal must be nonzero")
        object.__setattr__(self, "normal_vec", tuple((n / norm).tolist()))

    @property
    def dim(self) -> int:
        return len(self.normal_vec)

    def signed_distance(self, x):
        # elementwise products summed without fused multiply-add, so mirror-image points tie exactly
        return np.sum(_as_points(x, self.dim) * np.asarray(self.normal_vec), axis=-1) - self.offset

    def contains(self, x):
        return self.signed_distance(x) < 0

    def normal(self, x):
        x = _as_points(x, self.dim)
        return np.broadcast_to(np.asarray(self.normal_vec), x.shape).copy()

    def bounds(self):
        raise ShapeError("half-space is unbounded")

    def sample_boundary(self, m: int) -> BoundarySamples:
        raise ShapeError("half-space boundary has infinite measure")


@dataclass(frozen=True)
class Cusp2D(Shape):
    """``{(x1, x2): 0 < x1 < extent, 0 < x2 < x1**(1 + alpha)}`` with its cusp at the origin."""

    alpha: float
    extent: float = 1.0
    n_brute: int = 10_000

    def __post_init__(self):
        if not (self.alpha > 0 and self.extent > 0):
            raise ShapeError("cusp needs alpha > 0 and extent > 0")

    dim = 2

    @property
    def apex(self) -> np.ndarray:
        return np.zeros(2)

    @property
    def has_exact_distance(self) -> bool:
        return False

    def contains(self, x):
        x = _as_points(x, 2)
        x1, x2 = x[..., 0], x[..., 1]
        with np.errstate(invalid="ignore"):
            top = np.where(x1 > 0, np.abs(x1) ** (1 + self.alpha), 0.0)
        return (x1 > 0) & (x1 < self.extent) & (x2 > 0) & (x2 < top)

    def bounds(self):
        return np.zeros(2), np.array([self.extent, self.extent ** (1 + self.alpha)])

    def sample_boundary(self, m: int) -> BoundarySamples:
        e, p = self.extent, 1 + self.alpha
        # the curved arc is discretized as a fine polyline, then resampled by arc length
        s = np.linspace(0, e, 4097)
        curve = np.stack([s, s ** p], axis=-1)
        seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
        arc = float(seg.sum())
        k_bot, k_arc, k_right = _split_count(m, [e, arc, e ** p])
        bot = _segment_samples(np.array([0.0, 0.0]), np.array([e, 0.0]), k_bot)
        right = _segment_samples(np.array([e, 0.0]), np.array([e, e ** p]), k_right)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        targets = (np.arange(k_arc) + 0.5) / k_arc * arc
        x1 = np.interp(targets, cum, s)
        pts = np.stack([x1, x1 ** p], axis=-1)
        tang = np.stack([np.ones_like(x1), p * x1 ** (p - 1)], axis=-1)
        # arc is traversed from (e, e^p) back to 0 in ccw order; outward = (-slope, 1) normalized
        nrm = _unit(np.stack([-tang[:, 1], tang[:, 0]], axis=-1))
        arc_part = (pts, nrm, np.full(k_arc, arc / k_arc))
        parts = [bot, right, arc_part]
        return BoundarySamples(*(np.concatenate([pt[i] for pt in parts]) for i in range(3)))

    def signed_distance(self, x):
        return signed_distance_bruteforce(self, x, self.n_brute)

    def normal(self, x):
        x = _as_points(x, 2)
        samples = self.sample_boundary(self.n_brute)
        d = np.linalg.norm(x[..., None, :] - samples.points, axis=-1)
        return samples.normals[np.argmin(d, axis=-1)]


@dataclass(frozen=True)
class Union(Shape):
    """Union of shapes with pairwise disjoint closures; an empty union is the empty set."""

    members: tuple[Shape, ...] = ()
    dim_: int | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        dims = {s.dim for s in self.members}
        if self.dim_ is not None:
            dims.add(self.dim_)
        if len(dims) != 1:
            raise ShapeError("union members must share one dimension (give dim_ for an empty union)")
        object.__setattr__(self, "dim_", dims.pop())
        self._check_disjoint()

    def _check_disjoint(self, m: int = 256):
        for i, s in enumerate(self.members):
            try:
                pts = s.sample_boundary(m).points
            except ShapeError:
                continue
            for j, o in enumerate(self.members):
                if i != j and np.any(o.signed_distance(pts) <= 0):
                    raise ShapeError("union members must have disjoint closures")

    @property
    def dim(self) -> int:
        return self.dim_

    @property
    def has_exact_distance(self) -> bool:
        return all(s.has_exact_distance for s in self.members)

    def contains(self, x):
        x = _as_points(x, self.dim)
        out = np.zeros(x.shape[:-1], dtype=bool)
        for s in self.members:
            out |= s.contains(x)
        return out

    def signed_distance(self, x):
        x = _as_points(x, self.dim)
        if not self.members:
            return np.full(x.shape[:-1], np.inf)
        return np.min([s.signed_distance(x) for s in self.members], axis=0)

    def normal(self, x):
        x = _as_points(x, self.dim)
        d = np.stack([np.abs(s.signed_distance(x)) for s in self.members])
        nrm = np.stack([s.normal(x) for s in self.members])
        idx = np.argmin(d, axis=0)
        return np.take_along_axis(nrm, idx[None, ..., None], axis=0)[0]

    def bounds(self):
        if not self.members:
            return None
        b = [s.bounds() for s in self.members]
        return np.min([lo for lo, _ in b], axis=0), np.max([hi for _, hi in b], axis=0)

    def sample_boundary(self, m: int) -> BoundarySamples:
        if not self.members:
            z = np.zeros((0, self.dim))
            return BoundarySamples(z, z.copy(), np.zeros(0))
        areas = [s.sample_boundary(64).weights.sum() for s in self.members]
        counts = _split_count(m, areas)
        parts = [s.sample_boundary(k) for s, k in zip(self.members, counts)]
        return BoundarySamples(
            np.concatenate([p.points for p in parts]),
            np.concatenate([p.normals for p in parts]),
            np.concatenate([p.weights for p in parts]),
        )

    def corners(self):
        return [c for s in self.members for c in s.corners()]


def signed_distance_bruteforce(shape: Shape, x, m: int = 10_000) -> np.ndarray:
    """Signed distance from the nearest of ``m`` boundary samples; sign from membership.

    The error is bounded by the sampling pitch.
    """
    x = _as_points(x, shape.dim)
    pts = shape.sample_boundary(m).points
    flat = x.reshape(-1, shape.dim)
    d = np.empty(len(flat))
    for start in range(0, len(flat), 512):
        chunk = flat[start:start + 512]
        d[start:start + 512] = np.min(np.linalg.norm(chunk[:, None, :] - pts[None], axis=-1), axis=1)
    d = d.reshape(x.shape[:-1])
    return np.where(shape.contains(x), -d, d)


# module-level oracles ---------------------------------------------------------

def contains(shape: Shape, x) -> np.ndarray:
    return shape.contains(x)


def signed_distance_exact(shape: Shape, x) -> np.ndarray:
    """Closed-form signed distance; cusps fall back to boundary sampling."""
    return shape.signed_distance(x)


def sample_boundary(shape: Shape, m: int) -> BoundarySamples:
    return shape.sample_boundary(m)


def corners(shape: Shape) -> list[CornerInfo]:
    return shape.corners()
