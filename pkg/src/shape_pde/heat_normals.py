"""Normal estimation from the spatial gradient of a kernel convolution of the indicator.

For ``h(t, x) = int K_t(x - y) chi_A(y) dy`` with ``K_t(z) = t^(-N/2) kappa(|z|^2 / t)``
the substitution ``y = x + sqrt(t) z`` gives

    grad h(t, x) = -(2 / sqrt(t)) int_{x + sqrt(t) z in A} z kappa'(|z|^2) dz,

which is evaluated here by a tensor lattice quadrature over ``[-R, R]^N``.
At a smooth boundary point ``sqrt(t) grad h -> -xi n``; at corners and on
cone-like singularities the limit is ``-2 v`` with ``v`` the integral of
``z kappa'(|z|^2)`` over the approximating cone.
"""

from __future__ import annotations

import csv
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize
from scipy.stats import special_ortho_group

from .shapes import Ball, Box, CornerInfo, HalfSpace, Shape


class KernelError(ValueError):
    """Kernel fails an integrability condition (a radial quadrature diverges)."""


class ConeError(ValueError):
    """Cone data violates nonzero gradients, common ascent direction or transversality."""


# kernels ---------------------------------------------------------------------

@dataclass(frozen=True)
class Kernel:
    """Radial profile ``kappa`` acting on the squared radius, with its derivative.

    ``support`` is the radius (in ``|z|``) beyond which ``kappa(|z|^2)`` vanishes,
    ``None`` for kernels with unbounded support. ``D`` is the diffusivity of a
    Gaussian kernel and sets its default truncation radius.
    """

    kappa: Callable[[np.ndarray], np.ndarray]
    kappa_prime: Callable[[np.ndarray], np.ndarray]
    label: str
    support: float | None = None
    D: float | None = None


def gaussian_kernel(D: float = 1.0, N: int = 2) -> Kernel:
    """Heat kernel profile ``(4 pi D)^(-N/2) exp(-r / (4D))``."""
    if not D > 0:
        raise ValueError("D must be positive")
    c = (4 * math.pi * D) ** (-N / 2)
    return Kernel(lambda r: c * np.exp(-np.asarray(r) / (4 * D)),
                  lambda r: -c / (4 * D) * np.exp(-np.asarray(r) / (4 * D)),
                  f"gaussian(D={D:g},N={N})", None, float(D))


def tent_kernel() -> Kernel:
    """``max(0, 1 - r)``: compactly supported in the unit ball."""
    return Kernel(lambda r: np.maximum(0.0, 1.0 - np.asarray(r, dtype=float)),
                  lambda r: np.where(np.asarray(r) < 1.0, -1.0, 0.0),
                  "tent", 1.0)


def rational_kernel() -> Kernel:
    """``1 / (1 + r)``: slow algebraic tail, not integrable in two or more dimensions."""
    return Kernel(lambda r: 1.0 / (1.0 + np.asarray(r, dtype=float)),
                  lambda r: -1.0 / (1.0 + np.asarray(r, dtype=float)) ** 2,
                  "rational")


def sphere_area(k: int) -> float:
    """Surface area of the unit sphere ``S^k`` in ``R^(k+1)``; ``S^0`` has two points."""
    return 2 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def _radial_quad(g: Callable[[float], float], kernel: Kernel) -> float:
    """``int_0^inf g(r) dr``; raises ``KernelError`` when quad reports trouble."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            if kernel.support is not None:
                val, _ = integrate.quad(g, 0.0, kernel.support, limit=200, epsabs=0.0, epsrel=1e-12)
            else:
                split = 2.0 * math.sqrt(kernel.D) if kernel.D else 1.0
                v1, _ = integrate.quad(g, 0.0, split, limit=200, epsabs=0.0, epsrel=1e-12)
                v2, _ = integrate.quad(g, split, math.inf, limit=200, epsabs=1e-15, epsrel=1e-12)
                val = v1 + v2
        except integrate.IntegrationWarning as exc:
            raise KernelError(f"radial integral of {kernel.label} did not converge: {exc}") from exc
    if not math.isfinite(val):
        raise KernelError(f"radial integral of {kernel.label} is not finite")
    return float(val)


def xi_smooth(kernel: Kernel, N: int) -> float:
    """``S_{N-2} int_0^inf kappa(r^2) r^(N-2) dr``: the limit of ``sqrt(t) |grad h|`` at smooth points."""
    if N < 2:
        raise ValueError("N must be at least 2")
    return sphere_area(N - 2) * _radial_quad(lambda r: float(kernel.kappa(r * r)) * r ** (N - 2), kernel)


def radial_moment(kernel: Kernel, N: int) -> float:
    """``int_0^inf kappa'(r^2) r^N dr``, the radial factor of a cone main term."""
    return _radial_quad(lambda r: float(kernel.kappa_prime(r * r)) * r ** N, kernel)


@dataclass(frozen=True)
class AdmissibilityReport:
    cutoffs: tuple[float, ...]
    mass: tuple[float, ...]        # int_{|x|<cutoff} |kappa(|x|^2)| dx
    moment: tuple[float, ...]      # int_{|x|<cutoff} |x| |kappa'(|x|^2)| dx
    tail_r: tuple[float, ...]
    tail_kappa: tuple[float, ...]  # |kappa(r)|
    tail_moment: tuple[float, ...]  # |r kappa'(r^2)|
    mass_finite: bool
    moment_finite: bool
    tails_vanish: bool

    @property
    def admissible(self) -> bool:
        return self.mass_finite and self.moment_finite and self.tails_vanish


def _settled(cumulative: Sequence[float], rtol: float) -> bool:
    total = cumulative[-1]
    if not math.isfinite(total):
        return False
    if total == 0.0:
        return True
    return abs(cumulative[-1] - cumulative[-2]) <= rtol * abs(total)


def _tail_decays(values: Sequence[float]) -> bool:
    v = list(values)
    if v[-1] == 0.0:
        return True
    return all(b <= a for a, b in zip(v, v[1:])) and v[-1] < v[0]


def kernel_admissibility(kernel: Kernel, N: int, cutoffs: Sequence[float] = (1, 10, 100, 1_000, 10_000),
                         rtol: float = 1e-6) -> AdmissibilityReport:
    """Cumulative radial integrals up to growing cutoffs and tail samples at ``r = 10, 30, 100``.

    An integral counts as finite when the last cutoff decade adds at most
    ``rtol`` of the running total.
    """
    area = sphere_area(N - 1)
    edges = [0.0, *map(float, cutoffs)]

    def cumulative(g):
        acc, out = 0.0, []
        for a, b in zip(edges, edges[1:]):
            if kernel.support is not None and a >= kernel.support:
                out.append(area * acc)
                continue
            hi = b if kernel.support is None else min(b, kernel.support)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                val, _ = integrate.quad(g, a, hi, limit=400, epsabs=0.0, epsrel=1e-10)
            acc += val
            out.append(area * acc)
        return tuple(out)

    mass = cumulative(lambda r: abs(float(kernel.kappa(r * r))) * r ** (N - 1))
    moment = cumulative(lambda r: r * abs(float(kernel.kappa_prime(r * r))) * r ** (N - 1))
    tail_r = (10.0, 30.0, 100.0)
    tk = tuple(abs(float(kernel.kappa(r))) for r in tail_r)
    tm = tuple(abs(r * float(kernel.kappa_prime(r * r))) for r in tail_r)
    return AdmissibilityReport(tuple(map(float, cutoffs)), mass, moment, tail_r, tk, tm,
                               _settled(mass, rtol), _settled(moment, rtol),
                               _tail_decays(tk) and _tail_decays(tm))


def default_R(kernel: Kernel, t: float) -> float:
    """``sqrt(3 D log(1/t))`` for a Gaussian, support radius plus one for compact kernels."""
    if kernel.support is not None:
        return kernel.support + 1.0
    if kernel.D is not None:
        if not 0 < t < 1:
            raise ValueError("the Gaussian default truncation needs 0 < t < 1")
        return math.sqrt(3 * kernel.D * math.log(1 / t))
    raise ValueError(f"kernel {kernel.label} has no default truncation radius; pass R explicitly")


# lattice quadrature ------------------------------------------------------------

def _rule_1d(R: float, quad: int, rule: str) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on ``[-R, R]``; the node set is exactly symmetric under ``z -> -z``."""
    if rule == "midpoint":
        h = 2 * R / quad
        nodes = -R + (np.arange(quad) + 0.5) * h
        weights = np.full(quad, h)
    elif rule == "gauss2":
        if quad % 2:
            raise ValueError("the two-point Gauss rule needs an even point count")
        cells = quad // 2
        H = 2 * R / cells
        centres = -R + (np.arange(cells) + 0.5) * H
        off = H / (2 * math.sqrt(3))
        nodes = np.stack([centres - off, centres + off], axis=-1).ravel()
        weights = np.full(quad, H / 2)
    else:
        raise ValueError("rule must be 'midpoint' or 'gauss2'")
    # mirror the upper half so that nodes on symmetry lines of the lattice are hit exactly
    half = len(nodes) // 2
    upper = nodes[len(nodes) - half:]
    mid = nodes[half:len(nodes) - half]
    nodes = np.concatenate([-upper[::-1], np.zeros_like(mid), upper])
    return nodes, weights


def grad_h(shape: Shape, kernel: Kernel, t: float, x, R: float | None = None, quad: int = 512,
           rule: str = "gauss2", frame: np.ndarray | None = None, chunk: int = 1 << 21) -> np.ndarray:
    """Lattice quadrature of ``grad_x h(t, x)``.

    ``quad`` is the number of points per axis over ``[-R, R]``. ``rule`` is
    ``"gauss2"`` (two Gauss-Legendre points per cell, ``quad / 2`` cells) or
    ``"midpoint"`` (``quad`` cells). ``frame`` is an optional orthogonal
    matrix whose columns orient the lattice; without it the lattice is
    axis-aligned and skips nodes outside the shape's bounding box.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x = np.asarray(x, dtype=float)
    N = shape.dim
    if x.shape != (N,):
        raise ValueError(f"x must have shape ({N},)")
    R = default_R(kernel, t) if R is None else float(R)
    if not R > 0:
        raise ValueError("R must be positive")
    if quad < 64:
        raise ValueError("quad must be at least 64 points per axis")
    st = math.sqrt(t)
    nodes, weights = _rule_1d(R, int(quad), rule)
    axes = [(nodes, weights)] * N

    if frame is None:
        try:
            b = shape.bounds()
        except ValueError:
            b = False
        if b is None:
            return np.zeros(N)
        if b is not False:
            lo, hi = (b[0] - x) / st, (b[1] - x) / st
            axes = []
            for k in range(N):
                keep = (nodes >= lo[k]) & (nodes <= hi[k])
                if not keep.any():
                    return np.zeros(N)
                axes.append((nodes[keep], weights[keep]))
        Q = None
    else:
        Q = np.asarray(frame, dtype=float)
        if Q.shape != (N, N) or not np.allclose(Q.T @ Q, np.eye(N), atol=1e-12):
            raise ValueError("frame must be an orthogonal N x N matrix")

    rest = axes[1:]
    rest_nodes = np.meshgrid(*[a[0] for a in rest], indexing="ij") if rest else []
    rest_w = np.ones(()) if not rest else np.prod(np.meshgrid(*[a[1] for a in rest], indexing="ij"), axis=0)
    rest_z = np.stack([r.ravel() for r in rest_nodes], axis=-1) if rest else np.zeros((1, 0))
    rest_w = np.asarray(rest_w).ravel()
    per_slice = max(1, rest_z.shape[0])
    step = max(1, chunk // per_slice)

    total = np.zeros(N)
    first_nodes, first_w = axes[0]
    for s in range(0, len(first_nodes), step):
        z0 = first_nodes[s:s + step]
        w0 = first_w[s:s + step]
        z = np.concatenate([np.repeat(z0, per_slice)[:, None], np.tile(rest_z, (len(z0), 1))], axis=1)
        w = np.repeat(w0, per_slice) * np.tile(rest_w, len(z0))
        zp = z if Q is None else z @ Q.T
        inside = shape.contains(x + st * zp)
        if not inside.any():
            continue
        zi = z[inside]
        vals = kernel.kappa_prime(np.sum(zi * zi, axis=1)) * w[inside]
        total += vals @ zi
    if Q is not None:
        total = Q @ total
    return -(2.0 / st) * total


def random_rotation(N: int, seed: int) -> np.ndarray:
    return special_ortho_group.rvs(N, random_state=np.random.default_rng(seed))


def rotated(shape: Shape, Q: np.ndarray) -> Shape:
    """Image of a ball or half-space under the rotation ``x -> Q x``."""
    Q = np.asarray(Q, dtype=float)
    if isinstance(shape, Ball):
        return Ball(tuple(Q @ np.asarray(shape.center)), shape.radius)
    if isinstance(shape, HalfSpace):
        return HalfSpace(tuple(Q @ np.asarray(shape.normal_vec)), shape.offset)
    raise TypeError(f"rotation is supported for balls and half-spaces, not {type(shape).__name__}")


def rotation_equivariance_error(shape: Shape, kernel: Kernel, t: float, x, Q: np.ndarray, **kw) -> float:
    """``|grad_h(Q A, Q x) - Q grad_h(A, x)|`` relative to ``|grad_h(A, x)|``, lattice co-rotated with ``Q``."""
    N = shape.dim
    g0 = grad_h(shape, kernel, t, np.asarray(x, dtype=float), frame=np.eye(N), **kw)
    g1 = grad_h(rotated(shape, Q), kernel, t, Q @ np.asarray(x, dtype=float), frame=Q, **kw)
    return float(np.linalg.norm(g1 - Q @ g0) / np.linalg.norm(g0))


def normal_from_grad(g: np.ndarray, floor: float = 0.0) -> np.ndarray | None:
    """Outward normal estimate ``-g / |g|``; ``None`` when ``|g| <= floor``."""
    norm = float(np.linalg.norm(g))
    if norm <= floor:
        return None
    return -np.asarray(g) / norm


def angle_deg(u, v) -> float:
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    c = float(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)))
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


# cones -------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Cone:
    """Union over groups ``I_j`` of ``{z : (g_i, z - p) > 0 for all i in I_j}``.

    ``gradients`` has one row per constraint; ``groups`` lists index tuples.
    No groups means the empty cone.
    """

    apex: np.ndarray
    gradients: np.ndarray
    groups: tuple[tuple[int, ...], ...] = ()
    ascent: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        apex = np.asarray(self.apex, dtype=float).ravel()
        N = apex.size
        g = np.asarray(self.gradients, dtype=float).reshape(-1, N)
        groups = tuple(tuple(int(i) for i in grp) for grp in self.groups)
        object.__setattr__(self, "apex", apex)
        object.__setattr__(self, "gradients", g)
        object.__setattr__(self, "groups", groups)
        norms = np.linalg.norm(g, axis=1)
        if np.any(norms == 0):
            raise ConeError("constraint gradients must be nonzero")
        for grp in groups:
            if not grp or any(i < 0 or i >= len(g) for i in grp):
                raise ConeError("groups must be nonempty tuples of valid constraint indices")
            for i, j in itertools.combinations(grp, 2):
                if abs(g[i] @ g[j]) >= (1 - 1e-12) * norms[i] * norms[j]:
                    raise ConeError(f"gradients {i} and {j} are linearly dependent (transversality fails)")
        object.__setattr__(self, "ascent", _common_ascent(g))

    @property
    def dim(self) -> int:
        return self.apex.size

    @property
    def is_empty(self) -> bool:
        return not self.groups

    @classmethod
    def empty(cls, N: int, apex=None) -> "Cone":
        return cls(np.zeros(N) if apex is None else apex, np.zeros((0, N)), ())

    @classmethod
    def halfspace(cls, inward, apex=None) -> "Cone":
        inward = np.asarray(inward, dtype=float)
        return cls(np.zeros(inward.size) if apex is None else apex, inward[None, :], ((0,),))

    @classmethod
    def from_corner(cls, corner: CornerInfo) -> "Cone":
        """Wedge at a planar corner: intersection (convex) or union (reflex) of two half-planes."""
        g = np.stack([-np.asarray(corner.n1), -np.asarray(corner.n2)])
        groups = ((0, 1),) if corner.inner_angle < math.pi else ((0,), (1,))
        return cls(corner.point, g, groups)

    @classmethod
    def from_box_point(cls, box: Box, x, tol: float = 1e-12) -> "Cone":
        """Cone of ``box`` at a boundary point: one constraint per active face."""
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(box.lo), np.asarray(box.hi)
        if np.any(x < lo - tol) or np.any(x > hi + tol):
            raise ConeError("point lies outside the box")
        rows = []
        for k in range(box.dim):
            e = np.zeros(box.dim)
            if abs(x[k] - lo[k]) <= tol:
                e[k] = 1.0
                rows.append(e)
            elif abs(x[k] - hi[k]) <= tol:
                e[k] = -1.0
                rows.append(e)
        if not rows:
            raise ConeError("point is interior to the box")
        return cls(x, np.stack(rows), (tuple(range(len(rows))),))

    def contains(self, z) -> np.ndarray:
        """Membership of points ``z`` (absolute coordinates)."""
        z = np.atleast_2d(np.asarray(z, dtype=float)) - self.apex
        out = np.zeros(len(z), dtype=bool)
        for grp in self.groups:
            out |= np.all(z @ self.gradients[list(grp)].T > 0, axis=1)
        return out

    def mirrored(self, axis: int) -> "Cone":
        """Image under ``z_axis -> -z_axis`` about the apex."""
        g = self.gradients.copy()
        g[:, axis] *= -1
        return Cone(self.apex, g, self.groups)


def _common_ascent(g: np.ndarray) -> np.ndarray:
    """A unit ``l`` with ``(g_i, l) > 0`` for every row, from a small LP."""
    N = g.shape[1]
    if len(g) == 0:
        e = np.zeros(N)
        e[0] = 1.0
        return e
    gn = g / np.linalg.norm(g, axis=1, keepdims=True)
    # maximize s subject to (g_i, l) >= s and -1 <= l_k <= 1
    c = np.zeros(N + 1)
    c[-1] = -1.0
    A = np.hstack([-gn, np.ones((len(gn), 1))])
    res = optimize.linprog(c, A_ub=A, b_ub=np.zeros(len(gn)),
                           bounds=[(-1, 1)] * N + [(None, 1)], method="highs")
    if res.status != 0 or -res.fun <= 1e-12:
        raise ConeError("no common ascent direction exists for the constraint gradients")
    ell = res.x[:N]
    return ell / np.linalg.norm(ell)


def _arc_moments(breaks: np.ndarray, member: Callable[[np.ndarray], np.ndarray]) -> tuple[float, np.ndarray]:
    """Length and ``int omega d(theta)`` of the set of unit-circle angles accepted by ``member``.

    Membership is constant between consecutive ``breaks``, so one midpoint
    test per sub-arc decides it exactly.
    """
    if len(breaks) == 0:
        inside = bool(member(np.array([[1.0, 0.0]]))[0])
        return (2 * math.pi, np.zeros(2)) if inside else (0.0, np.zeros(2))
    b = np.unique(np.mod(breaks, 2 * math.pi))
    lo = b
    hi = np.append(b[1:], b[0] + 2 * math.pi)
    mid = 0.5 * (lo + hi)
    inside = member(np.stack([np.cos(mid), np.sin(mid)], axis=-1))
    length = float(np.sum((hi - lo)[inside]))
    vec = np.array([np.sum(np.sin(hi[inside]) - np.sin(lo[inside])),
                    np.sum(np.cos(lo[inside]) - np.cos(hi[inside]))])
    return length, vec


def _halfplane_breaks(c: np.ndarray) -> np.ndarray:
    ang = np.arctan2(c[:, 1], c[:, 0])
    return np.concatenate([ang - math.pi / 2, ang + math.pi / 2])


def _convex_constraints(g: np.ndarray) -> np.ndarray | None:
    """Unit constraint vectors with duplicates removed; ``None`` for an empty cone."""
    gn = g / np.linalg.norm(g, axis=1, keepdims=True)
    kept: list[np.ndarray] = []
    for v in gn:
        if any(np.linalg.norm(v - u) < 1e-12 for u in kept):
            continue
        if any(np.linalg.norm(v + u) < 1e-12 for u in kept):
            return None
        kept.append(v)
    return np.array(kept)


def _convex_sphere_moment_3d(g: np.ndarray) -> np.ndarray:
    """``int_{S^2 cap C} omega`` for ``C = {(g_i, z) > 0}`` via the divergence theorem.

    Integrating a constant field over ``C cap B_1`` gives
    ``int_{S^2 cap C} omega = sum_i g_i * area(face_i cap B_1)`` and each flat
    face is a planar sector whose area is half its opening angle.
    """
    gn = _convex_constraints(g)
    if gn is None:
        return np.zeros(3)
    total = np.zeros(3)
    for i, gi in enumerate(gn):
        # orthonormal basis of the face plane
        e1 = np.cross(gi, [1.0, 0.0, 0.0])
        if np.linalg.norm(e1) < 0.5:
            e1 = np.cross(gi, [0.0, 1.0, 0.0])
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(gi, e1)
        others = np.delete(gn, i, axis=0)
        proj = np.stack([others @ e1, others @ e2], axis=-1) if len(others) else np.zeros((0, 2))
        member = (lambda w, P=proj: np.all(w @ P.T > 0, axis=1)) if len(proj) else (lambda w: np.ones(len(w), bool))
        angle, _ = _arc_moments(_halfplane_breaks(proj) if len(proj) else np.array([]), member)
        total += gi * (0.5 * angle)
    return total


def cone_sphere_moment(cone: Cone) -> np.ndarray:
    """``int_{S^{N-1} cap (C - p)} omega d sigma`` computed exactly for ``N`` in {2, 3}."""
    N = cone.dim
    if cone.is_empty:
        return np.zeros(N)
    g = cone.gradients
    if N == 2:
        def member(w):
            out = np.zeros(len(w), dtype=bool)
            for grp in cone.groups:
                out |= np.all(w @ g[list(grp)].T > 0, axis=1)
            return out
        used = sorted({i for grp in cone.groups for i in grp})
        return _arc_moments(_halfplane_breaks(g[used]), member)[1]
    if N == 3:
        total = np.zeros(3)
        m = len(cone.groups)
        for r in range(1, m + 1):
            for subset in itertools.combinations(range(m), r):
                idx = sorted({i for j in subset for i in cone.groups[j]})
                total += (-1) ** (r + 1) * _convex_sphere_moment_3d(g[idx])
        return total
    raise NotImplementedError("cone moments are implemented for N in {2, 3}")


def cone_main_term(cone: Cone, kernel: Kernel, N: int | None = None) -> np.ndarray:
    """``v = int_{C - p} z kappa'(|z|^2) dz``; zero for the empty cone.

    In polar form ``v`` factors into the sphere moment of the cone times
    ``int_0^inf kappa'(r^2) r^N dr``; ``sqrt(t) grad h(t, p) -> -2 v``.
    """
    if N is not None and N != cone.dim:
        raise ValueError("N does not match the cone dimension")
    if cone.is_empty:
        return np.zeros(cone.dim)
    return cone_sphere_moment(cone) * radial_moment(kernel, cone.dim)


def cone_normal(cone: Cone, kernel: Kernel, floor: float = 1e-14) -> np.ndarray | None:
    """``v / |v|`` for the cone main term ``v``; ``None`` (no normal) when it vanishes."""
    v = cone_main_term(cone, kernel)
    norm = float(np.linalg.norm(v))
    return None if norm <= floor else v / norm


def corner_prediction_2d(kernel: Kernel, corner: CornerInfo) -> tuple[np.ndarray, float]:
    """Predicted outward direction ``(n1+n2)/|n1+n2|`` and magnitude ``2 sin(phi/2) int_0^inf kappa(r^2) dr``."""
    phi = corner.inner_angle
    if not 0 < phi < 2 * math.pi:
        raise ValueError("inner angle must lie in (0, 2 pi)")
    xi_p = 2 * math.sin(phi / 2) * _radial_quad(lambda r: float(kernel.kappa(r * r)), kernel)
    return corner.direction, xi_p


# smooth-boundary table -----------------------------------------------------------

@dataclass(frozen=True)
class AsymptoteRow:
    t: float
    x: np.ndarray
    grad: np.ndarray
    mag_scaled: float        # sqrt(t) |grad h| / xi
    angle_deg_to_minus_n: float


def smooth_asymptote_check(shape: Shape, kernel: Kernel, ts: Sequence[float], points, R=None,
                           quad: int = 512, rule: str = "gauss2") -> list[AsymptoteRow]:
    """``sqrt(t)|grad h|/xi`` and the angle between ``grad h`` and ``-n`` per ``(t, x)``, sorted by ``t``.

    ``R`` may be a number, ``None`` (kernel default per ``t``) or a callable of ``t``.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    xi = xi_smooth(kernel, shape.dim)
    normals = shape.normal(pts)
    rows = []
    for t in sorted(float(v) for v in ts):
        Rt = R(t) if callable(R) else R
        for p, n in zip(pts, normals):
            g = grad_h(shape, kernel, t, p, Rt, quad, rule)
            rows.append(AsymptoteRow(t, p.copy(), g, math.sqrt(t) * float(np.linalg.norm(g)) / xi,
                                     angle_deg(g, -n)))
    return rows


def write_asymptote_csv(rows: Sequence[AsymptoteRow], path: str | Path) -> None:
    if not rows:
        raise ValueError("no rows to write")
    N = rows[0].x.size
    xs = ["x", "y", "z"][:N]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *xs, *("g" + c for c in xs), "mag_scaled", "angle_deg_to_minus_n"])
        for r in rows:
            w.writerow([f"{r.t:.17g}", *(f"{v:.17g}" for v in r.x), *(f"{v:.17g}" for v in r.grad),
                        f"{r.mag_scaled:.17g}", f"{r.angle_deg_to_minus_n:.17g}"])
