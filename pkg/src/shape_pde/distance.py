"""Distance and signed-distance recovery from ``-a Lap(u) + u = f`` (Varadhan-type transform).

With ``f`` vanishing on ``A`` and positive outside, ``p_a = -sqrt(a) log u``
approaches the distance to ``dA`` inside ``A`` as ``a -> 0``. With
``f = C* chi_{Omega minus closure(A)}`` the pair ``sqrt(a) log u`` (inside) and
``-sqrt(a) log(C* - u)`` (outside) approaches the signed distance on the
region closer to ``dA`` than to the box faces.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .elliptic import SolveReport, SparseSystem, solve_ode_1d
from .grid import Grid, ScalarField, interpolate, rasterize_indicator
from .shapes import Ball, Shape, ShapeError

LOG_FLOOR = 1e-300


class DistanceError(RuntimeError):
    """Extraction impossible, e.g. every node of the region underflowed."""


@dataclass(frozen=True, eq=False)
class DistanceProblem:
    """``-a Lap(u) + u = f`` in the grid box, ``u = g`` on its faces, ``f = 0`` on the closure of ``A``."""

    grid: Grid
    shape: Shape
    f: ScalarField
    g: float | np.ndarray
    a: float

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if self.shape.dim != self.grid.dim:
            raise ValueError("shape and grid dimensions differ")
        fv = self.f.values
        if np.any(fv < 0):
            raise ValueError("f must be nonnegative")
        if not np.any(fv > 0):
            raise ValueError("f must be positive somewhere")
        if np.any(fv[self.shape.contains(self.grid.coords)] != 0):
            raise ValueError("f must vanish on A")
        g = np.asarray(self.g, dtype=float)
        if g.ndim and g.shape != self.grid.shape:
            raise ValueError("g must be a scalar or a node array")
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise ValueError("g must be finite and nonnegative")
        b = self.shape.bounds()
        if b is not None:
            margin = min(np.min(b[0] - np.asarray(self.grid.lo)), np.min(np.asarray(self.grid.hi) - b[1]))
            if margin <= 0:
                raise ShapeError("closure of A must lie strictly inside the grid box")

    @classmethod
    def indicator(cls, grid: Grid, shape: Shape, a: float, C: float = 1.0, g=1.0) -> "DistanceProblem":
        """``f = C`` at nodes outside the closure of ``A`` and ``0`` at nodes in ``A``.

        Nodes lying exactly on ``dA`` (exact-distance shapes only) get ``C/2``, the
        mean of the one-sided values, which keeps node-aligned jumps second order.
        """
        x = grid.coords
        chi = shape.contains(x)
        f = np.where(chi, 0.0, float(C))
        if shape.has_exact_distance:
            f = np.where(~chi & (shape.signed_distance(x) == 0), 0.5 * float(C), f)
        return cls(grid, shape, ScalarField(grid, f), g, float(a))

    @classmethod
    def from_function(cls, grid: Grid, shape: Shape, a: float, func: Callable[[np.ndarray], np.ndarray],
                      g=1.0) -> "DistanceProblem":
        return cls(grid, shape, ScalarField(grid, func(grid.coords)), g, float(a))

    @property
    def bound(self) -> float:
        """``max(sup f, sup g)``, the upper bound of ``u``."""
        g = np.broadcast_to(np.asarray(self.g, dtype=float), self.grid.shape)
        return max(float(self.f.values.max()), float(g[self.grid.face_mask].max()))

    def solve_pair(self, tol: float = 1e-12, method: str = "lu", maxit: int | None = None) -> "SolvePair":
        """``u`` and its complement ``w = M - u``, each from its own nonnegative-data solve.

        Both systems share the operator and have nonnegative data, so each is
        computed to high relative accuracy. Per node the better-conditioned one
        defines the other: ``u`` where ``u <= M/2`` and ``M - w`` elsewhere.
        """
        M = self.bound
        system = SparseSystem(self.grid, self.a, 1.0)
        g = np.broadcast_to(np.asarray(self.g, dtype=float), self.grid.shape)
        u_raw, r1 = system.solve(self.f, g, tol, maxit, method)
        w_raw, r2 = system.solve(M - self.f.values, M - g, tol, maxit, method)
        low = u_raw.values <= M / 2
        u = np.where(low, u_raw.values, M - w_raw.values)
        w = np.where(low, M - u_raw.values, w_raw.values)
        return SolvePair(ScalarField(self.grid, u), ScalarField(self.grid, w), M, (r1, r2))

    def solve(self, tol: float = 1e-12, method: str = "lu",
              maxit: int | None = None) -> tuple[ScalarField, tuple[SolveReport, ...]]:
        pair = self.solve_pair(tol, method, maxit)
        return pair.u, pair.reports


@dataclass(frozen=True, eq=False)
class SolvePair:
    u: ScalarField
    w: ScalarField  # M - u
    M: float
    reports: tuple[SolveReport, ...]


def max_principle_ok(u: np.ndarray, bound: float) -> bool:
    """``0 < u <= bound`` at every entry, compared exactly."""
    u = np.asarray(u)
    return bool(np.all(u > 0) and np.all(u <= bound))


@dataclass(frozen=True, eq=False)
class DistanceResult:
    p: ScalarField        # -sqrt(a) log(max(u, floor)) at every node
    u: ScalarField
    mask: np.ndarray      # nodes with rasterized chi_A >= 0.5
    flagged: np.ndarray   # nodes where u fell below the floor
    reports: tuple[SolveReport, ...]
    bound: float

    @property
    def max_principle(self) -> bool:
        return max_principle_ok(self.u.values, self.bound)


def extract_distance(problem: DistanceProblem, tol: float = 1e-12, floor: float = LOG_FLOOR,
                     supersample: int = 4, method: str = "lu", maxit: int | None = None) -> DistanceResult:
    u, reports = problem.solve(tol, method, maxit)
    mask = rasterize_indicator(problem.grid, problem.shape, supersample).values >= 0.5
    flagged = u.values < floor
    if mask.any() and np.all(flagged[mask]):
        raise DistanceError("u underflowed at every node of A; a is too small for double precision")
    p = -math.sqrt(problem.a) * np.log(np.maximum(u.values, floor))
    return DistanceResult(ScalarField(problem.grid, p), u, mask, flagged, reports, problem.bound)


def boundary_distance(grid: Grid, x) -> np.ndarray:
    """Distance from points inside the grid box to its faces."""
    x = np.asarray(x, dtype=float)
    return np.min(np.minimum(x - np.asarray(grid.lo), np.asarray(grid.hi) - x), axis=-1)


def omega_star_mask(grid: Grid, shape: Shape, x=None) -> np.ndarray:
    """``d(x, dA) <= d(x, dOmega)`` from the exact distance oracles."""
    x = grid.coords if x is None else np.asarray(x, dtype=float)
    return np.abs(shape.signed_distance(x)) <= boundary_distance(grid, x)


@dataclass(frozen=True, eq=False)
class SignedResult:
    U: ScalarField
    u: ScalarField
    omega_star: np.ndarray
    inside: np.ndarray      # nodes in the closure of A (signed distance <= 0)
    flagged: np.ndarray     # log argument below the floor
    nonpositive: np.ndarray  # outside nodes with C* - u <= 0
    C_star: float
    reports: tuple[SolveReport, ...]
    bound: float

    @property
    def max_principle(self) -> bool:
        return max_principle_ok(self.u.values, self.bound)


def extract_signed(problem: DistanceProblem, C_star: float, tol: float = 1e-12,
                   floor: float = LOG_FLOOR, method: str = "lu", maxit: int | None = None) -> SignedResult:
    """``C* - u`` is formed as ``(C* - M) + w`` from the complement solve, never by cancellation."""
    grid = problem.grid
    g = np.broadcast_to(np.asarray(problem.g, dtype=float), grid.shape)
    if C_star < float(g[grid.face_mask].max()):
        raise ValueError("C* must be at least max g")
    pair = problem.solve_pair(tol, method, maxit)
    u = pair.u
    inside = problem.shape.signed_distance(grid.coords) <= 0
    gap = (C_star - pair.M) + pair.w.values
    nonpositive = ~inside & (gap <= 0)
    arg = np.where(inside, u.values, gap)
    flagged = arg < floor
    s = math.sqrt(problem.a)
    safe = np.maximum(arg, floor)
    U = np.where(inside, s * np.log(safe), -s * np.log(safe))
    return SignedResult(ScalarField(grid, U), u, omega_star_mask(grid, problem.shape), inside, flagged,
                        nonpositive, float(C_star), pair.reports, problem.bound)


# probes ------------------------------------------------------------------------

def probe_points(grid: Grid, region: Callable[[np.ndarray], np.ndarray], spacing: float | None = None,
                 extra=None) -> np.ndarray:
    """Off-grid lattice points accepted by ``region``, plus optional ``extra`` points.

    The lattice spacing defaults to ``2h`` and is shifted off the node lattice.
    """
    h = float(grid.h.max())
    spacing = 2 * h if spacing is None else float(spacing)
    axes = [np.arange(lo + 0.37 * h, hi, spacing) for lo, hi in zip(grid.lo, grid.hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, grid.dim)
    if extra is not None:
        pts = np.concatenate([pts, np.atleast_2d(np.asarray(extra, dtype=float))])
    return pts[region(pts)]


def _default_extra(shape: Shape):
    return np.asarray(shape.center)[None, :] if isinstance(shape, Ball) else None


@dataclass(frozen=True)
class ProbeError:
    sup_err: float
    n_probes: int
    n_flagged: int


def sup_error_distance(res: DistanceResult, shape: Shape, collar: float | None = None) -> ProbeError:
    """Sup of ``|p_a - d|`` over probes in ``A`` at least ``collar`` (default ``2h``) from ``dA``."""
    grid = res.p.grid
    collar = 2 * float(grid.h.max()) if collar is None else collar
    pts = probe_points(grid, lambda x: shape.signed_distance(x) <= -collar, extra=_default_extra(shape))
    bad = interpolate(ScalarField(grid, res.flagged.astype(float)), pts) > 0
    good = pts[~bad]
    if len(good) == 0:
        raise DistanceError("no unflagged probe points")
    err = np.abs(interpolate(res.p, good) + shape.signed_distance(good))
    return ProbeError(float(err.max()), len(pts), int(bad.sum()))


def sup_error_signed(res: SignedResult, shape: Shape, collar: float | None = None) -> ProbeError:
    """Sup of ``|U_a - signed distance|`` over probes in Omega* at least ``collar`` from ``dA``."""
    grid = res.U.grid
    collar = 2 * float(grid.h.max()) if collar is None else collar

    def region(x):
        sd = shape.signed_distance(x)
        return (np.abs(sd) >= collar) & omega_star_mask(grid, shape, x)

    pts = probe_points(grid, region, extra=_default_extra(shape))
    bad = interpolate(ScalarField(grid, (res.flagged | res.nonpositive).astype(float)), pts) > 0
    good = pts[~bad]
    if len(good) == 0:
        raise DistanceError("no unflagged probe points")
    err = np.abs(interpolate(res.U, good) - shape.signed_distance(good))
    return ProbeError(float(err.max()), len(pts), int(bad.sum()))


# rate studies --------------------------------------------------------------------

MODELS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "sqrt_a_log": lambda a: np.sqrt(a) * np.log(1 / a),
    "a_pow_0.45": lambda a: a ** 0.45,
    "a_pow_0.4": lambda a: a ** 0.4,
    "a_pow_0.3": lambda a: a ** 0.3,
}
# fitted for reference only; not a candidate for the best-model label
REFERENCE_MODELS: dict[str, Callable[[np.ndarray], np.ndarray]] = {"sqrt_a": np.sqrt}
POWER_FAMILY = ("a_pow_0.45", "a_pow_0.4", "a_pow_0.3")


@dataclass(frozen=True)
class Fit:
    c: float
    r2: float


def fit_model(a, err, model: Callable[[np.ndarray], np.ndarray]) -> Fit:
    """One-constant fit ``err ~ c * model(a)`` by least squares in log space; R^2 in log space."""
    a, err = np.asarray(a, dtype=float), np.asarray(err, dtype=float)
    if np.any(err <= 0):
        raise ValueError("errors must be positive for a log-space fit")
    le, lm = np.log(err), np.log(model(a))
    logc = float(np.mean(le - lm))
    ss_res = float(np.sum((le - lm - logc) ** 2))
    ss_tot = float(np.sum((le - le.mean()) ** 2))
    return Fit(math.exp(logc), 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan"))


@dataclass(frozen=True)
class RatePoint:
    a: float
    h: float
    sup_err: float
    flagged_nodes: int = 0
    max_principle: bool = True
    iterations: int = 0


@dataclass(frozen=True, eq=False)
class RateStudy:
    points: tuple[RatePoint, ...]
    fits: dict[str, Fit] = field(default_factory=dict)

    def __post_init__(self):
        a = self.a_values
        if np.any(np.diff(a) >= 0):
            raise ValueError("a values must be strictly decreasing")
        if not np.all(np.isfinite(self.sup_errors)):
            raise ValueError("errors must be finite")
        if not self.fits and len(a) >= 2:
            fits = {k: fit_model(a, self.sup_errors, m) for k, m in {**MODELS, **REFERENCE_MODELS}.items()}
            object.__setattr__(self, "fits", fits)

    @property
    def a_values(self) -> np.ndarray:
        return np.array([p.a for p in self.points])

    @property
    def sup_errors(self) -> np.ndarray:
        return np.array([p.sup_err for p in self.points])

    @property
    def best_model(self) -> str:
        """Highest-R^2 candidate; ``"none"`` when fewer than two points were fitted."""
        if not self.fits:
            return "none"
        return max(MODELS, key=lambda k: self.fits[k].r2)

    @property
    def best_power_r2(self) -> float:
        return max(self.fits[k].r2 for k in POWER_FAMILY)

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.sup_errors) < 0))

    @property
    def floor_contaminated(self) -> bool:
        """An error grows by more than 10% as ``a`` decreases."""
        e = self.sup_errors
        return bool(np.any(e[1:] > 1.1 * e[:-1]))

    @property
    def max_principle(self) -> bool:
        return all(p.max_principle for p in self.points)


def rate_study(family: Callable[[float], RatePoint], a_values: Sequence[float], threads: int = 1) -> RateStudy:
    a_values = [float(a) for a in a_values]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            pts = list(pool.map(family, a_values))
    else:
        pts = [family(a) for a in a_values]
    return RateStudy(tuple(pts))


def write_rate_csv(study: RateStudy, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "h", "sup_err", "flagged_nodes"])
        for p in study.points:
            w.writerow([f"{p.a:.17g}", f"{p.h:.17g}", f"{p.sup_err:.17g}", p.flagged_nodes])


# problem families ------------------------------------------------------------------

def ode_family_1d(zeta: int = 0, n_probe: int = 4001) -> Callable[[float], RatePoint]:
    """Closed-form family on ``(-2, 2)`` with ``A = (-1, 1)`` and ``g = 1``.

    ``zeta = 0`` uses ``f = chi_{1 < |x| < 2}``; ``zeta = 1`` uses ``f = (|x| - 1)_+``.
    Probes cover the closed interval ``[-1, 1]``.
    """
    if zeta == 0:
        pieces, bound = [1.0, 0.0, 1.0], 1.0
    elif zeta == 1:
        pieces, bound = [(-1.0, -1.0), 0.0, (-1.0, 1.0)], 1.0
    else:
        raise ValueError("zeta must be 0 or 1")
    x = np.linspace(-1.0, 1.0, n_probe)
    d = 1.0 - np.abs(x)

    def run(a: float) -> RatePoint:
        sol = solve_ode_1d(a, [-2.0, -1.0, 1.0, 2.0], pieces, (1.0, 1.0))
        u = sol(x)
        flagged = u < LOG_FLOOR
        p = -math.sqrt(a) * np.log(np.maximum(u, LOG_FLOOR))
        err = float(np.max(np.abs(p - d)[~flagged]))
        return RatePoint(a, 0.0, err, int(flagged.sum()), max_principle_ok(u, bound))

    return run


def disc_grid(a: float, half_width: float = 2.0, dim: int = 2, ratio: float = 0.25) -> Grid:
    """Box ``[-half_width, half_width]^dim`` with ``h <= ratio * sqrt(a)``."""
    return Grid.with_spacing([-half_width] * dim, [half_width] * dim, ratio * math.sqrt(a))


def disc_family(radius: float = 1.0, half_width: float = 2.0, g: float = 1.0, tol: float = 1e-12,
                ratio: float = 0.25) -> Callable[[float], RatePoint]:
    """Grid family: disc ``A`` in a square box, ``f = chi`` outside, ``h <= ratio * sqrt(a)``."""
    shape = Ball((0.0, 0.0), radius)

    def run(a: float) -> RatePoint:
        grid = disc_grid(a, half_width, 2, ratio)
        res = extract_distance(DistanceProblem.indicator(grid, shape, a, 1.0, g), tol)
        pe = sup_error_distance(res, shape)
        return RatePoint(a, float(grid.h.max()), pe.sup_err, int(res.flagged.sum()), res.max_principle,
                         sum(r.iterations for r in res.reports))

    return run


def signed_disc_family(radius: float = 1.0, half_width: float = 2.0, C_star: float = 1.0, g: float = 1.0,
                       tol: float = 1e-12, ratio: float = 0.25) -> Callable[[float], RatePoint]:
    shape = Ball((0.0, 0.0), radius)

    def run(a: float) -> RatePoint:
        grid = disc_grid(a, half_width, 2, ratio)
        res = extract_signed(DistanceProblem.indicator(grid, shape, a, C_star, g), C_star, tol)
        pe = sup_error_signed(res, shape)
        return RatePoint(a, float(grid.h.max()), pe.sup_err, int((res.flagged | res.nonpositive).sum()),
                         res.max_principle, sum(r.iterations for r in res.reports))

    return run


# volume means ----------------------------------------------------------------------

def ball_rule(dim: int, eps: float, n_r: int = 32, n_ang: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights of a product rule for the mean over ``B_eps(0)``; weights sum to one."""
    if dim == 1:
        x, w = np.polynomial.legendre.leggauss(2 * n_r)
        return (eps * x)[:, None], w / 2
    r, wr = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * eps * (r + 1)
    wr = 0.5 * eps * wr
    if dim == 2:
        th = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
        R, T = np.meshgrid(r, th, indexing="ij")
        W = (wr * r)[:, None] * np.full(n_ang, 2 * np.pi / n_ang)
        pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
    elif dim == 3:
        ct, wct = np.polynomial.legendre.leggauss(n_ang // 2)
        ph = 2 * np.pi * (np.arange(n_ang) + 0.5) / n_ang
        Rr, C, P = np.meshgrid(r, ct, ph, indexing="ij")
        S = np.sqrt(1 - C ** 2)
        pts = np.stack([Rr * S * np.cos(P), Rr * S * np.sin(P), Rr * C], axis=-1).reshape(-1, 3)
        W = (wr * r ** 2)[:, None, None] * wct[None, :, None] * np.full(n_ang, 2 * np.pi / n_ang)
    else:
        raise ValueError("ball means are implemented for N in {1, 2, 3}")
    W = W.ravel()
    return pts, W / W.sum()


def volume_mean(func: Callable[[np.ndarray], np.ndarray], y, eps: float, **rule) -> np.ndarray:
    """``V_eps(func)(y)`` for each row of ``y``."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    off, w = ball_rule(y.shape[1], eps, **rule)
    vals = func(y[:, None, :] + off[None, :, :])
    return vals @ w


@dataclass(frozen=True)
class MeanRow:
    a: float
    eps: float
    y_index: int
    Vu: float
    Vf: float

    @property
    def gap(self) -> float:
        return abs(self.Vu - self.Vf)


def volume_mean_check(problem: DistanceProblem, u: ScalarField, f_func: Callable[[np.ndarray], np.ndarray],
                      eps: float, samples) -> list[MeanRow]:
    """Means of ``u`` (interpolated) and ``f`` (exact) over ``B_eps(y)`` at boundary samples ``y``."""
    y = np.atleast_2d(np.asarray(samples, dtype=float))
    if np.any(boundary_distance(problem.grid, y) <= eps):
        raise ValueError("ball B_eps(y) leaves the grid box")
    Vu = volume_mean(lambda x: interpolate(u, x.reshape(-1, x.shape[-1])).reshape(x.shape[:-1]), y, eps)
    Vf = volume_mean(f_func, y, eps)
    return [MeanRow(problem.a, eps, i, float(a_), float(b_)) for i, (a_, b_) in enumerate(zip(Vu, Vf))]


def beta_a(u: ScalarField, boundary_points) -> float:
    """Minimum of interpolated ``u`` over boundary samples."""
    return float(np.min(interpolate(u, np.atleast_2d(boundary_points))))


def write_mean_csv(rows: Sequence[MeanRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "eps", "y_index", "Vu", "Vf", "gap"])
        for r in rows:
            w.writerow([f"{r.a:.17g}", f"{r.eps:.17g}", r.y_index, f"{r.Vu:.17g}", f"{r.Vf:.17g}",
                        f"{r.gap:.17g}"])


@dataclass(frozen=True)
class ZetaEstimate:
    slopes: np.ndarray  # per boundary sample
    k: int

    @property
    def min(self) -> float:
        return float(self.slopes.min())

    @property
    def median(self) -> float:
        return float(np.median(self.slopes))

    @property
    def max(self) -> float:
        return float(self.slopes.max())


def zeta_probe(f_func: Callable[[np.ndarray], np.ndarray], shape: Shape, eps_list: Sequence[float], k: int = 1,
               m: int = 16, n_r: int = 48, n_ang: int = 256) -> ZetaEstimate:
    """Slope of ``log V_eps(f^k)`` against ``log eps``, divided by ``k``, at ``m`` boundary samples."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    eps = np.sort(np.asarray(eps_list, dtype=float))
    if eps[0] <= 0 or math.log10(eps[-1] / eps[0]) < 2 - 1e-9:
        raise ValueError("eps list must span at least two decades")
    y = shape.sample_boundary(m).points
    V = np.stack([volume_mean(lambda x: f_func(x) ** k, y, e, n_r=n_r, n_ang=n_ang) for e in eps], axis=1)
    if np.any(V <= 0):
        raise DistanceError("f vanishes identically near a boundary sample")
    le = np.log(eps)
    slopes = np.array([np.polyfit(le, np.log(v), 1)[0] for v in V]) / k
    return ZetaEstimate(slopes, k)
