"""The MR density phi, the signed measure mu, and the quadrature engine.

On a rectangle X = [lo, hi]^2 the measure is

    mu(A) = int_{A cap bd X} (x . n) f dsigma - int_A phi dx,

with phi(x) = x . grad f(x) + (N + 1) f(x).  Only the top edges (x_n = hi)
carry positive boundary mass; bottom edges carry -lo * f, which vanishes on
the unit square.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EvalOutsideSupport, OverlappingRegions, RegionOutsideSupport
from .numerics import gl_points


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-9
    max_depth: int = 40
    grid_fallback: int = 2001

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")


DEFAULT_QUAD = QuadratureConfig()


def composite_simpson(func, a, b, n):
    """Composite Simpson rule on n points (n forced odd)."""
    if n % 2 == 0:
        n += 1
    x = np.linspace(a, b, n)
    y = np.array([func(t) for t in x])
    h = (b - a) / (n - 1)
    return h / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())


def adaptive_simpson(func, a, b, cfg=DEFAULT_QUAD, return_error=False):
    """Adaptive Simpson quadrature of a scalar function on [a, b].

    Intervals are bisected until the Richardson error estimate of each piece
    falls below its share of ``cfg.abs_tol``.  If any piece hits
    ``cfg.max_depth`` without converging, the whole integral is recomputed
    with composite Simpson on ``cfg.grid_fallback`` points.
    """
    if b == a:
        return (0.0, 0.0) if return_error else 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    fa, fm, fb = func(a), func(0.5 * (a + b)), func(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    stack = [(a, b, fa, fm, fb, whole, cfg.abs_tol, 0)]
    total, err = 0.0, 0.0
    failed = False
    while stack:
        lo, hi, flo, fmid, fhi, s, tol, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl = func(0.5 * (lo + mid))
        fr = func(0.5 * (mid + hi))
        left = (mid - lo) / 6.0 * (flo + 4.0 * fl + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * fr + fhi)
        delta = left + right - s
        if abs(delta) <= 15.0 * tol or depth >= cfg.max_depth:
            if depth >= cfg.max_depth and abs(delta) > 15.0 * tol:
                failed = True
                break
            total += left + right + delta / 15.0
            err += abs(delta) / 15.0
        else:
            stack.append((lo, mid, flo, fl, fmid, left, 0.5 * tol, depth + 1))
            stack.append((mid, hi, fmid, fr, fhi, right, 0.5 * tol, depth + 1))
    if failed:
        total = composite_simpson(func, a, b, cfg.grid_fallback)
        err = float("nan")
    if return_error:
        return sign * total, err
    return sign * total


def integrate_split(func, breaks, cfg=DEFAULT_QUAD):
    """Adaptive Simpson over consecutive pieces of a sorted break list."""
    breaks = sorted(set(float(b) for b in breaks))
    return sum(adaptive_simpson(func, lo, hi, cfg) for lo, hi in zip(breaks[:-1], breaks[1:]) if hi > lo)


# ---------------------------------------------------------------------------
# phi


def phi(model, x):
    """MR density x . grad f + (N + 1) f at a point (or array of points).

    ``x`` has trailing axis of length ``model.dims``.
    """
    x = np.asarray(x, dtype=float)
    if not model.contains(x, closed=True):
        raise EvalOutsideSupport(f"point outside the type space: {x}")
    return model.phi(x)


def phi_1d(marginal, x):
    """Single-good MR density x g'(x) + 2 g(x)."""
    x = np.asarray(x, dtype=float)
    lo, hi = marginal.support
    if np.any(x < lo) or np.any(x > hi):
        raise EvalOutsideSupport(f"point outside support [{lo}, {hi}]")
    return x * marginal.dg(x) + 2.0 * marginal.g(x)


# ---------------------------------------------------------------------------
# regions


@dataclass(frozen=True)
class Region2D:
    """A piece of the two-dimensional type space.

    kind is one of ``"rectangle"``, ``"band"`` or ``"top_edge"``.

    rectangle: ``x1_range`` x ``x2_range``.
    band: points ``(y, 1) - (1 - t) * (n1, 1)`` for ``y`` in ``x1_range``
        and ``lower(y) <= t <= upper(y)`` (``upper`` defaults to the top edge).
        The shear has unit Jacobian.  ``mirror`` swaps the two coordinates.
    top_edge: the segment of edge ``x2 = hi`` (edge=2) or ``x1 = hi``
        (edge=1) with the free coordinate in ``x1_range``.
    """

    kind: str
    x1_range: tuple
    x2_range: tuple = (0.0, 1.0)
    lower: Optional[Callable] = None
    upper: Optional[Callable] = None
    n1: float = 0.0
    mirror: bool = False
    edge: int = 2
    breaks: tuple = field(default_factory=tuple)

    def contains(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if self.kind == "rectangle":
            (a, b), (c, d) = self.x1_range, self.x2_range
            return (x1 >= a) & (x1 <= b) & (x2 >= c) & (x2 <= d)
        if self.kind == "top_edge":
            return np.zeros(np.broadcast(x1, x2).shape, dtype=bool)
        if self.mirror:
            x1, x2 = x2, x1
        y = x1 + (1.0 - x2) * self.n1
        a, b = self.x1_range
        inside = (y >= a) & (y <= b)
        yc = np.clip(y, a, b)
        low = np.asarray(self.lower(yc), dtype=float)
        up = 1.0 if self.upper is None else np.asarray(self.upper(yc), dtype=float)
        return inside & (x2 >= low) & (x2 <= up)


def _edge_mass(model, edge, lo, hi, cfg):
    top = model.bounds[1]
    if edge == 2:
        fn = lambda s: float(model.f2(s, top))
    else:
        fn = lambda s: float(model.f2(top, s))
    return top * adaptive_simpson(fn, lo, hi, cfg)


def _check_inside(model, a, b):
    lo, hi = model.bounds
    if a < lo - 1e-12 or b > hi + 1e-12:
        raise RegionOutsideSupport(f"range [{a}, {b}] outside [{lo}, {hi}]")


def _piecewise_gl(model, xb, yb, n=6):
    """Tensor Gauss-Legendre over the cells cut by two break lists.

    Table marginals are polynomial between knots, so a low-order rule per
    cell is exact where adaptive bisection would stall on the kinks.
    """
    def cells(b):
        lo, hi = b[0], b[1]
        pts = np.unique([v for v in b if lo <= v <= hi])
        return pts[:-1], pts[1:]

    x, wx = gl_points(*cells(xb), n)
    y, wy = gl_points(*cells(yb), n)
    x, wx, y, wy = x.ravel(), wx.ravel(), y.ravel(), wy.ravel()
    vals = model.phi2(x[:, None], y[None, :])
    return float(wx @ vals @ wy)


def mu_of_region(model, r, cfg=DEFAULT_QUAD):
    """Signed measure of a region of the two-dimensional type space.

    Interior part by nested adaptive Simpson (outer pieces split at
    ``r.breaks``); boundary part as line integrals of (x . n) f.
    """
    lo, hi = model.bounds
    if r.kind == "top_edge":
        a, b = r.x1_range
        _check_inside(model, a, b)
        return _edge_mass(model, r.edge, a, b, cfg)
    if r.kind == "rectangle":
        (a, b), (c, d) = r.x1_range, r.x2_range
        _check_inside(model, a, b)
        _check_inside(model, c, d)
        if b <= a or d <= c:
            return 0.0
        knots = model.marginal.knots if model.marginal is not None else ()
        if knots:
            val = -_piecewise_gl(model, [a, b, *r.breaks, *knots], [c, d, *knots])
        else:
            inner = lambda s: adaptive_simpson(lambda t: float(model.phi2(s, t)), c, d, cfg)
            val = -integrate_split(inner, [a, b, *[p for p in r.breaks if a < p < b]], cfg)
        if d >= hi:
            val += _edge_mass(model, 2, a, b, cfg)
        if b >= hi:
            val += _edge_mass(model, 1, c, d, cfg)
        if lo != 0.0:
            if c <= lo:
                val -= lo * adaptive_simpson(lambda s: float(model.f2(s, lo)), a, b, cfg)
            if a <= lo:
                val -= lo * adaptive_simpson(lambda s: float(model.f2(lo, s)), c, d, cfg)
        return val
    if r.kind == "band":
        a, b = r.x1_range
        if b <= a:
            return 0.0

        def point(y, t):
            x1 = y - (1.0 - t) * r.n1
            return (t, x1) if r.mirror else (x1, t)

        def inner(y):
            low = float(r.lower(y))
            up = 1.0 if r.upper is None else float(r.upper(y))
            if up <= low:
                return 0.0
            return adaptive_simpson(lambda t: float(model.phi2(*point(y, t))), low, up, cfg)

        for y in (a, b):
            low = float(r.lower(y))
            if r.upper is not None and float(r.upper(y)) <= low:
                continue
            x1, x2 = point(y, max(low, 0.0))
            if x1 < lo - 1e-9 or x1 > hi + 1e-9 or x2 < lo - 1e-9:
                raise RegionOutsideSupport(f"band leaves the type space near y={y}")
        val = -integrate_split(inner, [a, b, *[p for p in r.breaks if a < p < b]], cfg)
        if r.upper is None:
            ta, tb = max(a, lo), min(b, hi)
            if tb > ta:
                ff = (lambda s: float(model.f2(hi, s))) if r.mirror else (lambda s: float(model.f2(s, hi)))
                val += hi * adaptive_simpson(ff, ta, tb, cfg)
        return val
    raise ValueError(f"unknown region kind {r.kind!r}")


def _overlap_check(regions, tol=1e-4, n=4000, seed=7):
    if len(regions) < 2:
        return
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    counts = np.zeros(n, dtype=int)
    for r in regions:
        counts += r.contains(pts[:, 0], pts[:, 1]).astype(int)
    if np.mean(counts > 1) > tol:
        raise OverlappingRegions("supplied demand regions overlap with positive area")


def mr_minus(model, regions, cfg=DEFAULT_QUAD):
    """MR_-(Q) = -mu(D(Q)) for D(Q) given as disjoint regions."""
    _overlap_check(regions)
    return -sum(mu_of_region(model, r, cfg) for r in regions)


def mr_plus(model, complement_regions, cfg=DEFAULT_QUAD):
    """MR_+(Q) = 1 + mu(D(Q^c))."""
    _overlap_check(complement_regions)
    return 1.0 + sum(mu_of_region(model, r, cfg) for r in complement_regions)


def mu_total(model, cfg=DEFAULT_QUAD):
    """mu of the whole square (should be -1)."""
    lo, hi = model.bounds
    return mu_of_region(model, Region2D("rectangle", (lo, hi), (lo, hi)), cfg)


def interior_integral_gl(model, x1_lo, x1_hi, lower, upper, n=24):
    """Gauss-Legendre double integral of phi over {x1 in range, lower<=x2<=upper}."""
    y, wy = gl_points(x1_lo, x1_hi, n)
    lo2 = lower(y)
    up2 = upper(y)
    t, wt = gl_points(lo2, np.maximum(up2, lo2), n)
    vals = model.phi2(y[..., None], t)
    return float(np.sum(np.sum(vals * wt, axis=-1) * wy))
