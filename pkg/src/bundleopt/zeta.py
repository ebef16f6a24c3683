"""The threshold curve zeta_k and its shape classification.

For a top-boundary type x1 the screening path runs from (x1, 1) along
-n_k with n_k = (1/k - 1, 1); a point at height t sits at
(x1 - (1 - t)(1/k - 1), t).  zeta_k(x1) is the largest height t such that
the MR density integrated along the path from t up to the top edge still
covers the boundary mass f(x1, 1).
"""

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dist import Regularity
from .errors import DerivativeUnavailable, NotRegular
from .numerics import bisect_vec, gl_points

log = logging.getLogger(__name__)

ZETA_TOL = 1e-12
GRID_POINTS = 401


def shear(k):
    """The first component of n_k, i.e. 1/k - 1."""
    return 1.0 / k - 1.0


def z_k(k, y):
    """Participation/feasibility boundary z_k of the upper half-square.

    The smallest height t at which the sheared point of abscissa y still
    lies in {0 <= x1 <= x2}.
    """
    y = np.asarray(y, dtype=float)
    if k == 1.0:
        return np.maximum(y, 0.0)
    if k == 0.5:
        return np.clip(1.0 - y, 0.0, 1.0)
    diag = (k * y + k - 1.0) / (2.0 * k - 1.0)
    if k < 1.0:
        left = (k * y + k - 1.0) / (k - 1.0)
        return np.clip(np.maximum(left, diag), 0.0, 1.0)
    return np.clip(diag, 0.0, 1.0)


def z_k_kinks(k):
    """Abscissae in (0, 1) where z_k has a kink."""
    if 0.5 < k < 1.0:
        return [(1.0 - k) / k]
    return []


def reference_line(k, x):
    """Line against which zeta_k crossings are counted."""
    x = np.asarray(x, dtype=float)
    if k == 1.0:
        return x
    if k == 0.5:
        return 1.0 - x
    return (k * x + k - 1.0) / (2.0 * k - 1.0)


def feasibility_floor(k, x):
    """Smallest height keeping the projected point inside the unit square."""
    x = np.asarray(x, dtype=float)
    if k == 1.0:
        return np.zeros_like(x)
    if k < 1.0:
        return np.clip(1.0 - x * k / (1.0 - k), 0.0, 1.0)
    return np.clip(1.0 - (1.0 - x) * k / (k - 1.0), 0.0, 1.0)


def path_point(k, y, t):
    """Point (y, 1) - (1 - t) n_k."""
    return y - (1.0 - t) * shear(k), t


def defining_integral(model, k, x, t, n=48):
    """int_t^1 phi(path) dx2 - f(x, 1), vectorized over matching x, t."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    x, t = np.broadcast_arrays(x, t)
    s, w = gl_points(t, np.ones_like(t), n)
    p1, p2 = path_point(k, x[..., None], s)
    top = model.bounds[1]
    return np.sum(model.phi2(p1, p2) * w, axis=-1) - model.f2(x, top)


def _require_regular(model):
    if model.regularity not in (Regularity.STRICTLY_REGULAR, Regularity.QUASI_REGULAR):
        raise NotRegular(f"zeta needs a strictly regular or quasi-regular model, got {model.regularity.value}")


def zeta_at(model, k, x1, tol=ZETA_TOL):
    """zeta_k(x1) by bisection on the defining integral (vectorized in x1).

    Strictly regular models: the integral is decreasing in the height, so
    plain bisection applies.  Quasi-regular models: the first downward zero
    crossing above the floor is located on a 64-point scan and refined.
    Returns 0 where the defining set is empty.
    """
    _require_regular(model)
    x = np.atleast_1d(np.asarray(x1, dtype=float))
    # where the top-edge density vanishes the defining set degenerates;
    # zeta is then taken as the limit from the interior
    x = np.where(model.f2(x, model.bounds[1]) > 0, x, np.clip(x, 1e-9, 1.0 - 1e-9))
    floor = feasibility_floor(k, x)
    ones = np.ones_like(x)
    out = np.zeros_like(x)
    if model.regularity == Regularity.STRICTLY_REGULAR:
        at_floor = defining_integral(model, k, x, floor)
        ok = at_floor >= 0
        if np.any(ok):
            fn = lambda t: -defining_integral(model, k, x[ok], t)
            out[ok] = bisect_vec(fn, floor[ok], ones[ok], tol=tol)
    else:
        log.info("zeta_at: quasi-regular model, using scan-then-refine")
        grid = floor[:, None] + (1.0 - floor[:, None]) * np.linspace(0.0, 1.0, 65)[None, :-1]
        vals = defining_integral(model, k, np.repeat(x[:, None], grid.shape[1], axis=1), grid)
        for i in range(x.size):
            if vals[i, 0] < 0:
                continue
            neg = np.nonzero(vals[i] < 0)[0]
            if neg.size == 0:
                lo, hi = grid[i, -1], 1.0 - 1e-15
            else:
                j = neg[0]
                lo, hi = grid[i, j - 1], grid[i, j]
            fn = lambda t: -defining_integral(model, k, np.array([x[i]]), t)
            out[i] = bisect_vec(fn, np.array([lo]), np.array([hi]), tol=tol)[0]
    return out if np.ndim(x1) else float(out[0])


def zeta_iid(marginal, x, tol=ZETA_TOL):
    """zeta for i.i.d. coordinates and k = 1.

    Solves zeta g(zeta) / (1 - G(zeta)) = h(x) + 2, written without the
    division as zeta g(zeta) - (h(x) + 2)(1 - G(zeta)) = 0; the left side is
    negative at 0 and positive just below 1.
    """
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    rhs = marginal.h_raw(xa) + 2.0
    out = np.zeros_like(xa)
    ok = rhs > 0
    if np.any(ok):
        r = rhs[ok]
        fn = lambda z: z * marginal.g(z) - r * (1.0 - marginal.G(z))
        lo = np.zeros_like(r)
        hi = np.full_like(r, 1.0 - 1e-15)
        out[ok] = bisect_vec(fn, lo, hi, tol=tol)
    return out if np.ndim(x) else float(out[0])


def zeta_derivs(marginal, x):
    """(zeta', zeta'') for i.i.d. coordinates and k = 1.

    zeta'  = h'(x) zeta / ((h + 2)(h(zeta) + h + 3))
    zeta'' = h''(x) zeta'/h'(x) - [(h(zeta) + 2h + 4)/zeta
             + h'(zeta)/(h(zeta) + h + 3)] zeta'^2

    The ratio zeta'/h' is evaluated in closed form, so h'(x) = 0 is fine.
    """
    if not marginal.has_analytic_h():
        raise DerivativeUnavailable(f"no analytic h' for kind {marginal.kind}")
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    z = np.atleast_1d(zeta_iid(marginal, xa))
    # on the zero plateau (and at singular endpoints) the formulas are not
    # used; silence the arithmetic there
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        hx, dhx, d2hx = marginal._h(xa), marginal._dh(xa), marginal._d2h(xa)
        zs = np.where(z > 0, z, 0.5)
        hz, dhz = marginal._h(zs), marginal._dh(zs)
        denom2 = hz + hx + 3.0
        ratio = zs / ((hx + 2.0) * denom2)
        d1 = dhx * ratio
        # h'' zeta' / h' simplifies to h'' * ratio, which stays finite at h' = 0
        first_term = d2hx * ratio
        d2 = first_term - ((hz + 2.0 * hx + 4.0) / zs + dhz / denom2) * d1 ** 2
    d1 = np.where(z > 0, d1, 0.0)
    d2 = np.where(z > 0, d2, 0.0)
    if np.ndim(x):
        return d1, d2
    return float(d1[0]), float(d2[0])


# ---------------------------------------------------------------------------
# closed forms


def closed_form_tag(model, k):
    """Closed-form tag for the (model, k) pair, or None."""
    if not model.iid:
        return None
    m = model.marginal
    if m.support != (0.0, 1.0):
        return None
    if m.kind == "uniform" or (m.kind == "power_law" and m.params["theta"] == 0.0 and m.params["eta"] == 1.0):
        return ("UniformConst",) if k == 1.0 else ("UniformStep", k)
    if k != 1.0:
        return None
    if m.kind == "power_law" and m.params["theta"] == 0.0:
        return ("PowerLawConst", m.params["eta"])
    if m.kind == "beta" and m.params["alpha"] == 1.0:
        return ("BetaAlpha1", m.params["beta"])
    return None


def closed_form_zeta(tag, x):
    """Evaluate a closed-form zeta by tag (see :func:`closed_form_tag`)."""
    x = np.asarray(x, dtype=float)
    name = tag[0]
    if name == "UniformConst":
        return np.full_like(x, 2.0 / 3.0)
    if name == "PowerLawConst":
        eta = tag[1]
        return np.full_like(x, ((eta + 1.0) / (2.0 * eta + 1.0)) ** (1.0 / eta))
    if name == "BetaAlpha1":
        b = tag[1]
        val = (2.0 - (b + 1.0) * x) / ((b + 2.0) - (2.0 * b + 1.0) * x)
        return np.where(x <= 2.0 / (b + 1.0), val, 0.0)
    if name == "UniformStep":
        k = tag[1]
        if k == 1.0:
            return np.full_like(x, 2.0 / 3.0)
        if k < 1.0:
            return np.where(x < (1.0 - k) / (3.0 * k), 0.0, 2.0 / 3.0)
        return np.where(x <= (2.0 * k + 1.0) / (3.0 * k), 2.0 / 3.0, 0.0)
    raise ValueError(f"unknown closed form {tag}")


# ---------------------------------------------------------------------------
# evaluators


class ZetaFunction:
    """Exact, vectorized zeta_k for one model, with a derivative.

    i.i.d. models at k = 1 use :func:`zeta_iid`; everything else goes
    through :func:`zeta_at`.
    """

    def __init__(self, model, k):
        _require_regular(model)
        self.model = model
        self.k = float(k)
        self._fast = model.iid and self.k == 1.0 and model.bounds == (0.0, 1.0)

    def __call__(self, x):
        if self._fast:
            return zeta_iid(self.model.marginal, x)
        return zeta_at(self.model, self.k, x)

    def derivative(self, x, step=1e-5):
        x = np.asarray(x, dtype=float)
        if self._fast and self.model.marginal.has_analytic_h():
            return zeta_derivs(self.model.marginal, x)[0]
        xp = np.minimum(x + step, 1.0)
        xm = np.maximum(x - step, 0.0)
        return (self(xp) - self(xm)) / (xp - xm)


# ---------------------------------------------------------------------------
# sampled curve and shape


class Monotonicity(str, enum.Enum):
    NONDECREASING = "Nondecreasing"
    NONINCREASING = "Nonincreasing"
    NONMONOTONE = "Nonmonotone"


class Curvature(str, enum.Enum):
    CONVEX = "Convex"
    CONCAVE = "Concave"
    MIXED = "Mixed"


@dataclass(frozen=True)
class ShapeReport:
    monotonicity: Monotonicity
    curvature: Curvature
    nondecreasing: bool
    nonincreasing: bool
    convex: bool
    concave: bool
    crossings: tuple
    double_regular: bool
    x_cvx_intervals: tuple
    zero_plateaus: tuple
    x_zeta: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ZetaCurve:
    k: float
    xs: np.ndarray
    values: np.ndarray
    closed_form: Optional[tuple]
    shape: Optional[ShapeReport]
    edge_case: bool = False
    evaluator: Optional[Callable] = field(default=None, repr=False)

    def __call__(self, x):
        if self.evaluator is not None:
            return self.evaluator(x)
        return np.interp(x, self.xs, self.values)


def sample_zeta(model, k, n=GRID_POINTS):
    """Sample zeta_k on a uniform n-point grid of [0, 1] and classify it."""
    fn = ZetaFunction(model, k)
    xs = np.linspace(0.0, 1.0, n)
    vals = np.asarray(fn(xs), dtype=float)
    curve = ZetaCurve(float(k), xs, vals, closed_form_tag(model, k), None, edge_case=k > 1.0, evaluator=fn)
    shape = classify_shape(curve, k)
    return ZetaCurve(curve.k, xs, vals, curve.closed_form, shape, curve.edge_case, fn)


def _intervals(mask, xs):
    out = []
    i, n = 0, len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j + 1 < n and mask[j + 1]:
                j += 1
            out.append((float(xs[i]), float(xs[j])))
            i = j + 1
        else:
            i += 1
    return out


def classify_shape(curve, k, tol_rel=1e-7):
    """Monotonicity, curvature, crossings and convexity intervals of a curve.

    Curvature is judged away from zero plateaus (where zeta_k hits its
    floor the curve has a kink that belongs to the feasibility clause, not
    to the MR balance).  A curve within tolerance of a constant gets all
    compatible flags.
    """
    xs = np.asarray(curve.xs, dtype=float)
    z = np.asarray(curve.values, dtype=float)
    if len(xs) < 3:
        raise ValueError("need at least three samples")
    scale = max(float(np.max(np.abs(z))), 1e-12)
    tol = tol_rel * scale
    zero = z <= tol
    plateaus = tuple(_intervals(zero, xs))

    d1 = np.diff(z)
    nondec = bool(np.all(d1 >= -tol))
    noninc = bool(np.all(d1 <= tol))
    if nondec:
        mono = Monotonicity.NONDECREASING
    elif noninc:
        mono = Monotonicity.NONINCREASING
    else:
        mono = Monotonicity.NONMONOTONE

    pos = ~zero
    d2 = z[:-2] - 2.0 * z[1:-1] + z[2:]
    valid = pos[:-2] & pos[1:-1] & pos[2:]
    dv = d2[valid]
    convex = bool(np.all(dv >= -tol)) if dv.size else True
    concave = bool(np.all(dv <= tol)) if dv.size else True
    if convex:
        curv = Curvature.CONVEX
    elif concave:
        curv = Curvature.CONCAVE
    else:
        curv = Curvature.MIXED

    ref = reference_line(k, xs)
    diff = z - ref
    crossings = []
    fn = curve.evaluator
    for i in range(len(xs) - 1):
        a, b = diff[i], diff[i + 1]
        if a == 0.0 and (i == 0 or diff[i - 1] != 0.0):
            if i > 0:
                crossings.append(float(xs[i]))
            continue
        if a * b < 0:
            if fn is not None:
                lo, hi = xs[i], xs[i + 1]
                g = lambda t: float(fn(t)) - float(reference_line(k, t))
                glo = g(lo)
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    gm = g(mid)
                    if (gm > 0) == (glo > 0):
                        lo, glo = mid, gm
                    else:
                        hi = mid
                crossings.append(0.5 * (lo + hi))
            else:
                crossings.append(float(xs[i] - a * (xs[i + 1] - xs[i]) / (b - a)))
    x_zeta = crossings[0] if crossings else None

    cvx_mask = np.zeros(len(xs), dtype=bool)
    if x_zeta is not None:
        ok = np.concatenate([[False], d2 >= -tol, [False]])
        inside = (xs > 0) & (xs < x_zeta)
        # an interior point belongs to X_cvx when its local second difference is nonnegative
        cvx_mask = ok & inside & pos
    cvx = tuple((max(a, 0.0), min(b, x_zeta)) for a, b in _intervals(cvx_mask, xs))
    if x_zeta is not None and cvx_mask[1:].any():
        # extend the first and last intervals to the domain ends when they touch the grid ends
        merged = []
        step = xs[1] - xs[0]
        for a, b in cvx:
            a = 0.0 if a <= step + 1e-15 else a
            b = x_zeta if b >= x_zeta - step - 1e-15 else b
            merged.append((a, b))
        cvx = tuple(merged)

    return ShapeReport(
        monotonicity=mono,
        curvature=curv,
        nondecreasing=nondec,
        nonincreasing=noninc,
        convex=convex,
        concave=concave,
        crossings=tuple(crossings),
        double_regular=noninc and concave,
        x_cvx_intervals=cvx,
        zero_plateaus=plateaus,
        x_zeta=x_zeta,
    )
