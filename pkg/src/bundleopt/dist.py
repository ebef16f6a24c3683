"""One-dimensional marginals and symmetric joint type densities.

Each built-in marginal is a kernel k(x) on its support, normalized by
C = 1 / int k.  Closed-form antiderivatives (through scipy.special where
needed) give G; h(x) = x g'(x) / g(x) and its first two derivatives are
analytic so the zeta-derivative formulas can be evaluated exactly.
"""

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.interpolate import PchipInterpolator

from .errors import EvalOutsideSupport, NonPositiveDensity, ParameterOutOfRange

TOL_SIGN = 1e-9

KINDS = ("uniform", "power_law", "trunc_pareto", "trunc_normal", "trunc_gamma", "beta", "table")


class Regularity(str, enum.Enum):
    STRICTLY_REGULAR = "StrictlyRegular"
    QUASI_REGULAR = "QuasiRegular"
    STRICTLY_REVERSED_REGULAR = "StrictlyReversedRegular"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True, eq=False)
class Marginal1D:
    """A normalized density g on ``support`` with evaluators.

    Use :func:`make_marginal` rather than constructing directly.
    """

    kind: str
    params: dict
    support: tuple
    norm_const: float
    _kernel: Callable = field(repr=False)
    _dkernel: Callable = field(repr=False)
    _anti: Callable = field(repr=False)
    _h: Optional[Callable] = field(repr=False, default=None)
    _dh: Optional[Callable] = field(repr=False, default=None)
    _d2h: Optional[Callable] = field(repr=False, default=None)
    knots: tuple = field(repr=False, default=())

    def _check(self, x):
        lo, hi = self.support
        if np.any(np.asarray(x) < lo - 1e-12) or np.any(np.asarray(x) > hi + 1e-12):
            raise EvalOutsideSupport(f"x outside support [{lo}, {hi}]")

    def g(self, x):
        return self.norm_const * self._kernel(np.asarray(x, dtype=float))

    def dg(self, x):
        return self.norm_const * self._dkernel(np.asarray(x, dtype=float))

    def G(self, x):
        x = np.clip(np.asarray(x, dtype=float), *self.support)
        lo = self.support[0]
        return np.clip(self.norm_const * (self._anti(x) - self._anti(lo)), 0.0, 1.0)

    def h_raw(self, x):
        """h without the support check (for internal vectorized use)."""
        x = np.asarray(x, dtype=float)
        if self._h is not None:
            return self._h(x)
        step = 1e-6 * (self.support[1] - self.support[0])
        lo, hi = self.support
        xp = np.minimum(x + step, hi)
        xm = np.maximum(x - step, lo)
        dg = (self.g(xp) - self.g(xm)) / (xp - xm)
        return x * dg / self.g(x)

    def has_analytic_h(self):
        return self._dh is not None


def h(m, x):
    """h(x) = x g'(x) / g(x) for a marginal, analytic where available."""
    x = np.asarray(x, dtype=float)
    lo, hi = m.support
    if np.any(x < lo) or np.any(x > hi):
        raise EvalOutsideSupport(f"x outside support [{lo}, {hi}]")
    return m.h_raw(x)


def _need(cond, msg):
    if not cond:
        raise ParameterOutOfRange(msg)


def _unit_support(support, kind):
    if support is None:
        return (0.0, 1.0)
    lo, hi = float(support[0]), float(support[1])
    _need(hi > lo >= 0.0, f"{kind}: support must satisfy 0 <= lo < hi")
    return (lo, hi)


def make_marginal(kind, params=None, support=None):
    """Build a normalized marginal.

    Args:
        kind: one of ``uniform``, ``power_law`` (theta, eta), ``trunc_pareto``
            (eta), ``trunc_normal`` (theta), ``trunc_gamma`` (eta, lam),
            ``beta`` (alpha, beta), ``table`` (x, g).
        params: parameter dictionary for the kind.
        support: optional ``(lo, hi)``; defaults to ``(0, 1)``.

    Returns:
        Marginal1D

    Raises:
        ParameterOutOfRange, NonPositiveDensity
    """
    params = dict(params or {})
    kind = kind.lower()
    sup = _unit_support(support, kind)
    lo, hi = sup
    zero = lambda x: 0.0 * x

    if kind == "uniform":
        _need(not params, "uniform takes no parameters")
        return Marginal1D(kind, params, sup, 1.0 / (hi - lo), lambda x: 1.0 + 0.0 * x, zero, lambda x: x,
                          zero, zero, zero)

    if kind == "power_law":
        theta = float(params.get("theta", 0.0))
        eta = float(params.get("eta", 1.0))
        _need(theta >= 0.0, "power_law needs theta >= 0")
        _need(eta >= 1.0, "power_law needs eta >= 1")
        params = {"theta": theta, "eta": eta}
        kern = lambda x: (x + theta) ** (eta - 1.0)
        dkern = lambda x: (eta - 1.0) * (x + theta) ** (eta - 2.0) if eta != 1.0 else 0.0 * x
        anti = lambda x: (x + theta) ** eta / eta
        if theta == 0.0:
            hh = lambda x: (eta - 1.0) + 0.0 * x
            dh = d2h = zero
        else:
            hh = lambda x: (eta - 1.0) * x / (x + theta)
            dh = lambda x: (eta - 1.0) * theta / (x + theta) ** 2
            d2h = lambda x: -2.0 * (eta - 1.0) * theta / (x + theta) ** 3
        c = eta / ((hi + theta) ** eta - (lo + theta) ** eta)
        return Marginal1D(kind, params, sup, c, kern, dkern, anti, hh, dh, d2h)

    if kind == "trunc_pareto":
        eta = float(params.get("eta", 1.0))
        _need(0.0 < eta <= 3.0, "trunc_pareto needs eta in (0, 3]")
        params = {"eta": eta}
        kern = lambda x: (1.0 + x) ** (-eta)
        dkern = lambda x: -eta * (1.0 + x) ** (-eta - 1.0)
        if eta == 1.0:
            anti = lambda x: np.log1p(x)
        else:
            anti = lambda x: (1.0 + x) ** (1.0 - eta) / (1.0 - eta)
        hh = lambda x: -eta * x / (x + 1.0)
        dh = lambda x: -eta / (x + 1.0) ** 2
        d2h = lambda x: 2.0 * eta / (x + 1.0) ** 3
        c = 1.0 / (anti(hi) - anti(lo))
        return Marginal1D(kind, params, sup, c, kern, dkern, anti, hh, dh, d2h)

    if kind == "trunc_normal":
        theta = float(params.get("theta", 0.0))
        _need(0.0 <= theta <= 2.0, "trunc_normal needs theta in [0, 2]")
        params = {"theta": theta}
        kern = lambda x: np.exp(-0.5 * (x - theta) ** 2)
        dkern = lambda x: -(x - theta) * np.exp(-0.5 * (x - theta) ** 2)
        anti = lambda x: np.sqrt(2.0 * np.pi) * special.ndtr(x - theta)
        hh = lambda x: x * (theta - x)
        dh = lambda x: theta - 2.0 * x
        d2h = lambda x: -2.0 + 0.0 * x
        c = 1.0 / (anti(hi) - anti(lo))
        return Marginal1D(kind, params, sup, c, kern, dkern, anti, hh, dh, d2h)

    if kind == "trunc_gamma":
        eta = float(params.get("eta", 1.0))
        lam = float(params.get("lam", params.get("lambda", 1.0)))
        _need(0.0 < lam <= 1.0, "trunc_gamma needs lambda in (0, 1]")
        _need(eta >= lam, "trunc_gamma needs eta >= lambda")
        params = {"eta": eta, "lam": lam}
        kern = lambda x: x ** (eta - 1.0) * np.exp(-lam * x)
        dkern = lambda x: ((eta - 1.0) * x ** (eta - 2.0) - lam * x ** (eta - 1.0)) * np.exp(-lam * x) \
            if eta != 1.0 else -lam * np.exp(-lam * x)
        anti = lambda x: special.gamma(eta) * lam ** (-eta) * special.gammainc(eta, lam * x)
        hh = lambda x: eta - 1.0 - lam * x
        dh = lambda x: -lam + 0.0 * x
        d2h = zero
        c = 1.0 / (anti(hi) - anti(lo))
        return Marginal1D(kind, params, sup, c, kern, dkern, anti, hh, dh, d2h)

    if kind == "beta":
        a = float(params.get("alpha", 1.0))
        b = float(params.get("beta", 1.0))
        _need(a > 0 and b > 0, "beta needs alpha, beta > 0")
        _need(sup == (0.0, 1.0), "beta is defined on [0, 1] only")
        params = {"alpha": a, "beta": b}
        kern = lambda x: x ** (a - 1.0) * (1.0 - x) ** (b - 1.0)

        def dkern(x):
            out = 0.0 * x
            if a != 1.0:
                out = out + (a - 1.0) * x ** (a - 2.0) * (1.0 - x) ** (b - 1.0)
            if b != 1.0:
                out = out - (b - 1.0) * x ** (a - 1.0) * (1.0 - x) ** (b - 2.0)
            return out

        anti = lambda x: special.beta(a, b) * special.betainc(a, b, x)
        def _safe(fn):
            def wrapped(x):
                with np.errstate(divide="ignore", invalid="ignore"):
                    return fn(x)
            return wrapped

        hh = _safe(lambda x: (a - 1.0) - (b - 1.0) * x / (1.0 - x))
        dh = _safe(lambda x: -(b - 1.0) / (1.0 - x) ** 2)
        d2h = _safe(lambda x: -2.0 * (b - 1.0) / (1.0 - x) ** 3)
        c = 1.0 / special.beta(a, b)
        return Marginal1D(kind, params, sup, c, kern, dkern, anti, hh, dh, d2h)

    if kind == "table":
        xs = np.asarray(params.get("x"), dtype=float)
        gs = np.asarray(params.get("g"), dtype=float)
        _need(xs.ndim == 1 and xs.size >= 3 and xs.size == gs.size, "table needs matching x and g arrays (>= 3 rows)")
        _need(np.all(np.diff(xs) > 0), "table x must be strictly increasing")
        if np.any(gs <= 0):
            raise NonPositiveDensity("table density must be positive at every grid point")
        sup = (float(xs[0]), float(xs[-1]))
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (gs[1:] + gs[:-1]) * np.diff(xs))])
        total = cum[-1]
        interp = PchipInterpolator(xs, cum / total)
        dinterp = interp.derivative()
        d2interp = interp.derivative(2)
        params = {"x": xs.tolist(), "g": gs.tolist()}
        return Marginal1D(kind, params, sup, 1.0, lambda x: dinterp(x), lambda x: d2interp(x),
                          lambda x: interp(x), knots=tuple(float(v) for v in xs))

    raise ParameterOutOfRange(f"unknown marginal kind {kind!r}")


def read_table_csv(path):
    """Read a two-column (x, g) CSV, header optional, into a table marginal."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except ValueError:
                continue
    arr = np.array(rows)
    return make_marginal("table", {"x": arr[:, 0], "g": arr[:, 1]})


# ---------------------------------------------------------------------------
# joint models


@dataclass(eq=False)
class TypeModel:
    """Joint density over the cube ``[lo, hi]^dims``.

    Either ``marginal`` (i.i.d. coordinates) or the pair ``f_func`` /
    ``grad_func`` is supplied.  Custom callbacks take an array whose last
    axis has length ``dims`` and return f, respectively grad f (same shape
    as the input).
    """

    marginal: Optional[Marginal1D] = None
    dims: int = 2
    f_func: Optional[Callable] = None
    grad_func: Optional[Callable] = None
    bounds: tuple = (0.0, 1.0)
    symmetric: bool = True
    regularity: Optional[Regularity] = None

    def __post_init__(self):
        if self.marginal is not None:
            self.bounds = tuple(self.marginal.support)
        elif self.f_func is None or self.grad_func is None:
            raise ParameterOutOfRange("TypeModel needs a marginal or both f_func and grad_func")
        if self.dims < 1:
            raise ParameterOutOfRange("dims must be positive")
        if self.regularity is None:
            self.regularity = check_strict_regularity(self)

    @property
    def iid(self):
        return self.marginal is not None

    def contains(self, x, closed=True):
        lo, hi = self.bounds
        x = np.asarray(x)
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def f(self, x):
        x = np.asarray(x, dtype=float)
        if self.iid:
            return np.prod(self.marginal.g(x), axis=-1)
        return self.f_func(x)

    def grad_f(self, x):
        x = np.asarray(x, dtype=float)
        if not self.iid:
            return self.grad_func(x)
        g = self.marginal.g(x)
        dg = self.marginal.dg(x)
        out = np.empty_like(x)
        for n in range(x.shape[-1]):
            others = np.prod(np.delete(g, n, axis=-1), axis=-1)
            out[..., n] = dg[..., n] * others
        return out

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return np.sum(x * self.grad_f(x), axis=-1) + (x.shape[-1] + 1) * self.f(x)

    # two-dimensional conveniences with broadcasting
    def f2(self, x1, x2):
        if self.iid:
            m = self.marginal
            return m.g(x1) * m.g(x2)
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return self.f_func(np.stack([x1, x2], axis=-1))

    def phi2(self, x1, x2):
        if self.iid:
            m = self.marginal
            x1 = np.asarray(x1, float)
            x2 = np.asarray(x2, float)
            g1, g2 = m.g(x1), m.g(x2)
            return x1 * m.dg(x1) * g2 + x2 * m.dg(x2) * g1 + 3.0 * g1 * g2
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        return self.phi(np.stack([x1, x2], axis=-1))

    def describe(self):
        if self.iid:
            return {"kind": self.marginal.kind, **self.marginal.params, "dims": self.dims}
        return {"kind": "custom", "dims": self.dims}


def iid_model(marginal, dims=2):
    """Symmetric i.i.d. joint model with the given marginal."""
    return TypeModel(marginal=marginal, dims=dims)


def custom_model(f_func, grad_func, dims=2, bounds=(0.0, 1.0), symmetric=True, regularity=None):
    """Joint model from density and gradient callbacks (last axis = coordinates)."""
    return TypeModel(f_func=f_func, grad_func=grad_func, dims=dims, bounds=tuple(bounds),
                     symmetric=symmetric, regularity=regularity)


def _interior_grid(lo, hi, n):
    if np.isinf(hi):
        hi = lo + 20.0
    return lo + (hi - lo) * (np.arange(n) + 1.0) / (n + 1.0)


def _is_quasi_regular(pos, neg):
    """Grid test: {phi > 0} is a convex lower set split by a concave curve."""
    n = pos.shape[0]
    if not pos.any() or pos.all():
        return False
    if np.mean(~(pos | neg)) > 0.01:
        return False
    heights = np.zeros(n)
    for i in range(n):
        col = pos[i]
        k = int(np.argmin(col)) if not col.all() else n
        if col[k:].any():
            return False
        heights[i] = k
    if np.any(np.diff(heights) > 0):
        return False
    rows = pos.T
    for j in range(n):
        row = rows[j]
        k = int(np.argmin(row)) if not row.all() else n
        if row[k:].any():
            return False
    # concavity of the boundary heights, allowing one grid cell of slack
    inner = heights[(heights > 0) & (heights < n)]
    if inner.size >= 3 and np.any(np.diff(inner, 2) > 2.0):
        return False
    return True


def check_strict_regularity(model, n=201, tol=TOL_SIGN):
    """Classify the sign pattern of phi on an interior grid.

    Two-dimensional models use an n x n grid; higher dimensions use 20000
    seeded uniform samples.
    """
    lo, hi = model.bounds
    if model.dims == 2:
        xs = _interior_grid(lo, hi, n)
        X1, X2 = np.meshgrid(xs, xs, indexing="ij")
        with np.errstate(all="ignore"):
            vals = model.phi2(X1, X2)
    else:
        rng = np.random.default_rng(20240101)
        top = lo + 20.0 if np.isinf(hi) else hi
        pts = lo + (top - lo) * rng.random((20000, model.dims))
        with np.errstate(all="ignore"):
            vals = model.phi(pts)
    vals = np.nan_to_num(vals, nan=0.0)
    if np.all(vals > tol):
        return Regularity.STRICTLY_REGULAR
    if np.all(vals < -tol):
        return Regularity.STRICTLY_REVERSED_REGULAR
    if model.dims == 2 and _is_quasi_regular(vals > tol, vals < -tol):
        return Regularity.QUASI_REGULAR
    return Regularity.UNCLASSIFIED
