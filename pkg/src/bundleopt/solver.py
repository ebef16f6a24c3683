"""Revenue evaluation, the two-good solver (all k), the single-good and
unbounded-support solvers, and the FOC/SOC report.

Revenue is the integral of the indirect utility against mu.  In sheared
coordinates the upper half of the square is swept by columns
(y, 1) - (1 - t) n_k with t in [z_k(y), 1]; types in a column with
t >= 1 - u-bar(y) participate and get u-bar(y) - (1 - t).  Per column

    L(y) = u-bar(y) f(y, 1) - int_{max(1 - u-bar, z_k)}^1 (u-bar - (1 - t)) phi dt,

and for k > 1 a strip of columns with y < 0 (bounded by the left edge)
buys the lowest-slope bundle.  Total revenue is 2 int_0^1 L + 2 E_strip.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize

from .dist import Regularity
from .errors import (
    BranchExhausted,
    InfeasibleUBar,
    NotRegular,
    NotRegular1D,
    NotReversedRegular,
    PreconditionFailed,
)
from .measure import DEFAULT_QUAD, QuadratureConfig, adaptive_simpson, mr_minus, mr_plus, phi_1d
from .mech import (
    SLOPE_TOL,
    Segment,
    UBar,
    bundle_for_slope,
    demand_interval,
    exclusion_regions,
    Menu,
    extract_menu,
    participation_regions,
    price_for_slope,
    ubar_from_lines,
)
from .numerics import gl_points, integrate_pieces, multistart_golden_max, piecewise_roots
from .zeta import sample_zeta, shear, z_k, z_k_kinks

log = logging.getLogger(__name__)

FOC_TOL = 1e-5
SOC_EPS = 1e-3
N_Y = 24
N_T = 24
SNAP_TOL = 1e-10


# ---------------------------------------------------------------------------
# zeta for follow segments


class FollowZeta:
    """Cubic-spline interpolant of a sampled zeta_k with its derivative.

    Follow segments evaluate zeta at thousands of quadrature nodes; the
    spline through the 401 exact samples keeps that cheap.
    """

    def __init__(self, xs, values):
        self._s = CubicSpline(np.asarray(xs, float), np.asarray(values, float))
        self._d = self._s.derivative()

    @classmethod
    def from_curve(cls, curve):
        return cls(curve.xs, curve.values)

    def __call__(self, x):
        return self._s(np.clip(x, 0.0, 1.0))

    def derivative(self, x):
        return self._d(np.clip(x, 0.0, 1.0))


# ---------------------------------------------------------------------------
# columns and pieces


def _pieces(u, k, lo, hi):
    """Split [lo, hi] at u-bar breakpoints, z_k kinks and participation switches."""
    pts = {lo, hi}
    pts.update(p for p in u.breakpoints if lo < p < hi)
    pts.update(p for p in z_k_kinks(k) if lo < p < hi)
    d = lambda y: 1.0 - u.ext(y) - z_k(k, y)
    pts.update(r for r in piecewise_roots(d, sorted(pts)) if lo < r < hi)
    return np.array(sorted(pts))


def _column(model, u, k, y, low, up):
    """GL nodes along the columns above y between heights low and up."""
    c = shear(k)
    low = np.clip(low, 0.0, 1.0)
    up = np.maximum(np.clip(up, 0.0, 1.0), low)
    t, w = gl_points(low, up, N_T)
    phi = model.phi2(np.clip(y[..., None] - (1.0 - t) * c, 0.0, 1.0), t)
    return t, w, phi


def _floor(u, k, y):
    return np.maximum(1.0 - u.ext(y), z_k(k, y))


def _strip_upper(k, y):
    return 1.0 - y / shear(k)


def _L(model, u, k):
    def fn(y):
        ub = u.ext(y)
        t, w, phi = _column(model, u, k, y, _floor(u, k, y), np.ones_like(y))
        return ub * model.f2(y, 1.0) - np.sum(w * (ub[..., None] - (1.0 - t)) * phi, axis=-1)

    return fn


def _strip_pieces(u, k):
    c = shear(k)
    pts = {c, 0.0}
    for g in (lambda y: 1.0 - u.ext(y) - z_k(k, y), lambda y: _strip_upper(k, y) - _floor(u, k, y)):
        pts.update(piecewise_roots(g, [c, 0.0], samples=9))
    return np.array(sorted(p for p in pts if c <= p <= 0.0))


def _strip_integral(model, u, k, weighted):
    """int over the k > 1 edge strip of (u-bar - (1 - t)) phi, or of phi."""
    if k <= 1.0:
        return 0.0

    def fn(y):
        ub = u.ext(y)
        t, w, phi = _column(model, u, k, y, _floor(u, k, y), _strip_upper(k, y))
        if weighted:
            return np.sum(w * (ub[..., None] - (1.0 - t)) * phi, axis=-1)
        return np.sum(w * phi, axis=-1)

    return integrate_pieces(fn, _strip_pieces(u, k), N_Y)


def revenue_reduced(model, u):
    """Revenue of the symmetric menu generated by u-bar (sheared columns)."""
    k = u.k
    total = integrate_pieces(_L(model, u, k), _pieces(u, k, 0.0, 1.0), N_Y)
    return float(2.0 * total - 2.0 * _strip_integral(model, u, k, True))


def Phi(model, u, k, x1):
    """MR density of the column above x1 on the top edge."""
    x = np.atleast_1d(np.asarray(x1, dtype=float))
    _, w, phi = _column(model, u, k, x, _floor(u, k, x), np.ones_like(x))
    out = np.sum(w * phi, axis=-1) - model.f2(x, 1.0)
    return out if np.ndim(x1) else float(out[0])


def _strip_applies(u, k, a, q):
    return k > 1.0 and a <= 0.0 and abs(q - u.s0) <= SLOPE_TOL


def mr_of_bundle(model, u, k, q):
    """MR of the slope-q bundle: integral of Phi over its demand interval.

    For k > 1 the lowest-slope bundle also serves the edge strip, whose
    phi-mass is added.
    """
    a, b = demand_interval(u, q)
    val = integrate_pieces(lambda y: Phi(model, u, k, y), _pieces(u, k, a, b), N_Y) if b > a else 0.0
    if _strip_applies(u, k, a, q):
        val += _strip_integral(model, u, k, False)
    return float(val)


# ---------------------------------------------------------------------------
# revenue in original coordinates


def _induced(u, c, x1, x2):
    up = u.ext(x1 + (1.0 - x2) * c) - (1.0 - x2)
    mirror = u.ext(x2 + (1.0 - x1) * c) - (1.0 - x1)
    return np.maximum(np.maximum(up, mirror), 0.0), up, mirror


def revenue_full(model, u, k, cfg=QuadratureConfig(abs_tol=1e-9)):
    """Revenue as int u dmu in the original coordinates.

    Independent of the sheared path: top-edge masses of both edges plus
    -int u phi over the square, the inner x2-integral split at every kink
    of the induced utility along the vertical line.
    """
    c = shear(k)
    bps = np.asarray(u.breakpoints)
    nodes, weights = np.polynomial.legendre.leggauss(16)
    probe = np.linspace(0.0, 1.0, 129)

    def edge(x):
        val, _, _ = _induced(u, c, np.asarray(x, float), np.ones_like(np.asarray(x, float)))
        return val * model.f2(x, 1.0)

    def edge_r(x):
        val, _, _ = _induced(u, c, np.ones_like(np.asarray(x, float)), np.asarray(x, float))
        return val * model.f2(1.0, x)

    def inner(x1):
        pts = {0.0, 1.0}
        if c != 0.0:
            pts.update(1.0 - (bps - x1) / c)
        pts.update(bps - (1.0 - x1) * c)
        xs = np.full_like(probe, x1)
        _, up, mi = _induced(u, c, xs, probe)
        for which, g in enumerate((up, mi, up - mi)):
            for i in np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]:
                pts.add(_refine(u, c, x1, probe[i], probe[i + 1], which))
        br = np.array(sorted(p for p in pts if 0.0 <= p <= 1.0))
        lo, hi = br[:-1], br[1:]
        half = 0.5 * (hi - lo)
        t = lo[:, None] + half[:, None] * (nodes + 1.0)
        w = half[:, None] * weights
        val, _, _ = _induced(u, c, np.full_like(t, x1), t)
        return float(np.sum(w * val * model.phi2(np.full_like(t, x1), t)))

    outer_breaks = sorted({0.0, 1.0, *[b for b in bps if 0 < b < 1]})
    interior = 0.0
    for a, b in zip(outer_breaks[:-1], outer_breaks[1:]):
        interior += adaptive_simpson(inner, a, b, cfg)
    top = integrate_pieces(edge, outer_breaks, 32) + integrate_pieces(edge_r, outer_breaks, 32)
    return float(top - interior)


def _refine(u, c, x1, lo, hi, which):
    def g(t):
        _, up, mi = _induced(u, c, np.array(x1), np.array(t))
        return float((up, mi, up - mi)[which])

    return brentq(g, lo, hi, xtol=1e-14)


# ---------------------------------------------------------------------------
# single good


@dataclass(frozen=True)
class PostedPrice:
    price: float
    revenue: float


def solve_single_good(marginal, samples=201):
    """Optimal posted price for one good."""
    lo, hi = marginal.support
    xs = np.linspace(lo, hi, samples)[1:-1]
    if np.any(phi_1d(marginal, xs) <= 0.0):
        raise NotRegular1D("x g'(x) + 2 g(x) is not positive on the support")
    rev = lambda p: p * (1.0 - float(marginal.G(p)))
    p, r = multistart_golden_max(rev, lo, hi, tol=1e-12, starts=9)
    return PostedPrice(float(p), float(r))


# ---------------------------------------------------------------------------
# FOC / SOC report


@dataclass(frozen=True)
class MRRow:
    q: float
    bundle: tuple
    mr: float
    phi_left: float
    phi_right: float
    status: str
    a: float
    b: float
    flags: tuple
    passed: bool


@dataclass(frozen=True)
class PriceProbe:
    q: float
    eps: float
    delta_revenue: float
    passed: bool


@dataclass(frozen=True)
class MRReport:
    rows: tuple
    grand_bundle_pooling: bool
    mr_minus: float
    mr_plus: Optional[float]
    probes: tuple
    foc_tol: float
    variational_u0: bool

    @property
    def passed(self):
        return (
            all(r.passed for r in self.rows)
            and all(p.passed for p in self.probes)
            and self.grand_bundle_pooling
            and abs(self.mr_minus) <= self.foc_tol
        )

    @property
    def failures(self):
        out = [f"q={r.q:.6g}: " + ",".join(r.flags) for r in self.rows if not r.passed]
        out += [f"price probe q={p.q:.6g} eps={p.eps:+g} gains {p.delta_revenue:.3g}" for p in self.probes if not p.passed]
        if not self.grand_bundle_pooling:
            out.append("grand bundle not pooling")
        if abs(self.mr_minus) > self.foc_tol:
            out.append(f"mr_minus={self.mr_minus:.3g}")
        return out

    def to_rows(self):
        rows = [(r.q, r.bundle[0], r.bundle[1], r.mr, r.phi_left, r.phi_right, r.status, "|".join(r.flags), r.passed)
                for r in self.rows]
        return rows


def _affine_groups(u):
    groups = []
    for s in u.segments:
        if s.kind != "affine":
            continue
        if groups and abs(groups[-1] - s.slope) <= SLOPE_TOL:
            continue
        groups.append(s.slope)
    return groups


def _lines(u):
    slopes = _affine_groups(u)
    intercepts = []
    for s in slopes:
        a, _ = demand_interval(u, s)
        intercepts.append(s * a - float(u(a)))
    return slopes, intercepts


def check_foc_soc(model, u, k, foc_tol=FOC_TOL, soc_eps=SOC_EPS, global_check=True, cfg=None):
    """FOC residuals, endpoint Phi conditions and price probes for a u-bar."""
    k = float(k)
    rows = []
    for s in _affine_groups(u):
        a, b = demand_interval(u, s)
        mr = mr_of_bundle(model, u, k, s)
        pl = Phi(model, u, k, a)
        pr = Phi(model, u, k, b)
        flags = []
        strip = _strip_applies(u, k, a, s)
        ok = True
        if strip:
            flags.append("edge_strip")
        elif abs(mr) > foc_tol:
            flags.append("mr")
            ok = False
        left_exempt = s <= SLOPE_TOL or a <= 0.0 and strip
        if not left_exempt and a > 0.0 and pl < -foc_tol:
            flags.append("phi_left")
            ok = False
        if s < k - SLOPE_TOL and b < 1.0 and pr < -foc_tol:
            flags.append("phi_right")
            ok = False
        rows.append(MRRow(s, bundle_for_slope(s, k), mr, pl, pr, "Pooling", a, b, tuple(flags), ok))
    for seg in u.segments:
        if seg.kind != "follow":
            continue
        for x in np.linspace(seg.x_lo, seg.x_hi, 9)[1:-1]:
            s = -float(u.zeta.derivative(x))
            ph = Phi(model, u, k, x)
            ok = abs(ph) <= foc_tol
            rows.append(MRRow(s, bundle_for_slope(s, k), 0.0, ph, ph, "Separating", x, x,
                              () if ok else ("phi",), ok))

    a_k, _ = demand_interval(u, k)
    has_grand = any(abs(s - k) <= SLOPE_TOL for s in _affine_groups(u)) or u.s1 >= k - SLOPE_TOL
    gb = k == 0.5 or (has_grand and a_k < 1.0)

    total = integrate_pieces(lambda y: Phi(model, u, k, y), _pieces(u, k, 0.0, 1.0), N_Y)
    total += _strip_integral(model, u, k, False)
    mrm, mrp = 2.0 * total, None
    if global_check:
        q = cfg or QuadratureConfig(abs_tol=1e-8)
        mrm = mr_minus(model, participation_regions(model, u, k), q)
        mrp = mr_plus(model, exclusion_regions(model, u, k), q)

    probes = []
    if not u.has_follow:
        base = revenue_reduced(model, u)
        slopes, cs = _lines(u)
        for i, s in enumerate(slopes):
            for eps in (soc_eps, -soc_eps):
                c2 = list(cs)
                c2[i] += eps
                v = ubar_from_lines(slopes, c2, k)
                d = revenue_reduced(model, v) - base
                probes.append(PriceProbe(s, eps, d, d <= foc_tol * soc_eps))
    return MRReport(tuple(rows), gb, float(mrm), mrp, tuple(probes), foc_tol, abs(2.0 * total) <= foc_tol)


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class Family:
    name: str
    branch: str
    bounds: tuple
    build: object
    cutoffs: object


def _affine(u0, knots, slopes, k):
    segs = [Segment(float(a), float(b), "affine", float(s)) for a, b, s in zip(knots[:-1], knots[1:], slopes)]
    return UBar(u0, segs, k)


def _family_flat_then_k(k):
    def build(p):
        u0, a = p
        return _affine(u0, [0.0, a, 1.0], [0.0, k], k)

    return Family("flat_then_k", "Nondecreasing", ((0.0, 1.0), (0.0, 1.0)), build,
                  lambda p: {"u0": p[0], "a": p[1]})


def _family_slope_then_k(k):
    def build(p):
        u0, q, a = p
        return _affine(u0, [0.0, a, 1.0], [q, k], k)

    return Family("slope_then_k", "Convex", ((0.0, 1.0), (0.0, k), (0.0, 1.0)), build,
                  lambda p: {"u0": p[0], "q": p[1], "a": p[2]})


def _family_flat_follow_k(k, zeta):
    def build(p):
        a, lam = p
        b = lam * a
        u0 = 1.0 - float(zeta(b))
        segs = [Segment(0.0, b, "affine", 0.0), Segment(b, a, "follow"), Segment(a, 1.0, "affine", k)]
        return UBar(u0, segs, k, zeta)

    return Family("flat_follow_k", "Concave", ((0.0, 1.0), (0.0, 1.0)), build,
                  lambda p: {"u0": 1.0 - float(zeta(p[0] * p[1])), "b": p[0] * p[1], "a": p[0]})


def _family_follow_k(k, zeta):
    def build(p):
        (a,) = p
        segs = [Segment(0.0, a, "follow"), Segment(a, 1.0, "affine", k)]
        return UBar(1.0 - float(zeta(0.0)), segs, k, zeta)

    return Family("follow_k", "DoubleRegular", ((0.0, 1.0),), build,
                  lambda p: {"u0": 1.0 - float(zeta(0.0)), "b": 0.0, "a": p[0]})


def _family_multi(k, m):
    """m affine segments with free knots and slopes (slopes sorted)."""

    def build(p):
        u0 = p[0]
        slopes = np.sort(np.clip(p[1:m + 1], 0.0, k))
        knots = np.concatenate([[0.0], np.sort(np.clip(p[m + 1:], 0.0, 1.0)), [1.0]])
        return _affine(u0, knots, slopes, k)

    bounds = ((0.0, 1.0),) + ((0.0, k),) * m + ((0.0, 1.0),) * (m - 1)
    return Family(f"multi_{m}", "Mixed", bounds, build, lambda p: {"u0": p[0]})


def _family_order(shape, k, zeta, cap):
    fams = {
        "F1": lambda: _family_flat_then_k(k),
        "F2": lambda: _family_slope_then_k(k),
        "F3": lambda: _family_flat_follow_k(k, zeta),
        "F5": lambda: _family_follow_k(k, zeta),
    }
    if k == 0.5:
        order = ["F1", "F2"]
    elif k > 1.0:
        order = ["F2", "F1"]
    elif shape.nondecreasing:
        order = ["F1", "F2", "F3"]
    elif shape.double_regular:
        order = ["F5", "F3", "F2"]
    elif shape.convex:
        order = ["F2", "F1", "F3"]
    elif shape.concave:
        order = ["F3", "F2"]
    else:
        order = ["F2", "F3"]
    out = [fams[o]() for o in order]
    out += [_family_multi(k, m) for m in range(2, max(2, cap) + 1)]
    return out


def _objective(model, fam):
    cache = {}

    def rev(p):
        key = tuple(np.round(p, 15))
        if key not in cache:
            try:
                cache[key] = revenue_reduced(model, fam.build(p))
            except InfeasibleUBar:
                cache[key] = -np.inf
        return cache[key]

    return rev


def _starts(bounds, starts):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    center = 0.5 * (lo + hi)
    pts = [center]
    # deterministic corners pulled a quarter of the way toward the center
    for i in range(starts - 1):
        bits = [(i >> j) & 1 for j in range(len(bounds))]
        corner = np.where(bits, hi, lo)
        pts.append(corner + 0.5 * (center - corner))
    return pts


def _maximize(model, fam, starts=5, extra_starts=()):
    rev = _objective(model, fam)
    bounds = fam.bounds
    best_p, best_v = None, -np.inf
    # coarse grid guess
    grid_axes = [np.linspace(b[0], b[1], 7 if len(bounds) <= 2 else 5) for b in bounds]
    mesh = np.stack(np.meshgrid(*grid_axes, indexing="ij"), -1).reshape(-1, len(bounds))
    vals = np.array([rev(p) for p in mesh])
    seeds = [mesh[int(np.argmax(vals))]] + list(extra_starts) + _starts(bounds, starts)
    for x0 in seeds:
        p = np.asarray(x0, float)
        for _ in range(3):
            # infeasible vertices score -inf; their differences are nan and harmless
            with np.errstate(invalid="ignore"):
                res = minimize(lambda z: -rev(np.clip(z, [b[0] for b in bounds], [b[1] for b in bounds])), p,
                               method="Nelder-Mead", bounds=bounds,
                               options={"xatol": 1e-11, "fatol": 1e-15, "maxiter": 4000,
                                        "adaptive": len(bounds) > 2})
            if np.allclose(res.x, p, atol=1e-12):
                break
            p = res.x
        v = rev(p)
        if v > best_v + 1e-14 or (abs(v - best_v) <= 1e-14 and best_p is not None and tuple(p) < tuple(best_p)):
            best_p, best_v = p, v
    return _snap(fam, rev, best_p, best_v)


def _snap(fam, rev, p, v):
    """Move parameters onto box faces when that costs no revenue.

    Each parameter is tried once, nearer face first.
    """
    p = np.array(p, float)
    for i, (lo, hi) in enumerate(fam.bounds):
        for target in sorted((lo, hi), key=lambda t: abs(p[i] - t)):
            if p[i] == target:
                break
            q = p.copy()
            q[i] = target
            vq = rev(q)
            if vq >= v - SNAP_TOL:
                p, v = q, max(v, vq)
                break
    return p, v


# ---------------------------------------------------------------------------
# two goods


@dataclass(frozen=True)
class ReportSummary:
    """Pass flag and failure list of an MRReport, as stored on disk."""

    passed: bool
    failures: list


@dataclass(frozen=True, eq=False)
class SolveResult:
    ubar: UBar
    menu: object
    revenue: float
    cutoffs: dict
    branch: str
    family: str
    report: MRReport
    shape: object = None
    candidates: tuple = field(default_factory=tuple)
    params: tuple = field(default_factory=tuple)

    def to_dict(self):
        return {
            "branch": self.branch,
            "family": self.family,
            "class": self.menu.label,
            "revenue": self.revenue,
            "cutoffs": self.cutoffs,
            "ubar": self.ubar.to_dict(),
            "menu": self.menu.to_dict(),
            "report_passed": self.report.passed,
            "failures": self.report.failures,
        }

    @classmethod
    def from_dict(cls, d, zeta=None):
        """Rebuild from ``to_dict`` output; follow segments need ``zeta``."""
        return cls(
            UBar.from_dict(d["ubar"], zeta=zeta),
            Menu.from_dict(d["menu"]),
            float(d["revenue"]),
            {k: float(v) for k, v in d["cutoffs"].items()},
            d["branch"],
            d["family"],
            ReportSummary(bool(d["report_passed"]), list(d["failures"])),
        )

    def __eq__(self, other):
        return isinstance(other, SolveResult) and self.to_dict() == other.to_dict()

    __hash__ = None


@dataclass(frozen=True)
class SolveOptions:
    starts: int = 5
    foc_tol: float = FOC_TOL
    global_check: bool = True
    exhaustive: bool = False
    max_segments: Optional[int] = None


def _cutoff_names(cut, k):
    out = {}
    for key, val in cut.items():
        if key == "a":
            out["a^1" if k == 1.0 else "a^k"] = float(val)
        elif key == "b":
            out["b^0"] = float(val)
        else:
            out[key] = float(val)
    return out


def solve_two_good(model, k=1.0, opts=None):
    """Optimal symmetric mechanism within the u-bar family for slope k."""
    opts = opts or SolveOptions()
    k = float(k)
    if model.regularity not in (Regularity.STRICTLY_REGULAR, Regularity.QUASI_REGULAR):
        raise NotRegular(f"model is {model.regularity.value}")
    if k < 0.5:
        raise PreconditionFailed("k must be at least 1/2")
    curve = sample_zeta(model, k)
    shape = curve.shape
    zeta = FollowZeta.from_curve(curve)
    cap = opts.max_segments
    if cap is None:
        cap = 3 if len(shape.crossings) != 1 else min(2 * len(shape.x_cvx_intervals) + 3, 5)
    fams = _family_order(shape, k, zeta, cap)

    best = None
    tried = []
    for fam in fams:
        p, v = _maximize(model, fam, opts.starts)
        if not np.isfinite(v):
            continue
        u = fam.build(p)
        report = check_foc_soc(model, u, k, opts.foc_tol, global_check=opts.global_check)
        log.info("family %s: revenue %.12g passed=%s", fam.name, v, report.passed)
        cand = (v, fam, p, u, report)
        tried.append((fam.name, v, report.passed))
        if best is None or (report.passed and not best[4].passed) or (report.passed == best[4].passed and v > best[0] + 1e-9):
            best = cand
        if report.passed and not opts.exhaustive:
            # a larger family must beat this one by more than 1e-6 to be preferred
            break
    if best is None:
        raise BranchExhausted("no family produced a feasible u-bar", None)
    v, fam, p, u, report = best
    menu = extract_menu(model, u, k)
    result = SolveResult(u, menu, revenue_full(model, u, k), _cutoff_names(fam.cutoffs(p), k), fam.branch,
                         fam.name, report, shape, tuple(tried), tuple(float(x) for x in p))
    if not report.passed:
        raise BranchExhausted("no family passes FOC/SOC: " + "; ".join(report.failures), result)
    return result


def family_by_name(name, k, zeta=None):
    """Rebuild a named u-bar family (``zeta`` needed for follow families)."""
    k = float(k)
    if name == "flat_then_k":
        return _family_flat_then_k(k)
    if name == "slope_then_k":
        return _family_slope_then_k(k)
    if name == "flat_follow_k":
        return _family_flat_follow_k(k, zeta)
    if name == "follow_k":
        return _family_follow_k(k, zeta)
    if name.startswith("multi_"):
        return _family_multi(k, int(name.split("_")[1]))
    raise ValueError(f"unknown family {name!r}")


def perturb_cutoff(result, k, index, delta, zeta=None):
    """u-bar of ``result``'s family with parameter ``index`` moved by ``delta``.

    The moved parameter is clipped to its box.
    """
    fam = family_by_name(result.family, k, zeta)
    p = np.array(result.params, float)
    lo, hi = fam.bounds[index]
    p[index] = min(max(p[index] + delta, lo), hi)
    return fam.build(p)


def best_deterministic_menu(model, k=1.0):
    """Best symmetric menu of {e1, e2, grand bundle} prices (k = 1)."""
    k = float(k)

    def build(p):
        pe, pg = p
        slopes, cs = [0.0, k], [pe - 1.0, pg - k]
        return ubar_from_lines(slopes, cs, k)

    def rev(p):
        try:
            return revenue_reduced(model, build(p))
        except InfeasibleUBar:
            return -np.inf

    best = (None, -np.inf)
    for pe in np.linspace(0.05, 1.0, 20):
        for pg in np.linspace(0.05, 2.0 * k, 20):
            v = rev((pe, pg))
            if v > best[1]:
                best = ((pe, pg), v)
    res = minimize(lambda z: -rev(z), best[0], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-14})
    p = res.x if -res.fun >= best[1] else best[0]
    return {"price_single": float(p[0]), "price_grand": float(p[1]), "revenue": float(max(-res.fun, best[1]))}


# ---------------------------------------------------------------------------
# menu size


def menu_size_bound(model):
    """Number of convexity intervals of zeta below its crossing point."""
    curve = sample_zeta(model, 1.0)
    if len(curve.shape.crossings) != 1:
        raise PreconditionFailed(f"zeta crosses the diagonal {len(curve.shape.crossings)} times")
    return len(curve.shape.x_cvx_intervals)


def menu_size_cap(model):
    """Cap 2|I| + 3 on the number of pooling bundles."""
    return 2 * menu_size_bound(model) + 3


# ---------------------------------------------------------------------------
# unbounded support, strictly reversed regular


@dataclass(frozen=True)
class BundlePrice:
    cutoff: float
    price: float
    revenue: float


def _tail_ok(model, lo, scale):
    radii = lo + scale * np.array([10.0, 20.0, 40.0, 80.0])
    vals = np.array([r * r * model.f2(r / np.sqrt(2) + lo, r / np.sqrt(2) + lo) for r in radii])
    return bool(vals[-1] < 1e-6 and np.all(np.diff(vals) <= 1e-12))


def solve_unbounded_srrs(model, scale=1.0, horizon=60.0, samples=101):
    """Pure-bundling price for a reversed-regular model on [lo, inf)^2.

    With r = x1 + x2 - lo the revenue of the bundle priced at r + lo is
    int_r^inf (s - r) w(s) ds, where w(s) is the mu-mass on the line of
    constant sum (interior -phi plus the two bottom-edge points).
    """
    lo = float(model.bounds[0])
    grid = lo + scale * np.linspace(0.0, 20.0, samples)[1:]
    g1, g2 = np.meshgrid(grid, grid, indexing="ij")
    if np.any(model.phi2(g1, g2) >= 0.0):
        raise NotReversedRegular("phi is not negative on the sampled region")
    if not _tail_ok(model, lo, scale):
        raise NotReversedRegular("|x|^2 f does not vanish along the diagonal")
    top = lo + scale * horizon

    def w(r):
        r = np.atleast_1d(np.asarray(r, float))
        t, wt = gl_points(np.full_like(r, lo), r, 48)
        line = np.sum(wt * model.phi2(r[:, None] + lo - t, t), axis=-1)
        return -line - 2.0 * lo * model.f2(r, np.full_like(r, lo))

    knots = np.linspace(lo, top, 241)

    def rev(r):
        br = np.concatenate([[r], knots[knots > r]])
        return integrate_pieces(lambda s: (s - r) * w(s.ravel()).reshape(s.shape), br, 24)

    r, v = multistart_golden_max(rev, lo, lo + scale * 20.0, tol=1e-10, starts=41)
    return BundlePrice(float(r), float(r + lo), float(v))
