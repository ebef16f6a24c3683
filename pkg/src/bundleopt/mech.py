"""Reduced mechanisms: the top-boundary utility profile u-bar, the induced
two-dimensional indirect utility, demand sets and menu extraction.

Bundles in the upper half-square are q(s) = s * (1, 1 - 1/k) + e2 for slopes
s in [0, k]; s = 0 is e2 and s = k is the grand bundle (k, k).  A type
(x1, x2) with sheared abscissa y = x1 + (1 - x2)(1/k - 1) gets utility
u-bar(y) - (1 - x2) from its best upper-half bundle, and prices follow by
convex conjugacy: p(s) = u-bar*(s) + s (1 - 1/k) + 1.
"""

import csv
import enum
import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InfeasibleUBar, OutOfDomain
from .measure import Region2D
from .numerics import sign_change_roots
from .zeta import shear, z_k, z_k_kinks

SLOPE_TOL = 1e-9
FOLLOW_SLOPE_TOL = 1e-5
MENU_SAMPLES = 33


@dataclass(frozen=True)
class Segment:
    x_lo: float
    x_hi: float
    kind: str = "affine"
    slope: float = 0.0


class UBar:
    """Convex, nondecreasing profile u-bar on [0, 1] with slopes in [0, k].

    Segments are contiguous and either affine or follow 1 - zeta_k, in which
    case ``zeta`` (a vectorized callable with a ``derivative`` method) must be
    supplied.
    """

    def __init__(self, u0, segments, k, zeta=None, check=True):
        self.u0 = float(u0)
        self.k = float(k)
        self.zeta = zeta
        segs = [s for s in segments if s.x_hi > s.x_lo]
        if not segs:
            raise InfeasibleUBar("u-bar needs at least one segment of positive length")
        self.segments = tuple(segs)
        self._lo = np.array([s.x_lo for s in segs])
        self._hi = np.array([s.x_hi for s in segs])
        starts = []
        v = self.u0
        for s in segs:
            if s.kind == "follow":
                if zeta is None:
                    raise InfeasibleUBar("follow segment without a zeta function")
                v_lo = 1.0 - float(zeta(s.x_lo))
                if check and abs(v_lo - v) > 1e-8:
                    raise InfeasibleUBar(f"discontinuity at {s.x_lo}: {v} vs {v_lo}")
                starts.append(v_lo)
                v = 1.0 - float(zeta(s.x_hi))
            else:
                starts.append(v)
                v = v + s.slope * (s.x_hi - s.x_lo)
        self._start = np.array(starts)
        self._slope = np.array([s.slope for s in segs])
        self._follow = np.array([s.kind == "follow" for s in segs])
        self._s0 = self.slope(0.0, "right")
        self._s1 = self.slope(1.0, "left")
        self._u1 = float(self(1.0))
        if check:
            self.validate()

    # ------------------------------------------------------------------
    def validate(self):
        if abs(self._lo[0]) > 1e-15 or abs(self._hi[-1] - 1.0) > 1e-15:
            raise InfeasibleUBar("segments must cover [0, 1]")
        if np.any(np.abs(self._lo[1:] - self._hi[:-1]) > 1e-15):
            raise InfeasibleUBar("segments must be contiguous")
        lo_sl, hi_sl = self.segment_slope_range()
        if np.any(lo_sl < -FOLLOW_SLOPE_TOL) or np.any(hi_sl > self.k + FOLLOW_SLOPE_TOL):
            raise InfeasibleUBar("slopes must lie in [0, k]")
        for i in range(len(self.segments) - 1):
            tol = FOLLOW_SLOPE_TOL if (self._follow[i] or self._follow[i + 1]) else SLOPE_TOL
            if hi_sl[i] > lo_sl[i + 1] + tol:
                raise InfeasibleUBar("slopes must be nondecreasing (u-bar convex)")
        for i, s in enumerate(self.segments):
            if s.kind == "follow":
                xs = np.linspace(s.x_lo, s.x_hi, 9)
                d = self.zeta.derivative(xs)
                if np.any(np.diff(-d) < -FOLLOW_SLOPE_TOL):
                    raise InfeasibleUBar("follow segment where 1 - zeta is not convex")
        if self.u0 < -1e-12:
            raise InfeasibleUBar("u-bar must be nonnegative")
        if self(1.0) > 1.0 + self.k + 1e-9:
            raise InfeasibleUBar("u-bar(1) exceeds 1 + k")

    def segment_slope_range(self):
        lo, hi = self._slope.copy(), self._slope.copy()
        for i, s in enumerate(self.segments):
            if s.kind == "follow":
                lo[i] = -float(self.zeta.derivative(s.x_lo))
                hi[i] = -float(self.zeta.derivative(s.x_hi))
        return lo, hi

    @property
    def breakpoints(self):
        return np.concatenate([self._lo, self._hi[-1:]])

    @property
    def has_follow(self):
        return bool(np.any(self._follow))

    # ------------------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.minimum(np.searchsorted(self._hi, x, side="left"), len(self.segments) - 1)
        out = self._start[idx] + self._slope[idx] * (x - self._lo[idx])
        if self.has_follow:
            fmask = self._follow[idx]
            if np.any(fmask):
                out = np.array(out, dtype=float, copy=True)
                out[fmask] = 1.0 - np.asarray(self.zeta(x[fmask]), dtype=float)
        return out

    def slope(self, x, side="right"):
        x = float(x)
        if side == "right":
            i = int(np.clip(np.searchsorted(self._lo, x, side="right") - 1, 0, len(self.segments) - 1))
        else:
            i = int(np.clip(np.searchsorted(self._hi, x, side="left"), 0, len(self.segments) - 1))
        if self._follow[i]:
            return -float(self.zeta.derivative(x))
        return float(self._slope[i])

    @property
    def s0(self):
        return self._s0

    @property
    def s1(self):
        return self._s1

    def ext(self, y):
        """u-bar continued linearly outside [0, 1] with its end slopes.

        Left of 0 the continuation keeps the smallest slope offered by the
        menu (bundles below it are not on the menu), which is the edge case
        of demand sets for complements.
        """
        y = np.asarray(y, dtype=float)
        inside = self(np.minimum(np.maximum(y, 0.0), 1.0))
        if np.all((y >= 0.0) & (y <= 1.0)):
            return inside
        left = self.u0 + self._s0 * y
        right = self._u1 + self._s1 * (y - 1.0)
        return np.where(y < 0.0, left, np.where(y > 1.0, right, inside))

    def with_u0(self, u0):
        return UBar(u0, self.segments, self.k, self.zeta)

    def to_dict(self):
        return {
            "u0": self.u0,
            "k": self.k,
            "segments": [
                {"x_lo": s.x_lo, "x_hi": s.x_hi, "kind": s.kind, "slope": s.slope} for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d, zeta=None):
        segs = [Segment(float(s["x_lo"]), float(s["x_hi"]), s["kind"], float(s["slope"])) for s in d["segments"]]
        return cls(d["u0"], segs, d["k"], zeta=zeta)

    def __repr__(self):
        segs = ", ".join(
            f"[{s.x_lo:.6g},{s.x_hi:.6g}]:{'follow' if s.kind == 'follow' else f'q={s.slope:.6g}'}"
            for s in self.segments
        )
        return f"UBar(u0={self.u0:.10g}, k={self.k:g}, {segs})"


def piecewise_linear(u0, knots, slopes, k):
    """Affine u-bar with breakpoints ``knots`` (including 0 and 1)."""
    segs = [Segment(float(a), float(b), "affine", float(s)) for a, b, s in zip(knots[:-1], knots[1:], slopes)]
    return UBar(u0, segs, k)


def ubar_from_lines(slopes, intercepts, k):
    """Upper envelope of y -> s y - c on [0, 1] (and of the zero line).

    A flat zero stretch is e2 priced at 1, which no type strictly prefers to
    the null bundle, so revenue is unaffected.
    """
    s = np.concatenate([np.asarray(slopes, float), [0.0]])
    c = np.concatenate([np.asarray(intercepts, float), [0.0]])
    cands = {0.0, 1.0}
    for i in range(len(s)):
        for j in range(i + 1, len(s)):
            if s[i] != s[j]:
                y = (c[i] - c[j]) / (s[i] - s[j])
                if 0.0 < y < 1.0:
                    cands.add(float(y))
    pts = np.array(sorted(cands))
    knots, slopes_out = [0.0], []
    for a, b in zip(pts[:-1], pts[1:]):
        vals = s * (0.5 * (a + b)) - c
        best = np.flatnonzero(vals >= vals.max() - 1e-13)
        sj = float(s[best[np.argmax(s[best])]])
        if slopes_out and sj == slopes_out[-1]:
            knots[-1] = float(b)
        else:
            slopes_out.append(sj)
            knots.append(float(b))
    u0 = float(np.max(-c))
    return piecewise_linear(u0, knots, slopes_out, k)


def ubar_eval(u, x):
    """Evaluate u-bar on [0, 1]."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise OutOfDomain("u-bar is defined on [0, 1]")
    return u(x)


def ubar_slope(u, x, side="right"):
    """One-sided slope of u-bar at x."""
    if not 0.0 <= x <= 1.0:
        raise OutOfDomain("u-bar is defined on [0, 1]")
    return u.slope(x, side)


# ---------------------------------------------------------------------------
# induced utility


def induced_u(model, u, k, x1, x2):
    """Indirect utility of type (x1, x2) under the menu generated by u-bar.

    max{u-bar(y) - (1 - x2), u-bar(y') - (1 - x1), 0} with y, y' the sheared
    abscissae of the point and of its mirror image.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    lo, hi = model.bounds
    if np.any(x1 < lo) or np.any(x1 > hi) or np.any(x2 < lo) or np.any(x2 > hi):
        raise OutOfDomain("type outside the unit square")
    c = shear(k)
    up = u.ext(x1 + (1.0 - x2) * c) - (1.0 - x2)
    mirror = u.ext(x2 + (1.0 - x1) * c) - (1.0 - x1)
    return np.maximum(np.maximum(up, mirror), 0.0)


# ---------------------------------------------------------------------------
# demand intervals and menus


def demand_interval(u, q):
    """[a^q, b^q] = {x : u-bar'(x-) <= q <= u-bar'(x+)}."""
    q = float(q)
    lo_sl, hi_sl = u.segment_slope_range()
    if q < lo_sl[0] - SLOPE_TOL:
        return (0.0, 0.0)
    if q > hi_sl[-1] + SLOPE_TOL:
        return (1.0, 1.0)
    a = b = None
    for i, s in enumerate(u.segments):
        if s.kind == "affine" and abs(s.slope - q) <= SLOPE_TOL:
            a = s.x_lo if a is None else a
            b = s.x_hi
        elif s.kind == "follow" and lo_sl[i] - SLOPE_TOL <= q <= hi_sl[i] + SLOPE_TOL:
            g = lambda x: -float(u.zeta.derivative(x)) - q
            roots = sign_change_roots(g, s.x_lo, s.x_hi)
            x = roots[0] if roots else (s.x_lo if abs(lo_sl[i] - q) < abs(hi_sl[i] - q) else s.x_hi)
            a = x if a is None else a
            b = x if b is None or x > b else b
    if a is not None:
        return (float(a), float(b))
    # q falls strictly between the slopes on either side of a breakpoint
    for i in range(len(u.segments) - 1):
        if hi_sl[i] - SLOPE_TOL <= q <= lo_sl[i + 1] + SLOPE_TOL:
            x = u.segments[i].x_hi
            return (float(x), float(x))
    return (0.0, 0.0)


def bundle_for_slope(s, k):
    """Upper-half bundle s * n_hat_k + e2."""
    if abs(s - k) <= SLOPE_TOL:
        return (k, k)
    return (s, s * (1.0 - 1.0 / k) + 1.0)


def price_for_slope(u, s, a):
    """Price of the bundle with slope s, read off at x = a on the top edge."""
    q1, q2 = bundle_for_slope(s, u.k)
    return a * q1 + q2 - float(u(a))


class MenuClass(str, enum.Enum):
    SEPARATE_SELLING = "SeparateSelling"
    PURE_BUNDLING = "PureBundling"
    MIXED_BUNDLING = "MixedBundling"
    STOCHASTIC_FINITE = "StochasticFinite"
    STOCHASTIC_INFINITE = "StochasticInfinite"

    @property
    def deterministic(self):
        return self in (MenuClass.SEPARATE_SELLING, MenuClass.PURE_BUNDLING, MenuClass.MIXED_BUNDLING)


@dataclass(frozen=True)
class MenuEntry:
    q1: float
    q2: float
    price: float
    status: str
    a: float
    b: float
    slope: float = 0.0


@dataclass(frozen=True)
class Menu:
    entries: tuple
    menu_class: MenuClass
    size: int
    k: float

    def prices_by_bundle(self):
        return {(round(e.q1, 12), round(e.q2, 12)): e.price for e in self.entries}

    def price_of(self, bundle, tol=1e-9):
        for e in self.entries:
            if abs(e.q1 - bundle[0]) <= tol and abs(e.q2 - bundle[1]) <= tol:
                return e.price
        return None

    @property
    def label(self):
        if self.menu_class == MenuClass.STOCHASTIC_FINITE:
            return f"StochasticFinite({self.size})"
        return self.menu_class.value

    def to_rows(self):
        return [(e.q1, e.q2, e.price, e.status, e.a, e.b) for e in self.entries]

    def to_dict(self):
        return {
            "class": self.label,
            "k": self.k,
            "entries": [
                {"q1": e.q1, "q2": e.q2, "price": e.price, "status": e.status, "a": e.a, "b": e.b, "slope": e.slope}
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, d):
        label = d["class"]
        size = None
        if label.startswith("StochasticFinite("):
            size = int(label[len("StochasticFinite("):-1])
            label = "StochasticFinite"
        entries = tuple(MenuEntry(e["q1"], e["q2"], e["price"], e["status"], e["a"], e["b"], e.get("slope", 0.0))
                        for e in d["entries"])
        if size is None:
            size = len({(round(e.q1, 12), round(e.q2, 12)) for e in entries})
        return cls(entries, MenuClass(label), size, d["k"])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q1", "q2", "price", "status", "a", "b"])
            for row in self.to_rows():
                w.writerow([fmt(row[0]), fmt(row[1]), fmt(row[2]), row[3], fmt(row[4]), fmt(row[5])])


def fmt(v):
    """12 significant digits, the CSV convention of this package."""
    return f"{float(v):.12g}"


def _add_pair(entries, s, price, status, a, b, k):
    q1, q2 = bundle_for_slope(s, k)
    entries.append(MenuEntry(q1, q2, price, status, a, b, s))
    if (q1, q2) != (q2, q1):
        entries.append(MenuEntry(q2, q1, price, status, a, b, s))


def extract_menu(model, u, k=None, samples=MENU_SAMPLES):
    """Menu generated by u-bar through convex conjugacy.

    One entry (plus mirror) per affine segment slope; follow segments are
    represented by ``samples`` bundles spread along the segment.
    """
    k = u.k if k is None else float(k)
    if abs(k - u.k) > 1e-15:
        raise InfeasibleUBar("k does not match the u-bar")
    entries = []
    slopes = []
    follow_len = sum(s.x_hi - s.x_lo for s in u.segments if s.kind == "follow")
    for seg in u.segments:
        if seg.kind == "affine":
            if slopes and abs(slopes[-1] - seg.slope) <= SLOPE_TOL:
                continue
            if not slopes and seg.slope <= SLOPE_TOL and u.u0 <= 1e-12:
                # flat zero stretch: e2 at price 1, demanded on a null set
                continue
            a, b = demand_interval(u, seg.slope)
            slopes.append(seg.slope)
            _add_pair(entries, seg.slope, price_for_slope(u, seg.slope, a), "Pooling", a, b, k)
        else:
            m = max(2, int(round(samples * (seg.x_hi - seg.x_lo) / follow_len)))
            for x in np.linspace(seg.x_lo, seg.x_hi, m):
                s = min(max(-float(u.zeta.derivative(x)), 0.0), k)
                _add_pair(entries, s, price_for_slope(u, s, float(x)), "Separating", float(x), float(x), k)
    entries.sort(key=lambda e: (e.slope, e.q1))
    if u.has_follow:
        cls = MenuClass.STOCHASTIC_INFINITE
    else:
        cls = classify_slopes(slopes, k, entries)
    return Menu(tuple(entries), cls, len(entries), k)


def classify_slopes(slopes, k, entries=()):
    interior = [s for s in slopes if SLOPE_TOL < s < k - SLOPE_TOL]
    if interior:
        return MenuClass.STOCHASTIC_FINITE
    has0 = any(s <= SLOPE_TOL for s in slopes)
    hask = any(s >= k - SLOPE_TOL for s in slopes)
    if has0 and hask:
        if k == 1.0 and entries:
            p_single = next(e.price for e in entries if e.slope <= SLOPE_TOL)
            p_grand = next(e.price for e in entries if e.slope >= k - SLOPE_TOL)
            if abs(p_grand - 2.0 * p_single) <= 1e-9:
                return MenuClass.SEPARATE_SELLING
        return MenuClass.MIXED_BUNDLING
    if hask:
        return MenuClass.PURE_BUNDLING
    return MenuClass.SEPARATE_SELLING


# ---------------------------------------------------------------------------
# demand regions


def participation_floor(u, k):
    """Lower boundary max(1 - u-bar(y), z_k(y)) of the upper-half demand sets."""
    return lambda y: np.maximum(1.0 - u.ext(y), z_k(k, y))


def edge_strip_upper(k):
    """Upper boundary of the complement edge strip (k > 1, y < 0)."""
    c = shear(k)
    return lambda y: 1.0 - np.asarray(y, dtype=float) / c


def _band_breaks(u, k, a, b):
    pts = [p for p in list(u.breakpoints) + z_k_kinks(k) if a < p < b]
    d = lambda y: float(1.0 - u.ext(y) - z_k(k, y))
    pts += sign_change_roots(d, a, b)
    return tuple(sorted(set(pts)))


def demand_region(model, u, k, q):
    """Region2D pieces of the demand set of slope-q bundle and its mirror."""
    k = float(k)
    a, b = demand_interval(u, q)
    c = shear(k)
    low = participation_floor(u, k)
    brk = _band_breaks(u, k, a, b)
    regions = [Region2D("band", (a, b), lower=low, n1=c, mirror=m, breaks=brk) for m in (False, True)]
    if k > 1.0 and a <= 0.0 and abs(q - u.s0) <= SLOPE_TOL:
        regions.extend(edge_strip_regions(u, k))
    return regions


def edge_strip_regions(u, k):
    c = shear(k)
    low = participation_floor(u, k)
    up = edge_strip_upper(k)
    d = lambda y: float(np.minimum(up(y), 1.0) - low(y))
    brk = tuple(sign_change_roots(d, c, 0.0))
    return [
        Region2D("band", (c, 0.0), lower=low, upper=lambda y: np.maximum(up(y), low(y)), n1=c, mirror=m, breaks=brk)
        for m in (False, True)
    ]


def participation_regions(model, u, k):
    """Union of all nonzero-bundle demand sets, D(Q \\ {0})."""
    c = shear(k)
    low = participation_floor(u, k)
    out = [Region2D("band", (0.0, 1.0), lower=low, n1=c, mirror=m, breaks=_band_breaks(u, k, 0.0, 1.0))
           for m in (False, True)]
    if k > 1.0:
        out.extend(edge_strip_regions(u, k))
    return out


def exclusion_regions(model, u, k):
    """D(0) as Region2D pieces (complement of :func:`participation_regions`)."""
    c = shear(k)
    low = participation_floor(u, k)
    zk = lambda y: z_k(k, y)
    out = [Region2D("band", (0.0, 1.0), lower=zk, upper=low, n1=c, mirror=m, breaks=_band_breaks(u, k, 0.0, 1.0))
           for m in (False, True)]
    if k > 1.0:
        up = edge_strip_upper(k)
        out.extend(
            Region2D("band", (c, 0.0), lower=zk, upper=lambda y: np.minimum(up(y), low(y)), n1=c, mirror=m,
                     breaks=tuple(sign_change_roots(lambda y: float(up(y) - low(y)), c, 0.0)))
            for m in (False, True)
        )
    return out
