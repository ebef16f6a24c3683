"""Small numerical helpers shared by the solver, oracles and certificates.

Gauss-Legendre rules are used wherever the caller has already split the
integration range at every kink, so the integrand is smooth on each piece.
"""

from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Nodes and weights of the n-point rule on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def gl_points(lo, hi, n=24):
    """Map the n-point Gauss-Legendre rule to each interval [lo, hi].

    ``lo`` and ``hi`` may be arrays of equal shape; the returned nodes and
    weights then carry one extra trailing axis of length n.
    """
    t, w = gauss_legendre(n)
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    half = 0.5 * (hi - lo)
    return lo + half * (t + 1.0), half * w


def integrate_pieces(func, breaks, n=24):
    """Integrate a vectorized smooth-per-piece function over sorted breaks."""
    breaks = np.asarray(breaks, dtype=float)
    if breaks.size < 2:
        return 0.0
    lo, hi = breaks[:-1], breaks[1:]
    keep = hi > lo
    if not np.any(keep):
        return 0.0
    x, w = gl_points(lo[keep], hi[keep], n)
    return float(np.sum(func(x) * w))


def golden_max(func, lo, hi, tol=1e-9, max_iter=200):
    """Maximize a unimodal function on [lo, hi] by golden-section search.

    Returns ``(x_best, f_best)``.  The end points are compared with the
    interior optimum at the end so that boundary maxima are returned exactly.
    """
    if hi - lo <= tol:
        x = 0.5 * (lo + hi)
        return x, func(x)
    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = func(d)
    best = (c, fc) if fc >= fd else (d, fd)
    for x in (lo, hi):
        fx = func(x)
        if fx > best[1]:
            best = (x, fx)
    return best


def multistart_golden_max(func, lo, hi, tol=1e-9, starts=5):
    """Golden-section search seeded from a deterministic scan.

    The function is evaluated at ``starts`` equally spaced points (box
    corners plus interior points); golden-section then refines inside the
    bracket formed by the neighbours of the best scan point.
    """
    grid = np.linspace(lo, hi, starts)
    vals = [func(x) for x in grid]
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, starts - 1)]
    x, fx = golden_max(func, a, b, tol=tol)
    if vals[i] > fx:
        return grid[i], vals[i]
    return x, fx


def bisect_vec(func, lo, hi, tol=1e-12, max_iter=200):
    """Vectorized bisection for an increasing sign change of ``func``.

    ``func(lo) < 0 <= func(hi)`` is assumed elementwise; returns the midpoint
    of the final bracket.
    """
    lo = np.array(lo, dtype=float, copy=True)
    hi = np.array(hi, dtype=float, copy=True)
    for _ in range(max_iter):
        if np.all(hi - lo <= tol):
            break
        mid = 0.5 * (lo + hi)
        neg = func(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    return 0.5 * (lo + hi)


def sign_change_roots(func, lo, hi, samples=17, xtol=1e-14):
    """All roots of a scalar function on [lo, hi] found by sampling + Brent."""
    if hi <= lo:
        return []
    xs = np.linspace(lo, hi, samples)
    vals = np.array([func(x) for x in xs])
    roots = []
    for i in range(samples - 1):
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0.0:
            roots.append(xs[i])
        elif v0 * v1 < 0:
            roots.append(brentq(func, xs[i], xs[i + 1], xtol=xtol))
    if vals[-1] == 0.0:
        roots.append(xs[-1])
    return roots


def piecewise_roots(func, breaks, samples=5, xtol=1e-14):
    """Roots of a vectorized function, scanned on each piece between breaks.

    The function is sampled at ``samples`` points per piece in one call;
    each sign change is refined by Brent's method.
    """
    breaks = np.asarray(breaks, dtype=float)
    lo, hi = breaks[:-1], breaks[1:]
    s = np.linspace(0.0, 1.0, samples)
    xs = lo[:, None] + (hi - lo)[:, None] * s
    vals = np.asarray(func(xs), dtype=float)
    roots = []
    scalar = lambda x: float(func(np.array([x]))[0])
    for i, j in zip(*np.nonzero(vals[:, :-1] * vals[:, 1:] < 0)):
        roots.append(brentq(scalar, xs[i, j], xs[i, j + 1], xtol=xtol))
    return roots
