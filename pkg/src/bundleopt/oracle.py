"""Brute-force optimizers used to validate the analytic solver.

lp_oracle discretizes the type square into an n x n lattice and solves
the mechanism design LP over (u, grad u) with all pairwise incentive
constraints, using a self-contained primal-dual interior-point method.
variational_oracle maximizes the reduced revenue over piecewise-linear
u-bar by projected gradient ascent.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve

from .errors import NoConvergence, SizeTooLarge
from .mech import UBar, Segment, demand_interval, ubar_from_lines
from .numerics import gl_points
from .solver import FOC_TOL, Phi, _lines, mr_of_bundle, revenue_reduced

log = logging.getLogger(__name__)

MAX_LP_GRID = 25


# ---------------------------------------------------------------------------
# interior-point LP


@dataclass(frozen=True)
class LPResult:
    x: np.ndarray
    objective: float
    iterations: int
    gap: float
    converged: bool
    duals: np.ndarray = None
    slacks: np.ndarray = None


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def ipm_max(c, A, b, x0, tol=1e-9, max_iter=200, lam0=None):
    """Maximize c.x subject to A x <= b (Mehrotra predictor-corrector).

    ``x0`` must be strictly feasible.  The Newton systems are reduced to
    the normal equations A^T D A, factored densely.
    """
    A = sp.csr_matrix(A)
    At = A.T.tocsr()
    x = np.asarray(x0, dtype=float).copy()
    s = b - A @ x
    if np.any(s <= 0):
        raise ValueError("starting point is not strictly feasible")
    lam = np.ones_like(s) if lam0 is None else np.asarray(lam0, float).copy()
    m = len(s)
    cmax = np.abs(c).max()
    it = 0
    gap = np.inf
    history = []
    for it in range(1, max_iter + 1):
        rd = At @ lam - c
        rp = A @ x + s - b
        mu = s @ lam / m
        gap = mu * m / (1.0 + abs(c @ x))
        log.debug("ipm %d: obj %.12g gap %.3g rd %.3g rp %.3g", it, c @ x, gap, np.abs(rd).max(), np.abs(rp).max())
        history.append(c @ x)
        primal_ok = np.abs(rp).max() < 1e-9 * (1.0 + np.abs(b).max())
        # the dual residual of the normal equations plateaus near 1e-6 * |c|;
        # accept once the gap is closed and the objective has stalled
        stalled = len(history) > 5 and abs(history[-1] - history[-6]) <= tol * (1.0 + abs(history[-1]))
        dual_ok = np.abs(rd).max() < 1e-8 * cmax or (np.abs(rd).max() < 1e-4 * cmax and stalled)
        if gap < tol and primal_ok and dual_ok:
            return LPResult(x, float(c @ x), it, float(gap), True, lam, s)
        d = lam / s
        M = (At @ sp.diags(d) @ A).toarray()
        M[np.diag_indices_from(M)] += 1e-14 * max(1.0, M.diagonal().max())
        fac = cho_factor(M, lower=True, check_finite=False)

        def solve(rc):
            rhs = -rd - At @ (d * rp + rc / s)
            dx = cho_solve(fac, rhs, check_finite=False)
            for _ in range(2):  # iterative refinement against the unregularized matrix
                dx += cho_solve(fac, rhs - At @ (d * (A @ dx)), check_finite=False)
            dlam = d * (A @ dx + rp) + rc / s
            ds = (rc - s * dlam) / lam
            return dx, ds, dlam

        # predictor
        dx, ds, dlam = solve(-s * lam)
        ap = _max_step(s, ds)
        ad = _max_step(lam, dlam)
        mu_aff = (s + ap * ds) @ (lam + ad * dlam) / m
        sigma = (mu_aff / mu) ** 3
        # corrector
        dx, ds, dlam = solve(-s * lam - ds * dlam + sigma * mu)
        ap = 0.995 * _max_step(s, ds)
        ad = 0.995 * _max_step(lam, dlam)
        x = x + ap * dx
        s = s + ap * ds
        lam = lam + ad * dlam
        s = np.maximum(s, 1e-300)
    return LPResult(x, float(c @ x), it, float(gap), False, lam, s)


# ---------------------------------------------------------------------------
# mechanism LP


@dataclass(frozen=True, eq=False)
class GridMechanism:
    n: int
    points: np.ndarray
    u: np.ndarray
    grad: np.ndarray
    revenue: float
    weights: np.ndarray
    k: float
    ic_min: float = float("nan")
    cs_max: float = float("nan")
    qa_share: float = float("nan")

    def bundle_at(self, i, j):
        return tuple(self.grad[i * self.n + j])


def grid_weights(model, n):
    """Trapezoid weights times the density on the n x n lattice of [0, 1]^2."""
    xs = np.linspace(0.0, 1.0, n)
    w1 = np.full(n, 1.0 / (n - 1))
    w1[[0, -1]] *= 0.5
    g1, g2 = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    w = np.outer(w1, w1).ravel() * model.f2(pts[:, 0], pts[:, 1])
    return pts, w


def allocation_facets(k):
    """Rows (a, rhs) with a . g <= rhs describing Q(k)."""
    return [((-1.0, 0.0), 0.0), ((0.0, -1.0), 0.0), ((1.0 - k, k), k), ((k, 1.0 - k), k)]


def build_lp(model, n, k):
    pts, w = grid_weights(model, n)
    P = len(pts)
    nv = 3 * P  # u, g1, g2 per point
    iu = np.arange(P)
    ig1 = P + iu
    ig2 = 2 * P + iu
    c = np.concatenate([-w, w * pts[:, 0], w * pts[:, 1]])

    ii, jj = np.meshgrid(iu, iu, indexing="ij")
    off = ii != jj
    i, j = ii[off], jj[off]
    r = np.arange(len(i))
    dx1 = pts[j, 0] - pts[i, 0]
    dx2 = pts[j, 1] - pts[i, 1]
    # u_i + g_i . (x_j - x_i) - u_j <= 0
    rows = [np.repeat(r, 4)]
    cols = [np.column_stack([iu[i], iu[j], ig1[i], ig2[i]]).ravel()]
    vals = [np.column_stack([np.ones_like(dx1), -np.ones_like(dx1), dx1, dx2]).ravel()]
    base = len(r)
    # participation: -u_i <= 0
    rows.append(base + iu)
    cols.append(iu)
    vals.append(-np.ones(P))
    base += P
    rhs = [np.zeros(base)]
    for (a1, a2), h in allocation_facets(k):
        rr = base + iu
        rows.append(np.repeat(rr, 2))
        cols.append(np.column_stack([ig1, ig2]).ravel())
        vals.append(np.tile([a1, a2], P))
        rhs.append(np.full(P, h))
        base += P
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(base, nv))
    A.eliminate_zeros()
    b = np.concatenate(rhs)
    return c, A, b, pts, w


def _interior_start(pts, k):
    alpha = delta = 0.2 * min(1.0, k)
    beta = 0.05
    u = 0.5 * alpha * np.sum(pts**2, axis=1) + delta * pts.sum(axis=1) + beta
    g = alpha * pts + delta
    return np.concatenate([u, g[:, 0], g[:, 1]])


def lp_oracle(model, n=21, k=1.0, tol=1e-9, max_iter=200, allow_large=False):
    """Optimal grid mechanism for the n x n lattice.

    Grids above MAX_LP_GRID per axis need ``allow_large`` (dense all-pairs
    IC makes them slow).
    """
    if n > MAX_LP_GRID and not allow_large:
        raise SizeTooLarge(f"n={n} exceeds {MAX_LP_GRID}")
    c, A, b, pts, w = build_lp(model, n, float(k))
    log.info("lp_oracle: %d variables, %d constraints", A.shape[1], A.shape[0])
    res = ipm_max(c, A, b, _interior_start(pts, float(k)), tol=tol, max_iter=max_iter)
    if not res.converged:
        raise NoConvergence(f"interior point stopped at gap {res.gap:.3g}", res)
    P = len(pts)
    u = res.x[:P]
    grad = np.column_stack([res.x[P:2 * P], res.x[2 * P:]])
    ic_min, cs_max = _lp_checks(A, b, res)
    share = active_share(grad, w, float(k))
    log.info("lp_oracle: revenue %.10f, IC residual %.2e, slackness %.2e, Q_A share %.4f",
             res.objective, ic_min, cs_max, share)
    return GridMechanism(n, pts, u, grad, res.objective, w, float(k), ic_min, cs_max, share)


def _lp_checks(A, b, res, samples=20, seed=0):
    """Smallest IC slack and slackness products on random constraints.

    IC rows come first in build_lp; the scale-free slackness product is
    slack * dual relative to the objective.
    """
    slack = b - A @ res.x
    n_ic = A.shape[0] - 5 * (A.shape[1] // 3)
    ic_min = float(slack[:n_ic].min())
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(slack), size=min(samples, len(slack)), replace=False)
    cs = np.abs(slack[pick] * res.duals[pick]) / (1.0 + abs(res.objective))
    return ic_min, float(cs.max())


def active_share(grad, w, k, tol=0.02):
    """Share of the served mass whose bundle lies on the tilted facets of Q(k).

    These are the bundles allowed to be active on a square type space
    (for k = 1 they are the bundles with a unit coordinate).
    """
    served = np.abs(grad).sum(axis=1) > tol
    if not np.any(served):
        return 1.0
    g1, g2 = grad[:, 0], grad[:, 1]
    on = (np.abs((1.0 - k) * g1 + k * g2 - k) <= tol * max(1.0, k)) | (np.abs(k * g1 + (1.0 - k) * g2 - k) <= tol * max(1.0, k))
    return float(w[served & on].sum() / w[served].sum())


def grid_revenue(model, n, u_func, grad_func):
    """Revenue of a given mechanism evaluated with the LP's lattice weights."""
    pts, w = grid_weights(model, n)
    u = u_func(pts[:, 0], pts[:, 1])
    g = grad_func(pts[:, 0], pts[:, 1])
    return float(np.sum(w * (g[:, 0] * pts[:, 0] + g[:, 1] * pts[:, 1] - u)))


# ---------------------------------------------------------------------------
# variational oracle


def pav_nondecreasing(y, w=None):
    """Weighted isotonic regression (pool adjacent violators)."""
    y = np.asarray(y, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    vals, wts, sizes = [], [], []
    for yi, wi in zip(y, w):
        vals.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            v2, w2, s2 = vals.pop(), wts.pop(), sizes.pop()
            v1, w1, s1 = vals.pop(), wts.pop(), sizes.pop()
            ww = w1 + w2
            vals.append((v1 * w1 + v2 * w2) / ww)
            wts.append(ww)
            sizes.append(s1 + s2)
    return np.repeat(vals, sizes)


@dataclass(frozen=True)
class VariationalResult:
    """Projected-gradient optimum over step-slope u-bar profiles.

    ``lcal`` samples the twice-integrated MR line density on the knots;
    ``lcal_d0`` is its derivative at 0 and ``support_gap`` the largest
    shortfall of lcal from its maximum over knots where the slope changes
    (both vanish at an exact optimum).
    """

    ubar: UBar
    revenue: float
    iterations: int
    converged: bool
    knots: np.ndarray = None
    lcal: np.ndarray = None
    lcal_d0: float = float("nan")
    support_gap: float = float("nan")


def _ubar(u0, knots, slopes, k):
    segs = [Segment(float(a), float(b), "affine", float(s)) for a, b, s in zip(knots[:-1], knots[1:], slopes)]
    return UBar(u0, segs, k, check=False)


def lcal_profile(model, u, k, knots, order=8):
    """L(x) = -int_x^1 int_y^1 Phi(z) dz dy on the knots (trapezoid in y)."""
    y, wy = gl_points(knots[:-1], knots[1:], order)
    phi = np.asarray(Phi(model, u, k, y.ravel())).reshape(y.shape)
    per_seg = (phi * wy).sum(axis=1)
    inner = np.concatenate([np.cumsum(per_seg[::-1])[::-1], [0.0]])  # int_x^1 Phi
    h = np.diff(knots)
    outer = np.concatenate([np.cumsum((0.5 * h * (inner[:-1] + inner[1:]))[::-1])[::-1], [0.0]])
    return -outer, float(inner[0])


def variational_oracle(model, n=400, k=1.0, max_iter=3000, tol=1e-9, u_init=None):
    """Projected gradient ascent over piecewise-linear u-bar with n segments.

    Parameters are u0 and the n slopes; the gradient of revenue with
    respect to u-bar(y) is -2 Phi(y).  u0 is clipped to [0, 1] and slopes
    are projected onto nondecreasing sequences in [0, k] by isotonic
    regression followed by clipping.  ``u_init`` (a UBar) sets the start.

    Raises:
        NoConvergence: relative improvement still above ``tol`` after
            ``max_iter`` steps; the last iterate rides on the exception.
    """
    k = float(k)
    knots = np.linspace(0.0, 1.0, n + 1)
    h = knots[1] - knots[0]
    if u_init is None:
        u0, slopes = 0.5, np.full(n, 0.5 * k)
    else:
        u0 = float(u_init(0.0))
        slopes = np.diff(u_init(knots)) / h
    y, wy = gl_points(knots[:-1], knots[1:], 8)

    def value(u0, s):
        return revenue_reduced(model, _ubar(u0, knots, s, k))

    def grad(u0, s):
        ub = _ubar(u0, knots, s, k)
        dens = -2.0 * np.asarray(Phi(model, ub, k, y.ravel())).reshape(y.shape) * wy
        per_seg = dens.sum(axis=1)
        tail = np.concatenate([np.cumsum(per_seg[::-1])[::-1][1:], [0.0]])
        inside = (dens * (y - knots[:-1, None])).sum(axis=1)
        return per_seg.sum(), inside + h * tail

    def project(u0, s):
        return min(max(u0, 0.0), 1.0), np.clip(pav_nondecreasing(s), 0.0, k)

    u0, slopes = project(u0, slopes)
    f = value(u0, slopes)
    step = 0.5
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g0, gs = grad(u0, slopes)
        gs_scaled = gs / h  # slope gradients scale with the segment length
        while True:
            nu0, ns = project(u0 + step * g0, slopes + step * gs_scaled)
            nf = value(nu0, ns)
            moved = (nu0 - u0) * g0 + (ns - slopes) @ gs
            if nf >= f + 1e-4 * moved or step < 1e-12:
                break
            step *= 0.5
        gain = nf - f
        if nf > f:
            u0, slopes, f = nu0, ns, nf
        if gain <= tol * max(abs(f), 1e-12):
            converged = True
            break
        step = min(step * 2.0, 0.5)
    ub = _ubar(u0, knots, slopes, k)
    lc, d0 = lcal_profile(model, ub, k, knots)
    kinks = np.flatnonzero(np.abs(np.diff(slopes)) > 1e-9) + 1
    support = np.concatenate([kinks, [0] if slopes[0] > 1e-9 else [], [n] if slopes[-1] < k - 1e-9 else []]).astype(int)
    gap = float(np.max(lc.max() - lc[support])) if len(support) else 0.0
    result = VariationalResult(ub, float(f), it, converged, knots, lc, d0, gap)
    log.info("variational_oracle: revenue %.10f after %d steps (L'(0)=%.2e)", f, it, d0)
    if not converged:
        raise NoConvergence(f"relative improvement above {tol:g} after {max_iter} steps", result)
    return result


# ---------------------------------------------------------------------------
# price probes


@dataclass(frozen=True)
class ProbeResult:
    q: float
    mr: float
    eps: float
    delta_revenue: float
    improving: bool
    predicted_sign: int
    sign_matches: bool


def discrete_mr_probe(model, u, k, eps=1e-3):
    """Finite price moves on each menu bundle, compared with the MR sign.

    Raising the price of a bundle by eps changes revenue by about eps * MR,
    so a positive MR predicts that raising the price helps.
    """
    base = revenue_reduced(model, u)
    slopes, cs = _lines(u)
    out = []
    for i, s in enumerate(slopes):
        mr = mr_of_bundle(model, u, k, s)
        for e in (eps, -eps):
            c2 = list(cs)
            c2[i] += e
            d = revenue_reduced(model, ubar_from_lines(slopes, c2, k)) - base
            pred = int(np.sign(mr)) if abs(mr) > FOC_TOL else 0
            improving = d > 0
            out.append(ProbeResult(s, mr, e, d, improving, pred, improving and pred == int(np.sign(e))))
    return out
