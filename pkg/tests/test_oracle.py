import numpy as np
import pytest

from bundleopt.errors import NoConvergence, SizeTooLarge
from bundleopt.mech import ubar_from_lines
from bundleopt.oracle import (
    MAX_LP_GRID,
    active_share,
    allocation_facets,
    build_lp,
    discrete_mr_probe,
    grid_revenue,
    grid_weights,
    ipm_max,
    lcal_profile,
    lp_oracle,
    pav_nondecreasing,
    variational_oracle,
)

GRAND = (4.0 - np.sqrt(2.0)) / 3.0


class TestIPM:
    def test_box(self):
        # max x + 2y on the unit box
        A = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        b = np.array([1.0, 1.0, 0.0, 0.0])
        res = ipm_max(np.array([1.0, 2.0]), A, b, np.array([0.5, 0.5]))
        assert res.converged
        assert res.objective == pytest.approx(3.0, abs=1e-7)

    def test_triangle(self):
        A = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        b = np.array([1.0, 0.0, 0.0])
        res = ipm_max(np.array([2.0, 1.0]), A, b, np.array([0.2, 0.2]))
        np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-6)

    def test_infeasible_start(self):
        with pytest.raises(ValueError):
            ipm_max(np.ones(1), np.array([[1.0]]), np.array([1.0]), np.array([2.0]))


class TestLattice:
    def test_weights_integrate_density(self, uniform_model):
        _, w = grid_weights(uniform_model, 11)
        assert w.sum() == pytest.approx(1.0)

    def test_lp_shape(self, uniform_model):
        c, A, b, pts, w = build_lp(uniform_model, 3, 1.0)
        P = 9
        assert A.shape == (P * (P - 1) + 5 * P, 3 * P)
        assert len(b) == A.shape[0]

    def test_facets_k1_is_unit_square(self):
        rows = allocation_facets(1.0)
        assert rows[2] == ((0.0, 1.0), 1.0)
        assert rows[3] == ((1.0, 0.0), 1.0)


class TestLP:
    def test_two_point_grid_extracts_surplus(self, uniform_model):
        # corner types only: selling each good at 1 takes everything
        res = lp_oracle(uniform_model, n=2)
        assert res.revenue == pytest.approx(1.0, abs=1e-7)

    def test_small_grid_certificates(self, uniform_model):
        res = lp_oracle(uniform_model, n=6)
        assert res.ic_min > -1e-8
        assert res.cs_max < 1e-6
        assert np.all(res.grad > -1e-7) and np.all(res.grad < 1.0 + 1e-7)
        assert np.all(res.u > -1e-8)

    def test_grid_value_bounds_menu(self, uniform_model):
        # the LP optimum dominates the analytic menu evaluated on the same lattice
        n = 6
        res = lp_oracle(uniform_model, n=n)

        def u_f(x1, x2):
            return np.maximum.reduce([x1 - 2 / 3, x2 - 2 / 3, x1 + x2 - GRAND, np.zeros_like(x1)])

        def g_f(x1, x2):
            opts = np.stack([np.zeros_like(x1), x1 - 2 / 3, x2 - 2 / 3, x1 + x2 - GRAND])
            best = np.argmax(opts, axis=0)
            table = np.array([[0, 0], [1, 0], [0, 1], [1, 1]], float)
            return table[best]

        assert res.revenue >= grid_revenue(uniform_model, n, u_f, g_f) - 1e-8

    def test_size_guard(self, uniform_model):
        with pytest.raises(SizeTooLarge):
            lp_oracle(uniform_model, n=MAX_LP_GRID + 1)

    def test_active_share_k1(self):
        grad = np.array([[1.0, 0.3], [0.2, 1.0], [0.5, 0.5], [0.0, 0.0]])
        w = np.ones(4)
        assert active_share(grad, w, 1.0) == pytest.approx(2.0 / 3.0)


class TestPAV:
    def test_pools_violators(self):
        np.testing.assert_allclose(pav_nondecreasing(np.array([3.0, 1.0, 2.0])), [2.0, 2.0, 2.0])

    def test_identity_on_sorted(self):
        y = np.array([0.1, 0.2, 0.2, 0.9])
        np.testing.assert_allclose(pav_nondecreasing(y), y)

    def test_weighted(self):
        out = pav_nondecreasing(np.array([2.0, 0.0]), np.array([3.0, 1.0]))
        np.testing.assert_allclose(out, [1.5, 1.5])


class TestVariational:
    def test_warm_start_stays(self, uniform_model, uniform_opt):
        res = variational_oracle(uniform_model, n=40, u_init=uniform_opt.ubar, max_iter=200, tol=1e-8)
        assert res.converged
        assert res.revenue == pytest.approx(uniform_opt.revenue, abs=2e-6)
        assert abs(res.lcal_d0) < 1e-3

    def test_no_convergence_carries_iterate(self, uniform_model):
        with pytest.raises(NoConvergence) as exc:
            variational_oracle(uniform_model, n=20, max_iter=2, tol=1e-15)
        assert exc.value.last.revenue > 0.0

    def test_lcal_zero_at_one(self, uniform_model, uniform_opt):
        knots = np.linspace(0.0, 1.0, 21)
        lc, d0 = lcal_profile(uniform_model, uniform_opt.ubar, 1.0, knots)
        assert lc[-1] == 0.0
        assert np.isfinite(d0)


class TestProbe:
    def test_optimum_has_no_improving_move(self, uniform_model, uniform_opt):
        for p in discrete_mr_probe(uniform_model, uniform_opt.ubar, 1.0):
            assert p.delta_revenue < 1e-8

    def test_wrong_prices_are_improvable(self, uniform_model):
        u = ubar_from_lines([0.0, 1.0], [0.55 - 1.0, GRAND - 1.0], 1.0)
        probes = discrete_mr_probe(uniform_model, u, 1.0)
        assert any(p.improving and p.sign_matches for p in probes)
