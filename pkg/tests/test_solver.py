import numpy as np
import pytest

from bundleopt.dist import custom_model, iid_model, make_marginal
from bundleopt.errors import NotRegular, NotReversedRegular, PreconditionFailed
from bundleopt.mech import MenuClass, piecewise_linear, ubar_from_lines
from bundleopt.solver import (
    Phi,
    SolveResult,
    best_deterministic_menu,
    check_foc_soc,
    menu_size_bound,
    menu_size_cap,
    mr_of_bundle,
    perturb_cutoff,
    revenue_full,
    revenue_reduced,
    solve_single_good,
    solve_two_good,
    solve_unbounded_srrs,
)

GRAND = (4.0 - np.sqrt(2.0)) / 3.0


def model(kind, **params):
    return iid_model(make_marginal(kind, params))


def exp_model():
    f = lambda x: np.exp(-(x[..., 0] + x[..., 1] - 4.0))
    grad = lambda x: -np.stack([f(x), f(x)], axis=-1)
    return custom_model(f, grad, bounds=(2.0, np.inf))


class TestSingleGood:
    def test_uniform(self, uniform):
        res = solve_single_good(uniform)
        assert res.price == pytest.approx(0.5, abs=1e-8)
        assert res.revenue == pytest.approx(0.25, abs=1e-12)

    def test_power(self):
        # g = 2x on [0, 1]: p (1 - p^2) peaks at 1/sqrt 3
        res = solve_single_good(make_marginal("power_law", {"theta": 0.0, "eta": 2.0}))
        assert res.price == pytest.approx(1.0 / np.sqrt(3.0), abs=1e-8)


class TestRevenue:
    def test_uniform_menu_revenue(self, uniform_model):
        u = ubar_from_lines([0.0, 1.0], [2.0 / 3.0 - 1.0, GRAND - 1.0], 1.0)
        assert revenue_reduced(uniform_model, u) == pytest.approx(0.549201, abs=1e-6)
        assert revenue_full(uniform_model, u, 1.0) == pytest.approx(revenue_reduced(uniform_model, u), abs=1e-8)

    def test_pure_bundle_revenue(self, uniform_model):
        # grand bundle at p = 1.2 sells on the corner triangle of area (2 - p)^2 / 2
        p = 1.2
        u = ubar_from_lines([1.0], [p - 1.0], 1.0)
        expected = p * (2.0 - p) ** 2 / 2.0
        assert revenue_full(uniform_model, u, 1.0) == pytest.approx(expected, abs=1e-8)
        assert revenue_reduced(uniform_model, u) == pytest.approx(expected, abs=1e-8)

    @pytest.mark.parametrize("k", [0.5, 1.5])
    def test_paths_agree_off_k1(self, uniform_model, k):
        u = piecewise_linear(0.3, [0.0, 0.4, 1.0], [0.0, k], k)
        assert revenue_reduced(uniform_model, u) == pytest.approx(revenue_full(uniform_model, u, k), abs=1e-6)


class TestMarginalRevenue:
    def test_uniform_optimum_foc(self, uniform_opt, uniform_model):
        u = uniform_opt.ubar
        for q in (0.0, 1.0):
            assert abs(mr_of_bundle(uniform_model, u, 1.0, q)) < 1e-5
        rep = check_foc_soc(uniform_model, u, 1.0)
        assert rep.passed, rep.failures

    def test_phi_integral_links_to_u0(self, uniform_opt, uniform_model):
        # the total column mass vanishes at the optimum
        xs = np.linspace(0.0, 1.0, 2001)
        vals = Phi(uniform_model, uniform_opt.ubar, 1.0, xs)
        assert abs(np.trapezoid(vals, xs)) < 1e-4

    def test_suboptimal_fails(self, uniform_model):
        u = ubar_from_lines([0.0, 1.0], [0.6 - 1.0, 0.8 - 1.0], 1.0)
        assert not check_foc_soc(uniform_model, u, 1.0).passed


class TestSolve:
    def test_uniform(self, uniform_opt):
        assert uniform_opt.menu.menu_class == MenuClass.MIXED_BUNDLING
        assert uniform_opt.revenue == pytest.approx(0.549201, abs=1e-6)
        assert uniform_opt.menu.price_of((1.0, 0.0)) == pytest.approx(2.0 / 3.0, abs=1e-7)
        assert uniform_opt.menu.price_of((1.0, 1.0)) == pytest.approx(GRAND, abs=1e-7)
        assert uniform_opt.cutoffs["a^1"] == pytest.approx(GRAND - 2.0 / 3.0, abs=1e-6)

    def test_uniform_half(self, uniform_model):
        res = solve_two_good(uniform_model, 0.5)
        assert res.menu.menu_class == MenuClass.SEPARATE_SELLING
        assert res.revenue == pytest.approx(2.0 / (3.0 * np.sqrt(3.0)), abs=1e-6)

    def test_pareto_pure(self):
        res = solve_two_good(model("trunc_pareto", eta=2.95))
        assert res.menu.menu_class == MenuClass.PURE_BUNDLING

    def test_pareto_lottery(self):
        res = solve_two_good(model("trunc_pareto", eta=2.5))
        assert res.menu.menu_class == MenuClass.STOCHASTIC_FINITE
        assert 0.0 < res.cutoffs["q"] < 1.0

    def test_normal_continuum(self):
        res = solve_two_good(model("trunc_normal", theta=0.0))
        assert res.menu.menu_class == MenuClass.STOCHASTIC_INFINITE
        assert res.report.passed

    def test_rejects_small_k(self, uniform_model):
        with pytest.raises(PreconditionFailed):
            solve_two_good(uniform_model, 0.4)

    def test_rejects_irregular(self):
        f = lambda x: (1.0 + 0.9 * np.cos(6 * x[..., 0]) * np.cos(6 * x[..., 1]))
        grad = lambda x: np.stack([
            -5.4 * np.sin(6 * x[..., 0]) * np.cos(6 * x[..., 1]),
            -5.4 * np.cos(6 * x[..., 0]) * np.sin(6 * x[..., 1]),
        ], axis=-1)
        with pytest.raises(NotRegular):
            solve_two_good(custom_model(f, grad), 1.0)

    def test_dict_round_trip(self, uniform_opt):
        back = SolveResult.from_dict(uniform_opt.to_dict())
        assert back == uniform_opt
        assert back.report.passed

    def test_perturbation_breaks_foc(self, uniform_opt, uniform_model):
        u = perturb_cutoff(uniform_opt, 1.0, 1, 0.03)
        assert not check_foc_soc(uniform_model, u, 1.0).passed

    def test_beats_deterministic(self):
        m = model("trunc_pareto", eta=2.5)
        det = best_deterministic_menu(m)
        # the lottery gain here is small (about 4e-7) but well above quadrature error
        assert solve_two_good(m).revenue > det["revenue"] + 1e-7


class TestMenuSize:
    def test_bounds(self):
        assert menu_size_bound(model("uniform")) == 1
        assert menu_size_bound(model("trunc_pareto", eta=2.95)) == 1
        assert menu_size_bound(model("trunc_gamma", eta=2.0, lam=1.0)) == 0
        assert menu_size_cap(model("uniform")) == 5


class TestUnbounded:
    def test_exponential_price(self):
        res = solve_unbounded_srrs(exp_model())
        assert res.price == pytest.approx(4.0 + (np.sqrt(13.0) - 3.0) / 2.0, abs=1e-6)
        assert res.revenue == pytest.approx(4.14118, abs=1e-4)

    def test_rejects_regular(self, uniform_model):
        with pytest.raises(NotReversedRegular):
            solve_unbounded_srrs(uniform_model)
