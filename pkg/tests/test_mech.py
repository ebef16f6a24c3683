import numpy as np
import pytest

from bundleopt.errors import InfeasibleUBar, OutOfDomain
from bundleopt.mech import (
    Menu,
    MenuClass,
    Segment,
    UBar,
    bundle_for_slope,
    classify_slopes,
    demand_interval,
    extract_menu,
    induced_u,
    piecewise_linear,
    price_for_slope,
    ubar_eval,
    ubar_from_lines,
    ubar_slope,
)

GRAND = (4.0 - np.sqrt(2.0)) / 3.0


def uniform_ubar():
    # singles at 2/3 and the grand bundle at (4 - sqrt 2)/3
    return ubar_from_lines([0.0, 1.0], [2.0 / 3.0 - 1.0, GRAND - 1.0], 1.0)


class TestUBar:
    def test_eval_piecewise(self):
        u = piecewise_linear(0.1, [0.0, 0.5, 1.0], [0.0, 1.0], 1.0)
        np.testing.assert_allclose(ubar_eval(u, [0.0, 0.25, 0.5, 0.75, 1.0]), [0.1, 0.1, 0.1, 0.35, 0.6])

    def test_slopes(self):
        u = piecewise_linear(0.1, [0.0, 0.5, 1.0], [0.0, 1.0], 1.0)
        assert ubar_slope(u, 0.5, "left") == 0.0
        assert ubar_slope(u, 0.5, "right") == 1.0

    def test_out_of_domain(self):
        u = piecewise_linear(0.1, [0.0, 1.0], [0.5], 1.0)
        with pytest.raises(OutOfDomain):
            ubar_eval(u, 1.2)
        with pytest.raises(OutOfDomain):
            ubar_slope(u, -0.1)

    def test_rejects_concave(self):
        with pytest.raises(InfeasibleUBar):
            piecewise_linear(0.0, [0.0, 0.5, 1.0], [1.0, 0.0], 1.0)

    def test_rejects_steep(self):
        with pytest.raises(InfeasibleUBar):
            piecewise_linear(0.0, [0.0, 1.0], [1.5], 1.0)

    def test_rejects_gap(self):
        with pytest.raises(InfeasibleUBar):
            UBar(0.0, [Segment(0.0, 0.4, "affine", 0.0), Segment(0.5, 1.0, "affine", 1.0)], 1.0)

    def test_follow_needs_zeta(self):
        with pytest.raises(InfeasibleUBar):
            UBar(0.0, [Segment(0.0, 1.0, "follow")], 1.0)

    def test_ext_is_linear_outside(self):
        u = piecewise_linear(0.2, [0.0, 0.5, 1.0], [0.25, 0.75], 1.0)
        assert float(u.ext(-0.4)) == pytest.approx(0.2 - 0.1)
        assert float(u.ext(1.2)) == pytest.approx(float(u(1.0)) + 0.15)

    def test_dict_round_trip(self):
        u = piecewise_linear(0.2, [0.0, 0.3, 1.0], [0.0, 1.0], 1.0)
        v = UBar.from_dict(u.to_dict())
        xs = np.linspace(0.0, 1.0, 11)
        np.testing.assert_allclose(u(xs), v(xs))


class TestLines:
    def test_uniform_envelope(self):
        u = uniform_ubar()
        knot = GRAND - 2.0 / 3.0
        assert u.u0 == pytest.approx(1.0 / 3.0)
        np.testing.assert_allclose(u.breakpoints, [0.0, knot, 1.0], atol=1e-12)

    def test_conjugacy_round_trip(self):
        # prices read back from the envelope are the prices that built it
        slopes, prices = [0.0, 0.4, 1.0], [0.7, 0.75, 0.9]
        cs = [p - (s * (1.0 - 1.0 / 1.0) + 1.0) for s, p in zip(slopes, prices)]
        u = ubar_from_lines(slopes, cs, 1.0)
        for s, p in zip(slopes, prices):
            a, _ = demand_interval(u, s)
            assert price_for_slope(u, s, a) == pytest.approx(p, abs=1e-12)

    def test_zero_line_floor(self):
        u = ubar_from_lines([1.0], [0.5], 1.0)
        assert u.u0 == 0.0
        assert float(u(0.25)) == 0.0
        assert float(u(1.0)) == pytest.approx(0.5)


class TestDemand:
    def test_intervals(self):
        u = uniform_ubar()
        knot = GRAND - 2.0 / 3.0
        assert demand_interval(u, 0.0) == pytest.approx((0.0, knot))
        assert demand_interval(u, 1.0) == pytest.approx((knot, 1.0))
        # a slope between the two pieces is demanded only at the kink
        assert demand_interval(u, 0.5) == pytest.approx((knot, knot))

    def test_bundles(self):
        assert bundle_for_slope(0.0, 1.0) == (0.0, 1.0)
        assert bundle_for_slope(1.0, 1.0) == (1.0, 1.0)
        assert bundle_for_slope(0.5, 0.5) == (0.5, 0.5)
        assert bundle_for_slope(0.5, 2.0) == pytest.approx((0.5, 1.25))

    def test_induced_utility(self, uniform_model):
        u = uniform_ubar()
        x1 = np.array([0.1, 0.9, 0.9, 0.5])
        x2 = np.array([0.1, 0.2, 0.9, 0.5])
        expected = np.maximum.reduce([x1 - 2 / 3, x2 - 2 / 3, x1 + x2 - GRAND, np.zeros(4)])
        np.testing.assert_allclose(induced_u(uniform_model, u, 1.0, x1, x2), expected, atol=1e-12)

    def test_induced_outside(self, uniform_model):
        with pytest.raises(OutOfDomain):
            induced_u(uniform_model, uniform_ubar(), 1.0, 1.1, 0.5)


class TestMenu:
    def test_uniform_menu(self, uniform_model):
        menu = extract_menu(uniform_model, uniform_ubar())
        assert menu.menu_class == MenuClass.MIXED_BUNDLING
        assert menu.price_of((0.0, 1.0)) == pytest.approx(2.0 / 3.0)
        assert menu.price_of((1.0, 0.0)) == pytest.approx(2.0 / 3.0)
        assert menu.price_of((1.0, 1.0)) == pytest.approx(GRAND)
        assert menu.size == 3

    def test_lottery_menu(self, uniform_model):
        u = piecewise_linear(0.05, [0.0, 0.3, 0.6, 1.0], [0.0, 0.5, 1.0], 1.0)
        menu = extract_menu(uniform_model, u)
        assert menu.menu_class == MenuClass.STOCHASTIC_FINITE
        assert menu.label == "StochasticFinite(5)"
        assert menu.price_of((0.5, 1.0)) is not None

    def test_pure_bundle(self, uniform_model):
        u = piecewise_linear(0.0, [0.0, 0.2, 1.0], [0.0, 1.0], 1.0)
        menu = extract_menu(uniform_model, u)
        assert menu.menu_class == MenuClass.PURE_BUNDLING
        assert menu.price_of((0.0, 1.0)) is None
        assert menu.price_of((1.0, 1.0)) == pytest.approx(1.2)

    def test_classify(self):
        assert classify_slopes([0.0], 1.0) == MenuClass.SEPARATE_SELLING
        assert classify_slopes([1.0], 1.0) == MenuClass.PURE_BUNDLING
        assert classify_slopes([0.0, 0.3, 1.0], 1.0) == MenuClass.STOCHASTIC_FINITE

    def test_separate_when_additive(self, uniform_model):
        # grand bundle at exactly twice the single price
        u = ubar_from_lines([0.0, 1.0], [-0.4, 0.2], 1.0)
        assert extract_menu(uniform_model, u).menu_class == MenuClass.SEPARATE_SELLING

    def test_dict_round_trip(self, uniform_model):
        menu = extract_menu(uniform_model, uniform_ubar())
        assert Menu.from_dict(menu.to_dict()) == menu

    def test_k_mismatch(self, uniform_model):
        with pytest.raises(InfeasibleUBar):
            extract_menu(uniform_model, uniform_ubar(), k=0.5)
