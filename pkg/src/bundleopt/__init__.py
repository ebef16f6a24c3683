"""Optimal multi-good selling mechanisms through marginal revenue.

Modules: dist (type distributions), measure (the transformed measure mu),
zeta (threshold curves), mech (u-bar profiles and menus), solver (optimal
two-good mechanisms), oracle (brute-force validators), certify (closed-form
optimality certificates), cli (command line front end).
"""

from .certify import (
    Certificate,
    Target,
    Verdict,
    active_set_predicate,
    certify_mixed_2d,
    certify_pure_2d,
    certify_pure_N,
    certify_separate_2d,
    certify_separate_N,
    exclusion_check,
    pooling_predicate,
    scan_pure_N,
    scan_separate_N,
)
from .dist import Marginal1D, Regularity, TypeModel, check_strict_regularity, iid_model, make_marginal
from .errors import BundleOptError
from .measure import mu_of_region, mu_total, phi
from .mech import Menu, MenuClass, UBar, extract_menu, ubar_from_lines
from .oracle import discrete_mr_probe, lp_oracle, variational_oracle
from .solver import check_foc_soc, revenue_full, revenue_reduced, solve_single_good, solve_two_good
from .zeta import sample_zeta, zeta_at, zeta_iid

__version__ = "0.1.0"
