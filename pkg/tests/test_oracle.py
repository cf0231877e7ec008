import math

import numpy as np
import pytest

from conftest import rel
from creditalloc import ModelConfig, generate_synthetic, make_portfolio
from creditalloc.errors import CapacityError
from creditalloc.kernels import bivariate_norm_cdf, norm_cdf
from creditalloc.oracle import (
    brute_force_contributions,
    exact_covariance_sums,
    pairwise_covariance,
)
from creditalloc.valuation import Loan, default_only_coeff

CRAMER_K = 1.086435
CFG = ModelConfig(recovery_k=math.inf)


def _default_only(dd, l, lid="L"):
    p = float(norm_cdf(-dd))
    return Loan(lid, "B", 1.0, 1.0, p, p, l)          # t_m = t_h: unit value, no discounting


def _closed_form(dd_i, dd_j, l_i, l_j, rho):
    p_i, p_j = norm_cdf(-dd_i), norm_cdf(-dd_j)
    return l_i * l_j * (bivariate_norm_cdf(-dd_i, -dd_j, rho) - p_i * p_j)


def test_one_twelfth():
    a, b = _default_only(0.0, 1.0), _default_only(0.0, 1.0)
    assert pairwise_covariance(a, b, 0.5, CFG) == pytest.approx(1.0 / 12.0, abs=1e-13)


@pytest.mark.parametrize("rho", [-0.4, 0.1, 0.3, 0.6, 0.9])
def test_default_only_closed_form(rho):
    for dd_i in (-1.0, 0.5, 2.0, 3.0):
        for dd_j in (-0.5, 1.5, 2.5):
            got = pairwise_covariance(_default_only(dd_i, 0.4), _default_only(dd_j, 0.9), rho, CFG)
            assert got == pytest.approx(_closed_form(dd_i, dd_j, 0.4, 0.9, rho), abs=1e-9)


def test_symmetry():
    cfg = ModelConfig()
    a = Loan("a", "A", 1e6, 5.0, 0.01, 0.05, 0.45)
    b = Loan("b", "B", 3e5, 0.5, 0.08, 0.08, 0.7)
    assert pairwise_covariance(a, b, 0.3, cfg, 0.5, 0.6) == pytest.approx(
        pairwise_covariance(b, a, 0.3, cfg, 0.6, 0.5), rel=1e-13)
    assert pairwise_covariance(a, b, 0.0, cfg) == 0.0
    with pytest.raises(ValueError):
        pairwise_covariance(a, b, -1.0, cfg)


def test_mehler_partial_sum_within_tail_bound():
    for dd_i, dd_j, l_i, l_j in ((1.0, 2.0, 0.5, 0.8), (0.0, -1.0, 1.0, 0.3), (2.5, 2.5, 0.6, 0.6)):
        C = (l_i * CRAMER_K / math.sqrt(2 * math.pi)) * (l_j * CRAMER_K / math.sqrt(2 * math.pi))
        for rho in (0.2, 0.5, 0.8):
            exact = pairwise_covariance(_default_only(dd_i, l_i), _default_only(dd_j, l_j), rho, CFG)
            for n_max in (1, 3, 6, 12):
                partial = math.fsum(rho**n * default_only_coeff(-dd_i, l_i, n)
                                    * default_only_coeff(-dd_j, l_j, n)
                                    for n in range(1, n_max + 1))
                bound = C * rho ** (n_max + 1) / (1 - rho)
                assert abs(exact - partial) <= bound + 1e-12


def test_same_borrower_route():
    cfg = ModelConfig(recovery_k=4.0)
    a = Loan("a", "A", 1e6, 4.0, 0.02, 0.078, 0.5)
    assert pairwise_covariance(a, a, 1.0, cfg, 0.4, 0.4) == pytest.approx(
        pairwise_covariance(a, a, 0.3, cfg, 0.4, 0.4, same_borrower=True))


def test_brute_single_loan_and_independent():
    cfg = ModelConfig()
    one = make_portfolio([("A", 0.5, [1.0])], [("L", "A", 1e6, 3.0, 0.01, 0.03, 0.5)], 1)
    rep = brute_force_contributions(one, cfg)
    assert rep.sigma_c[0] == pytest.approx(rep.sigma_i[0], rel=1e-14)
    indep = make_portfolio(
        [("A", 0.5, [1.0, 0.0]), ("B", 0.0, [0.0, 0.0]), ("C", 0.4, [0.0, 1.0])],
        [("L1", "A", 1e6, 3.0, 0.01, 0.03, 0.5), ("L2", "B", 2e6, 0.5, 0.05, 0.05, 0.3),
         ("L3", "C", 5e5, 9.0, 0.2, 0.8, 0.9)], 2)
    rep = brute_force_contributions(indep, cfg)
    assert np.allclose(rep.sigma_c, rep.sigma_i**2 / rep.sigma_p, rtol=1e-13)
    assert math.fsum(rep.sigma_c) == pytest.approx(rep.sigma_p, rel=1e-12)


def test_exact_sums_match_brute(small_portfolio):
    cfg = ModelConfig()
    rep = brute_force_contributions(small_portfolio, cfg)
    sums = exact_covariance_sums(small_portfolio, cfg)
    assert np.max(rel(sums, rep.covariance_sums)) < 1e-12
    part = exact_covariance_sums(small_portfolio, cfg, rows=[4, 1])
    assert np.allclose(part, sums[[4, 1]], rtol=1e-14)


def test_size_guard():
    pf = generate_synthetic(30, 10, 3, seed=0)
    with pytest.raises(CapacityError):
        brute_force_contributions(pf, ModelConfig(), max_loans=20)
    with pytest.raises(CapacityError):
        exact_covariance_sums(pf, ModelConfig(), max_loans=20)


def test_strong_single_factor_correlation_is_finite():
    # long maturities push tail nodes far out; the kernel must not overflow
    pf = generate_synthetic(30, 30, 1, seed=2)
    cfg = ModelConfig()
    rep = brute_force_contributions(pf, cfg)
    assert np.all(np.isfinite(rep.sigma_c))
    from creditalloc import risk_contributions
    an = risk_contributions(pf, cfg, n_max=12)
    assert an.sigma_p == pytest.approx(rep.sigma_p, rel=1e-4)
