import numpy as np
import pytest

from creditalloc.errors import DimensionError
from creditalloc.factors import (
    Borrower,
    FactorLoadings,
    asset_correlation,
    validate_portfolio_factors,
)


def _b(bid, r, beta, loans=("L",)):
    return Borrower(bid, FactorLoadings(r, beta), list(loans))


def test_asset_correlation():
    a = FactorLoadings(0.5, [0.6, 0.8, 0.0])
    b = FactorLoadings(0.4, [1.0, 0.0, 0.0])
    assert asset_correlation(a, b) == pytest.approx(0.5 * 0.4 * 0.6)
    assert asset_correlation(a, FactorLoadings(0.3, [0, 0, 1.0])) == 0.0
    with pytest.raises(DimensionError):
        asset_correlation(a, FactorLoadings(0.4, [1.0, 0.0]))


def test_loadings_properties():
    ld = FactorLoadings(0.3, [0.0, 0.6, 0.0, 0.8])
    assert ld.n_factors == 4
    assert list(ld.support) == [1, 3]


def test_valid_report():
    rep = validate_portfolio_factors([_b("A", 0.5, [0.6, 0.8]), _b("Z", 0.0, [0.0, 0.0])], 2)
    assert rep.ok and not rep.warnings


@pytest.mark.parametrize("borrower,fragment", [
    (_b("A", 1.2, [1.0, 0.0]), "outside [0, 1]"),
    (_b("A", 0.5, [1.0]), "expected 2"),
    (_b("A", 0.5, [np.nan, 1.0]), "non-finite"),
    (_b("A", 0.5, [0.5, 0.5]), "unit normalization"),
    (_b("A", 0.5, [1.0, 0.0], loans=()), "no loans"),
])
def test_errors_name_the_borrower(borrower, fragment):
    rep = validate_portfolio_factors([borrower], 2)
    assert not rep.ok
    assert any(fragment in e and "borrower A" in e for e in rep.errors)


def test_renormalization_within_tolerance():
    b = _b("A", 0.5, [1.0005, 0.0])
    assert not validate_portfolio_factors([b], 2).ok
    rep = validate_portfolio_factors([b], 2, renormalize=True)
    assert rep.ok and rep.warnings
    assert np.linalg.norm(b.loadings.beta) == pytest.approx(1.0, abs=1e-15)
    far = _b("B", 0.5, [1.1, 0.0])
    assert not validate_portfolio_factors([far], 2, renormalize=True).ok
