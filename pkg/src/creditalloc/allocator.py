"""Linear-cost standard-deviation (Euler) risk allocation.

For loan ``i`` of borrower ``a`` the covariance with the portfolio is

    sigma_p * sigma_i^c = <v_i V_a>
                          + sum_n r_a^n v_i^(n) (beta_a . P^(n) . beta_a)
                          - sum_n r_a^2n v_i^(n) V_a^(n)

where ``P^(n)`` are the symmetric portfolio tensors, ``V_a^(n)`` sums the
coefficients of borrower ``a``'s loans and ``<v_i V_a>`` is the exact
covariance of ``v_i`` with the borrower's total value (one shared asset
return, comonotone recoveries). The last term removes the borrower's own
series contribution already counted in the tensor contraction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import tensors as tz
from .errors import DegeneratePortfolioError, TruncationError
from .valuation import ModelConfig, coefficient_table, pair_covariance_same_borrower

log = logging.getLogger(__name__)


@dataclass
class AllocationReport:
    loan_ids: list
    sigma_i: np.ndarray
    sigma_c: np.ndarray
    sigma_p: float
    capital_charge: np.ndarray | None = None
    total_ec: float | None = None
    n_max: int | None = None
    method: str = "analytic"
    diagnostics: dict = field(default_factory=dict)

    @property
    def covariance_sums(self):
        """``sigma_p * sigma_i^c`` per loan."""
        return self.sigma_c * self.sigma_p

    def __len__(self):
        return len(self.loan_ids)


@dataclass
class CoefficientSet:
    """Everything per-loan the engine needs, computed once."""

    terms: object
    mean: np.ndarray
    coeffs: np.ndarray
    variance: np.ndarray
    own_cov: np.ndarray      # <v_i V_a>


def borrower_sums(portfolio, values):
    """Sum per-loan rows into per-borrower rows, order independent."""
    values = np.asarray(values, dtype=float)
    flat = values.reshape(values.shape[0], -1)
    owner = portfolio.loan_borrower
    nb = len(portfolio.borrowers)
    out = np.column_stack([
        tz.sorted_segment_sum(owner, flat[:, c], nb) for c in range(flat.shape[1])
    ]) if flat.shape[1] else np.zeros((nb, 0))
    return out.reshape((nb,) + values.shape[1:])


def own_borrower_covariance(portfolio, terms, variance, cfg: ModelConfig):
    """``<v_i V_a>``: standalone variance plus covariances with co-borrowed loans."""
    own = variance.copy()
    ii, jj = portfolio.same_borrower_pairs()
    if ii.size:
        cov = pair_covariance_same_borrower(terms, ii, jj, cfg)
        keys = np.concatenate([np.arange(own.size), ii, jj])
        vals = np.concatenate([variance, cov, cov])
        own = tz.sorted_segment_sum(keys, vals, own.size)
    return own


def prepare(portfolio, cfg: ModelConfig, n_max=None) -> CoefficientSet:
    terms = portfolio.terms(cfg)
    mean, coeffs, var = coefficient_table(terms, cfg, n_max=n_max)
    own = own_borrower_covariance(portfolio, terms, var, cfg)
    return CoefficientSet(terms, mean, coeffs, var, own)


def build_portfolio_tensors(portfolio, coeffs, n_max, cfg: ModelConfig):
    """Tensors from borrower aggregates ``r_a^n V_a^(n)`` (equal to the loan sum)."""
    V = borrower_sums(portfolio, coeffs[:, :n_max])
    r = portfolio.r
    weights = V * r[:, None] ** np.arange(1, n_max + 1)
    return tz.build_tensors(weights, portfolio.beta, n_max, portfolio.n_factors,
                            budget=cfg.tensor_budget)


def _finish(portfolio, cs: CoefficientSet, cov_sums, cfg, n_max, method, fallback=None):
    neg = np.flatnonzero(cov_sums < 0)
    diagnostics = {"negative_contributions": [portfolio.loan_ids[k] for k in neg]}
    if neg.size and fallback == "pairwise":
        from .oracle import exact_covariance_sums

        owners = np.unique(portfolio.loan_borrower[neg])
        rows = np.flatnonzero(np.isin(portfolio.loan_borrower, owners))
        cov_sums = cov_sums.copy()
        cov_sums[rows] = exact_covariance_sums(portfolio, cfg, rows, cs)
        diagnostics["pairwise_fallback"] = [portfolio.loan_ids[k] for k in rows]
        log.warning("pairwise fallback for %d loans", rows.size)
    total = math.fsum(cov_sums)
    if not total > 0.0:
        raise TruncationError(
            f"truncated series gives portfolio variance {total!r}; raise n_max"
        )
    sigma_p = math.sqrt(total)
    # every pairwise |rho| is below max(r)^2, so omitted terms scale like this
    diagnostics["next_order_rho_bound"] = float(np.max(portfolio.r, initial=0.0)) ** (
        2 * (n_max + 1)
    )
    return AllocationReport(
        loan_ids=portfolio.loan_ids,
        sigma_i=np.sqrt(cs.variance),
        sigma_c=cov_sums / sigma_p,
        sigma_p=sigma_p,
        n_max=n_max,
        method=method,
        diagnostics=diagnostics,
    )


def risk_contributions(portfolio, cfg: ModelConfig, *, n_max=None, coefficients=None,
                       tensors=None, fallback=None):
    """Euler standard-deviation contributions via the Hermite-series tensors.

    ``fallback="pairwise"`` recomputes loans of any borrower with a negative
    contribution by exact pairwise quadrature instead of only flagging them.
    """
    n_max = cfg.n_max if n_max is None else int(n_max)
    cs = coefficients if coefficients is not None else prepare(portfolio, cfg, n_max)
    coeffs = cs.coeffs[:, :n_max]
    if tensors is None:
        tensors = build_portfolio_tensors(portfolio, coeffs, n_max, cfg)

    owner = portfolio.loan_borrower
    r = portfolio.r
    beta = portfolio.beta
    V = borrower_sums(portfolio, coeffs)
    self_overlap = np.einsum("ij,ij->i", beta, beta)

    cross = np.zeros(portfolio.n_loans)
    for n in range(1, n_max + 1):
        rn = r ** n
        contracted = tz.contract_rows(tensors, beta, n)            # per borrower
        net = contracted - rn * self_overlap ** n * V[:, n - 1]
        cross += (rn * net)[owner] * coeffs[:, n - 1]
    cov_sums = cs.own_cov + cross
    return _finish(portfolio, cs, cov_sums, cfg, n_max, "analytic", fallback)


def single_factor_contributions(portfolio, cfg: ModelConfig, *, n_max=None,
                                coefficients=None):
    """Same allocation for a one-factor model using scalar portfolio sums."""
    if portfolio.n_factors != 1:
        raise ValueError(
            f"single-factor path needs n_factors == 1, got {portfolio.n_factors}"
        )
    n_max = cfg.n_max if n_max is None else int(n_max)
    cs = coefficients if coefficients is not None else prepare(portfolio, cfg, n_max)
    owner = portfolio.loan_borrower
    load = portfolio.r * portfolio.beta[:, 0]          # signed r_a * beta_a
    loan_load = load[owner]

    cov_sums = cs.own_cov.copy()
    for n in range(1, n_max + 1):
        v = cs.coeffs[:, n - 1]
        w = loan_load ** n * v
        P = math.fsum(w)
        own = borrower_sums(portfolio, w)[owner]
        cov_sums += w * (P - own)
    return _finish(portfolio, cs, cov_sums, cfg, n_max, "single_factor")


def capital_charges(report: AllocationReport, total_ec) -> AllocationReport:
    """Distribute ``total_ec`` proportionally to the Euler contributions."""
    total_ec = float(total_ec)
    if total_ec < 0:
        raise ValueError("total economic capital must be non-negative")
    if not report.sigma_p > 0:
        raise DegeneratePortfolioError("portfolio standard deviation is zero")
    charges = report.sigma_c / report.sigma_p * total_ec
    return replace(report, capital_charge=charges, total_ec=total_ec)
