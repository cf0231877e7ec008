"""Quadratic-cost reference allocation by direct pairwise quadrature.

Covariances between loans of different borrowers are two-dimensional
integrals against the bivariate normal density, evaluated on the tensor
product of each loan's own split grid (both default thresholds and both
migration transitions are panel edges). No Hermite series is involved.
"""

from __future__ import annotations

import math

import numpy as np

from .allocator import AllocationReport, prepare
from .errors import CapacityError
from .valuation import (
    ModelConfig,
    loan_split_points,
    loan_terms,
    pair_covariance_same_borrower,
    whole_line_grid,
)

MAX_BRUTE_LOANS = 2000


# Where the exponent exceeds this, n(x) n(y) e^expo < e^-700 because
# expo <= (x^2 + y^2) / 4, so clipping only avoids inf * 0 at far-tail nodes.
_MAX_EXPONENT = 700.0


def _kernel_minus_one(x, y, rho):
    """``n2(x, y, rho) / (n(x) n(y)) - 1`` on the outer product of x and y.

    ``x``: (P,), ``y``: (M, Q), ``rho``: (M,) -> (M, P, Q).
    """
    rho = np.asarray(rho, dtype=float)[:, None, None]
    s2 = (1.0 - rho) * (1.0 + rho)
    xx = x[None, :, None]
    yy = y[:, None, :]
    expo = (2.0 * rho * xx * yy - rho * rho * (xx * xx + yy * yy)) / (2.0 * s2)
    return np.expm1(np.minimum(expo - 0.5 * np.log1p(-rho * rho), _MAX_EXPONENT))


def _loan_grids(terms, cfg):
    x, w = whole_line_grid(loan_split_points(terms), cfg)
    return x, w, terms.shortfall(x) * w


def _cross_covariances(xi, wui, xj, wuj, rho):
    """Covariance of one loan (grid ``xi``) with many others at correlations ``rho``."""
    K = _kernel_minus_one(xi, xj, rho)
    return np.einsum("p,mpq,mq->m", wui, K, wuj)


def _rho_matrix(portfolio):
    r = portfolio.r
    beta = portfolio.beta
    return (r[:, None] * r[None, :]) * (beta @ beta.T)


def pairwise_covariance(loan_i, loan_j, rho, cfg: ModelConfig, r_i=0.0, r_j=0.0,
                        same_borrower=False):
    """Covariance of the horizon values of two loans.

    ``r_i``/``r_j`` are the borrowers' systematic weights (they enter the
    migration drift only). Loans of one borrower share their asset return:
    pass ``same_borrower=True``; ``|rho| == 1`` is treated the same way.
    """
    terms = loan_terms(
        [loan_i.t_m, loan_j.t_m], [loan_i.v0, loan_j.v0],
        [loan_i.pd_horizon, loan_j.pd_horizon],
        [loan_i.pd_maturity, loan_j.pd_maturity],
        [loan_i.lgd, loan_j.lgd], [r_i, r_j], cfg,
    )
    if same_borrower or abs(rho) >= 1.0:
        if rho <= -1.0:
            raise ValueError("perfectly anti-correlated asset returns are not supported")
        return float(pair_covariance_same_borrower(terms, [0], [1], cfg)[0])
    if rho == 0.0:
        return 0.0
    x, w, wu = _loan_grids(terms, cfg)
    return float(_cross_covariances(x[0], wu[0], x[1:2], wu[1:2], np.array([rho]))[0])


def exact_covariance_sums(portfolio, cfg: ModelConfig, rows=None, coefficients=None,
                          max_loans=MAX_BRUTE_LOANS):
    """``sum_j cov(i, j)`` for each loan ``i`` in ``rows`` (all loans by default)."""
    N = portfolio.n_loans
    if N > max_loans:
        raise CapacityError(
            f"pairwise oracle limited to {max_loans} loans, portfolio has {N}"
        )
    cs = coefficients if coefficients is not None else prepare(portfolio, cfg, 1)
    rows = np.arange(N) if rows is None else np.asarray(rows, dtype=np.intp)
    owner = portfolio.loan_borrower
    rho_b = _rho_matrix(portfolio)
    x, w, wu = _loan_grids(cs.terms, cfg)

    out = np.empty(rows.size)
    for pos, i in enumerate(rows):
        rho = rho_b[owner[i], owner]
        others = np.flatnonzero((owner != owner[i]) & (rho != 0.0))
        parts = [cs.own_cov[i]]
        if others.size:
            parts.extend(_cross_covariances(x[i], wu[i], x[others], wu[others], rho[others]))
        out[pos] = math.fsum(parts)
    return out


def brute_force_contributions(portfolio, cfg: ModelConfig, max_loans=MAX_BRUTE_LOANS):
    """Reference Euler contributions from all ``N^2`` pairwise covariances."""
    N = portfolio.n_loans
    if N > max_loans:
        raise CapacityError(
            f"pairwise oracle limited to {max_loans} loans, portfolio has {N}"
        )
    cs = prepare(portfolio, cfg, 1)
    owner = portfolio.loan_borrower
    rho_b = _rho_matrix(portfolio)
    x, w, wu = _loan_grids(cs.terms, cfg)

    # fill the upper triangle once, mirror it
    cov = np.zeros((N, N))
    for i in range(N - 1):
        j = np.arange(i + 1, N)
        rho = rho_b[owner[i], owner[j]]
        live = j[(owner[j] != owner[i]) & (rho != 0.0)]
        if live.size:
            cov[i, live] = _cross_covariances(
                x[i], wu[i], x[live], wu[live], rho_b[owner[i], owner[live]]
            )
    cov = cov + cov.T
    sums = np.array([math.fsum(np.r_[cs.own_cov[i], cov[i]]) for i in range(N)])

    total = math.fsum(sums)
    sigma_p = math.sqrt(total)
    return AllocationReport(
        loan_ids=portfolio.loan_ids,
        sigma_i=np.sqrt(cs.variance),
        sigma_c=sums / sigma_p,
        sigma_p=sigma_p,
        method="brute_force",
        diagnostics={"pairs": N * (N - 1) // 2},
    )
