"""Seeded synthetic credit portfolios.

Default parameter ranges follow a large bank's corporate book: horizon PDs
between 1e-5 and 0.4 (log-uniform), maturities from one month to 30 years,
LGDs from 0.1 to 0.99 and systematic R^2 from 0.07 to 0.65. Each borrower
loads on at most two factors. All loans of a borrower share its horizon PD
(default is an obligor event); maturities, LGDs and sizes vary per loan.
"""

from __future__ import annotations

import numpy as np

from .factors import Borrower, FactorLoadings
from .portfolio import Portfolio
from .valuation import Loan


def generate_synthetic(n_loans, n_borrowers, n_factors, seed, *, t_h=1.0,
                       pd_range=(1e-5, 0.4), maturity_range=(1.0 / 12.0, 30.0),
                       lgd_range=(0.1, 0.99), r2_range=(0.07, 0.65),
                       v0_range=(1e4, 1e7), factors_per_borrower=2):
    if n_loans < 1 or n_borrowers < 1 or n_factors < 1:
        raise ValueError("n_loans, n_borrowers and n_factors must be >= 1")
    if n_borrowers > n_loans:
        raise ValueError("n_borrowers cannot exceed n_loans")
    lo, hi = pd_range
    if not 0 < lo <= hi < 1:
        raise ValueError(f"pd_range {pd_range} must lie inside (0, 1)")
    if not 0 <= r2_range[0] <= r2_range[1] <= 1:
        raise ValueError(f"r2_range {r2_range} must lie inside [0, 1]")
    rng = np.random.default_rng(seed)

    pd_b = np.exp(rng.uniform(np.log(lo), np.log(hi), n_borrowers))
    r_b = np.sqrt(rng.uniform(*r2_range, n_borrowers))
    borrowers = []
    width = min(factors_per_borrower, n_factors)
    for k in range(n_borrowers):
        beta = np.zeros(n_factors)
        m = int(rng.integers(1, width + 1))
        idx = rng.choice(n_factors, size=m, replace=False)
        w = rng.uniform(0.2, 1.0, m)
        beta[idx] = w / np.sqrt(np.dot(w, w))
        borrowers.append(Borrower(f"B{k + 1:06d}", FactorLoadings(r_b[k], beta)))

    owner = np.concatenate([
        np.arange(n_borrowers),
        rng.integers(0, n_borrowers, n_loans - n_borrowers),
    ])
    owner = owner[rng.permutation(n_loans)]
    t_m = rng.uniform(*maturity_range, n_loans)
    lgd = rng.uniform(*lgd_range, n_loans)
    v0 = np.exp(rng.uniform(np.log(v0_range[0]), np.log(v0_range[1]), n_loans))

    loans = []
    for i in range(n_loans):
        pd = float(pd_b[owner[i]])
        pd_m = 1.0 - (1.0 - pd) ** (t_m[i] / t_h) if t_m[i] > t_h else pd
        loans.append(Loan(
            loan_id=f"L{i + 1:07d}",
            borrower_id=borrowers[owner[i]].borrower_id,
            v0=float(v0[i]),
            t_m=float(t_m[i]),
            pd_horizon=pd,
            pd_maturity=float(min(max(pd_m, pd), 1.0 - 1e-15)),
            lgd=float(lgd[i]),
        ))
    return Portfolio(borrowers, loans, n_factors)
