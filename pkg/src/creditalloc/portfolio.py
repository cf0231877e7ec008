"""In-memory portfolio: borrower and loan records plus their array views."""

from __future__ import annotations

from collections import Counter

import numpy as np

from .errors import PortfolioValidationError
from .factors import Borrower, FactorLoadings, validate_portfolio_factors
from .valuation import Loan, ModelConfig, loan_terms


class Portfolio:
    """Borrowers, their loans and the factor dimension.

    Loans keep their input order; every array attribute is indexed by loan
    position (``loan_*``) or borrower position (``r``, ``beta``).
    """

    def __init__(self, borrowers, loans, n_factors):
        self.borrowers = list(borrowers)
        self.loans = list(loans)
        self.n_factors = int(n_factors)
        self._index()

    def _index(self):
        self.borrower_pos = {b.borrower_id: k for k, b in enumerate(self.borrowers)}
        by_borrower = {b.borrower_id: [] for b in self.borrowers}
        for ln in self.loans:
            if ln.borrower_id in by_borrower:
                by_borrower[ln.borrower_id].append(ln.loan_id)
        for b in self.borrowers:
            if not b.loan_ids:
                b.loan_ids = by_borrower[b.borrower_id]

    # -- validation -------------------------------------------------------

    def problems(self, t_h=None, renormalize=False):
        out = []
        if not self.loans:
            return ["portfolio has no loans"]
        if self.n_factors < 1:
            out.append(f"n_factors must be >= 1, got {self.n_factors}")
        for name, ids in (
            ("borrower", [b.borrower_id for b in self.borrowers]),
            ("loan", [ln.loan_id for ln in self.loans]),
        ):
            dup = [k for k, c in Counter(ids).items() if c > 1]
            out.extend(f"duplicate {name} id {k}" for k in dup)
        for ln in self.loans:
            if ln.borrower_id not in self.borrower_pos:
                out.append(f"loan {ln.loan_id}: unknown borrower {ln.borrower_id}")
            out.extend(ln.problems(t_h))
        rep = validate_portfolio_factors(self.borrowers, self.n_factors, renormalize)
        out.extend(rep.errors)
        self.warnings = rep.warnings
        return out

    def validate(self, t_h=None, renormalize=False):
        probs = self.problems(t_h, renormalize)
        if not self.loans:
            raise PortfolioValidationError("portfolio has no loans")
        if probs:
            raise PortfolioValidationError("invalid portfolio", probs)
        return self

    # -- array views ------------------------------------------------------

    @property
    def n_loans(self):
        return len(self.loans)

    @property
    def loan_ids(self):
        return [ln.loan_id for ln in self.loans]

    @property
    def loan_borrower(self):
        return np.array([self.borrower_pos[ln.borrower_id] for ln in self.loans],
                        dtype=np.intp)

    @property
    def r(self):
        return np.array([b.loadings.r for b in self.borrowers], dtype=float)

    @property
    def beta(self):
        out = np.zeros((len(self.borrowers), self.n_factors))
        for k, b in enumerate(self.borrowers):
            out[k] = b.loadings.beta
        return out

    def loan_array(self, name):
        return np.array([getattr(ln, name) for ln in self.loans], dtype=float)

    def terms(self, cfg: ModelConfig):
        return loan_terms(
            self.loan_array("t_m"), self.loan_array("v0"),
            self.loan_array("pd_horizon"), self.loan_array("pd_maturity"),
            self.loan_array("lgd"), self.r[self.loan_borrower], cfg,
        )

    def groups(self):
        """Loan positions of each borrower, in borrower order."""
        owner = self.loan_borrower
        order = np.argsort(owner, kind="stable")
        bounds = np.searchsorted(owner[order], np.arange(len(self.borrowers) + 1))
        return [order[bounds[k]:bounds[k + 1]] for k in range(len(self.borrowers))]

    def same_borrower_pairs(self):
        """``(i, j)`` loan positions with ``i < j`` sharing a borrower."""
        ii, jj = [], []
        for g in self.groups():
            if g.size > 1:
                a, b = np.triu_indices(g.size, 1)
                ii.append(g[a])
                jj.append(g[b])
        if not ii:
            return np.empty(0, np.intp), np.empty(0, np.intp)
        return np.concatenate(ii), np.concatenate(jj)

    def subset(self, loan_positions):
        """New portfolio restricted to the given loans and their borrowers."""
        loans = [self.loans[k] for k in loan_positions]
        keep = {ln.borrower_id for ln in loans}
        borrowers = [
            Borrower(b.borrower_id, FactorLoadings(b.loadings.r, b.loadings.beta.copy()))
            for b in self.borrowers if b.borrower_id in keep
        ]
        return Portfolio(borrowers, loans, self.n_factors)

    def __repr__(self):
        return (f"Portfolio(n_loans={self.n_loans}, n_borrowers={len(self.borrowers)}, "
                f"n_factors={self.n_factors})")


def make_portfolio(borrower_specs, loan_specs, n_factors):
    """Convenience builder from plain tuples.

    ``borrower_specs``: ``(borrower_id, r, beta)``; ``loan_specs``: the
    positional fields of :class:`Loan`.
    """
    borrowers = [Borrower(bid, FactorLoadings(r, beta)) for bid, r, beta in borrower_specs]
    loans = [item if isinstance(item, Loan) else Loan(*item) for item in loan_specs]
    return Portfolio(borrowers, loans, n_factors)
