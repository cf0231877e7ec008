"""Gaussian multi-factor correlation structure.

Each borrower's asset return is ``eps = r * beta . eta + sqrt(1 - r^2) * xi``
with independent standard normal factors ``eta`` and idiosyncratic ``xi``.
Factors are anonymous indices; labels, if any, never enter the math.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

NORM_TOL = 1e-8
RENORM_TOL = 1e-3


@dataclass
class FactorLoadings:
    r: float
    beta: np.ndarray

    def __post_init__(self):
        self.r = float(self.r)
        self.beta = np.asarray(self.beta, dtype=float).ravel()

    @property
    def n_factors(self):
        return self.beta.size

    @property
    def support(self):
        return np.flatnonzero(self.beta)


@dataclass
class Borrower:
    borrower_id: str
    loadings: FactorLoadings
    loan_ids: list = field(default_factory=list)


def asset_correlation(a: FactorLoadings, b: FactorLoadings) -> float:
    """Correlation of two distinct borrowers' asset returns."""
    if a.beta.size != b.beta.size:
        raise DimensionError(
            f"factor dimension mismatch: {a.beta.size} vs {b.beta.size}"
        )
    rho = a.r * b.r * float(np.dot(a.beta, b.beta))
    return min(1.0, max(-1.0, rho))


@dataclass
class ValidationReport:
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors

    def __bool__(self):
        return bool(self.errors or self.warnings)


def validate_portfolio_factors(borrowers, n_factors, renormalize=False):
    """Check factor loadings of every borrower.

    Returns a :class:`ValidationReport`; never raises. With ``renormalize``
    a beta whose norm is off by less than ``RENORM_TOL`` is rescaled in place
    and reported as a warning.
    """
    report = ValidationReport()
    for b in borrowers:
        bid = b.borrower_id
        ld = b.loadings
        if not b.loan_ids:
            report.errors.append(f"borrower {bid}: no loans")
        if not np.isfinite(ld.r) or not 0.0 <= ld.r <= 1.0:
            report.errors.append(f"borrower {bid}: r={ld.r!r} outside [0, 1]")
        if ld.beta.size != n_factors:
            report.errors.append(
                f"borrower {bid}: {ld.beta.size} factor loadings, expected {n_factors}"
            )
            continue
        if not np.all(np.isfinite(ld.beta)):
            report.errors.append(f"borrower {bid}: non-finite factor loading")
            continue
        norm2 = float(np.dot(ld.beta, ld.beta))
        if ld.r == 0.0 and norm2 == 0.0:
            continue
        dev = abs(np.sqrt(norm2) - 1.0)
        if dev <= NORM_TOL:
            continue
        if renormalize and dev <= RENORM_TOL:
            ld.beta = ld.beta / np.sqrt(norm2)
            report.warnings.append(
                f"borrower {bid}: beta norm {np.sqrt(norm2):.6g} renormalized to 1"
            )
        else:
            report.errors.append(
                f"borrower {bid}: beta norm {np.sqrt(norm2):.12g} violates unit normalization"
            )
    return report
