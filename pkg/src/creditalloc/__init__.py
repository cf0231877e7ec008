"""Linear-cost Euler risk allocation for credit portfolios.

Loan values at the horizon are expanded in Hermite polynomials of the
borrower's asset return; symmetric portfolio tensors then give every loan's
covariance with the portfolio in time linear in the number of loans.
"""

from .allocator import (
    AllocationReport,
    capital_charges,
    risk_contributions,
    single_factor_contributions,
)
from .errors import (
    CapacityError,
    CreditAllocError,
    DegeneratePortfolioError,
    DimensionError,
    NumericalError,
    PortfolioParseError,
    PortfolioValidationError,
    TruncationError,
    UnsupportedOrderError,
)
from .factors import Borrower, FactorLoadings, asset_correlation, validate_portfolio_factors
from .fileio import load_config, load_portfolio, load_report, save_portfolio, save_report
from .kernels import (
    QuadratureRule,
    bivariate_norm_cdf,
    gauss_hermite_rule,
    gauss_legendre_rule,
    hermite_he,
    quad_normal,
)
from .montecarlo import McConfig, McResult, convergence_study, mc_simulate
from .oracle import brute_force_contributions, exact_covariance_sums, pairwise_covariance
from .portfolio import Portfolio, make_portfolio
from .synthetic import generate_synthetic
from .tensors import TensorSet, build_tensors, contract
from .valuation import (
    HermiteCoefficients,
    Loan,
    ModelConfig,
    coefficient_table,
    default_only_coeff,
    hermite_coeffs,
    value_at_horizon,
)

__version__ = "0.1.0"
