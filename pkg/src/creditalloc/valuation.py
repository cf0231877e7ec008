"""Loan value at the horizon and its Hermite-series representation.

A loan of borrower ``a`` is worth, as a function of the borrower's asset
return ``eps`` with default threshold ``-d``:

* ``eps <= -d``:               ``(1 - l) * v0 * df``
* ``eps > -d, t_m <= t_h``:    ``v0 * df``
* ``eps > -d, t_m > t_h``:     ``v0 * df * (1 - l * Phi(A - B * eps))``

with ``df = exp(-rf (t_m - t_h))``. Internally the engine works with the
shortfall ``u = v - v0 * df`` which is bounded, vanishes (or saturates) in
the right tail and has the same Hermite coefficients of order ``n >= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import kernels
from .errors import NumericalError, PortfolioValidationError

# Offsets (in units of the transition width 1/B) at which the migration
# integrand is split around the centre of its Phi transition.
_TRANSITION_OFFSETS = np.array([-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0])


@dataclass
class Loan:
    loan_id: str
    borrower_id: str
    v0: float
    t_m: float
    pd_horizon: float
    pd_maturity: float
    lgd: float

    def problems(self, t_h=None):
        """List of invariant violations; empty when the loan is valid."""
        out = []
        tag = f"loan {self.loan_id}"
        vals = (self.v0, self.t_m, self.pd_horizon, self.pd_maturity, self.lgd)
        if not all(math.isfinite(v) for v in vals):
            return [f"{tag}: non-finite field"]
        if self.v0 <= 0:
            out.append(f"{tag}: v0={self.v0!r} must be positive")
        if self.t_m <= 0:
            out.append(f"{tag}: maturity {self.t_m!r} must be positive")
        if not 0.0 < self.pd_horizon < 1.0:
            out.append(f"{tag}: pd_horizon={self.pd_horizon!r} outside (0, 1)")
        if not 0.0 < self.pd_maturity < 1.0:
            out.append(f"{tag}: pd_maturity={self.pd_maturity!r} outside (0, 1)")
        if not 0.0 < self.lgd <= 1.0:
            out.append(f"{tag}: lgd={self.lgd!r} outside (0, 1]")
        if t_h is not None and not out:
            if self.t_m > t_h and self.pd_horizon > self.pd_maturity:
                out.append(f"{tag}: pd_horizon exceeds pd_maturity")
            if self.t_m <= t_h and not math.isclose(
                self.pd_horizon, self.pd_maturity, rel_tol=1e-12, abs_tol=0.0
            ):
                out.append(
                    f"{tag}: matures before horizon, pd_horizon must equal pd_maturity"
                )
        return out


@dataclass
class ModelConfig:
    t_h: float = 1.0
    risk_free_rate: float = 0.04
    lambda_mpr: float = 0.4
    recovery_k: float = 4.0
    n_max: int = 3
    # quadrature
    quad_nodes: int = 24
    panel_width: float = 1.0
    tail: float = 8.0
    tail_nodes: int = 40
    # largest number of stored symmetric-tensor entries over all orders
    tensor_budget: int = 20_000_000

    def __post_init__(self):
        problems = []
        if not self.t_h > 0:
            problems.append(f"horizon must be positive, got {self.t_h!r}")
        if not (self.recovery_k > 1):
            problems.append(f"recovery_k must exceed 1 (or be inf), got {self.recovery_k!r}")
        if int(self.n_max) != self.n_max or self.n_max < 1:
            problems.append(f"n_max must be an integer >= 1, got {self.n_max!r}")
        if self.quad_nodes < 2 or self.tail_nodes < 2 or not self.panel_width > 0:
            problems.append("quadrature settings out of range")
        if problems:
            raise PortfolioValidationError("invalid model configuration", problems)
        self.n_max = int(self.n_max)

    @property
    def deterministic_recovery(self):
        return math.isinf(self.recovery_k)


@dataclass
class HermiteCoefficients:
    loan_id: str
    mean: float
    coeffs: np.ndarray
    standalone_variance: float


def distance_to_default(p):
    """``d`` such that ``Phi(-d) = p``."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("probability of default must lie in (0, 1)")
    out = -special.ndtri(p)
    return out if out.ndim else float(out)


def beta_recovery_params(l, k):
    """Beta shape ``(a, b)`` with mean ``l`` and variance ``l (1 - l) / k``."""
    if not 0.0 < l < 1.0:
        raise ValueError(
            f"loss fraction {l!r} gives a degenerate Beta law; use deterministic recovery"
        )
    if not k > 1.0:
        raise ValueError(f"shape k must exceed 1, got {k!r}")
    return l * (k - 1.0), (1.0 - l) * (k - 1.0)


def default_only_coeff(d, l, n):
    """Series coefficient of the unit payoff ``1 - l * [eps <= d]``.

    Order ``n >= 1``. Scale by the discounted notional for a real loan; note
    the threshold here is ``d`` itself, so a loan with distance to default
    ``dd`` corresponds to ``d = -dd``.
    """
    if n < 1:
        raise ValueError("coefficient order must be >= 1")
    he = kernels.hermite_he(n - 1, d)
    return l * np.exp(-0.5 * np.square(d)) * he / np.sqrt(2.0 * np.pi * math.factorial(n))


# ---------------------------------------------------------------------------
# Vectorised loan terms


@dataclass
class LoanTerms:
    """Per-loan constants of the value function, as parallel arrays."""

    rfv: np.ndarray          # v0 * df, the risk-free value at horizon
    lgd: np.ndarray
    pd: np.ndarray
    d: np.ndarray
    migrating: np.ndarray    # t_m > t_h
    A: np.ndarray
    B: np.ndarray

    def __len__(self):
        return self.rfv.size

    def take(self, idx):
        return LoanTerms(
            self.rfv[idx], self.lgd[idx], self.pd[idx], self.d[idx],
            self.migrating[idx], self.A[idx], self.B[idx],
        )

    def shortfall(self, eps):
        """``v(eps) - rfv``; parameters broadcast along the leading axis."""
        eps = np.asarray(eps, dtype=float)
        extra_dims = (None,) * (eps.ndim - 1) if eps.ndim else ()
        sl = (slice(None),) + extra_dims
        rfv, lgd, d = self.rfv[sl], self.lgd[sl], self.d[sl]
        mig, A, B = self.migrating[sl], self.A[sl], self.B[sl]
        loss = rfv * lgd
        mig_part = np.where(mig, special.ndtr(A - B * eps), 0.0)
        return -loss * np.where(eps <= -d, 1.0, mig_part)

    def value(self, eps):
        eps = np.asarray(eps, dtype=float)
        sl = (slice(None),) + (None,) * (eps.ndim - 1) if eps.ndim else (slice(None),)
        return self.rfv[sl] + self.shortfall(eps)

    def transition_points(self):
        """Split points around each migration transition, ``(N, 9)``."""
        safe_B = np.where(self.migrating, self.B, 1.0)
        centre = np.where(self.migrating, self.A / safe_B, -self.d)
        width = np.where(self.migrating, 1.0 / safe_B, 0.0)
        return centre[:, None] + width[:, None] * _TRANSITION_OFFSETS


def loan_terms(t_m, v0, pd, pd_m, lgd, r_sys, cfg: ModelConfig) -> LoanTerms:
    t_m = np.asarray(t_m, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    pd = np.asarray(pd, dtype=float)
    pd_m = np.asarray(pd_m, dtype=float)
    lgd = np.asarray(lgd, dtype=float)
    r_sys = np.broadcast_to(np.asarray(r_sys, dtype=float), t_m.shape)

    df = np.exp(-cfg.risk_free_rate * (t_m - cfg.t_h))
    rfv = v0 * df
    d = -special.ndtri(pd)
    migrating = t_m > cfg.t_h
    dt = np.where(migrating, t_m - cfg.t_h, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = special.ndtri(pd_m) + cfg.lambda_mpr * r_sys * dt / np.sqrt(t_m)
        A = np.where(migrating, b * np.sqrt(t_m / dt), 0.0)
        B = np.where(migrating, np.sqrt(cfg.t_h / dt), 0.0)
    if not (np.all(np.isfinite(rfv)) and np.all(np.isfinite(d))
            and np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise NumericalError("non-finite loan valuation parameters")
    return LoanTerms(rfv, lgd, pd, d, migrating, A, B)


def value_at_horizon(loan: Loan, eps, cfg: ModelConfig, r_sys: float):
    """Mean (expected-recovery) loan value at the horizon given ``eps``.

    ``r_sys`` is the borrower's systematic weight, which enters the
    risk-neutral drift of the migration branch.
    """
    terms = loan_terms(
        [loan.t_m], [loan.v0], [loan.pd_horizon], [loan.pd_maturity], [loan.lgd],
        [r_sys], cfg,
    )
    eps_arr = np.asarray(eps, dtype=float)
    out = terms.value(eps_arr[None, ...] if eps_arr.ndim else eps_arr.reshape(1))[0]
    return out if eps_arr.ndim else float(out)


# ---------------------------------------------------------------------------
# Grids


def _base_points(cfg):
    n = int(math.ceil(2.0 * cfg.tail / cfg.panel_width))
    return np.linspace(-cfg.tail, cfg.tail, n + 1)


def half_line_grid(terms: LoanTerms, cfg: ModelConfig):
    """Nodes/weights over each loan's survival region ``(-d, inf)``."""
    lo = -terms.d
    hi = np.maximum(cfg.tail, lo + 1.0)
    pts = np.concatenate(
        [_base_points(cfg)[None, :].repeat(len(terms), 0), terms.transition_points()],
        axis=1,
    )
    pts = np.clip(pts, lo[:, None], hi[:, None])
    breaks = np.sort(np.concatenate([lo[:, None], pts, hi[:, None]], axis=1), axis=1)
    x, w = kernels.panel_grid(breaks, kernels.gauss_legendre_rule(cfg.quad_nodes))
    xt, wt = kernels.tail_grid(hi, cfg.tail_nodes)
    return np.concatenate([x, xt], axis=1), np.concatenate([w, wt], axis=1)


def whole_line_grid(split_points, cfg: ModelConfig):
    """Nodes/weights over the real line, split at each row of ``split_points``."""
    split_points = np.atleast_2d(np.asarray(split_points, dtype=float))
    m = split_points.shape[0]
    bound = np.maximum(cfg.tail, np.max(np.abs(split_points), axis=1) + 1.0)
    pts = np.concatenate(
        [_base_points(cfg)[None, :].repeat(m, 0), split_points], axis=1
    )
    pts = np.clip(pts, -bound[:, None], bound[:, None])
    breaks = np.sort(
        np.concatenate([-bound[:, None], pts, bound[:, None]], axis=1), axis=1
    )
    x, w = kernels.panel_grid(breaks, kernels.gauss_legendre_rule(cfg.quad_nodes))
    xt, wt = kernels.tail_grid(bound, cfg.tail_nodes)
    x = np.concatenate([-xt[:, ::-1], x, xt], axis=1)
    w = np.concatenate([wt[:, ::-1], w, wt], axis=1)
    return x, w


def loan_split_points(terms: LoanTerms):
    return np.concatenate([-terms.d[:, None], terms.transition_points()], axis=1)


# ---------------------------------------------------------------------------
# Moments and coefficients


def _chunks(n, size):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def coefficient_table(terms: LoanTerms, cfg: ModelConfig, n_max=None, chunk=2048):
    """Mean, Hermite coefficients and standalone variance of every loan.

    Returns ``(mean, coeffs, variance)`` with ``coeffs`` of shape
    ``(N, n_max)`` holding orders 1..n_max. The default branch and the
    constant survival value are integrated in closed form; only the
    migration shortfall ``Phi(A - B eps)`` is integrated numerically.
    """
    n_max = cfg.n_max if n_max is None else int(n_max)
    N = len(terms)
    mean = np.empty(N)
    var = np.empty(N)
    coeffs = np.empty((N, n_max))
    sqrt_fact = np.array([math.sqrt(math.factorial(n)) for n in range(1, n_max + 1)])
    k = cfg.recovery_k

    for sl in _chunks(N, chunk):
        t = terms.take(sl)
        loss = t.rfv * t.lgd
        nd = kernels.norm_pdf(t.d)
        he_at_thr = kernels.hermite_table(max(n_max - 1, 0), -t.d)  # (n_max, m)

        # ∫_{-d}^{∞} Phi(A - B x) He_n(x) n(x) dx  for n = 0..n_max
        J = np.zeros((n_max + 1, len(t)))
        J2 = np.zeros(len(t))
        mig = t.migrating
        if np.any(mig):
            tm = t.take(mig)
            x, w = half_line_grid(tm, cfg)
            phi = special.ndtr(tm.A[:, None] - tm.B[:, None] * x)
            he = kernels.hermite_table(n_max, x)
            J[:, mig] = np.einsum("kij,ij->ki", he, phi * w)
            J2[mig] = np.einsum("ij,ij->i", phi * phi, w)

        mean_u = -loss * (t.pd + J[0])
        eu2 = loss * loss * (t.pd + J2)
        v = eu2 - mean_u * mean_u
        if not cfg.deterministic_recovery:
            v = v + t.pd * t.lgd * (1.0 - t.lgd) / k * t.rfv * t.rfv
        mean[sl] = t.rfv + mean_u
        var[sl] = v
        for n in range(1, n_max + 1):
            coeffs[sl, n - 1] = loss * (he_at_thr[n - 1] * nd - J[n]) / sqrt_fact[n - 1]

    if not (np.all(np.isfinite(coeffs)) and np.all(np.isfinite(var))):
        raise NumericalError("non-finite Hermite coefficient or variance")
    return mean, coeffs, var


def hermite_coeffs(loan: Loan, loadings, cfg: ModelConfig) -> HermiteCoefficients:
    terms = loan_terms(
        [loan.t_m], [loan.v0], [loan.pd_horizon], [loan.pd_maturity], [loan.lgd],
        [loadings.r], cfg,
    )
    mean, coeffs, var = coefficient_table(terms, cfg)
    return HermiteCoefficients(loan.loan_id, float(mean[0]), coeffs[0], float(var[0]))


# ---------------------------------------------------------------------------
# Recovery uncertainty


_S_NODES, _S_WEIGHTS = np.polynomial.legendre.leggauss(64)
_S_NODES = 0.5 * (_S_NODES + 1.0)
_S_WEIGHTS = 0.5 * _S_WEIGHTS


def comonotone_loss_covariance(l_i, l_j, k):
    """Covariance of two Beta loss fractions driven by one shared quantile.

    Reduces to the Beta variance ``l (1 - l) / k`` when ``l_i == l_j``. The
    quantile integral is split at 1/2 and mapped with ``u = s**6`` toward
    each end, which tames the endpoint singularities of the Beta quantile.
    """
    l_i = np.asarray(l_i, dtype=float)
    l_j = np.asarray(l_j, dtype=float)
    l_i, l_j = np.broadcast_arrays(l_i, l_j)
    out = np.zeros(l_i.shape)
    if math.isinf(k):
        return out if out.ndim else float(out)
    same = l_i == l_j
    out[same] = l_i[same] * (1.0 - l_i[same]) / k
    inner = (~same) & (l_i > 0) & (l_i < 1) & (l_j > 0) & (l_j < 1)
    if np.any(inner):
        li, lj = l_i[inner][:, None], l_j[inner][:, None]
        s, ws = _S_NODES, _S_WEIGHTS
        jac = 3.0 * s**5 * ws
        tot = np.zeros(li.shape[0])
        for u in (0.5 * s**6, 1.0 - 0.5 * s**6):
            qi = special.betaincinv(li * (k - 1.0), (1.0 - li) * (k - 1.0), u)
            qj = special.betaincinv(lj * (k - 1.0), (1.0 - lj) * (k - 1.0), u)
            tot += np.sum(qi * qj * jac, axis=1)
        out[inner] = tot - l_i[inner] * l_j[inner]
    return out if out.ndim else float(out)


def pair_covariance_same_borrower(terms: LoanTerms, i, j, cfg: ModelConfig, chunk=1024):
    """Value covariance of loans sharing one asset return.

    ``i`` and ``j`` are index arrays into ``terms``. Default events are
    nested (joint default probability ``min(p_i, p_j)``) and loss fractions
    are comonotone.
    """
    i = np.asarray(i, dtype=np.intp)
    j = np.asarray(j, dtype=np.intp)
    out = np.empty(i.size)
    for sl in _chunks(i.size, chunk):
        ti, tj = terms.take(i[sl]), terms.take(j[sl])
        splits = np.concatenate([loan_split_points(ti), loan_split_points(tj)], axis=1)
        x, w = whole_line_grid(splits, cfg)
        ui = ti.shortfall(x)
        uj = tj.shortfall(x)
        e_uj = np.einsum("ij,ij->i", uj, w)
        out[sl] = np.einsum("ij,ij->i", ui * (uj - e_uj[:, None]), w)
    if not cfg.deterministic_recovery:
        p_joint = np.minimum(terms.pd[i], terms.pd[j])
        rc = comonotone_loss_covariance(terms.lgd[i], terms.lgd[j], cfg.recovery_k)
        out += p_joint * rc * terms.rfv[i] * terms.rfv[j]
    return out
