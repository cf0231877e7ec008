"""Seeded Monte Carlo estimation of standard-deviation contributions.

Scenarios are generated in fixed-size blocks. Block ``b`` draws its
uniforms from a Philox stream keyed by ``(seed, b)``, and the per-block
sums are reduced in block order, so results depend only on
``(seed, n_scenarios, block_size, antithetic)`` and never on the number of
worker threads. Normals come from the inverse CDF of those uniforms, which
makes antithetic pairing (``u -> 1 - u``) and the shared recovery quantile
well defined.

In a scenario each borrower draws one asset return; each loan defaults when
that return is at or below its threshold, and a defaulted loan loses a Beta
distributed fraction obtained from one uniform shared by all loans of the
borrower (comonotone recoveries).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import special

from .allocator import AllocationReport
from .valuation import ModelConfig, coefficient_table

_HALF_ULP = 2.0 ** -54


@dataclass(frozen=True)
class McConfig:
    n_scenarios: int
    seed: int = 0
    block_size: int = 50_000
    antithetic: bool = False

    def __post_init__(self):
        if int(self.n_scenarios) < 1:
            raise ValueError("n_scenarios must be >= 1")
        if int(self.block_size) < 1:
            raise ValueError("block_size must be >= 1")

    @property
    def n_blocks(self):
        return -(-int(self.n_scenarios) // int(self.block_size))


@dataclass
class McResult:
    report: AllocationReport
    sigma_c_se: np.ndarray       # jackknife standard errors (nan for < 2 blocks)
    sigma_p_se: float
    mean_value: np.ndarray
    block_means: np.ndarray      # (n_blocks, n_loans) mean loan value per block
    block_sizes: np.ndarray
    n_scenarios: int


@dataclass
class ConvergenceRow:
    n_scenarios: int
    sigma_rel_diff: float
    sigma_times_sqrt_n: float
    # supplementary: robust to a few loans with tiny sigma_c dominating the spread
    median_abs_times_sqrt_n: float = float("nan")


class _Setup:
    """Read-only per-portfolio arrays shared by all blocks."""

    def __init__(self, portfolio, cfg: ModelConfig):
        self.terms = portfolio.terms(cfg)
        self.owner = portfolio.loan_borrower
        self.r = portfolio.r
        self.load = portfolio.r[:, None] * portfolio.beta        # (N_b, N_f)
        self.idio = np.sqrt(np.clip(1.0 - self.r ** 2, 0.0, None))
        self.n_factors = portfolio.n_factors
        self.n_borrowers = len(portfolio.borrowers)
        self.shift = coefficient_table(self.terms, cfg, n_max=1)[0]
        k = cfg.recovery_k
        lgd = self.terms.lgd
        # lgd of exactly 0 or 1 (or k = inf) leaves no recovery uncertainty
        if cfg.deterministic_recovery:
            self.stochastic = np.zeros(lgd.size, dtype=bool)
        else:
            self.stochastic = (lgd > 0.0) & (lgd < 1.0)
        self.beta_a = np.where(self.stochastic, lgd * (k - 1.0), 1.0)
        self.beta_b = np.where(self.stochastic, (1.0 - lgd) * (k - 1.0), 1.0)


def _uniforms(seed, block, n, width, antithetic):
    gen = np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(block),)))
    )
    if antithetic:
        base = gen.random((-(-n // 2), width)) + _HALF_ULP
        return np.concatenate([base, 1.0 - base])[:n]
    return gen.random((n, width)) + _HALF_ULP


def _block(setup: _Setup, mc: McConfig, b: int):
    n = min(mc.block_size, mc.n_scenarios - b * mc.block_size)
    nf, nb = setup.n_factors, setup.n_borrowers
    U = _uniforms(mc.seed, b, n, nf + 2 * nb, mc.antithetic)
    Z = special.ndtri(U[:, : nf + nb])
    eps_b = Z[:, :nf] @ setup.load.T + Z[:, nf:] * setup.idio    # (n, N_b)
    eps = eps_b[:, setup.owner].T                                 # (N, n)

    t = setup.terms
    val = t.value(eps)
    defaulted = eps <= -t.d[:, None]
    rows, cols = np.nonzero(defaulted & setup.stochastic[:, None])
    if rows.size:
        q = U[cols, nf + nb + setup.owner[rows]]
        frac = special.betaincinv(setup.beta_a[rows], setup.beta_b[rows], q)
        val[rows, cols] = t.rfv[rows] * (1.0 - frac)

    y = val - setup.shift[:, None]
    yp = y.sum(axis=0)
    return (
        n,
        y.sum(axis=1),
        float(yp.sum()),
        y @ yp,
        np.einsum("ij,ij->i", y, y),
        float(yp @ yp),
    )


def _estimate(n, s_i, s_p, s_ip, s_ii, s_pp):
    m_i = s_i / n
    m_p = s_p / n
    var_p = s_pp / n - m_p * m_p
    sigma_p = math.sqrt(max(var_p, 0.0))
    cov = s_ip / n - m_i * m_p
    var_i = np.maximum(s_ii / n - m_i * m_i, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        sigma_c = cov / sigma_p if sigma_p > 0 else np.zeros_like(cov)
    return sigma_p, sigma_c, np.sqrt(var_i)


def mc_simulate(portfolio, cfg: ModelConfig, mc: McConfig, threads=1) -> McResult:
    setup = _Setup(portfolio, cfg)
    blocks = range(mc.n_blocks)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            stats = list(pool.map(lambda b: _block(setup, mc, b), blocks))
    else:
        stats = [_block(setup, mc, b) for b in blocks]

    ns = np.array([s[0] for s in stats], dtype=float)
    S_i = np.stack([s[1] for s in stats])
    S_p = np.array([s[2] for s in stats])
    S_ip = np.stack([s[3] for s in stats])
    S_ii = np.stack([s[4] for s in stats])
    S_pp = np.array([s[5] for s in stats])

    tot = (ns.sum(), S_i.sum(0), S_p.sum(), S_ip.sum(0), S_ii.sum(0), S_pp.sum())
    sigma_p, sigma_c, sigma_i = _estimate(*tot)

    B = len(stats)
    if B >= 2:
        jk_c = np.empty((B, sigma_c.size))
        jk_p = np.empty(B)
        for b in range(B):
            jk_p[b], jk_c[b], _ = _estimate(
                tot[0] - ns[b], tot[1] - S_i[b], tot[2] - S_p[b],
                tot[3] - S_ip[b], tot[4] - S_ii[b], tot[5] - S_pp[b],
            )
        fac = (B - 1) / B
        se_c = np.sqrt(fac * np.sum((jk_c - jk_c.mean(0)) ** 2, axis=0))
        se_p = math.sqrt(fac * float(np.sum((jk_p - jk_p.mean()) ** 2)))
    else:
        se_c = np.full(sigma_c.size, np.nan)
        se_p = float("nan")

    report = AllocationReport(
        loan_ids=portfolio.loan_ids,
        sigma_i=sigma_i,
        sigma_c=sigma_c,
        sigma_p=sigma_p,
        method="monte_carlo",
        diagnostics={"n_scenarios": int(tot[0]), "n_blocks": B, "seed": mc.seed,
                     "antithetic": mc.antithetic},
    )
    return McResult(
        report=report,
        sigma_c_se=se_c,
        sigma_p_se=se_p,
        mean_value=setup.shift + tot[1] / tot[0],
        block_means=setup.shift + S_i / ns[:, None],
        block_sizes=ns.astype(np.int64),
        n_scenarios=int(tot[0]),
    )


def relative_differences(candidate: AllocationReport, reference: AllocationReport):
    """Per-loan ``(sigma_c_candidate - sigma_c_reference) / sigma_c_reference``."""
    if list(candidate.loan_ids) != list(reference.loan_ids):
        raise ValueError("reports cover different loans")
    return (candidate.sigma_c - reference.sigma_c) / reference.sigma_c


def convergence_study(portfolio, cfg: ModelConfig, scenario_ladder, analytic_report,
                      seed=0, block_size=50_000, antithetic=False, threads=1):
    """Spread of MC-vs-reference relative differences along a scenario ladder.

    ``analytic_report`` may also be a dict of named reports; the same
    simulations then serve every reference and a dict of row lists is
    returned.
    """
    ladder = [int(n) for n in scenario_ladder]
    if any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("scenario ladder must be strictly increasing")
    single = not isinstance(analytic_report, dict)
    refs = {None: analytic_report} if single else dict(analytic_report)
    rows = {name: [] for name in refs}
    for n in ladder:
        mc = McConfig(n, seed=seed, block_size=min(block_size, n), antithetic=antithetic)
        res = mc_simulate(portfolio, cfg, mc, threads=threads)
        for name, ref in refs.items():
            rel = relative_differences(res.report, ref)
            s = float(np.std(rel))
            med = float(np.median(np.abs(rel)))
            rows[name].append(ConvergenceRow(n, s, s * math.sqrt(n), med * math.sqrt(n)))
    return rows[None] if single else rows
