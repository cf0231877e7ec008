"""Portfolio, report and configuration files.

Portfolio files are comma-delimited text in three sections::

    # comment
    [factors]
    n_factors,3
    [borrowers]
    borrower_id,r,beta
    B1,0.4,1:0.6;3:0.8
    [loans]
    loan_id,borrower_id,v0,t_m_years,pd_horizon,pd_maturity,lgd
    L1,B1,1000000,5,0.01,0.0490099501,0.45

Beta entries are sparse ``index:value`` pairs with 1-based factor indices.
Numbers are written with 17 significant digits so a save/load round trip
reproduces every float exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .allocator import AllocationReport
from .errors import PortfolioParseError, PortfolioValidationError
from .factors import Borrower, FactorLoadings
from .montecarlo import McConfig
from .portfolio import Portfolio
from .valuation import Loan, ModelConfig

BORROWER_COLUMNS = ["borrower_id", "r", "beta"]
LOAN_COLUMNS = ["loan_id", "borrower_id", "v0", "t_m_years", "pd_horizon",
                "pd_maturity", "lgd"]
REPORT_COLUMNS = ["loan_id", "sigma_i", "sigma_c", "capital_charge"]
SUMMARY_ID = "__portfolio__"


def fmt(x):
    """17-significant-digit decimal, locale independent."""
    return format(float(x), ".17g")


def _number(text, what, line):
    try:
        value = float(text)
    except ValueError:
        raise PortfolioParseError(f"{what}: cannot parse {text!r} as a number", line) from None
    if not math.isfinite(value):
        raise PortfolioParseError(f"{what}: non-finite value {text!r}", line)
    return value


def parse_beta(text, n_factors, line=None):
    beta = np.zeros(n_factors)
    text = text.strip()
    if not text:
        return beta
    for item in text.split(";"):
        idx, sep, val = item.partition(":")
        if not sep:
            raise PortfolioParseError(f"beta entry {item!r} is not index:value", line)
        try:
            k = int(idx)
        except ValueError:
            raise PortfolioParseError(f"beta index {idx!r} is not an integer", line) from None
        if not 1 <= k <= n_factors:
            raise PortfolioParseError(f"beta index {k} outside [1, {n_factors}]", line)
        if beta[k - 1] != 0.0:
            raise PortfolioParseError(f"beta index {k} given twice", line)
        beta[k - 1] = _number(val, f"beta[{k}]", line)
    return beta


def format_beta(beta):
    beta = np.asarray(beta, dtype=float)
    return ";".join(f"{k + 1}:{fmt(beta[k])}" for k in np.flatnonzero(beta))


def _sections(lines):
    """Yield ``(section, line_no, fields)`` for every data row."""
    section = None
    for no, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("["):
            if not text.endswith("]"):
                raise PortfolioParseError(f"malformed section header {text!r}", no)
            section = text[1:-1].strip().lower()
            if section not in ("factors", "borrowers", "loans"):
                raise PortfolioParseError(f"unknown section [{section}]", no)
            yield section, no, None
            continue
        if section is None:
            raise PortfolioParseError("data before the first section header", no)
        row = next(csv.reader([text]))
        yield section, no, [c.strip() for c in row]


def parse_portfolio(text):
    """Parse portfolio text into an unvalidated :class:`Portfolio`."""
    n_factors = None
    headers = {}
    seen = set()
    borrower_rows, loan_rows = [], []
    for section, no, row in _sections(text.splitlines()):
        if row is None:
            if section in seen:
                raise PortfolioParseError(f"section [{section}] repeated", no)
            seen.add(section)
            continue
        if section == "factors":
            if len(row) != 2 or row[0] != "n_factors":
                raise PortfolioParseError("expected 'n_factors,<int>'", no)
            try:
                n_factors = int(row[1])
            except ValueError:
                raise PortfolioParseError(f"n_factors {row[1]!r} is not an integer", no) from None
            if n_factors < 1:
                raise PortfolioParseError("n_factors must be >= 1", no)
            continue
        expected = BORROWER_COLUMNS if section == "borrowers" else LOAN_COLUMNS
        if section not in headers:
            if row != expected:
                raise PortfolioParseError(
                    f"[{section}] header must be {','.join(expected)}", no)
            headers[section] = no
            continue
        if len(row) != len(expected):
            raise PortfolioParseError(
                f"expected {len(expected)} fields, got {len(row)}", no)
        (borrower_rows if section == "borrowers" else loan_rows).append((no, row))

    if n_factors is None:
        raise PortfolioParseError("missing [factors] section with n_factors")

    borrowers = []
    for no, (bid, r, beta) in borrower_rows:
        loadings = FactorLoadings(_number(r, f"borrower {bid} r", no),
                                  parse_beta(beta, n_factors, no))
        borrowers.append(Borrower(bid, loadings))
    loans = []
    for no, row in loan_rows:
        lid, bid = row[0], row[1]
        nums = [_number(v, f"loan {lid} {name}", no) for v, name in zip(row[2:], LOAN_COLUMNS[2:])]
        loans.append(Loan(lid, bid, *nums))
    return Portfolio(borrowers, loans, n_factors)


def load_portfolio(path, t_h=None, renormalize=False):
    """Read and fully validate a portfolio file.

    Raises :class:`PortfolioParseError` (with line number) on malformed text
    and :class:`PortfolioValidationError` listing every invalid record.
    """
    text = Path(path).read_text(encoding="utf-8")
    return parse_portfolio(text).validate(t_h=t_h, renormalize=renormalize)


def dump_portfolio(portfolio: Portfolio):
    out = io.StringIO()
    out.write("[factors]\n")
    out.write(f"n_factors,{portfolio.n_factors}\n")
    out.write("[borrowers]\n")
    out.write(",".join(BORROWER_COLUMNS) + "\n")
    for b in portfolio.borrowers:
        out.write(f"{b.borrower_id},{fmt(b.loadings.r)},{format_beta(b.loadings.beta)}\n")
    out.write("[loans]\n")
    out.write(",".join(LOAN_COLUMNS) + "\n")
    for ln in portfolio.loans:
        nums = [ln.v0, ln.t_m, ln.pd_horizon, ln.pd_maturity, ln.lgd]
        out.write(",".join([ln.loan_id, ln.borrower_id] + [fmt(x) for x in nums]) + "\n")
    return out.getvalue()


def save_portfolio(portfolio: Portfolio, path):
    Path(path).write_text(dump_portfolio(portfolio), encoding="utf-8")


# -- reports --------------------------------------------------------------

def dump_report(report: AllocationReport):
    out = io.StringIO()
    out.write(f"# method={report.method}")
    if report.n_max is not None:
        out.write(f" n_max={report.n_max}")
    out.write("\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    charges = report.capital_charge
    for k, lid in enumerate(report.loan_ids):
        cc = "" if charges is None else fmt(charges[k])
        w.writerow([lid, fmt(report.sigma_i[k]), fmt(report.sigma_c[k]), cc])
    # summary: undiversified sum of standalone sigmas, sigma_p, total capital
    total = "" if report.total_ec is None else fmt(report.total_ec)
    w.writerow([SUMMARY_ID, fmt(math.fsum(report.sigma_i)), fmt(report.sigma_p), total])
    return out.getvalue()


def save_report(report: AllocationReport, path):
    Path(path).write_text(dump_report(report), encoding="utf-8")


def load_report(path):
    text = Path(path).read_text(encoding="utf-8")
    meta = {}
    rows = []
    for no, line in enumerate(text.splitlines(), start=1):
        if line.startswith("#"):
            for item in line[1:].split():
                key, _, val = item.partition("=")
                meta[key] = val
            continue
        if line.strip():
            rows.append((no, next(csv.reader([line]))))
    if not rows or rows[0][1] != REPORT_COLUMNS:
        raise PortfolioParseError(f"report header must be {','.join(REPORT_COLUMNS)}")
    ids, s_i, s_c, cc = [], [], [], []
    summary = None
    for no, row in rows[1:]:
        if len(row) != 4:
            raise PortfolioParseError(f"expected 4 fields, got {len(row)}", no)
        if row[0] == SUMMARY_ID:
            summary = (no, row)
            continue
        ids.append(row[0])
        s_i.append(_number(row[1], "sigma_i", no))
        s_c.append(_number(row[2], "sigma_c", no))
        cc.append(_number(row[3], "capital_charge", no) if row[3] else None)
    if summary is None:
        raise PortfolioParseError(f"report has no {SUMMARY_ID} row")
    no, row = summary
    has_cc = bool(cc) and all(c is not None for c in cc)
    return AllocationReport(
        loan_ids=ids,
        sigma_i=np.array(s_i),
        sigma_c=np.array(s_c),
        sigma_p=_number(row[2], "sigma_p", no),
        capital_charge=np.array(cc) if has_cc else None,
        total_ec=_number(row[3], "total_economic_capital", no) if row[3] else None,
        n_max=int(meta["n_max"]) if "n_max" in meta else None,
        method=meta.get("method", "analytic"),
    )


def save_block_means(result, path):
    """Per-block mean loan values of an MC run, one row per block."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["block", "n_scenarios"] + list(result.report.loan_ids))
    for b, (n, means) in enumerate(zip(result.block_sizes, result.block_means)):
        w.writerow([b, int(n)] + [fmt(x) for x in means])
    Path(path).write_text(out.getvalue(), encoding="utf-8")


# -- run configuration ------------------------------------------------------

# config key -> ModelConfig field
_MODEL_KEYS = {
    "horizon_years": "t_h",
    "risk_free_rate": "risk_free_rate",
    "lambda_mpr": "lambda_mpr",
    "recovery_k": "recovery_k",
    "n_max": "n_max",
    "quad_nodes": "quad_nodes",
}
# config key -> RunConfig attribute
_MC_KEYS = {
    "mc.seed": "mc_seed",
    "mc.scenarios": "mc_scenarios",
    "mc.block_size": "mc_block_size",
    "mc.antithetic": "mc_antithetic",
}
CONFIG_KEYS = set(_MODEL_KEYS) | set(_MC_KEYS) | {"total_economic_capital"}


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    total_economic_capital: float | None = None
    mc_seed: int = 0
    mc_scenarios: int = 100_000
    mc_block_size: int = 50_000
    mc_antithetic: bool = False

    def mc(self, n_scenarios=None) -> McConfig:
        return McConfig(int(n_scenarios or self.mc_scenarios), seed=self.mc_seed,
                        block_size=self.mc_block_size, antithetic=self.mc_antithetic)


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def make_run_config(values=None) -> RunConfig:
    """Build a :class:`RunConfig` from flat or nested config keys."""
    flat = _flatten(dict(values or {}))
    unknown = sorted(set(flat) - CONFIG_KEYS)
    if unknown:
        raise PortfolioValidationError("unknown config keys", unknown)
    model_kw = {f: flat[k] for k, f in _MODEL_KEYS.items() if flat.get(k) is not None}
    if "recovery_k" in model_kw and str(model_kw["recovery_k"]).lower() in ("inf", "infinity"):
        model_kw["recovery_k"] = math.inf
    problems = []
    for name in ("t_h", "risk_free_rate", "lambda_mpr", "recovery_k"):
        if name in model_kw:
            try:
                model_kw[name] = float(model_kw[name])
            except (TypeError, ValueError):
                problems.append(f"{name}: not a number: {model_kw[name]!r}")
    for name in ("n_max", "quad_nodes"):
        if name in model_kw:
            v = model_kw[name]
            if isinstance(v, bool) or not float(v).is_integer():
                problems.append(f"{name}: not an integer: {v!r}")
            else:
                model_kw[name] = int(v)
    if problems:
        raise PortfolioValidationError("invalid configuration", problems)
    run = RunConfig(model=ModelConfig(**model_kw))
    ec = flat.get("total_economic_capital")
    if ec is not None:
        ec = float(ec)
        if not (math.isfinite(ec) and ec >= 0):
            raise PortfolioValidationError("invalid configuration",
                                           [f"total_economic_capital: {ec!r} must be >= 0"])
        run.total_economic_capital = ec
    for key, name in _MC_KEYS.items():
        if flat.get(key) is None:
            continue
        v = flat[key]
        if name == "mc_antithetic":
            if isinstance(v, str):
                v = v.strip().lower() in ("1", "true", "yes", "on")
            run.mc_antithetic = bool(v)
        else:
            try:
                setattr(run, name, int(float(v)))
            except (TypeError, ValueError):
                raise PortfolioValidationError("invalid configuration",
                                               [f"{key}: not an integer: {v!r}"]) from None
    try:
        run.mc()
    except ValueError as exc:
        raise PortfolioValidationError("invalid configuration", [str(exc)]) from None
    return run


def load_config(path, overrides=None) -> RunConfig:
    """Read a JSON config; ``overrides`` (flat keys) take precedence."""
    values = {}
    if path is not None:
        try:
            values = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PortfolioParseError(f"config is not valid JSON: {exc.msg}", exc.lineno) from None
        if not isinstance(values, dict):
            raise PortfolioParseError("config must be a JSON object")
    flat = _flatten(values)
    flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return make_run_config(flat)
