"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 invalid input data, 3 numerical
failure. Results go to standard output (or ``--out``), diagnostics to
standard error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .allocator import capital_charges, risk_contributions
from .errors import CapacityError, CreditAllocError, NumericalError
from .fileio import (
    dump_portfolio,
    dump_report,
    fmt,
    load_config,
    load_portfolio,
    load_report,
    save_block_means,
    save_portfolio,
)
from .montecarlo import convergence_study, mc_simulate, relative_differences
from .oracle import brute_force_contributions
from .synthetic import generate_synthetic

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("creditalloc")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _model_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model (override config file)")
    g.add_argument("--portfolio", required=True, help="portfolio file")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--horizon", dest="horizon_years", type=float)
    g.add_argument("--risk-free-rate", type=float)
    g.add_argument("--lambda-mpr", type=float)
    g.add_argument("--recovery-k", type=float)
    g.add_argument("--n-max", type=int)
    g.add_argument("--quad-nodes", type=int)
    g.add_argument("--total-ec", dest="total_economic_capital", type=float)
    return p


def _mc_flags():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("Monte Carlo")
    g.add_argument("--seed", dest="mc.seed", type=int)
    g.add_argument("--scenarios", dest="mc.scenarios", type=lambda s: int(float(s)))
    g.add_argument("--block-size", dest="mc.block_size", type=lambda s: int(float(s)))
    g.add_argument("--antithetic", dest="mc.antithetic", action="store_const", const=True)
    g.add_argument("--threads", type=int, default=1)
    return p


def build_parser():
    parser = _Parser(prog="creditalloc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    model, mc = _model_flags(), _mc_flags()

    p = sub.add_parser("allocate", parents=[model], help="analytic allocation")
    p.add_argument("--out", help="report file (default stdout)")
    p.add_argument("--fallback", choices=["pairwise"],
                   help="recompute borrowers with negative contributions exactly")

    p = sub.add_parser("brute", parents=[model], help="pairwise quadrature oracle")
    p.add_argument("--out")

    p = sub.add_parser("mc", parents=[model, mc], help="Monte Carlo allocation")
    p.add_argument("--out")
    p.add_argument("--block-means", help="write per-block mean loan values here")

    p = sub.add_parser("compare", parents=[model, mc], help="per-loan relative differences")
    p.add_argument("--reference", default="brute",
                   help="allocate | brute | mc | path to a saved report")
    p.add_argument("--candidate", default="allocate",
                   help="allocate | brute | mc | path to a saved report")
    p.add_argument("--out")

    p = sub.add_parser("converge", parents=[model, mc], help="MC convergence ladder")
    p.add_argument("--ladder", required=True, help="comma-separated scenario counts")
    p.add_argument("--reference", default="allocate",
                   help="allocate | brute | path to a saved report")
    p.add_argument("--out")

    p = sub.add_parser("gen", help="synthetic portfolio")
    p.add_argument("--loans", type=int, required=True)
    p.add_argument("--borrowers", type=int, required=True)
    p.add_argument("--factors", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-r2", type=float, help="cap on systematic R^2")
    p.add_argument("--out", help="portfolio file (default stdout)")

    p = sub.add_parser("validate", help="check a portfolio file")
    p.add_argument("--portfolio", required=True)
    p.add_argument("--config")
    p.add_argument("--horizon", dest="horizon_years", type=float)
    return parser


def _overrides(args):
    keys = ("horizon_years", "risk_free_rate", "lambda_mpr", "recovery_k", "n_max",
            "quad_nodes", "total_economic_capital", "mc.seed", "mc.scenarios",
            "mc.block_size", "mc.antithetic")
    return {k: getattr(args, k, None) for k in keys}


def _setup(args):
    run = load_config(args.config, _overrides(args))
    pf = load_portfolio(args.portfolio, t_h=run.model.t_h)
    for w in getattr(pf, "warnings", []):
        log.warning(w)
    return run, pf


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _with_capital(report, run):
    if run.total_economic_capital is not None:
        report = capital_charges(report, run.total_economic_capital)
    return report


def _run_method(name, pf, run, threads=1, fallback=None):
    t0 = time.perf_counter()
    if name == "allocate":
        report = risk_contributions(pf, run.model, fallback=fallback)
        neg = report.diagnostics.get("negative_contributions", [])
        if neg:
            log.warning("%d loans with negative contributions: %s", len(neg),
                        ", ".join(neg[:10]) + (" ..." if len(neg) > 10 else ""))
        extra = None
    elif name == "brute":
        report = brute_force_contributions(pf, run.model)
        extra = None
    elif name == "mc":
        extra = mc_simulate(pf, run.model, run.mc(), threads=threads)
        report = extra.report
    else:
        report = load_report(name)
        if list(report.loan_ids) != pf.loan_ids:
            raise CreditAllocError(f"report {name} does not match the portfolio loans")
        return report, None
    log.info("%s: %d loans in %.3f s, sigma_p=%s", name, pf.n_loans,
             time.perf_counter() - t0, fmt(report.sigma_p))
    return report, extra


def cmd_allocate(args):
    run, pf = _setup(args)
    report, _ = _run_method("allocate", pf, run, fallback=args.fallback)
    _emit(dump_report(_with_capital(report, run)), args.out)
    return EXIT_OK


def cmd_brute(args):
    run, pf = _setup(args)
    report, _ = _run_method("brute", pf, run)
    _emit(dump_report(_with_capital(report, run)), args.out)
    return EXIT_OK


def cmd_mc(args):
    run, pf = _setup(args)
    report, res = _run_method("mc", pf, run, args.threads)
    log.info("sigma_p standard error %s", fmt(res.sigma_p_se))
    if args.block_means:
        save_block_means(res, args.block_means)
    _emit(dump_report(_with_capital(report, run)), args.out)
    return EXIT_OK


def cmd_compare(args):
    run, pf = _setup(args)
    ref, _ = _run_method(args.reference, pf, run, args.threads)
    cand, _ = _run_method(args.candidate, pf, run, args.threads)
    rel = relative_differences(cand, ref)
    lines = ["loan_id,sigma_c_reference,sigma_c_candidate,rel_diff"]
    lines += [f"{lid},{fmt(a)},{fmt(b)},{fmt(d)}"
              for lid, a, b, d in zip(pf.loan_ids, ref.sigma_c, cand.sigma_c, rel)]
    lines.append(f"# std_rel_diff={fmt(np.std(rel))}")
    lines.append(f"# max_abs_rel_diff={fmt(np.max(np.abs(rel)))}")
    lines.append(f"# sigma_p_rel_diff={fmt((cand.sigma_p - ref.sigma_p) / ref.sigma_p)}")
    _emit("\n".join(lines) + "\n", args.out)
    print(f"max |rel diff| = {np.max(np.abs(rel)):.3e}", file=sys.stderr)
    return EXIT_OK


def _parse_ladder(text):
    try:
        ladder = [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise _UsageError(f"bad ladder {text!r}") from None
    if any(n < 1 for n in ladder) or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise _UsageError("ladder must be positive and strictly increasing")
    return ladder


def cmd_converge(args):
    ladder = _parse_ladder(args.ladder)
    run, pf = _setup(args)
    if args.reference == "mc":
        raise _UsageError("converge needs a non-MC reference")
    ref, _ = _run_method(args.reference, pf, run)
    rows = convergence_study(pf, run.model, ladder, ref, seed=run.mc_seed,
                             block_size=run.mc_block_size, antithetic=run.mc_antithetic,
                             threads=args.threads)
    lines = ["n_scenarios,sigma_rel_diff,sigma_times_sqrt_n,median_abs_times_sqrt_n"]
    lines += [f"{r.n_scenarios},{fmt(r.sigma_rel_diff)},{fmt(r.sigma_times_sqrt_n)},"
              f"{fmt(r.median_abs_times_sqrt_n)}" for r in rows]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_gen(args):
    kw = {}
    if args.max_r2 is not None:
        kw["r2_range"] = (min(0.07, args.max_r2), args.max_r2)
    try:
        pf = generate_synthetic(args.loans, args.borrowers, args.factors, args.seed, **kw)
    except ValueError as exc:
        raise _UsageError(str(exc)) from None
    if args.out:
        save_portfolio(pf, args.out)
    else:
        sys.stdout.write(dump_portfolio(pf))
    return EXIT_OK


def cmd_validate(args):
    run = load_config(args.config, {"horizon_years": args.horizon_years})
    pf = load_portfolio(args.portfolio, t_h=run.model.t_h)
    for w in getattr(pf, "warnings", []):
        log.warning(w)
    print(f"ok: {pf.n_loans} loans, {len(pf.borrowers)} borrowers, "
          f"{pf.n_factors} factors")
    return EXIT_OK


COMMANDS = {
    "allocate": cmd_allocate,
    "brute": cmd_brute,
    "mc": cmd_mc,
    "compare": cmd_compare,
    "converge": cmd_converge,
    "gen": cmd_gen,
    "validate": cmd_validate,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return EXIT_USAGE
    except SystemExit as exc:      # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, CapacityError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CreditAllocError, ValueError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
