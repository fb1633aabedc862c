"""Command-line entry point: ``binfam fit|sample|eval|check|compare``.

Exit codes: 0 success, 2 input/output failure, 3 invalid input or usage,
4 numerical failure (negative mass, non-positive-definite matrix, singular
system, enumeration budget).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from binfam import checks, paramfile
from binfam.core import ContractViolation, DimensionMismatch, make_rng
from binfam.expquad import build_proxy, fit_expquad
from binfam.gausscopula import NO_EVAL_REASON, GauCConfig, NotPositiveDefinite, fit_gauc
from binfam.linquad import NegativeMass, SingularSystem, fit_linquad
from binfam.logcond import FitConfig, fit_logcond
from binfam.oracle import OracleDimensionError
from binfam.paramfile import FAMILIES, FormatError, ParamFile
from binfam.poisson import BudgetExceeded, fit_poi_greedy
from binfam.product import fit_product

EXIT_IO = 2
EXIT_VALIDATION = 3
EXIT_NUMERICAL = 4

log = logging.getLogger("binfam")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise CliError(EXIT_VALIDATION, f"{self.prog}: {message}")


def _write(path, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        Path(path).write_text(text, encoding="utf-8", newline="\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False, default=_jsonable) + "\n"


def _jsonable(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, (np.ndarray, tuple, frozenset, set)):
        return list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _finite(x):
    x = float(x)
    return x if np.isfinite(x) else None


def _permutation(text, d):
    if text is None:
        return None
    try:
        order = [int(t) for t in text.split(",")]
    except ValueError as exc:
        raise CliError(EXIT_VALIDATION, f"--permute expects comma-separated integers: {exc}") from exc
    if sorted(order) != list(range(d)):
        raise CliError(EXIT_VALIDATION, f"--permute must be a permutation of 0..{d - 1}")
    return np.array(order, dtype=np.int64)


# --- fit ------------------------------------------------------------------------


def fit_family(family: str, sf: paramfile.SampleFile, args) -> ParamFile:
    sample = sf.sample
    order = _permutation(getattr(args, "permute", None), sample.d)
    if order is not None and family not in ("logcond", "expquad"):
        raise CliError(EXIT_VALIDATION, f"--permute is only supported for logcond and expquad, not {family}")
    report: dict = {"n": sample.n}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if family == "product":
            params = fit_product(sample)
        elif family == "linquad":
            fit = fit_linquad(sample)
            params = fit.params
            report["residual"] = fit.residual
            nonneg = params.nonnegative() if params.d <= checks.MAX_CHECK_DIM else None
            report["nonnegative"] = nonneg
            if nonneg is False:
                log.warning("fitted linquad parameters assign negative mass to some states")
        elif family == "expquad":
            if sf.logpi is None:
                raise CliError(EXIT_VALIDATION, "expquad fitting needs a 'logpi' column")
            fit = fit_expquad(sample, sf.logpi)
            params = fit.params
            report.update(residual=fit.residual, intercept=fit.intercept, rank=fit.rank, n_coef=fit.n_coef)
        elif family == "logcond":
            cfg = FitConfig(epsilon_marginal=args.epsilon, delta_corr=args.delta, penalty=args.penalty)
            fit = fit_logcond(sample, cfg, order=order)
            params = fit.params
            report["demoted"] = fit.demoted
            report["iterations"] = [r.iterations for r in fit.reports]
        elif family == "gaussian_copula":
            fit = fit_gauc(sample, GauCConfig(epsilon_marginal=args.epsilon, delta_corr=args.delta))
            params = fit.params
            report["repair_shift"] = params.repair_shift
            report["mean_clamped"] = [int(i) for i in np.flatnonzero(fit.mean_clamped)]
            report["pairs"] = [
                {"pair": list(r.pair), "sigma": r.sigma, "residual": r.residual, "iterations": r.iterations,
                 "bisections": r.bisections, "clamped": r.clamped, "converged": r.converged}
                for r in fit.pairs
            ]
        elif family == "poisson":
            fit = fit_poi_greedy(sample, delta=args.delta)
            params = fit.params
            report.update(
                shared_pairs=[list(p) for p in fit.shared_pairs],
                dropped_negative=[list(p) for p in fit.dropped_negative],
                skipped_capped=[list(p) for p in fit.skipped_capped],
                skipped_budget=[list(p) for p in fit.skipped_budget],
                mean_clamped=fit.mean_clamped,
            )
        else:
            raise CliError(EXIT_VALIDATION, f"unknown family {family!r}")
    report["warnings"] = [str(w.message) for w in caught if issubclass(w.category, UserWarning)]
    return ParamFile(params, report, order if family == "expquad" else None)


def cmd_fit(args) -> int:
    sf = paramfile.read_samples(args.input)
    pf = fit_family(args.family, sf, args)
    _write(args.output, paramfile.dumps(pf))
    return 0


# --- sample -----------------------------------------------------------------------


def draw(pf: ParamFile, n: int, seed: int, force: bool = False):
    """Rows and per-row log-probabilities (None for families without evaluation)."""
    rng = make_rng(seed)
    p = pf.params
    if p.family == "expquad":
        batch = build_proxy(p, pf.order).sample(rng, n)
    elif p.family == "linquad":
        batch = p.sample(rng, n, force=force)
    else:
        batch = p.sample(rng, n)
    return batch.rows, batch.logprob


def cmd_sample(args) -> int:
    if args.n < 0:
        raise CliError(EXIT_VALIDATION, "--n must be nonnegative")
    pf = paramfile.load(args.params)
    rows, logp = draw(pf, args.n, args.seed, args.force)
    extra = {"logprob": logp} if logp is not None else None
    _write(args.output, paramfile.format_rows(rows, extra))
    return 0


# --- eval ---------------------------------------------------------------------------


def evaluate(pf: ParamFile, rows, force: bool = False):
    """Returns (column name, values)."""
    p = pf.params
    if p.family == "gaussian_copula":
        raise CliError(EXIT_VALIDATION, NO_EVAL_REASON)
    if p.family in ("product", "logcond"):
        return "logprob", p.logpdf(rows)
    if p.family == "linquad":
        return "logprob", p.logpdf(rows, force=force)
    if p.family == "expquad":
        return "log_unnormalized", p.log_unnormalized(rows)
    if p.family == "poisson":
        return "logprob", p.log_unnormalized(rows)
    raise CliError(EXIT_VALIDATION, f"family {p.family!r} cannot be evaluated")


def cmd_eval(args) -> int:
    pf = paramfile.load(args.params)
    sf = paramfile.read_samples(args.input)
    if sf.sample.d != pf.d:
        raise CliError(EXIT_VALIDATION, f"input has {sf.sample.d} columns, parameters have d={pf.d}")
    name, vals = evaluate(pf, sf.sample.rows, args.force)
    _write(args.output, paramfile.format_values(name, vals))
    return 0


# --- check / compare -------------------------------------------------------------------


def cmd_check(args) -> int:
    if args.params:
        pf = paramfile.load(args.params)
        params, order = pf.params, pf.order
    elif args.family and args.d:
        params, order = checks.random_params(args.family, args.d, args.seed), None
    else:
        raise CliError(EXIT_VALIDATION, "check needs --params or both --family and --d")
    if params.d > checks.MAX_CHECK_DIM:
        raise CliError(EXIT_VALIDATION, f"check enumerates all states and needs d <= {checks.MAX_CHECK_DIM}")
    report = checks.check_params(params, order=order, seed=args.seed)
    _write(args.output, _json(_sanitize(report)))
    return 0


def _sanitize(obj):
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float):
        return _finite(obj)
    return obj


def cmd_compare(args) -> int:
    a = paramfile.load(args.params)
    against = Path(args.against)
    if against.suffix.lower() == ".csv":
        b, order_b = paramfile.read_samples(against).sample, None
    else:
        pb = paramfile.load(against)
        b, order_b = pb.params, pb.order
    report = checks.compare(a.params, b, seed=args.seed, draws=args.n, order_a=a.order, order_b=order_b)
    _write(args.output, _json(_sanitize(report)))
    return 0


# --- wiring ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="binfam", description="Parametric families on binary vectors.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a family to a sample file")
    f.add_argument("--family", required=True, choices=FAMILIES)
    f.add_argument("--input", required=True)
    f.add_argument("--output", default="-")
    f.add_argument("--epsilon", type=float, default=0.01)
    f.add_argument("--delta", type=float, default=0.10)
    f.add_argument("--penalty", type=float, default=1e-4)
    f.add_argument("--permute", default=None, help="comma-separated chain order, e.g. 2,0,1")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("sample", help="draw rows from a parameter file")
    s.add_argument("--params", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output", default="-")
    s.add_argument("--force", action="store_true", help="clamp negative linquad mass instead of failing")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("eval", help="log-probabilities of rows")
    e.add_argument("--params", required=True)
    e.add_argument("--input", required=True)
    e.add_argument("--output", default="-")
    e.add_argument("--force", action="store_true")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", help="run the oracle identity suite (d <= 12)")
    c.add_argument("--params")
    c.add_argument("--family", choices=FAMILIES)
    c.add_argument("--d", type=int)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_check)

    k = sub.add_parser("compare", help="TV/KL and moment deltas between two sources")
    k.add_argument("--params", required=True)
    k.add_argument("--against", required=True, help="parameter file (.json) or sample file (.csv)")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--n", type=int, default=1_000_000, help="draws for families without evaluation")
    k.add_argument("--output", default="-")
    k.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except CliError as exc:
        print(f"binfam: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"binfam: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NotPositiveDefinite as exc:
        print(f"binfam: {exc} (hint: refit, or repair the correlation matrix with repair_pd)", file=sys.stderr)
        return EXIT_NUMERICAL
    except (NegativeMass, SingularSystem, BudgetExceeded, OracleDimensionError, ZeroDivisionError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"binfam: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, ContractViolation, DimensionMismatch, ValueError) as exc:
        print(f"binfam: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
