"""Command-line interface.

Every subcommand prints one JSON document on stdout and, with ``--out-dir``,
writes its tables there as CSV. Exit status: 0 success, 1 validation or
usage error, 2 numerical failure (including non-convergence).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import data, discriminant, distribution, mixed, selection, utility
from .exceptions import NumericalError, ValidationError

log = logging.getLogger("truncount")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2

LOG_ENV = "TRUNC_COUNT_LOG"
_LOG_LEVELS = {"quiet": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def _emit(doc, stream):
    stream.write(json.dumps(_jsonable(doc), indent=2) + "\n")


def _out_dir(args):
    if args.out_dir is None:
        return None
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _table(out, name, header, rows, written):
    if out is None:
        return
    path = out / name
    data.write_table(path, header, rows)
    written.append(str(path))


def _fit_scores(sample):
    truncated = distribution.fit_mle(sample)
    plain = distribution.fit_poisson(sample)
    scores = []
    for label, fit in (("poisson", plain), ("right_truncated_poisson", truncated)):
        score = selection.ModelScore.from_loglik(label, fit.loglik, 1, fit.n)
        scores.append((fit, score))
    return truncated, scores


def cmd_fit(args, out):
    dataset = data.load(args.input, args.r)
    sample = dataset.counts()
    truncated, scores = _fit_scores(sample)
    ranking = selection.rank(s for _, s in scores)
    try:
        moore = distribution.moore_estimate(sample)
    except ValueError:
        moore = None
    t_score = scores[1][1]
    written = []
    _table(
        out,
        "fit_comparison.csv",
        ["distribution", "lambda_hat", "std_error", "loglik", "aic", "caic", "bic"],
        [[s.label, f.lambda_hat, f.std_error, s.loglik, s.aic, s.caic, s.bic] for f, s in scores],
        written,
    )
    _table(out, "fit_overlay.csv", ["x", "observed", "expected"], data.fit_overlay(dataset, truncated), written)
    doc = {
        "command": "fit",
        "input": str(args.input),
        "n": sample.n,
        "r": sample.r,
        "sample_mean": sample.mean,
        "lambda_hat": truncated.lambda_hat,
        "std_error": truncated.std_error,
        "loglik": truncated.loglik,
        "aic": t_score.aic,
        "caic": t_score.caic,
        "bic": t_score.bic,
        "converged": truncated.converged,
        "iterations": truncated.iterations,
        "moore_estimate": moore,
        "models": [dict(s.to_dict(), lambda_hat=f.lambda_hat, std_error=f.std_error) for f, s in scores],
        "ranking": ranking.to_dict(),
        "tables": written,
    }
    return doc, truncated.converged


def cmd_regress(args, out):
    dataset = data.load(args.input, args.r)
    covariates = tuple(args.features) if args.features else ("lines_per_page", "words_per_line")
    columns = dataset.columns()
    models, scores, written = [], [], []
    ok = True
    for cluster in args.cluster:
        spec = mixed.MixedModelSpec(r=args.r, cluster=cluster, covariates=covariates)
        fit = mixed.fit(spec, columns)
        ok = ok and fit.converged
        label = f"cluster={cluster}"
        scores.append(fit.model_score(label))
        table = mixed.summary(fit)
        models.append(dict(table, label=label, cluster=cluster, caic=scores[-1].caic))
        _table(
            out,
            f"regress_{cluster}.csv",
            ["term", "estimate", "std_error", "t_value", "p_value"],
            [[row["term"], row["estimate"], row["std_error"], row["t_value"], row["p_value"]] for row in table["coefficients"]],
            written,
        )
    _table(
        out,
        "regress_comparison.csv",
        ["model", "loglik", "aic", "caic", "bic"],
        [[s.label, s.loglik, s.aic, s.caic, s.bic] for s in scores],
        written,
    )
    return {
        "command": "regress",
        "input": str(args.input),
        "n": dataset.row_count,
        "r": args.r,
        "models": models,
        "ranking": selection.rank(scores).to_dict(),
        "tables": written,
    }, ok


def cmd_discriminate(args, out):
    dataset = data.load(args.input, args.r)
    names = tuple(args.features) if args.features else discriminant.FEATURES
    unknown = [n for n in names if n not in data.NUMERIC_COLUMNS]
    if unknown:
        raise ValidationError(f"unknown feature(s): {', '.join(unknown)}")
    if args.group not in ("paper_type", "course_type"):
        raise ValidationError(f"grouping column must be paper_type or course_type, got {args.group!r}")
    X = dataset.features(names)
    groups = dataset.column(args.group)
    model = discriminant.fit_lda(X, groups, names)
    boxm = discriminant.box_m(X, groups)
    wl = discriminant.wilks(X, groups)
    conf = discriminant.confusion(model, X, groups)
    written = []
    _table(
        out,
        "confusion.csv",
        ["actual", *(f"predicted_{g}" for g in conf.labels)],
        [[g, *row] for g, row in zip(conf.labels, conf.counts.tolist())],
        written,
    )
    _table(
        out,
        "discriminant_scores.csv",
        ["row", "group", "score", "predicted"],
        [
            [i + 1, g, discriminant.score(model.standardized_coefficients, x), discriminant.classify(model, x)]
            for i, (g, x) in enumerate(zip(groups, X))
        ],
        written,
    )
    return {
        "command": "discriminate",
        "input": str(args.input),
        "n": dataset.row_count,
        "group": args.group,
        "lda": model.to_dict(),
        "box_m": {"M": boxm.M, "chi2": boxm.chi2, "df": boxm.df, "p": boxm.p},
        "wilks": {"lambda": wl.lam, "chi2": wl.chi2, "df": wl.df, "p": wl.p},
        "confusion": conf.to_dict(),
        "tables": written,
    }, True


def cmd_optimize(args, out):
    problem = utility.load_config(args.config)
    solution = utility.optimize(problem)
    written = []
    if out is not None:
        rows = []
        for x, x1 in problem.candidates():
            check = utility.feasible(x, x1, problem)
            u = utility.utility(x, x1, problem.N1)
            rows.append([x, x1, str(u.value), u.k_adjust, check.ok, str(check.main_slack), str(check.additional_slack)])
        _table(out, "utility_candidates.csv", ["X", "X1", "utility", "k_adjust", "feasible", "main_slack", "additional_slack"], rows, written)
    return {
        "command": "optimize",
        "config": str(args.config),
        "problem": {
            "X": problem.X,
            "N1": problem.N1,
            "N2": problem.N2,
            **{k: str(getattr(problem, k)) for k in ("c11", "c12", "c21", "c22", "A0")},
            "X1_min": problem.x1_min,
            "X1_max": problem.x1_max,
        },
        "solution": solution.to_dict(),
        "tables": written,
    }, True


def cmd_simulate(args, out, stdout):
    dataset = data.simulate_dataset(args.lam, args.r, args.n, args.seed)
    text = data.to_csv(dataset)
    if out is None:
        stdout.write(text)
        return None, True
    path = out / "simulated.csv"
    path.write_text(text, encoding="utf-8")
    return {
        "command": "simulate",
        "lambda": args.lam,
        "r": args.r,
        "n": args.n,
        "seed": args.seed,
        "tables": [str(path)],
    }, True


def cmd_summarize(args, out):
    dataset = data.load(args.input, args.r)
    report = data.summarize(dataset, args.bins)
    fitted = distribution.fit_mle(dataset.counts())
    overlay = data.fit_overlay(dataset, fitted)
    written = []
    for name, bins in report["histograms"].items():
        _table(out, f"hist_{name}.csv", ["lower", "upper", "count"], bins, written)
    _table(out, "fit_overlay.csv", ["x", "observed", "expected"], overlay, written)
    return {
        "command": "summarize",
        "input": str(args.input),
        **report,
        "fit": fitted.to_dict(),
        "overlay": [{"x": x, "observed": o, "expected": e} for x, o, e in overlay],
        "tables": written,
    }, fitted.converged


def _features(text):
    return [name.strip() for name in text.split(",") if name.strip()]


def build_parser():
    parser = _Parser(prog="truncount", description="Right-truncated count data toolkit.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="CSV dataset")
            p.add_argument("--r", type=int, required=True, help="truncation bound (pages per booklet)")
        p.add_argument("--out-dir", help="directory for CSV tables")

    p = sub.add_parser("fit", help="truncated vs. plain Poisson fits")
    common(p)

    p = sub.add_parser("regress", help="mixed-effects truncated Poisson regression")
    common(p)
    p.add_argument("--cluster", action="append", help="cluster column (repeatable): paper_type, course_type or individual")
    p.add_argument("--features", type=_features, help="comma-separated covariates")

    p = sub.add_parser("discriminate", help="two-group discriminant analysis")
    common(p)
    p.add_argument("--group", default="paper_type")
    p.add_argument("--features", type=_features, help="comma-separated feature columns")

    p = sub.add_parser("optimize", help="page-utility integer program")
    p.add_argument("--config", required=True)
    common(p, needs_input=False)

    p = sub.add_parser("simulate", help="seeded synthetic dataset")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--r", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    common(p, needs_input=False)

    p = sub.add_parser("summarize", help="descriptive report and plot tables")
    common(p)
    p.add_argument("--bins", type=int, default=10)
    return parser


def _configure_logging():
    level_name = os.environ.get(LOG_ENV, "quiet").lower()
    level = _LOG_LEVELS.get(level_name, logging.ERROR)
    logger = logging.getLogger("truncount")
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
    logger.setLevel(level)


def cli_dispatch(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        if args.command == "regress" and not args.cluster:
            args.cluster = ["paper_type"]
        out = _out_dir(args)
        if args.command == "simulate":
            doc, ok = cmd_simulate(args, out, stdout)
        else:
            handler = {
                "fit": cmd_fit,
                "regress": cmd_regress,
                "discriminate": cmd_discriminate,
                "optimize": cmd_optimize,
                "summarize": cmd_summarize,
            }[args.command]
            doc, ok = handler(args, out)
    except UsageError as exc:
        stderr.write(str(exc))
        return EXIT_VALIDATION
    except ValidationError as exc:
        stderr.write(f"error: {exc}\n")
        for problem in exc.problems[1:]:
            stderr.write(f"  {problem}\n")
        return EXIT_VALIDATION
    except (NumericalError, ArithmeticError) as exc:
        stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL
    except ValueError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    except OSError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION
    if doc is not None:
        _emit(doc, stdout)
    if not ok:
        stderr.write("numerical failure: an estimation did not converge\n")
        return EXIT_NUMERICAL
    return EXIT_OK


def main():
    sys.exit(cli_dispatch())


if __name__ == "__main__":
    main()
