"""Batch command-line frontend.

Exit status: 0 success, 2 usage or configuration error, 3 I/O error,
4 data schema / model document error, 5 fit degeneracy.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

from . import __version__
from .data import write_delimited
from .errors import ConfigError, KnowTraceError
from .experiments import ALGEBRA, data_sufficiency, worst_case_mastery
from .inference import export_rows
from .model import Model
from .params import ModelParams, param_rows
from .synthetic import SyntheticSpec, generate

EXIT_USAGE, EXIT_IO, EXIT_SCHEMA, EXIT_FIT = 2, 3, 4, 5

EPILOG = """exit status:
  0  success
  2  usage or configuration error
  3  I/O error (missing or unreadable file)
  4  data schema or model document error (includes empty datasets)
  5  fit degeneracy (every restart hit a zero-probability observation)
"""


def _delimiter(path):
    return "\t" if str(path).endswith((".tsv", ".tab", ".txt")) else ","


def _write(path, text):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _rows_text(header, rows, delimiter):
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _csv_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def _int_list(text):
    out = []
    for part in _csv_list(text):
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _columns(text):
    if not text:
        return None
    out = {}
    for part in _csv_list(text):
        key, sep, value = part.partition("=")
        if not sep:
            raise ConfigError(f"--columns expects key=column pairs, got {part!r}")
        key = key.strip()
        if key not in ("student", "skill", "correct", "order", "learn_class", "guess_class", "item"):
            raise ConfigError(f"--columns: unknown key {key!r}")
        out[key] = value.strip()
    return out


def _add_data(p):
    p.add_argument("--data", required=True, help="comma- or tab-separated response log")
    p.add_argument("--skills", type=_csv_list, help="comma-separated skill names to keep")
    p.add_argument("--columns", help="explicit column map, e.g. student=uid,skill=kc,correct=c,order=t")


def _add_fit_options(p):
    p.add_argument("--multigs", nargs="?", const=True, default=False, metavar="COLUMN",
                   help="per-class guess/slip; bare flag uses the layout's template column")
    p.add_argument("--multilearn", nargs="?", const=True, default=False, metavar="COLUMN",
                   help="per-class learn/forget from COLUMN")
    p.add_argument("--multipair", nargs="?", const=True, default=False, metavar="COLUMN",
                   help="learn classes from consecutive item pairs in COLUMN")
    p.add_argument("--multiprior", action="store_true", help="high/low prior via a dummy first step")
    p.add_argument("--forgets", action="store_true", help="fit forgetting rates")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=20, help="random EM initializations (default 20)")
    p.add_argument("--max-iter", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-3, help="log-likelihood convergence tolerance")
    p.add_argument("--parallel", action="store_true", help="run restarts on a thread pool")
    p.add_argument("--threads", type=int, help="thread count (implies --parallel)")


def _model(args) -> Model:
    return Model(num_restarts=args.restarts, max_iterations=args.max_iter, convergence_tol=args.tol,
                 seed=args.seed, parallel=args.parallel or bool(args.threads), threads=args.threads)


def _variants(args):
    return dict(multigs=args.multigs, multilearn=args.multilearn, multipair=args.multipair,
                multiprior=args.multiprior, forgets=args.forgets)


def cmd_fit(args):
    model = _model(args).fit(args.data, skills=args.skills, columns=_columns(args.columns), **_variants(args))
    model.save(args.out)
    rows = [(s, p, c, f"{v:.5f}") for s, p, c, v in param_rows(model.doc)]
    table = _rows_text(["skill", "param", "class", "value"], rows,
                       _delimiter(args.params_out) if args.params_out else "\t")
    _write(args.params_out, table)


def cmd_predict(args):
    model = Model.load(args.model)
    ds, traces = model.predict(args.data, skills=args.skills, columns=_columns(args.columns))
    rows = [(sk, st, t, o, f"{pc:.5f}", f"{m:.5f}", mk) for sk, st, t, o, pc, m, mk in export_rows(ds, traces)]
    header = ["skill", "student", "step", "observed", "predicted_correct", "mastery", "masked"]
    _write(args.out, _rows_text(header, rows, _delimiter(args.out) if args.out else ","))


def _report_out(report, args):
    if args.out:
        _write(args.out, report.delimited(_delimiter(args.out)))
    sys.stdout.write(report.table())


def cmd_evaluate(args):
    model = Model.load(args.model)
    report = model.evaluate(args.data, metric=args.metrics, skills=args.skills, columns=_columns(args.columns))
    _report_out(report, args)


def cmd_crossvalidate(args):
    model = _model(args)
    report = model.crossvalidate(args.data, skills=args.skills, columns=_columns(args.columns), folds=args.folds,
                                 metric=args.metrics, **_variants(args))
    _report_out(report, args)


def cmd_generate(args):
    params = ModelParams.standard(args.prior, args.learn, args.guess, args.slip, args.forget)
    ds, states = generate(SyntheticSpec(params, args.students, args.length, seed=args.seed, skill=args.skill))
    write_delimited(ds, args.out, delimiter=_delimiter(args.out))
    if args.states_out:
        rows = []
        for seq, path in zip(ds.skills[args.skill], states[args.skill]):
            rows.extend((args.skill, seq.student, t, int(s), int(o)) for t, (s, o) in enumerate(zip(path, seq.obs)))
        _write(args.states_out, _rows_text(["skill", "student", "step", "learned", "correct"], rows,
                                           _delimiter(args.states_out)))


def cmd_sufficiency(args):
    points = data_sufficiency(args.students, args.lengths, args.fits, args.restarts, seed=args.seed)
    rows = [(p.num_students, p.length, k, f"{v:.5f}") for p in points for k, v in p.mape.items()]
    _write(args.out, _rows_text(["students", "length", "param", "mape"], rows,
                                _delimiter(args.out) if args.out else ","))


def cmd_mastery(args):
    points = worst_case_mastery(args.lengths, args.students, seed=args.seed, threshold=args.threshold)
    rows = [(p.length, f"{p.learn:.3f}", f"{p.accuracy:.5f}", f"{p.mean_final_mastery:.5f}",
             f"{p.mastered_fraction:.5f}") for p in points]
    _write(args.out, _rows_text(["length", "learn", "accuracy", "mean_final_mastery", "mastered_fraction"], rows,
                                _delimiter(args.out) if args.out else ","))


def build_parser():
    parser = argparse.ArgumentParser(prog="knowtrace", description="Bayesian Knowledge Tracing toolkit",
                                     epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model and write the model document",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_data(p)
    _add_fit_options(p)
    p.add_argument("--out", required=True, help="model document path")
    p.add_argument("--params-out", help="parameter table path (stdout if omitted)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="per-step predictions from a fitted model",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _add_data(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="prediction export path (stdout if omitted)")
    p.set_defaults(func=cmd_predict)

    for name, func, help_ in (("evaluate", cmd_evaluate, "score a fitted model on data"),
                              ("crossvalidate", cmd_crossvalidate, "student-grouped k-fold cross-validation")):
        p = sub.add_parser(name, help=help_, epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_data(p)
        p.add_argument("--metrics", type=_csv_list, default=["rmse", "accuracy", "auc"],
                       help="comma-separated: rmse, accuracy, auc")
        p.add_argument("--out", help="delimited report path; an aligned table always goes to stdout")
        if name == "evaluate":
            p.add_argument("--model", required=True)
        else:
            _add_fit_options(p)
            p.add_argument("--folds", type=int, default=5)
        p.set_defaults(func=func)

    p = sub.add_parser("generate", help="sample a synthetic dataset and its latent states",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--prior", type=float, default=ALGEBRA.prior)
    p.add_argument("--learn", type=float, default=ALGEBRA.learns[0])
    p.add_argument("--guess", type=float, default=ALGEBRA.guesses[0])
    p.add_argument("--slip", type=float, default=ALGEBRA.slips[0])
    p.add_argument("--forget", type=float, default=0.0)
    p.add_argument("--students", type=int, default=500)
    p.add_argument("--length", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--skill", default="synthetic")
    p.add_argument("--out", required=True, help="dataset path")
    p.add_argument("--states-out", help="latent state table path")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sufficiency", help="parameter MAPE versus number of students and sequence length",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--students", type=_int_list, default=[10, 25, 50, 100, 200])
    p.add_argument("--lengths", type=_int_list, default=[10])
    p.add_argument("--fits", type=int, default=5)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sufficiency)

    p = sub.add_parser("mastery", help="worst-case mastery classification accuracy versus sequence length",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--lengths", type=_int_list, default=list(range(2, 31)))
    p.add_argument("--students", type=int, default=10000)
    p.add_argument("--threshold", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_mastery)
    return parser


def _exit_code(exc):
    if isinstance(exc, KnowTraceError):
        return exc.exit_code
    if isinstance(exc, OSError):
        return EXIT_IO
    return 1


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (KnowTraceError, OSError) as exc:
        message = " ".join(str(exc).split())
        sys.stderr.write(f"knowtrace: {type(exc).__name__}: {message}\n")
        return _exit_code(exc)
    return 0


def run(argv=None) -> int:
    """Entry point that never raises SystemExit (argparse usage errors return 2)."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
