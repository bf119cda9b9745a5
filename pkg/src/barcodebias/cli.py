"""Command-line front end: extract, motifs, fit, pipeline, synth.

Exit codes: 0 success, 1 usage error, 2 data error, 3 non-convergence.
Option precedence: command-line flags > ``--config`` JSON file > defaults.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import lasso
from .features import build_matrix, standardize, write_feature_sidecar, write_feature_tsv
from .io import LibraryError, read_library, write_library
from .motifs import (K_MAX, K_MIN, bin_expression, motif_indicator_features, select_motifs,
                     write_motif_report)
from .pipeline import (PipelineConfig, dump_json, response, run_pipeline, write_holdout_curves,
                       write_read_summary)
from .synth import SynthSpec, generate_library

EXIT_USAGE, EXIT_DATA, EXIT_CONVERGENCE = 1, 2, 3
SEED_ENV = "BARCODEBIAS_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _HelpFormatter(argparse.HelpFormatter):
    """Append the default to every optional flag whose help does not state one."""

    def _get_help_string(self, action):
        text = action.help or ""
        if "default" in text or action.required or action.default is argparse.SUPPRESS:
            return text
        if action.option_strings and action.nargs != 0 or isinstance(action.default, bool):
            return text + " (default: %(default)s)"
        return text


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        return 0


def _add_input(p):
    p.add_argument("--input", required=True, help="barcode library file")
    p.add_argument("--format", default="tsv", choices=["tsv", "fasta", "fasta-with-counts"],
                   help="input format (default: %(default)s)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON file of option defaults")


def _add_motif_opts(p):
    g = p.add_argument_group("motif discovery")
    g.add_argument("--n-bins", type=int, default=5, help="equal-frequency bins (default: %(default)s)")
    g.add_argument("--k-min", type=int, default=K_MIN, help="shortest k-mer (default: %(default)s)")
    g.add_argument("--k-max", type=int, default=K_MAX, help="longest k-mer (default: %(default)s)")
    g.add_argument("--n-perm", type=int, default=None,
                   help="permutations per tested motif (default: smallest count able to reach alpha)")
    g.add_argument("--alpha", type=float, default=None,
                   help="per-motif p-value cutoff (default: family-alpha / #candidates)")
    g.add_argument("--family-alpha", type=float, default=0.01,
                   help="family-wise level for the Bonferroni cutoff (default: %(default)s)")
    g.add_argument("--jaccard-threshold", type=float, default=0.8,
                   help="drop motifs this similar to an accepted one (default: %(default)s)")
    g.add_argument("--max-tests", type=int, default=50,
                   help="most permutation tests to run (default: %(default)s)")
    g.add_argument("--max-motifs", type=int, default=None,
                   help="stop after this many motifs (default: no limit)")


def _add_lasso_opts(p):
    g = p.add_argument_group("lasso")
    g.add_argument("--n-lambda", type=int, default=100, help="grid size (default: %(default)s)")
    g.add_argument("--lambda-ratio", type=float, default=1e-2,
                   help="smallest lambda as a fraction of lambda_max (default: %(default)s)")
    g.add_argument("--k-folds", type=int, default=10, help="CV folds (default: %(default)s)")
    g.add_argument("--split", type=float, default=0.7,
                   help="training fraction for holdout evaluation (default: %(default)s)")
    g.add_argument("--raw-counts", action="store_true",
                   help="regress raw read counts instead of log2(1+count)")
    g.add_argument("--tol", type=float, default=lasso.DEFAULT_TOL,
                   help="max coefficient change at convergence (default: %(default)s)")
    g.add_argument("--max-sweeps", type=int, default=lasso.DEFAULT_MAX_SWEEPS,
                   help="coordinate descent sweep limit (default: %(default)s)")


def _add_common(p):
    p.add_argument("--seed", type=int, default=_default_seed(),
                   help=f"64-bit random seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads; results do not depend on it (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="barcodebias", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    fmt = {"formatter_class": _HelpFormatter}

    p = sub.add_parser("extract", help="compute the sequence feature matrix", **fmt)
    _add_input(p)
    p.add_argument("--standardize", action="store_true",
                   help="write standardized values instead of raw features")

    p = sub.add_parser("motifs", help="discover MI-informative k-mer motifs", **fmt)
    _add_input(p)
    _add_motif_opts(p)
    _add_common(p)

    p = sub.add_parser("fit", help="lasso path, cross-validation and holdout correlation", **fmt)
    _add_input(p)
    p.add_argument("--motifs", help="motif report TSV whose k-mers become extra indicator columns")
    _add_lasso_opts(p)
    _add_common(p)

    p = sub.add_parser("pipeline", help="baseline vs motif-augmented comparison", **fmt)
    _add_input(p)
    _add_motif_opts(p)
    _add_lasso_opts(p)
    p.add_argument("--count-threshold", type=float, default=800.0,
                   help="read-count threshold for the motif read summary (default: %(default)s)")
    _add_common(p)

    p = sub.add_parser("synth", help="generate a synthetic library from a JSON spec", **fmt)
    p.add_argument("--spec", required=True, help="JSON SynthSpec file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the spec's seed (default: the spec's own)")
    return parser


_RANGES = {
    "n_bins": (2, 20), "k_min": (K_MIN, K_MAX), "k_max": (K_MIN, K_MAX), "n_perm": (1, None),
    "max_tests": (1, None), "max_motifs": (1, None), "n_lambda": (2, None), "k_folds": (2, None),
    "threads": (1, None), "max_sweeps": (1, None),
}
_OPEN_UNIT = ("alpha", "family_alpha", "lambda_ratio", "split")


def _validate(args, parser):
    for name, (lo, hi) in _RANGES.items():
        v = getattr(args, name, None)
        if v is None:
            continue
        if not isinstance(v, int) or isinstance(v, bool) or v < lo or (hi is not None and v > hi):
            bound = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
            parser.error(f"--{name.replace('_', '-')} must be an integer {bound}, got {v!r}")
    for name in _OPEN_UNIT:
        v = getattr(args, name, None)
        if v is not None and not (isinstance(v, (int, float)) and 0 < v < 1):
            parser.error(f"--{name.replace('_', '-')} must lie in (0, 1), got {v!r}")
    jt = getattr(args, "jaccard_threshold", None)
    if jt is not None and not 0 < jt <= 1:
        parser.error(f"--jaccard-threshold must lie in (0, 1], got {jt!r}")
    tol = getattr(args, "tol", None)
    if tol is not None and not tol > 0:
        parser.error("--tol must be positive")
    if getattr(args, "k_min", None) is not None and args.k_min > args.k_max:
        parser.error("--k-min must not exceed --k-max")


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown config key(s): {sorted(unknown)}")
        # config values become defaults; flags given on the command line still win
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    _validate(args, parser)
    return args


def _outdir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, writer, *extra):
    with open(path, "w", newline="\n") as fh:
        writer(*extra, fh)


def _load(args):
    if not Path(args.input).is_file():
        raise LibraryError(f"input file not found: {args.input}")
    try:
        return read_library(args.input, args.format)
    except LibraryError as exc:
        raise LibraryError(f"{args.input}: {exc}") from None


def cmd_extract(args):
    lib = _load(args)
    out = _outdir(args.out)
    raw = build_matrix(lib)
    std = standardize(raw)
    _write(out / "features.tsv", write_feature_tsv, std if args.standardize else raw)
    # sidecar always carries the standardization statistics
    _write(out / "features.json", write_feature_sidecar, std)


def _selection(args, lib):
    bins = bin_expression(lib.counts, args.n_bins)
    sel = select_motifs(lib, bins, k_min=args.k_min, k_max=args.k_max, alpha=args.alpha,
                        family_alpha=args.family_alpha, n_perm=args.n_perm,
                        jaccard_threshold=args.jaccard_threshold, max_tests=args.max_tests,
                        max_motifs=args.max_motifs, seed=args.seed, threads=args.threads)
    return bins, sel


def cmd_motifs(args):
    lib = _load(args)
    out = _outdir(args.out)
    bins, sel = _selection(args, lib)
    _write(out / "motifs.tsv", lambda fh: write_motif_report(sel.selected, fh, bins.n_bins))
    _write(out / "motifs_tested.tsv", lambda fh: write_motif_report(sel.tested, fh, bins.n_bins))
    summary = {
        "n_records": lib.N,
        "n_bins": bins.n_bins,
        "bin_edges": bins.edges.tolist(),
        "n_candidates": len(sel.candidates),
        "alpha": sel.alpha,
        "n_perm": sel.n_perm,
        "seed": args.seed,
        "selected": [m.kmer for m in sel.selected],
        "k_distribution": {str(k): sum(m.k == k for m in sel.selected)
                           for k in range(args.k_min, args.k_max + 1)},
    }
    _write(out / "motifs.json", dump_json, summary)


def _read_motif_kmers(path) -> list[str]:
    kmers = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if not header or header[0] != "kmer":
            raise LibraryError(f"{path}: not a motif report (first column must be 'kmer')")
        for line in fh:
            if line.strip():
                kmers.append(line.split("\t", 1)[0])
    return kmers


def _write_model_reports(out: Path, prefix: str, matrix, y, train, test, args):
    problem = lasso.LassoProblem.from_data(matrix.values[train], y[train])
    lambdas = lasso.lambda_path(problem, args.n_lambda, args.lambda_ratio)
    cv = lasso.cross_validate(matrix.values[train], y[train], args.k_folds, lambdas, seed=args.seed,
                              tol=args.tol, max_sweeps=args.max_sweeps, threads=args.threads)
    path = lasso.fit_path(problem, lambdas, args.tol, args.max_sweeps)
    hold = lasso.holdout_curve(matrix.values, y, lambdas, tol=args.tol, max_sweeps=args.max_sweeps,
                               train_index=train, test_index=test)
    _write(out / f"{prefix}path.tsv", lasso.write_path_report, path, cv)
    with open(out / f"{prefix}coefficients.tsv", "w", newline="\n") as fh:
        lasso.write_coefficient_report(path[cv.index_min], problem, matrix.columns, fh)
    return cv, hold


def cmd_fit(args):
    lib = _load(args)
    out = _outdir(args.out)
    matrix = build_matrix(lib)
    if args.motifs:
        kmers = _read_motif_kmers(args.motifs)
        if kmers:
            matrix = motif_indicator_features(lib, kmers, matrix)
    y = response(lib.counts, not args.raw_counts)
    train, test = lasso.holdout_split(lib.N, args.split, args.seed)
    cv, hold = _write_model_reports(out, "", matrix, y, train, test, args)
    with open(out / "holdout.tsv", "w", newline="\n") as fh:
        fh.write("lambda\tn_nonzero\tpearson_r\ttest_mse\n")
        for lam, nnz, r, mse in zip(hold.lambdas, hold.n_nonzero, hold.pearson_r, hold.mse):
            rr = "NA" if np.isnan(r) else repr(float(r))
            fh.write(f"{float(lam)!r}\t{int(nnz)}\t{rr}\t{float(mse)!r}\n")
    r_min = hold.pearson_r[cv.index_min]
    summary = {
        "n_records": lib.N,
        "n_features": matrix.shape[1],
        "response": "raw count" if args.raw_counts else "log2(1+count)",
        "lambda_min": cv.lambda_min,
        "lambda_1se": cv.lambda_1se,
        "holdout_r_at_lambda_min": None if np.isnan(r_min) else float(r_min),
        "holdout_mse_at_lambda_min": float(hold.mse[cv.index_min]),
        "seed": args.seed,
    }
    _write(out / "fit.json", dump_json, summary)


def cmd_pipeline(args):
    lib = _load(args)
    out = _outdir(args.out)
    cfg = PipelineConfig(
        n_bins=args.n_bins, k_min=args.k_min, k_max=args.k_max, n_perm=args.n_perm,
        alpha=args.alpha, family_alpha=args.family_alpha,
        jaccard_threshold=args.jaccard_threshold, max_tests=args.max_tests,
        max_motifs=args.max_motifs, n_lambda=args.n_lambda, lambda_ratio=args.lambda_ratio,
        k_folds=args.k_folds, split=args.split, seed=args.seed,
        log_transform=not args.raw_counts, count_threshold=args.count_threshold,
        tol=args.tol, max_sweeps=args.max_sweeps, threads=args.threads)
    report = run_pipeline(lib, cfg)
    _write(out / "pipeline.json", dump_json, report.to_json())
    for model in (report.baseline, report.augmented):
        if model is None:
            continue
        _write(out / f"{model.name}_path.tsv", lasso.write_path_report, model.path, model.cv)
        with open(out / f"{model.name}_coefficients.tsv", "w", newline="\n") as fh:
            lasso.write_coefficient_report(model.fit_at_min(), model.problem, model.matrix.columns, fh)
    _write(out / "holdout_curves.tsv", write_holdout_curves, report)
    _write(out / "motifs.tsv",
           lambda fh: write_motif_report(report.selection.selected, fh, cfg.n_bins))
    _write(out / "motif_reads.tsv", write_read_summary, report.read_summary)


def cmd_synth(args):
    try:
        with open(args.spec) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise LibraryError(f"{args.spec}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise LibraryError(f"{args.spec}: spec must be a JSON object")
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = SynthSpec.from_dict(raw)
    except TypeError as exc:
        raise LibraryError(f"{args.spec}: invalid spec ({exc})") from None
    lib, truth = generate_library(spec)
    out = _outdir(args.out)
    (out / "library.tsv").write_bytes(write_library(lib))
    _write(out / "truth.json", dump_json, truth.to_json(lib.ids))


COMMANDS = {
    "extract": cmd_extract,
    "motifs": cmd_motifs,
    "fit": cmd_fit,
    "pipeline": cmd_pipeline,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    args = parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except lasso.ConvergenceError as exc:
        print(f"barcodebias {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (LibraryError, ValueError, OSError) as exc:
        print(f"barcodebias {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
