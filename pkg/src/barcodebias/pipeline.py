"""Features-only vs. features-plus-motif lasso comparison."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import IO

import numpy as np

from . import lasso
from .features import FeatureMatrix, build_matrix
from .io import BarcodeLibrary
from .motifs import MotifSelection, bin_expression, motif_indicator_features, select_motifs


@dataclass
class PipelineConfig:
    n_bins: int = 5
    k_min: int = 3
    k_max: int = 8
    n_perm: int | None = None
    alpha: float | None = None
    family_alpha: float = 0.01
    jaccard_threshold: float = 0.8
    max_tests: int = 50
    max_motifs: int | None = None
    n_lambda: int = 100
    lambda_ratio: float = 1e-2
    k_folds: int = 10
    split: float = 0.7
    seed: int = 0
    log_transform: bool = True
    count_threshold: float = 800.0
    tol: float = lasso.DEFAULT_TOL
    max_sweeps: int = lasso.DEFAULT_MAX_SWEEPS
    threads: int = 1


def response(counts: np.ndarray, log_transform: bool) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.float64)
    return np.log2(1.0 + counts) if log_transform else counts


@dataclass
class ModelSummary:
    name: str
    matrix: FeatureMatrix = field(repr=False)
    cv: lasso.CvResult = field(repr=False)
    holdout: lasso.HoldoutResult = field(repr=False)
    path: list[lasso.LassoFit] = field(repr=False)
    problem: lasso.LassoProblem = field(repr=False)

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    @property
    def r_lambda_min(self) -> float:
        return float(self.holdout.pearson_r[self.cv.index_min])

    @property
    def r_lambda_1se(self) -> float:
        return float(self.holdout.pearson_r[self.cv.index_1se])

    def fit_at_min(self) -> lasso.LassoFit:
        return self.path[self.cv.index_min]

    def to_json(self) -> dict:
        r = self.holdout.pearson_r
        finite = r[np.isfinite(r)]
        best = self.fit_at_min()
        order = np.argsort(-np.abs(best.beta), kind="stable")
        top = [
            {"feature": self.matrix.columns[j].name, "family": self.matrix.columns[j].family,
             "beta_standardized": float(best.beta[j])}
            for j in order if best.beta[j] != 0
        ][:15]
        return {
            "n_features": self.n_features,
            "lambda_min": self.cv.lambda_min,
            "lambda_1se": self.cv.lambda_1se,
            "cv_mse_at_lambda_min": float(self.cv.mean_mse[self.cv.index_min]),
            "n_nonzero_at_lambda_min": int(best.active_set.size),
            "holdout_r_at_lambda_min": _num(self.r_lambda_min),
            "holdout_r_at_lambda_1se": _num(self.r_lambda_1se),
            "holdout_r_range": [_num(finite.min()), _num(finite.max())] if finite.size else None,
            "top_features_at_lambda_min": top,
        }


def _num(x):
    x = float(x)
    return None if np.isnan(x) else x


def evaluate_model(name: str, matrix: FeatureMatrix, y: np.ndarray, train: np.ndarray,
                   test: np.ndarray, cfg: PipelineConfig) -> ModelSummary:
    """CV-tuned lasso on the training rows, scored on the held-out rows."""
    X = matrix.values
    problem = lasso.LassoProblem.from_data(X[train], y[train])
    lambdas = lasso.lambda_path(problem, cfg.n_lambda, cfg.lambda_ratio)
    cv = lasso.cross_validate(X[train], y[train], cfg.k_folds, lambdas, seed=cfg.seed,
                              tol=cfg.tol, max_sweeps=cfg.max_sweeps, threads=cfg.threads)
    path = lasso.fit_path(problem, lambdas, cfg.tol, cfg.max_sweeps)
    hold = lasso.holdout_curve(X, y, lambdas, tol=cfg.tol, max_sweeps=cfg.max_sweeps,
                               train_index=train, test_index=test)
    return ModelSummary(name, matrix, cv, hold, path, problem)


def motif_read_summary(lib: BarcodeLibrary, kmers: list[str], threshold: float) -> list[dict]:
    """Read-count distribution of motif-bearing vs. other barcodes, per motif and pooled."""
    counts = lib.counts
    rows = []
    any_mask = np.zeros(lib.N, dtype=bool)
    for kmer in kmers:
        mask = np.fromiter((kmer in s for s in lib.sequences), dtype=bool, count=lib.N)
        any_mask |= mask
        rows.append(_group_summary(kmer, counts, mask, threshold))
    if kmers:
        rows.append(_group_summary("(any motif)", counts, any_mask, threshold))
    return rows


def _describe(values: np.ndarray, threshold: float) -> dict:
    if values.size == 0:
        return {"n": 0, "mean": None, "q25": None, "median": None, "q75": None,
                "frac_above_threshold": None}
    q25, med, q75 = np.quantile(values, [0.25, 0.5, 0.75])
    return {"n": int(values.size), "mean": float(values.mean()), "q25": float(q25),
            "median": float(med), "q75": float(q75),
            "frac_above_threshold": float(np.mean(values > threshold))}


def _group_summary(label, counts, mask, threshold) -> dict:
    return {"motif": label, "threshold": threshold,
            "with_motif": _describe(counts[mask], threshold),
            "without_motif": _describe(counts[~mask], threshold)}


@dataclass
class PipelineReport:
    config: PipelineConfig
    baseline: ModelSummary
    augmented: ModelSummary | None
    selection: MotifSelection
    read_summary: list[dict]
    train_index: np.ndarray = field(repr=False)
    test_index: np.ndarray = field(repr=False)

    @property
    def improvement(self) -> float | None:
        if self.augmented is None:
            return None
        return self.augmented.r_lambda_min - self.baseline.r_lambda_min

    def to_json(self) -> dict:
        cfg = asdict(self.config)
        cfg.pop("threads")
        return {
            "config": cfg,
            "response": "log2(1+count)" if self.config.log_transform else "raw count",
            "n_records": int(self.train_index.size + self.test_index.size),
            "n_train": int(self.train_index.size),
            "n_test": int(self.test_index.size),
            "motif_discovery": {
                "n_candidates": len(self.selection.candidates),
                "alpha": self.selection.alpha,
                "n_perm": self.selection.n_perm,
                "n_tested": len(self.selection.tested),
                "selected": [m.kmer for m in self.selection.selected],
            },
            "baseline": self.baseline.to_json(),
            "augmented": self.augmented.to_json() if self.augmented else None,
            "holdout_r_improvement": _num(self.improvement) if self.improvement is not None else None,
            "motif_read_summary": self.read_summary,
        }


def run_pipeline(lib: BarcodeLibrary, config: PipelineConfig | None = None) -> PipelineReport:
    cfg = config or PipelineConfig()
    train, test = lasso.holdout_split(lib.N, cfg.split, cfg.seed)
    train_lib = lib.subset(train)
    # bin first so degenerate counts fail here, before any model fitting
    bins = bin_expression(train_lib.counts, cfg.n_bins)
    y = response(lib.counts, cfg.log_transform)

    base_matrix = build_matrix(lib)
    baseline = evaluate_model("baseline", base_matrix, y, train, test, cfg)

    selection = select_motifs(
        train_lib, bins, k_min=cfg.k_min, k_max=cfg.k_max, alpha=cfg.alpha,
        family_alpha=cfg.family_alpha, n_perm=cfg.n_perm, jaccard_threshold=cfg.jaccard_threshold,
        max_tests=cfg.max_tests, max_motifs=cfg.max_motifs, seed=cfg.seed, threads=cfg.threads)
    kmers = [m.kmer for m in selection.selected]
    augmented = None
    if kmers:
        aug_matrix = motif_indicator_features(lib, kmers, base_matrix)
        augmented = evaluate_model("augmented", aug_matrix, y, train, test, cfg)
    summary = motif_read_summary(lib, kmers, cfg.count_threshold)
    return PipelineReport(cfg, baseline, augmented, selection, summary, train, test)


def write_holdout_curves(report: PipelineReport, fh: IO[str]):
    fh.write("model\tlambda\tn_nonzero\tpearson_r\ttest_mse\n")
    for model in (report.baseline, report.augmented):
        if model is None:
            continue
        h = model.holdout
        for lam, nnz, r, mse in zip(h.lambdas, h.n_nonzero, h.pearson_r, h.mse):
            rr = "NA" if np.isnan(r) else repr(float(r))
            fh.write(f"{model.name}\t{float(lam)!r}\t{int(nnz)}\t{rr}\t{float(mse)!r}\n")


def write_read_summary(rows: list[dict], fh: IO[str]):
    cols = ["n", "mean", "q25", "median", "q75", "frac_above_threshold"]
    fh.write("motif\tgroup\t" + "\t".join(cols) + "\n")
    for row in rows:
        for group in ("with_motif", "without_motif"):
            vals = ["NA" if row[group][c] is None else repr(row[group][c]) for c in cols]
            fh.write(f"{row['motif']}\t{group}\t" + "\t".join(vals) + "\n")


def dump_json(obj, fh: IO[str]):
    json.dump(obj, fh, indent=2)
    fh.write("\n")
