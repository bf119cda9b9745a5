"""L1-penalized least squares by coordinate descent.

Minimizes ``1/(2N) * ||y - b0 - X b||^2 + lam * ||b||_1`` with an
unpenalized intercept. Columns are standardized (population variance) and
the response centered before fitting; coefficients can be mapped back to the
original feature scale.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from . import kernels
from .features import apply_scaling, standardize_columns

DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 10_000


class ConvergenceError(RuntimeError):
    """Coordinate descent hit ``max_sweeps``; ``.fit`` holds the last iterate."""

    def __init__(self, fit: "LassoFit"):
        self.fit = fit
        super().__init__(
            f"coordinate descent did not converge in {fit.n_iter} sweeps at lambda={fit.lam:.6g}"
        )


def soft_threshold(z: float, gamma: float) -> float:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return float(np.sign(z) * max(abs(z) - gamma, 0.0))


@dataclass
class LassoProblem:
    X: np.ndarray
    y: np.ndarray
    x_means: np.ndarray
    x_scales: np.ndarray
    y_mean: float
    _gram: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_data(cls, X, y) -> "LassoProblem":
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be N x p with N matching len(y)")
        if X.shape[0] == 0:
            raise ValueError("empty problem")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("non-finite values in X or y")
        z, means, scales = standardize_columns(X)
        y_mean = float(y.mean())
        return cls(z, y - y_mean, means, scales, y_mean)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def gram(self) -> np.ndarray:
        if self._gram is None:
            self._gram = np.ascontiguousarray(self.X.T @ self.X / self.n)
        return self._gram

    @property
    def xty(self) -> np.ndarray:
        return self.X.T @ self.y / self.n

    def lambda_max(self) -> float:
        lam = float(np.abs(self.xty).max()) if self.p else 0.0
        if lam <= 0.0:
            raise ValueError("response is constant (or uncorrelated with every column); no lambda path")
        return lam

    def standardize(self, X_new) -> np.ndarray:
        return apply_scaling(np.asarray(X_new, dtype=np.float64), self.x_means, self.x_scales)


@dataclass
class LassoFit:
    beta0: float
    beta: np.ndarray
    lam: float
    objective: float
    n_iter: int
    converged: bool
    objective_trace: np.ndarray = field(repr=False)
    kkt_residual: float = 0.0

    @property
    def active_set(self) -> np.ndarray:
        return np.flatnonzero(self.beta)

    def original_scale(self, problem: LassoProblem) -> tuple[float, np.ndarray]:
        """Intercept and coefficients for unstandardized features."""
        scales = problem.x_scales
        coef = np.where(scales > 0, self.beta / np.where(scales > 0, scales, 1.0), 0.0)
        return float(problem.y_mean - problem.x_means @ coef), coef

    def predict(self, problem: LassoProblem, X_new) -> np.ndarray:
        return self.beta0 + problem.standardize(X_new) @ self.beta


def lasso_objective(X, y, beta0: float, beta, lam: float) -> float:
    """Penalized objective evaluated directly from data."""
    X = np.asarray(X, dtype=np.float64)
    r = np.asarray(y, dtype=np.float64) - beta0 - X @ beta
    return float(r @ r / (2 * X.shape[0]) + lam * np.abs(beta).sum())


def kkt_residual(problem: LassoProblem, beta: np.ndarray, lam: float) -> float:
    """Largest violation of the lasso optimality conditions.

    With g = X'r/N: |g_j| <= lam where b_j = 0, g_j = lam*sign(b_j) otherwise.
    """
    g = problem.X.T @ (problem.y - problem.X @ beta) / problem.n
    active = beta != 0
    viol = np.where(active, np.abs(g - lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max()) if viol.size else 0.0


NEWTON_EVERY = 50


def _objective(G, c, yy, beta, lam) -> float:
    grad = c - G @ beta
    return 0.5 * yy - 0.5 * float(beta @ (c + grad)) + lam * float(np.abs(beta).sum())


def _active_newton_step(G, c, yy, beta, lam) -> bool:
    """Sign-preserving Newton step on the active coordinates, in place.

    On the orthant fixed by sign(beta) the objective is a quadratic; move
    toward its minimizer and stop at the first coordinate that would cross
    zero. Near-singular active Gram blocks (collinear features) are where
    plain coordinate descent crawls, so the minimum-norm direction is used.
    """
    A = np.flatnonzero(beta)
    if A.size == 0:
        return False
    b = beta[A]
    s = np.sign(b)
    g = (c[A] - G[A] @ beta) - lam * s
    GA = G[np.ix_(A, A)]
    d = np.linalg.lstsq(GA, g, rcond=None)[0]
    curv = float(d @ GA @ d)
    slope = float(g @ d)
    if not (curv > 0 and slope > 0):
        return False
    step = slope / curv
    with np.errstate(divide="ignore", invalid="ignore"):
        crossing = np.where(b * d < 0, -b / d, np.inf)
    hit = crossing <= step
    if hit.any():
        step = float(crossing.min())
        hit = crossing <= step
    new = b + step * d
    new[hit] = 0.0
    before = _objective(G, c, yy, beta, lam)
    trial = beta.copy()
    trial[A] = new
    if not _objective(G, c, yy, trial, lam) < before:
        return False
    beta[A] = new
    return True


def fit(problem: LassoProblem, lam: float, tol: float = DEFAULT_TOL,
        max_sweeps: int = DEFAULT_MAX_SWEEPS, warm_start: np.ndarray | None = None) -> LassoFit:
    """Cyclic coordinate descent at one penalty value.

    Sweeps alternate between all coordinates and the current active set;
    iteration stops after a full sweep whose largest coefficient change is
    below ``tol``. Every NEWTON_EVERY sweeps without convergence an
    active-set Newton step is tried. Raises ConvergenceError otherwise.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    beta = np.zeros(problem.p) if warm_start is None else np.array(warm_start, dtype=np.float64)
    G = problem.gram
    c = np.ascontiguousarray(problem.xty)
    yy = float(problem.y @ problem.y) / problem.n
    n_iter = 0
    traces = []
    stepped = True
    while True:
        budget = min(NEWTON_EVERY, int(max_sweeps) - n_iter)
        sweeps, converged, trace = kernels.cd_lasso(G, c, beta, float(lam), float(tol), budget, yy)
        n_iter += int(sweeps)
        # a chunk's first entry repeats the previous chunk's last unless a Newton step ran
        traces.append(trace if stepped else trace[1:])
        if converged or n_iter >= max_sweeps:
            break
        stepped = _active_newton_step(G, c, yy, beta, float(lam))
    trace = np.concatenate(traces)
    result = LassoFit(problem.y_mean, beta, float(lam), float(trace[-1]), n_iter,
                      bool(converged), trace, kkt_residual(problem, beta, lam))
    if not converged:
        raise ConvergenceError(result)
    return result


def lambda_path(problem: LassoProblem, n_lambda: int = 100, ratio: float = 1e-2) -> np.ndarray:
    """Log-spaced descending grid from lambda_max down to ratio * lambda_max."""
    if n_lambda < 2:
        raise ValueError("n_lambda must be >= 2")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    lmax = problem.lambda_max()
    return np.geomspace(lmax, ratio * lmax, n_lambda)


def fit_path(problem: LassoProblem, lambdas: Sequence[float], tol: float = DEFAULT_TOL,
             max_sweeps: int = DEFAULT_MAX_SWEEPS, warm: bool = True) -> list[LassoFit]:
    fits = []
    beta = None
    for lam in lambdas:
        f = fit(problem, lam, tol, max_sweeps, warm_start=beta if warm else None)
        fits.append(f)
        beta = f.beta
    return fits


@dataclass
class CvResult:
    lambda_grid: np.ndarray
    mean_mse: np.ndarray
    se_mse: np.ndarray
    fold_mse: np.ndarray
    fold_assignment: np.ndarray

    @property
    def index_min(self) -> int:
        return int(np.argmin(self.mean_mse))

    @property
    def lambda_min(self) -> float:
        return float(self.lambda_grid[self.index_min])

    @property
    def index_1se(self) -> int:
        i = self.index_min
        limit = self.mean_mse[i] + self.se_mse[i]
        # grid is descending, so the first qualifying index is the largest lambda
        return int(np.flatnonzero(self.mean_mse <= limit)[0])

    @property
    def lambda_1se(self) -> float:
        return float(self.lambda_grid[self.index_1se])


def assign_folds(n: int, k_folds: int, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % k_folds
    return folds


def _fold_mse(X, y, folds, fold, lambdas, tol, max_sweeps):
    train = folds != fold
    prob = LassoProblem.from_data(X[train], y[train])
    Xv = X[~train]
    yv = y[~train]
    out = np.empty(len(lambdas))
    for i, f in enumerate(fit_path(prob, lambdas, tol, max_sweeps)):
        resid = yv - f.predict(prob, Xv)
        out[i] = resid @ resid / resid.shape[0]
    return out


def cross_validate(X, y, k_folds: int = 10, lambdas: Sequence[float] | None = None, seed=0,
                   n_lambda: int = 100, ratio: float = 1e-2, tol: float = DEFAULT_TOL,
                   max_sweeps: int = DEFAULT_MAX_SWEEPS, threads: int = 1) -> CvResult:
    """K-fold CV over a lambda grid; each training fold is re-standardized."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if k_folds < 2:
        raise ValueError("k_folds must be >= 2")
    if n < k_folds:
        raise ValueError(f"need at least {k_folds} rows for {k_folds}-fold CV, got {n}")
    if lambdas is None:
        lambdas = lambda_path(LassoProblem.from_data(X, y), n_lambda, ratio)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    folds = assign_folds(n, k_folds, seed)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        per_fold = list(pool.map(
            lambda f: _fold_mse(X, y, folds, f, lambdas, tol, max_sweeps), range(k_folds)))
    fold_mse = np.vstack(per_fold)
    mean = fold_mse.mean(axis=0)
    se = fold_mse.std(axis=0, ddof=1) / np.sqrt(k_folds)
    return CvResult(lambdas, mean, se, fold_mse, folds)


def holdout_split(n: int, split: float = 0.7, seed=0) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < split < 1:
        raise ValueError("split must lie in (0, 1)")
    n_train = int(round(split * n))
    if n_train < 2 or n - n_train < 2:
        raise ValueError(f"split {split} of {n} rows leaves fewer than 2 rows on one side")
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def pearson_r(a, b) -> float:
    """Pearson correlation; NaN when either side has zero variance."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return float("nan")
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a @ a) * (b @ b))
    if denom <= 0 or not np.isfinite(denom):
        return float("nan")
    return float(np.clip((a @ b) / denom, -1.0, 1.0))


@dataclass
class HoldoutResult:
    lambdas: np.ndarray
    pearson_r: np.ndarray
    mse: np.ndarray
    n_nonzero: np.ndarray
    train_index: np.ndarray
    test_index: np.ndarray

    @property
    def undefined(self) -> np.ndarray:
        """Lambdas where the correlation is undefined (constant predictions)."""
        return np.isnan(self.pearson_r)


def holdout_curve(X, y, lambdas: Sequence[float], split: float = 0.7, seed=0,
                  tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS,
                  train_index=None, test_index=None) -> HoldoutResult:
    """Fit on the training split along ``lambdas``; score each fit on the test split."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if train_index is None:
        train_index, test_index = holdout_split(X.shape[0], split, seed)
    prob = LassoProblem.from_data(X[train_index], y[train_index])
    Xt, yt = X[test_index], y[test_index]
    lambdas = np.asarray(lambdas, dtype=np.float64)
    r = np.empty(len(lambdas))
    mse = np.empty(len(lambdas))
    nnz = np.empty(len(lambdas), dtype=np.int64)
    for i, f in enumerate(fit_path(prob, lambdas, tol, max_sweeps)):
        pred = f.predict(prob, Xt)
        r[i] = pearson_r(pred, yt)
        mse[i] = float(np.mean((yt - pred) ** 2))
        nnz[i] = f.active_set.size
    return HoldoutResult(lambdas, r, mse, nnz, np.asarray(train_index), np.asarray(test_index))


def holdout_evaluate(X, y, split: float = 0.7, lam: float = 0.0, seed=0,
                     tol: float = DEFAULT_TOL, max_sweeps: int = DEFAULT_MAX_SWEEPS) -> dict:
    """Train/test evaluation at one lambda: ``{"pearson_r", "mse", "undefined"}``."""
    res = holdout_curve(X, y, [lam], split, seed, tol, max_sweeps)
    r = float(res.pearson_r[0])
    return {"pearson_r": r, "mse": float(res.mse[0]), "undefined": bool(np.isnan(r))}


def _fmt(x) -> str:
    x = float(x)
    return "NA" if np.isnan(x) else repr(x)


def write_path_report(fits: Sequence[LassoFit], cv: CvResult | None, fh: IO[str]):
    fh.write("lambda\tn_nonzero\tobjective\tmean_cv_mse\tse_cv_mse\n")
    for i, f in enumerate(fits):
        m = cv.mean_mse[i] if cv is not None else float("nan")
        s = cv.se_mse[i] if cv is not None else float("nan")
        fh.write(f"{_fmt(f.lam)}\t{f.active_set.size}\t{_fmt(f.objective)}\t{_fmt(m)}\t{_fmt(s)}\n")


def write_coefficient_report(f: LassoFit, problem: LassoProblem, columns, fh: IO[str]):
    """``columns``: FeatureDescriptors (or names) in design-matrix order."""
    intercept, coef = f.original_scale(problem)
    fh.write("feature_name\tfamily\tbeta_standardized\tbeta_original_scale\n")
    fh.write(f"(intercept)\tintercept\t{_fmt(f.beta0)}\t{_fmt(intercept)}\n")
    for col, bs, bo in zip(columns, f.beta, coef):
        name = getattr(col, "name", col)
        family = getattr(col, "family", "")
        fh.write(f"{name}\t{family}\t{_fmt(bs)}\t{_fmt(bo)}\n")
