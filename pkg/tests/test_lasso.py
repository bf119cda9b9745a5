import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from barcodebias import lasso
from barcodebias.lasso import (ConvergenceError, LassoProblem, cross_validate, fit, fit_path,
                               holdout_curve, holdout_evaluate, kkt_residual, lambda_path,
                               lasso_objective, pearson_r, soft_threshold)


def make_problem(n=60, p=8, seed=0, noise=1.0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p)) * rng.uniform(0.5, 3, size=p) + rng.normal(size=p)
    beta = np.zeros(p)
    beta[: max(1, p // 3)] = rng.normal(scale=2, size=max(1, p // 3))
    y = 3.0 + X @ beta + noise * rng.normal(size=n)
    return X, y


@pytest.mark.parametrize("z,g,expected", [(3.0, 1.0, 2.0), (-3.0, 1.0, -2.0), (0.5, 1.0, 0.0),
                                          (1.0, 1.0, 0.0), (2.0, 0.0, 2.0)])
def test_soft_threshold(z, g, expected):
    assert soft_threshold(z, g) == expected


def test_soft_threshold_rejects_negative_gamma():
    with pytest.raises(ValueError):
        soft_threshold(1.0, -0.1)


def test_above_lambda_max_is_exactly_zero():
    X, y = make_problem()
    prob = LassoProblem.from_data(X, y)
    lmax = prob.lambda_max()
    for lam in (lmax, 1.5 * lmax, 100 * lmax):
        f = fit(prob, lam)
        assert np.all(f.beta == 0.0)
        assert f.beta0 == pytest.approx(y.mean(), abs=1e-12)
    assert fit(prob, 0.999 * lmax).active_set.size >= 1


def test_first_entry_is_argmax_correlation():
    X, y = make_problem(seed=5)
    prob = LassoProblem.from_data(X, y)
    f = fit(prob, prob.lambda_max() * (1 - 1e-6))
    assert f.active_set.tolist() == [int(np.argmax(np.abs(prob.xty)))]


def test_ols_at_zero_penalty():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 11))
        X, y = make_problem(50, p, seed)
        prob = LassoProblem.from_data(X, y)
        f = fit(prob, 0.0)
        b0, coef = f.original_scale(prob)
        A = np.column_stack([np.ones(50), X])
        sol = np.linalg.solve(A.T @ A, A.T @ y)
        np.testing.assert_allclose(np.r_[b0, coef], sol, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.0, 3.0))
def test_single_feature_closed_form(seed, lam):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=40) * 2 + 1
    y = 0.7 * x + rng.normal(size=40)
    xc = x - x.mean()
    s = np.sqrt(np.mean(xc ** 2))
    z = np.mean(xc / s * (y - y.mean()))
    expected = np.sign(z) * max(abs(z) - lam, 0.0)
    f = fit(LassoProblem.from_data(x[:, None], y), lam)
    assert abs(f.beta[0] - expected) < 1e-10


def test_kkt_descent_and_objective_along_path():
    for seed in range(10):
        X, y = make_problem(70, 12, seed)
        prob = LassoProblem.from_data(X, y)
        for f in fit_path(prob, lambda_path(prob, 30, 1e-3)):
            assert f.converged
            assert f.kkt_residual <= 1e-6
            assert kkt_residual(prob, f.beta, f.lam) == f.kkt_residual
            assert np.all(np.diff(f.objective_trace) <= 1e-12)
            direct = lasso_objective(prob.X, prob.y, 0.0, f.beta, f.lam)
            assert f.objective == pytest.approx(direct, abs=1e-10)


def test_warm_and_cold_starts_agree():
    X, y = make_problem(80, 10, 3)
    prob = LassoProblem.from_data(X, y)
    grid = lambda_path(prob, 20)
    warm = fit_path(prob, grid, tol=1e-10, warm=True)
    cold = fit_path(prob, grid, tol=1e-10, warm=False)
    for a, b in zip(warm, cold):
        np.testing.assert_allclose(a.beta, b.beta, atol=1e-6)


def test_l1_norm_grows_along_path():
    X, y = make_problem(100, 6, 8)
    prob = LassoProblem.from_data(X, y)
    norms = [np.abs(f.beta).sum() for f in fit_path(prob, lambda_path(prob, 40, 1e-3))]
    assert np.all(np.diff(norms) >= -1e-9)


def test_lambda_grid_shape():
    X, y = make_problem()
    prob = LassoProblem.from_data(X, y)
    grid = lambda_path(prob, 100, 1e-4)
    assert grid.size == 100 and np.all(np.diff(grid) < 0)
    assert grid[0] == prob.lambda_max()
    assert grid[-1] == pytest.approx(1e-4 * prob.lambda_max())
    with pytest.raises(ValueError):
        lambda_path(prob, 1)
    with pytest.raises(ValueError):
        lambda_path(prob, 10, 1.5)


def test_constant_response_has_no_path():
    X, _ = make_problem()
    with pytest.raises(ValueError):
        LassoProblem.from_data(X, np.zeros(len(X))).lambda_max()


def test_constant_column_never_enters():
    X, y = make_problem(50, 4)
    X[:, 2] = 5.0
    prob = LassoProblem.from_data(X, y)
    f = fit(prob, 0.0)
    assert f.beta[2] == 0.0
    assert f.original_scale(prob)[1][2] == 0.0


def test_nonconvergence_raises_with_last_iterate():
    X, y = make_problem(50, 10)
    prob = LassoProblem.from_data(X, y)
    with pytest.raises(ConvergenceError) as info:
        fit(prob, 0.0, tol=1e-15, max_sweeps=2)
    assert info.value.fit.n_iter == 2 and not info.value.fit.converged


def test_predict_and_original_scale_agree():
    X, y = make_problem(60, 5, 4)
    prob = LassoProblem.from_data(X, y)
    f = fit(prob, 0.05)
    b0, coef = f.original_scale(prob)
    np.testing.assert_allclose(f.predict(prob, X), b0 + X @ coef, atol=1e-10)


def test_cross_validation_deterministic_and_consistent():
    X, y = make_problem(120, 10, 6)
    a = cross_validate(X, y, 5, seed=3, n_lambda=30)
    b = cross_validate(X, y, 5, seed=3, n_lambda=30, threads=4)
    assert np.array_equal(a.fold_mse, b.fold_mse)
    assert np.bincount(a.fold_assignment).tolist() == [24] * 5
    assert a.mean_mse[a.index_min] == a.mean_mse.min()
    assert a.index_1se <= a.index_min and a.lambda_1se >= a.lambda_min
    assert a.mean_mse[a.index_1se] <= a.mean_mse[a.index_min] + a.se_mse[a.index_min]
    with pytest.raises(ValueError):
        cross_validate(X[:3], y[:3], 5)


def test_noiseless_holdout_is_perfect():
    X, y = make_problem(100, 5, 2, noise=0.0)
    res = holdout_evaluate(X, y, 0.7, lam=0.0, seed=1)
    assert res["pearson_r"] == pytest.approx(1.0, abs=1e-9)
    assert res["mse"] < 1e-12


def test_holdout_on_null_data_is_small():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(2000, 5))
    y = rng.normal(size=2000)
    r = holdout_evaluate(X, y, 0.7, lam=0.0, seed=2)["pearson_r"]
    assert abs(r) < 4 / np.sqrt(600)


def test_holdout_undefined_at_empty_model():
    X, y = make_problem(60, 4)
    prob = LassoProblem.from_data(X, y)
    res = holdout_curve(X, y, [prob.lambda_max() * 10, 0.0], seed=0)
    assert res.undefined.tolist() == [True, False]
    assert res.n_nonzero[0] == 0


def test_pearson_r():
    assert pearson_r([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert np.isnan(pearson_r([1, 1, 1], [1, 2, 3]))


def test_reports():
    X, y = make_problem(50, 3)
    prob = LassoProblem.from_data(X, y)
    fits = fit_path(prob, lambda_path(prob, 4))
    buf = io.StringIO()
    lasso.write_path_report(fits, None, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 5 and lines[1].split("\t")[3] == "NA"
    buf = io.StringIO()
    lasso.write_coefficient_report(fits[-1], prob, ["a", "b", "c"], buf)
    rows = [line.split("\t") for line in buf.getvalue().splitlines()]
    assert [r[0] for r in rows] == ["feature_name", "(intercept)", "a", "b", "c"]


def test_cv_on_noise_prefers_the_empty_end():
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(150, 8))
        y = rng.normal(size=150)
        cv = cross_validate(X, y, 10, seed=seed, n_lambda=40)
        spread = cv.mean_mse.max() - cv.mean_mse.min()
        assert spread < 0.2 * cv.mean_mse.min()
        hits += cv.index_1se <= 2
    assert hits >= 8


def test_cv_recovers_strong_sparse_support():
    recovered = 0
    for seed in range(40):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(200, 20))
        y = X[:, [0, 5, 11]] @ [3.0, -2.5, 2.0] + rng.normal(size=200)
        cv = cross_validate(X, y, 10, seed=seed, n_lambda=50)
        f = fit(LassoProblem.from_data(X, y), cv.lambda_min)
        recovered += {0, 5, 11} <= set(f.active_set.tolist())
    assert recovered >= 38


def test_collinear_design_converges_to_kkt_point():
    rng = np.random.default_rng(4)
    base = rng.normal(size=(90, 30))
    # duplicated and summed columns make the Gram matrix singular
    X = np.column_stack([base, base[:, :10], base[:, :5].sum(axis=1), base[:, 5:20] @ rng.normal(size=15)])
    y = base[:, :6] @ rng.normal(size=6) + 0.3 * rng.normal(size=90)
    prob = LassoProblem.from_data(X, y)
    for f in fit_path(prob, lambda_path(prob, 40, 1e-4)):
        assert f.converged and f.kkt_residual <= 1e-6
        assert np.all(np.diff(f.objective_trace) <= 1e-12)
    assert np.linalg.matrix_rank(prob.gram) < prob.p


def test_newton_step_never_raises_objective():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 12))
    X[:, 11] = X[:, 0] + X[:, 1]
    prob = LassoProblem.from_data(X, X[:, :3].sum(axis=1) + rng.normal(size=40))
    G, c = prob.gram, prob.xty
    yy = float(prob.y @ prob.y) / prob.n
    for seed in range(50):
        beta = np.random.default_rng(seed).normal(size=12) * (rng.random(12) < 0.6)
        before = lasso._objective(G, c, yy, beta, 0.05)
        lasso._active_newton_step(G, c, yy, beta, 0.05)
        assert lasso._objective(G, c, yy, beta, 0.05) <= before
