import numpy as np
import pytest
from scipy.linalg import cho_solve

from elmfin import gpr


def test_rbf_kernel_trivials():
    assert gpr.rbf_kernel([1.0, 2.0], [1.0, 2.0], 1.3, 0.5) == pytest.approx(1.3**2)
    # ||x - x'|| = ell * sqrt(2) gives exp(-1)
    assert gpr.rbf_kernel([0.0], [np.sqrt(2.0) * 0.5], 1.0, 0.5) == pytest.approx(np.exp(-1.0))


def test_rbf_kernel_matches_scalar_recompute():
    rng = np.random.default_rng(0)
    x, x2 = rng.normal(size=3), rng.normal(size=3)
    sf, ell = 0.7, 0.9
    expected = sf**2 * np.exp(-np.sum((x - x2) ** 2) / (2 * ell**2))
    assert gpr.rbf_kernel(x, x2, sf, ell) == pytest.approx(expected, rel=1e-14)


def test_rbf_kernel_rejects_bad_ell():
    with pytest.raises(ValueError):
        gpr.rbf_kernel([0.0], [1.0], 1.0, 0.0)


def test_fit_single_point_alpha():
    model = gpr.gpr_fit([[0.5]], [2.0], sigma_f=1.2, ell=0.3, sigma_n=0.1)
    assert model.alpha[0] == pytest.approx(2.0 / (1.2**2 + 0.1**2), rel=1e-12)


def test_three_point_closed_form():
    X = np.array([[0.0], [1.0], [2.5]])
    y = np.array([1.0, -0.5, 2.0])
    sf, ell, sn = 1.1, 0.8, 0.05
    model = gpr.gpr_fit(X, y, sf, ell, sn)
    xs = np.array([[0.7]])
    mean, var = gpr.gpr_predict(model, xs)
    # independent route: explicit 3x3 inverse
    K = np.array([[gpr.rbf_kernel(a, b, sf, ell) for b in X] for a in X])
    Kinv = np.linalg.inv(K + sn**2 * np.eye(3))
    ks = np.array([gpr.rbf_kernel(xs[0], a, sf, ell) for a in X])
    mean_ref = ks @ Kinv @ y
    var_ref = sf**2 - ks @ Kinv @ ks
    assert abs(mean[0] - mean_ref) <= 1e-10
    assert abs(var[0] - var_ref) <= 1e-10


def test_exact_interpolation_at_zero_noise():
    rng = np.random.default_rng(5)
    X = rng.uniform(-1, 1, size=(12, 2))
    y = rng.normal(size=12)
    model = gpr.gpr_fit(X, y, sigma_f=1.0, ell=0.7, sigma_n=0.0)
    mean, var = gpr.gpr_predict(model, X)
    assert np.max(np.abs(mean - y)) <= 1e-8
    assert np.max(var) <= 1e-8


def test_prior_reversion_far_from_data():
    X = np.zeros((5, 1))
    X[:, 0] = np.linspace(-0.1, 0.1, 5)
    y = np.ones(5)
    model = gpr.gpr_fit(X, y, sigma_f=0.9, ell=0.2, sigma_n=1e-4)
    mean, var = gpr.gpr_predict(model, [[0.1 + 10 * 0.2 * 2]])
    assert abs(mean[0]) <= 1e-6
    assert abs(var[0] - 0.9**2) <= 1e-6


def test_batch_predict_equals_pointwise():
    rng = np.random.default_rng(9)
    X = rng.uniform(-1, 1, size=(40, 3))
    y = rng.normal(size=40)
    model = gpr.gpr_fit(X, y, 1.0, 0.5, 1e-3)
    Xt = rng.uniform(-1, 1, size=(23, 3))
    mean_full, var_full = gpr.gpr_predict(model, Xt)
    for i in range(23):
        m, v = gpr.gpr_predict(model, Xt[i : i + 1])
        assert abs(m[0] - mean_full[i]) <= 1e-10
        assert abs(v[0] - var_full[i]) <= 1e-10
    mean_small, var_small = gpr.gpr_predict(model, Xt, batch_size=7)
    np.testing.assert_allclose(mean_small, mean_full, atol=1e-12)


def test_preclamp_variance_never_very_negative():
    rng = np.random.default_rng(11)
    X = rng.uniform(-1, 1, size=(60, 2))
    y = rng.normal(size=60)
    model = gpr.gpr_fit(X, y, 1.0, 0.4, 0.0)
    Xt = np.vstack([X, rng.uniform(-1, 1, size=(40, 2))])
    ks = gpr._kernel_matrix(Xt, model.X_train, model.sigma_f, model.ell)
    raw_var = model.sigma_f**2 - np.einsum(
        "ij,ji->i", ks, cho_solve(model.chol, ks.T)
    )
    assert raw_var.min() >= -1e-8
    _, var = gpr.gpr_predict(model, Xt)
    assert var.min() >= 0.0


def test_row_permutation_invariance():
    rng = np.random.default_rng(13)
    X = rng.uniform(-1, 1, size=(30, 2))
    y = rng.normal(size=30)
    perm = rng.permutation(30)
    # noticeable noise keeps the kernel well conditioned, so row order only
    # perturbs the factorization at rounding level
    m1 = gpr.gpr_fit(X, y, 0.8, 0.6, 1e-2)
    m2 = gpr.gpr_fit(X[perm], y[perm], 0.8, 0.6, 1e-2)
    Xt = rng.uniform(-1, 1, size=(15, 2))
    p1, _ = gpr.gpr_predict(m1, Xt)
    p2, _ = gpr.gpr_predict(m2, Xt)
    assert np.max(np.abs(p1 - p2)) <= 1e-10


def test_grid_search_recovers_reasonable_hyperparams():
    rng = np.random.default_rng(17)
    X = rng.uniform(-1, 1, size=(80, 1))
    y = np.sin(4.0 * X[:, 0])
    Xv = rng.uniform(-1, 1, size=(40, 1))
    yv = np.sin(4.0 * Xv[:, 0])
    out = gpr.gpr_grid_search(X, y, Xv, yv)
    assert out["val_rmse"] <= 1e-2
    assert out["sigma_f"] in gpr.DEFAULT_SIGMA_F_GRID
    assert out["ell"] in gpr.DEFAULT_ELL_GRID


def test_fit_validation_errors():
    with pytest.raises(ValueError):
        gpr.gpr_fit(np.ones((2, 1)), np.ones(3), 1.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        gpr.gpr_fit(np.ones((2, 1)), np.ones(2), 1.0, 1.0, -0.1)
    # duplicated rows with zero noise: singular kernel, helpful message
    X = np.zeros((3, 1))
    with pytest.raises(np.linalg.LinAlgError, match="raise sigma_n"):
        gpr.gpr_fit(X, np.array([1.0, 2.0, 3.0]), 1.0, 0.5, 0.0)
