"""
Tests for plsdof.pls_core
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from plsdof.baselines import fit_ols
from plsdof.dataprep import RawDataset, standardize
from plsdof.errors import ComponentOutOfRange, DimensionMismatch
from plsdof.pls_core import (
    coefficients_original_scale,
    fit_nipals_reference,
    fit_pls,
    max_components,
    predict,
    predict_path,
)

from sample_data import (
    RANDOM_INSTANCE_SEEDS,
    orthonormal_data,
    random_data,
    random_instance,
    rank_deficient_instance,
    tall_instance,
)


def test_components_are_orthonormal_and_positive_on_y():
    data = random_data(1010)
    model = fit_pls(data, max_components(data))
    T = model.T
    assert_allclose(T.T @ T, np.eye(T.shape[1]), atol=1e-8)
    assert np.all(T.T @ data.y >= 0)
    assert_allclose(data.X @ model.V, T, atol=1e-8)


def test_mean_model_at_m_zero():
    data = random_data(1011)
    model = fit_pls(data, 3)
    assert_allclose(model.beta_path[:, 0], 0.0)
    assert_allclose(model.fitted_path[:, 0], data.y_bar)


def test_one_component_on_orthonormal_design():
    data = orthonormal_data(n=10, p=3)
    model = fit_pls(data, 1)
    z = data.X.T @ data.y
    assert_allclose(model.T[:, 0], data.X @ z / np.linalg.norm(z))
    # X'X = I, so beta_1 = z z'z / z'Gz = z
    assert_allclose(model.beta_path[:, 1], z)


@pytest.mark.parametrize("seed", RANDOM_INSTANCE_SEEDS[:20])
def test_lanczos_matches_nipals_reference(seed):
    data = random_data(seed)
    m = min(max_components(data), 6)
    fast = fit_pls(data, m)
    slow = fit_nipals_reference(data, m)
    k = min(fast.n_components, slow.n_components)
    assert_allclose(fast.fitted_path[:, :k + 1], slow.fitted_path[:, :k + 1], atol=1e-6)


def test_lanczos_decomposition_is_upper_bidiagonal():
    data = random_data(1012)
    model = fit_pls(data, min(max_components(data), 5))
    L = model.L
    assert_allclose(np.tril(L, -1), 0.0, atol=1e-8)
    assert_allclose(np.triu(L, 2), 0.0, atol=1e-8)


def test_full_path_equals_ols():
    data = standardize(tall_instance(4))
    model = fit_pls(data, data.p)
    ols = fit_ols(data)
    assert_allclose(model.fitted_path[:, data.p], ols.fitted, atol=1e-8)


def test_rss_is_non_increasing_in_m():
    data = random_data(1013)
    model = fit_pls(data, max_components(data))
    rss = model.residual_sum_of_squares(data.y)
    assert np.all(np.diff(rss) <= 1e-10 * rss[0])


def test_rank_deficient_design_truncates():
    data = standardize(rank_deficient_instance())
    model = fit_pls(data, data.p)
    assert model.n_components == data.p - 1
    assert model.truncated_at == data.p


def test_m_max_out_of_range():
    data = random_data(1014)
    with pytest.raises(ComponentOutOfRange):
        fit_pls(data, max_components(data) + 1)
    with pytest.raises(ComponentOutOfRange):
        fit_pls(data, -1)


def test_original_scale_coefficients_reproduce_fit():
    raw = random_instance(1015)
    data = standardize(raw)
    model = fit_pls(data, 2)
    intercept, beta = coefficients_original_scale(model, 2, data)
    assert_allclose(predict(intercept, beta, raw.X_raw), model.fitted_path[:, 2], atol=1e-8)
    assert_allclose(predict_path(model, data, raw.X_raw), model.fitted_path, atol=1e-8)


def test_predict_rejects_wrong_width():
    with pytest.raises(DimensionMismatch):
        predict(0.0, np.ones(3), np.ones((2, 4)))


def test_two_point_example():
    data = standardize(RawDataset([[1.0], [3.0]], [1.0, 3.0]))
    model = fit_pls(data, 1)
    assert_allclose(model.fitted_path[:, 1], [1.0, 3.0])
