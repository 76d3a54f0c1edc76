"""
Tests for plsdof.simulate
"""

import math

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from plsdof.dataprep import standardize
from plsdof.dof_krylov import dof_krylov_path
from plsdof.dof_lanczos import dof_lanczos
from plsdof.errors import ConfigError, DegenerateSignal, InputError, SplitTooLarge
from plsdof.pls_core import fit_pls
from plsdof.simulate import (
    ROW_COLUMNS,
    SIMULATED_METHODS,
    SimulationConfig,
    cell_rng,
    draw_response,
    estimated_dof_path,
    generate_rbf_design,
    rbf_features,
    run_simulation,
    scaled_test_error_curve,
    synthetic_base_design,
)

from sample_data import rbf_training_cell


def _small_config(**overrides):
    values = dict(d_values=(10,), reps=1, seed=3, m_range=5, folds=5)
    values.update(overrides)
    return SimulationConfig(**values)


# ============================================================================
# DATA GENERATION
# ============================================================================

def test_rbf_is_one_at_its_center():
    centers = np.array([[0.2, -0.4], [1.0, 1.0]])
    assert_allclose(rbf_features(centers[:1], centers)[0, 0], 1.0)
    assert_allclose(rbf_features(np.zeros((1, 2)), np.array([[1.0, 0.0]])), math.exp(-1.0))


def test_rbf_range():
    base = synthetic_base_design(rows=30, p=4, seed=1)
    phi = rbf_features(base, np.random.default_rng(0).uniform(-1, 1, size=(7, 4)))
    assert phi.shape == (30, 7)
    assert np.all(phi > 0.0) and np.all(phi <= 1.0)


def test_single_basis_function_design():
    base = synthetic_base_design(rows=20, p=3, seed=2)
    design = generate_rbf_design(base, 1, cell_rng(0, 0, 1))
    assert design.centers.shape == (1, 3)
    assert 1.0 <= design.coefficients[0] <= 3.0
    assert_allclose(design.f_values, design.coefficients[0] * design.X[:, 0])


def test_cell_streams_are_independent_of_order():
    first = cell_rng(7, 2, 50).standard_normal(3)
    cell_rng(7, 0, 10).standard_normal(100)
    assert_allclose(cell_rng(7, 2, 50).standard_normal(3), first)
    assert not np.allclose(cell_rng(7, 3, 50).standard_normal(3), first)


def test_vanishing_noise():
    f = np.linspace(-1.0, 2.0, 40)
    y, sigma = draw_response(f, 1e12, np.random.default_rng(0))
    assert sigma < 1e-5
    assert_allclose(y, f, atol=1e-4)


def test_noise_level_matches_signal_to_noise_ratio():
    f = np.linspace(0.0, 3.0, 25)
    _, sigma = draw_response(f, 9.0, np.random.default_rng(1))
    assert_allclose(sigma ** 2, np.var(f, ddof=1) / 9.0)


def test_noise_variance_over_many_draws():
    f = np.sin(np.linspace(0.0, 20.0, 100_000))
    y, sigma = draw_response(f, 9.0, np.random.default_rng(2))
    assert abs(np.var(y - f) / sigma ** 2 - 1.0) < 0.02


def test_calibration_rows_set_the_variance():
    f = np.concatenate([np.linspace(0.0, 1.0, 10), np.full(10, 100.0)])
    _, sigma = draw_response(f, 4.0, np.random.default_rng(3), calibration=range(10))
    assert_allclose(sigma ** 2, np.var(f[:10], ddof=1) / 4.0)


def test_degenerate_signal():
    with pytest.raises(DegenerateSignal):
        draw_response(np.full(10, 2.0), 9.0, np.random.default_rng(0))
    with pytest.raises(InputError):
        draw_response(np.arange(5.0), 0.0, np.random.default_rng(0))


# ============================================================================
# CONFIGURATION
# ============================================================================

@pytest.mark.parametrize("overrides", [
    {"d_values": (0,)},
    {"d_values": ()},
    {"reps": 0},
    {"snr": 0.0},
    {"folds": 1},
    {"m_range": -1},
    {"n_test": 0},
])
def test_config_validation(overrides):
    with pytest.raises(ConfigError):
        _small_config(**overrides)


def test_split_must_fit_the_base_design():
    with pytest.raises(SplitTooLarge):
        _small_config(n_train=100, n_test=153)
    with pytest.raises(SplitTooLarge):
        _small_config(base_design=np.zeros((60, 3)), n_train=50, n_test=20)


def test_config_from_mapping():
    cfg = SimulationConfig.from_mapping({"D_VALUES": "10, 50", "REPS": "3", "SNR": "4"}, seed=5, reps=None)
    assert cfg.d_values == (10, 50)
    assert cfg.reps == 3
    assert cfg.snr == 4.0
    assert cfg.seed == 5
    assert cfg.to_dict()["base_design"] == "synthetic"
    with pytest.raises(ConfigError):
        SimulationConfig.from_mapping({"WIDTH": "3"})
    with pytest.raises(ConfigError):
        SimulationConfig.from_mapping({"REPS": "many"})


# ============================================================================
# SWEEP
# ============================================================================

def test_single_cell_report():
    report = run_simulation(_small_config())
    frame = report.to_frame()
    assert list(frame.columns) == ROW_COLUMNS
    assert frame["method"].tolist() == list(SIMULATED_METHODS)
    assert (frame["error"] == "").all()
    for column in ("chosen_m", "chosen_dof", "normalized_test_error", "sigma_ratio"):
        assert np.all(np.isfinite(frame[column].astype(float)))

    naive = frame[frame["method"] == "NAIVE"].iloc[0]
    assert naive["chosen_dof"] == naive["chosen_m"] + 1
    assert [m["count"] for m in report.medians] == [1, 1, 1, 1]
    assert {point["m"] for point in report.curves} == set(range(6))


def test_report_is_reproducible(tmp_path):
    cfg = _small_config(d_values=(10, 30))
    first = run_simulation(cfg)
    second = run_simulation(cfg, threads=2)
    assert first.to_json() == second.to_json()

    first.to_csv(str(tmp_path / "a.csv"))
    second.to_csv(str(tmp_path / "b.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(pd.read_csv(tmp_path / "a.csv")) == 8


def test_runtime_is_reported_on_request():
    report = run_simulation(_small_config())
    assert "runtime" not in report.to_json()["rows"][0]
    timed = report.to_json(include_runtime=True)["rows"]
    assert all(row["runtime"] >= 0 for row in timed)


def test_supplied_base_design_is_rescaled():
    base = 50.0 + 10.0 * synthetic_base_design(rows=80, p=5, seed=4)
    report = run_simulation(_small_config(base_design=base, n_train=40, n_test=30))
    assert report.config["base_design"] == "supplied"
    assert len(report.rows) == 4


def test_scaled_curve_bottoms_out_at_one():
    curves = [
        {"d": 10, "rep": r, "m": m, "test_mse": (m - 2) ** 2 + 1.0 + r}
        for r in range(3) for m in range(5)
    ]
    scaled = scaled_test_error_curve(curves)
    assert scaled.groupby("d")["scaled_error"].min().tolist() == [1.0]
    assert scaled.loc[scaled["scaled_error"].idxmin(), "m"] == 2
    assert scaled_test_error_curve([]).empty


@pytest.mark.slow
def test_qualitative_orderings():
    cfg = SimulationConfig(d_values=(10, 90), reps=10, seed=2024)
    medians = {(m["d"], m["method"]): m for m in run_simulation(cfg).medians}
    assert medians[(90, "NAIVE")]["dof_estimate"] >= medians[(90, "KRYLOV")]["dof_estimate"]
    for d in cfg.d_values:
        assert medians[(d, "KRYLOV")]["sigma_ratio"] >= 1.0
        assert medians[(d, "LANCZOS")]["sigma_ratio"] >= 1.0
        assert medians[(d, "NAIVE")]["sigma_ratio"] <= 1.0
        krylov = medians[(d, "KRYLOV")]["normalized_test_error"]
        cv = medians[(d, "CV")]["normalized_test_error"]
        assert abs(krylov - cv) <= 0.15 * cv


def test_dof_estimate_falls_back_to_lanczos_past_the_krylov_basis():
    data = standardize(rbf_training_cell())
    model = fit_pls(data, 30)
    krylov, _ = dof_krylov_path(data, model)
    lanczos = dof_lanczos(data, 30).dof
    filled = estimated_dof_path(data, model)
    k = min(filled.shape[0], lanczos.shape[0])
    assert np.all(np.isfinite(filled[:k]))
    kept = np.isfinite(krylov[:k])
    assert_allclose(filled[:k][kept], krylov[:k][kept], rtol=1e-10)
    assert_allclose(filled[:k][~kept], lanczos[:k][~kept], rtol=1e-10)


def test_every_successful_row_has_a_dof_estimate():
    report = run_simulation(_small_config(d_values=(90,), m_range=20))
    for row in report.rows:
        if not row["error"]:
            assert math.isfinite(row["dof_estimate"])
