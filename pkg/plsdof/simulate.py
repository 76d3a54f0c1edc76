"""
simulate.py
-----------
Simulation study for the four selection criteria.

Every (d, rep) cell:
1. draws d Gaussian radial basis functions (centers in [-1, 1]^p, weights in [1, 3])
2. maps the base design through them
3. splits the rows into train and test
4. adds noise so that var(f) / sigma^2 equals the signal-to-noise ratio
5. runs CV, LANCZOS, KRYLOV and NAIVE and records test error, chosen
   complexity and sigma_hat / sigma

Cells draw from their own Philox substream keyed by (seed, rep, d), so
the report does not depend on the order or parallelism of the sweep.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from .config import (
    DEFAULT_BASE_DIM,
    DEFAULT_BASE_ROWS,
    DEFAULT_D_VALUES,
    DEFAULT_FOLDS,
    DEFAULT_M_RANGE,
    DEFAULT_N_TEST,
    DEFAULT_N_TRAIN,
    DEFAULT_SNR,
    get_settings,
)
from .dataprep import RawDataset, StandardizedData, rescale_to_unit_box, standardize
from .dof_krylov import dof_krylov_path
from .dof_lanczos import dof_lanczos
from .errors import ConfigError, DegenerateSignal, InputError, PlsDofError, SplitTooLarge
from .pls_core import PlsModel, fit_pls, max_components, predict_path
from .selection import CV, KRYLOV, LANCZOS, NAIVE, CvConfig, holdout_errors, select

_log = logging.getLogger(__name__)

SIMULATED_METHODS = (CV, LANCZOS, KRYLOV, NAIVE)

ROW_COLUMNS = [
    "d", "rep", "method", "chosen_m", "chosen_dof", "dof_estimate",
    "normalized_test_error", "sigma_ratio", "error",
]
MEDIAN_FIELDS = ["normalized_test_error", "chosen_m", "chosen_dof", "dof_estimate", "sigma_ratio"]


# ============================================================================
# CONFIGURATION
# ============================================================================

@dataclass(frozen=True)
class SimulationConfig:
    """
    Sweep settings

    base_design=None uses synthetic_base_design(); a supplied design is
    rescaled column-wise to [-1, 1]. n_test=None takes every row left
    after the training split.
    """

    base_design: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    d_values: Tuple[int, ...] = DEFAULT_D_VALUES
    n_train: int = DEFAULT_N_TRAIN
    n_test: Optional[int] = DEFAULT_N_TEST
    snr: float = DEFAULT_SNR
    reps: int = 50
    seed: int = 0
    m_range: int = DEFAULT_M_RANGE
    folds: int = DEFAULT_FOLDS

    def __post_init__(self):
        object.__setattr__(self, "d_values", tuple(int(d) for d in self.d_values))
        if not self.d_values or min(self.d_values) < 1:
            raise ConfigError(f"d values must be positive, got {self.d_values}")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if not self.snr > 0:
            raise ConfigError(f"snr must be positive, got {self.snr}")
        if self.m_range < 0:
            raise ConfigError(f"m_range must be >= 0, got {self.m_range}")
        if self.n_train < 3:
            raise ConfigError(f"n_train must be >= 3, got {self.n_train}")
        if self.n_test is not None and self.n_test < 1:
            raise ConfigError(f"n_test must be >= 1, got {self.n_test}")
        if self.folds < 2 or self.folds > self.n_train:
            raise ConfigError(f"folds must lie in 2..n_train, got {self.folds}")
        rows = DEFAULT_BASE_ROWS if self.base_design is None else np.asarray(self.base_design).shape[0]
        if self.n_train + (self.n_test or 1) > rows:
            raise SplitTooLarge(f"{self.n_train} training + {self.n_test} test rows, base has {rows}")

    @classmethod
    def from_mapping(cls, values: Mapping[str, str], **overrides) -> "SimulationConfig":
        """Build from KEY=value pairs (see config.read_key_value_file)"""
        parsers = {
            "D_VALUES": ("d_values", lambda v: tuple(int(x) for x in v.split(",") if x.strip())),
            "REPS": ("reps", int),
            "SEED": ("seed", int),
            "N_TRAIN": ("n_train", int),
            "N_TEST": ("n_test", int),
            "SNR": ("snr", float),
            "M_RANGE": ("m_range", int),
            "FOLDS": ("folds", int),
        }
        kwargs = {}
        for key, raw in values.items():
            if key not in parsers:
                raise ConfigError(f"unknown simulation setting '{key}'")
            name, parse = parsers[key]
            try:
                kwargs[name] = parse(raw)
            except ValueError:
                raise ConfigError(f"{key}={raw!r} does not parse")
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    def to_dict(self) -> Dict:
        return {
            "d_values": list(self.d_values),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "snr": self.snr,
            "reps": self.reps,
            "seed": self.seed,
            "m_range": self.m_range,
            "folds": self.folds,
            "base_design": "synthetic" if self.base_design is None else "supplied",
        }


# ============================================================================
# DATA GENERATION
# ============================================================================

def cell_rng(seed: int, rep: int, d: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep, d])))


def synthetic_base_design(rows: int = DEFAULT_BASE_ROWS, p: int = DEFAULT_BASE_DIM,
                          seed: int = 0) -> np.ndarray:
    """Uniform rows in [-1, 1]^p"""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    return rng.uniform(-1.0, 1.0, size=(rows, p))


def rbf_features(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """exp(-||x_i - c_j||^2)"""
    return np.exp(-cdist(np.atleast_2d(points), np.atleast_2d(centers), "sqeuclidean"))


@dataclass(frozen=True)
class RbfDesign:
    X: np.ndarray
    centers: np.ndarray
    coefficients: np.ndarray
    f_values: np.ndarray


def generate_rbf_design(base_design: np.ndarray, d: int, rng: np.random.Generator) -> RbfDesign:
    """Centers and weights are drawn before any noise, from the same generator"""
    base_design = np.asarray(base_design, dtype=float)
    centers = rng.uniform(-1.0, 1.0, size=(d, base_design.shape[1]))
    coefficients = rng.uniform(1.0, 3.0, size=d)
    X = rbf_features(base_design, centers)
    return RbfDesign(X=X, centers=centers, coefficients=coefficients, f_values=X @ coefficients)


def draw_response(f_values: np.ndarray, snr: float, rng: np.random.Generator,
                  calibration: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, float]:
    """
    y = f + N(0, sigma^2) with sigma^2 = var(f) / snr

    var(f) is the sample variance over the calibration rows (all rows by
    default).
    """
    if not snr > 0:
        raise InputError(f"snr must be positive, got {snr}")
    f_values = np.asarray(f_values, dtype=float)
    reference = f_values if calibration is None else f_values[np.asarray(calibration, dtype=int)]
    variance = float(np.var(reference, ddof=1)) if reference.shape[0] > 1 else 0.0
    if not variance > 0:
        raise DegenerateSignal("f has zero sample variance on the calibration rows")
    sigma = math.sqrt(variance / snr)
    return f_values + sigma * rng.standard_normal(f_values.shape[0]), sigma


# ============================================================================
# ONE CELL
# ============================================================================

def _empty_row(d: int, rep: int, method: str) -> Dict:
    return {"d": d, "rep": rep, "method": method, "chosen_m": None, "chosen_dof": math.nan,
            "dof_estimate": math.nan, "normalized_test_error": math.nan,
            "sigma_ratio": math.nan, "runtime": math.nan, "error": ""}


def estimated_dof_path(data: StandardizedData, model: PlsModel) -> np.ndarray:
    """Krylov DoF per m, with the Lanczos DoF wherever the Krylov basis gave out"""
    dof, _ = dof_krylov_path(data, model)
    gaps = ~np.isfinite(dof)
    if gaps.any():
        lanczos = dof_lanczos(data, model.m_max).dof
        k = min(dof.shape[0], lanczos.shape[0])
        dof[:k] = np.where(gaps[:k], lanczos[:k], dof[:k])
    return dof


def run_cell(base_design: np.ndarray, d: int, rep: int,
             cfg: SimulationConfig) -> Tuple[List[Dict], List[Dict]]:
    """Four method rows plus the per-m test error curve of one (d, rep) cell"""
    rows = [_empty_row(d, rep, method) for method in SIMULATED_METHODS]
    try:
        rng = cell_rng(cfg.seed, rep, d)
        design = generate_rbf_design(base_design, d, rng)
        order = rng.permutation(design.X.shape[0])
        n_test = design.X.shape[0] - cfg.n_train if cfg.n_test is None else cfg.n_test
        train_rows = order[:cfg.n_train]
        test_rows = order[cfg.n_train:cfg.n_train + n_test]
        y, sigma = draw_response(design.f_values, cfg.snr, rng, calibration=train_rows)

        train = RawDataset(design.X[train_rows], y[train_rows])
        test = RawDataset(design.X[test_rows], y[test_rows])
        data = standardize(train)
        m_max = min(cfg.m_range, max_components(data))
        model = fit_pls(data, m_max)
        dof_path = estimated_dof_path(data, model)
    except PlsDofError as e:
        _log.warning("cell d=%d rep=%d: %s", d, rep, e)
        for row in rows:
            row["error"] = type(e).__name__
        return rows, []

    predictions = predict_path(model, data, test.X_raw)
    curve = [
        {"d": d, "rep": rep, "m": m, "test_mse": holdout_errors(predictions[:, m], test.y_raw, data.y_bar)[0]}
        for m in range(predictions.shape[1])
    ]

    cv_cfg = CvConfig(folds=cfg.folds, seed=int(rng.integers(2 ** 31)))
    for row in rows:
        started = time.perf_counter()
        try:
            result = select(train, m_max, row["method"], cv_cfg, test=test)
        except PlsDofError as e:
            _log.warning("cell d=%d rep=%d %s: %s", d, rep, row["method"], e)
            row["error"] = type(e).__name__
            continue
        finally:
            row["runtime"] = time.perf_counter() - started
        m = result.chosen_m
        row.update({
            "chosen_m": m,
            "chosen_dof": result.chosen_dof,
            "dof_estimate": float(dof_path[m]) if m < dof_path.shape[0] else math.nan,
            "normalized_test_error": result.normalized_test_error,
            "sigma_ratio": result.sigma_hat / sigma,
        })
    return rows, curve


# ============================================================================
# SWEEP AND REPORT
# ============================================================================

@dataclass(frozen=True)
class SimulationReport:
    """
    rows: one per (d, rep, method) in that order
    curves: per (d, rep, m) test MSE of the PLSR path
    medians: per (d, method) medians over successful rows
    """

    config: Dict
    rows: List[Dict]
    curves: List[Dict]
    medians: List[Dict]

    def to_frame(self, include_runtime: bool = False) -> pd.DataFrame:
        columns = ROW_COLUMNS + (["runtime"] if include_runtime else [])
        return pd.DataFrame(self.rows, columns=columns)

    def to_csv(self, path: str, include_runtime: bool = False) -> None:
        self.to_frame(include_runtime).to_csv(path, index=False, float_format="%.10g", encoding="utf-8")

    def to_json(self, include_runtime: bool = False) -> Dict:
        columns = ROW_COLUMNS + (["runtime"] if include_runtime else [])
        return {
            "config": self.config,
            "rows": [{c: _clean(row[c]) for c in columns} for row in self.rows],
            "medians": [{k: _clean(v) for k, v in entry.items()} for entry in self.medians],
        }


def _clean(value):
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def _medians(rows: List[Dict]) -> List[Dict]:
    frame = pd.DataFrame(rows, columns=ROW_COLUMNS)
    frame = frame[frame["error"] == ""]
    medians = []
    for (d, method), group in frame.groupby(["d", "method"], sort=False):
        entry = {"d": int(d), "method": method, "count": int(len(group))}
        for name in MEDIAN_FIELDS:
            entry[name] = float(np.nanmedian(group[name].astype(float))) if group[name].notna().any() else math.nan
        medians.append(entry)
    return medians


def run_simulation(cfg: SimulationConfig, threads: Optional[int] = None) -> SimulationReport:
    """Run every (d, rep) cell; failures are recorded per row, not raised"""
    base = synthetic_base_design(seed=cfg.seed) if cfg.base_design is None \
        else rescale_to_unit_box(cfg.base_design)
    cells = [(d, rep) for d in cfg.d_values for rep in range(cfg.reps)]
    threads = threads or get_settings().threads

    def run(cell):
        d, rep = cell
        return run_cell(base, d, rep, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(cell) for cell in cells]

    rows = [row for cell_rows, _ in results for row in cell_rows]
    curves = [point for _, cell_curve in results for point in cell_curve]
    _log.info("simulation finished: %d cells, %d failed rows",
              len(cells), sum(1 for r in rows if r["error"]))
    return SimulationReport(config=cfg.to_dict(), rows=rows, curves=curves, medians=_medians(rows))


def scaled_test_error_curve(curves: List[Dict]) -> pd.DataFrame:
    """
    Median test MSE over reps for every (d, m), divided by the smallest
    median of the same d, so each d's curve bottoms out at 1
    """
    frame = pd.DataFrame(curves, columns=["d", "rep", "m", "test_mse"])
    if frame.empty:
        return pd.DataFrame(columns=["d", "m", "median_test_mse", "scaled_error"])
    medians = frame.groupby(["d", "m"], sort=True)["test_mse"].median().reset_index()
    medians = medians.rename(columns={"test_mse": "median_test_mse"})
    medians["scaled_error"] = medians["median_test_mse"] / medians.groupby("d")["median_test_mse"].transform("min")
    return medians
