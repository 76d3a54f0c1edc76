"""
baselines.py
------------
Competing regressors with closed-form Degrees of Freedom:

- Ridge: DoF(lambda) = 1 + sum_i d_i / (d_i + lambda), d_i eigenvalues of X'X
- PCR:   DoF(m) = m + 1
- OLS:   hat matrix X X^+ (the intercept is handled by centering)

plus cross-validated tuning for each and the repeated train/test
comparison against PLSR.
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from .config import DEFAULT_FOLDS, DEFAULT_N_TEST, DEFAULT_N_TRAIN, TOLERANCE
from .dataprep import RawDataset, StandardizedData, standardize
from .dof_krylov import dof_krylov_path
from .errors import (
    DimensionMismatch,
    EigFailure,
    InputError,
    PlsDofError,
    RankExceeded,
    SingularSystem,
    SplitTooLarge,
)
from .pls_core import fit_pls, max_components, predict_path
from .selection import (
    CriterionTable,
    CvConfig,
    assign_folds,
    cv_table,
    holdout_errors,
    kfold_path_errors,
    pls_path_predictor,
)

_log = logging.getLogger(__name__)


def _symmetric_spectrum(A: np.ndarray):
    try:
        return scipy.linalg.eigh(0.5 * (A + A.T))
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigFailure(f"eigendecomposition failed: {e}")


def numerical_rank(eigenvalues: np.ndarray) -> int:
    """Eigenvalues of a Gram matrix above the relative tolerance"""
    top = float(np.max(eigenvalues, initial=0.0))
    return int(np.sum(eigenvalues > TOLERANCE * max(top, 1e-300)))


# ============================================================================
# RIDGE
# ============================================================================

@dataclass(frozen=True)
class RidgeModel:
    """Ridge fit; beta and intercept are in original units"""

    lam: float
    beta: np.ndarray
    intercept: float
    dof: float
    fitted: np.ndarray


def ridge_dof(eigenvalues: np.ndarray, lam: float) -> float:
    d = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    if lam == 0:
        return 1.0 + float(np.sum(d > 0))
    return 1.0 + float(np.sum(d / (d + lam)))


def fit_ridge(data: StandardizedData, lam: float) -> RidgeModel:
    """beta = (X'X + lambda I)^-1 X'y via the eigendecomposition of X'X"""
    if lam < 0 or not math.isfinite(lam):
        raise InputError(f"lambda must be a finite non-negative number, got {lam}")
    d, Q = _symmetric_spectrum(data.X.T @ data.X)
    if lam == 0 and numerical_rank(d) < data.p:
        raise SingularSystem("X'X is singular; use lambda > 0")
    d = np.clip(d, 0.0, None)
    beta_std = Q @ ((Q.T @ (data.X.T @ data.y)) / (d + lam))
    beta = beta_std / data.s_x
    return RidgeModel(
        lam=float(lam),
        beta=beta,
        intercept=data.y_bar - float(data.x_bar @ beta),
        dof=ridge_dof(d, lam),
        fitted=data.y_bar + data.X @ beta_std,
    )


def ridge_lambda_grid(data: StandardizedData, size: int = 20) -> np.ndarray:
    """Log-spaced penalties from 1e-4 to 1e4 times the top eigenvalue of X'X"""
    if size < 1:
        raise InputError(f"grid size must be positive, got {size}")
    top = float(scipy.linalg.eigvalsh(data.X.T @ data.X)[-1])
    return np.logspace(-4, 4, size) * top


def _ridge_path_predictor(lambdas: np.ndarray):
    def predict(train: RawDataset, X_test_raw: np.ndarray) -> np.ndarray:
        data = standardize(train)
        d, Q = _symmetric_spectrum(data.X.T @ data.X)
        d = np.clip(d, 0.0, None)
        scores = Q.T @ (data.X.T @ data.y)
        X_test = (np.asarray(X_test_raw, dtype=float) - data.x_bar) / data.s_x
        columns = [data.y_bar + X_test @ (Q @ (scores / (d + lam))) for lam in lambdas]
        return np.column_stack(columns)

    return predict


@dataclass(frozen=True)
class RidgeCvResult:
    lambdas: np.ndarray
    cv_error: np.ndarray
    chosen_index: int
    chosen_lambda: float
    chosen_dof: float


def cross_validate_ridge(raw: RawDataset, lambdas: Sequence[float],
                         cfg: Optional[CvConfig] = None) -> RidgeCvResult:
    cfg = cfg or CvConfig()
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size == 0 or np.any(lambdas <= 0):
        raise InputError("ridge CV needs a non-empty grid of positive penalties")
    errors = kfold_path_errors(raw, assign_folds(raw.n, cfg), _ridge_path_predictor(lambdas))
    cv_error = errors.sum(axis=0) / raw.n
    chosen = int(np.argmin(cv_error))
    model = fit_ridge(standardize(raw), float(lambdas[chosen]))
    return RidgeCvResult(lambdas, cv_error, chosen, float(lambdas[chosen]), model.dof)


# ============================================================================
# PRINCIPAL COMPONENTS REGRESSION
# ============================================================================

@dataclass(frozen=True)
class PcrModel:
    """
    PCR path for m = 0..m_max

    directions are eigenvectors of S ordered by decreasing eigenvalue;
    beta_path is on the standardized scale like PlsModel.beta_path.
    """

    m_max: int
    directions: np.ndarray
    eigenvalues: np.ndarray
    beta_path: np.ndarray
    fitted_path: np.ndarray
    y_bar: float

    @property
    def dof(self) -> np.ndarray:
        return np.arange(self.m_max + 1, dtype=float) + 1.0

    def residual_sum_of_squares(self, y_centered: np.ndarray) -> np.ndarray:
        return np.sum((y_centered[:, None] - (self.fitted_path - self.y_bar)) ** 2, axis=0)


def principal_directions(data: StandardizedData):
    """Eigenpairs of S sorted by decreasing eigenvalue (stable on ties)"""
    S = data.X.T @ data.X / (data.n - 1)
    eigenvalues, vectors = _symmetric_spectrum(S)
    order = np.argsort(-eigenvalues, kind="stable")
    eigenvalues, vectors = eigenvalues[order], vectors[:, order]
    # sign convention: largest-magnitude loading positive
    flip = np.sign(vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])])
    flip[flip == 0] = 1.0
    return eigenvalues, vectors * flip


def fit_pcr(data: StandardizedData, m_max: int) -> PcrModel:
    eigenvalues, vectors = principal_directions(data)
    rank = numerical_rank(eigenvalues)
    if m_max < 0 or m_max > rank:
        raise RankExceeded(f"m_max={m_max} exceeds rank(X)={rank}")

    X, y = data.X, data.y
    beta_path = np.zeros((data.p, m_max + 1))
    beta = np.zeros(data.p)
    for k in range(m_max):
        z = X @ vectors[:, k]
        beta = beta + vectors[:, k] * (float(z @ y) / float(z @ z))
        beta_path[:, k + 1] = beta
    return PcrModel(
        m_max=m_max,
        directions=vectors[:, :m_max],
        eigenvalues=eigenvalues,
        beta_path=beta_path,
        fitted_path=data.y_bar + X @ beta_path,
        y_bar=data.y_bar,
    )


def _pcr_path_predictor(m_max: int):
    def predict(train: RawDataset, X_test_raw: np.ndarray) -> np.ndarray:
        data = standardize(train)
        rank = numerical_rank(principal_directions(data)[0])
        model = fit_pcr(data, min(m_max, rank))
        return predict_path(model, data, X_test_raw)

    return predict


def cross_validate_pcr(raw: RawDataset, m_max: int, cfg: Optional[CvConfig] = None) -> CriterionTable:
    """k-fold CV of the PCR path; the dof column is m + 1"""
    cfg = cfg or CvConfig()
    errors = kfold_path_errors(raw, assign_folds(raw.n, cfg), _pcr_path_predictor(m_max))
    k = errors.shape[1]
    return cv_table(raw, errors, dof=np.arange(k, dtype=float) + 1.0)


# ============================================================================
# ORDINARY LEAST SQUARES
# ============================================================================

@dataclass(frozen=True)
class OlsFit:
    """
    Least-squares fit on the standardized design

    hat is X X^+ and acts on the centered response; add 1 1'/n for the
    intercept. pseudo_inverse is True when X is rank-deficient.
    """

    beta: np.ndarray
    fitted: np.ndarray
    hat: np.ndarray
    rank: int
    pseudo_inverse: bool


def fit_ols(data: StandardizedData) -> OlsFit:
    X = data.X
    X_pinv, rank = scipy.linalg.pinv(X, return_rank=True)
    beta = X_pinv @ data.y
    if rank < data.p:
        _log.warning("X has rank %d < p=%d; OLS uses the pseudo-inverse", rank, data.p)
    return OlsFit(
        beta=beta,
        fitted=data.y_bar + X @ beta,
        hat=X @ X_pinv,
        rank=int(rank),
        pseudo_inverse=bool(rank < data.p),
    )


def approximation_error(y_ols_fit: np.ndarray, y_m_fit: np.ndarray, n: Optional[int] = None) -> float:
    """||y_ols - y_m||^2 / n"""
    a = np.asarray(y_ols_fit, dtype=float).ravel()
    b = np.asarray(y_m_fit, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"fits have lengths {a.shape[0]} and {b.shape[0]}")
    n = a.shape[0] if n is None else n
    return float(np.sum((a - b) ** 2)) / n


# ============================================================================
# REPEATED TRAIN/TEST COMPARISON
# ============================================================================

COMPARED_METHODS = ("PLS", "PCR", "RIDGE")


@dataclass(frozen=True)
class CompareConfig:
    reps: int = 50
    n_train: int = DEFAULT_N_TRAIN
    n_test: Optional[int] = DEFAULT_N_TEST
    m_max: Optional[int] = None
    folds: int = DEFAULT_FOLDS
    seed: int = 0
    lambdas: Optional[Sequence[float]] = None
    lambda_grid_size: int = 20

    def __post_init__(self):
        if self.reps < 1:
            raise InputError(f"reps must be >= 1, got {self.reps}")
        if self.n_train < 3:
            raise SplitTooLarge(f"n_train={self.n_train} leaves nothing to fit")


@dataclass(frozen=True)
class ComparisonReport:
    """
    methods: one row per (rep, method) with test MSE, chosen parameter and DoF
    curves: one row per (rep, method, m) with training error and DoF
    """

    methods: List[Dict]
    curves: List[Dict]

    def methods_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.methods, columns=[
            "rep", "method", "test_mse", "chosen_m", "chosen_lambda", "chosen_dof", "error"])

    def curves_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.curves, columns=["rep", "method", "m", "dof", "train_error"])

    def to_dict(self) -> Dict:
        clean = lambda rows: [{k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                               for k, v in row.items()} for row in rows]
        return {"methods": clean(self.methods), "curves": clean(self.curves)}

    def to_csv(self, prefix: str) -> List[str]:
        paths = [f"{prefix}_methods.csv", f"{prefix}_curves.csv"]
        self.methods_frame().to_csv(paths[0], index=False, float_format="%.10g", encoding="utf-8")
        self.curves_frame().to_csv(paths[1], index=False, float_format="%.10g", encoding="utf-8")
        return paths


def split_rng(seed: int, rep: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))


def _compare_rep(raw: RawDataset, rep: int, cfg: CompareConfig):
    rng = split_rng(cfg.seed, rep)
    order = rng.permutation(raw.n)
    n_test = raw.n - cfg.n_train if cfg.n_test is None else cfg.n_test
    train = raw.subset(order[:cfg.n_train])
    test = raw.subset(order[cfg.n_train:cfg.n_train + n_test])
    data = standardize(train)
    cv_cfg = CvConfig(folds=cfg.folds, seed=cfg.seed + rep)

    m_max = max_components(data) if cfg.m_max is None else min(cfg.m_max, max_components(data))
    pls = fit_pls(data, m_max)
    pls_dof, _ = dof_krylov_path(data, pls)
    rank = min(m_max, numerical_rank(principal_directions(data)[0]))
    pcr = fit_pcr(data, rank)

    methods, curves = [], []
    n = data.n
    for m, (err, dof) in enumerate(zip(pls.residual_sum_of_squares(data.y) / n, pls_dof)):
        curves.append({"rep": rep, "method": "PLS", "m": m, "dof": float(dof), "train_error": float(err)})
    for m, err in enumerate(pcr.residual_sum_of_squares(data.y) / n):
        curves.append({"rep": rep, "method": "PCR", "m": m, "dof": m + 1.0, "train_error": float(err)})

    def record(method: str, run):
        row = {"rep": rep, "method": method, "test_mse": math.nan, "chosen_m": None,
               "chosen_lambda": math.nan, "chosen_dof": math.nan, "error": ""}
        try:
            row.update(run())
        except PlsDofError as e:
            _log.warning("rep %d, %s: %s", rep, method, e)
            row["error"] = type(e).__name__
        methods.append(row)

    def run_pls():
        table = cv_table(train, kfold_path_errors(train, assign_folds(train.n, cv_cfg),
                                                  pls_path_predictor(m_max)))
        m = min(table.chosen_m, pls.n_components)
        mse, _ = holdout_errors(predict_path(pls, data, test.X_raw)[:, m], test.y_raw, data.y_bar)
        dof = float(pls_dof[m]) if m < pls_dof.shape[0] and np.isfinite(pls_dof[m]) else m + 1.0
        return {"test_mse": mse, "chosen_m": m, "chosen_dof": dof}

    def run_pcr():
        table = cross_validate_pcr(train, rank, cv_cfg)
        m = min(table.chosen_m, pcr.m_max)
        mse, _ = holdout_errors(predict_path(pcr, data, test.X_raw)[:, m], test.y_raw, data.y_bar)
        return {"test_mse": mse, "chosen_m": m, "chosen_dof": m + 1.0}

    def run_ridge():
        lambdas = ridge_lambda_grid(data, cfg.lambda_grid_size) if cfg.lambdas is None \
            else np.asarray(cfg.lambdas, dtype=float)
        result = cross_validate_ridge(train, lambdas, cv_cfg)
        model = fit_ridge(data, result.chosen_lambda)
        predictions = model.intercept + test.X_raw @ model.beta
        mse, _ = holdout_errors(predictions, test.y_raw, data.y_bar)
        return {"test_mse": mse, "chosen_lambda": result.chosen_lambda, "chosen_dof": model.dof}

    record("PLS", run_pls)
    record("PCR", run_pcr)
    record("RIDGE", run_ridge)
    return methods, curves


def compare_methods(raw: RawDataset, cfg: Optional[CompareConfig] = None) -> ComparisonReport:
    """PLSR, PCR and Ridge on repeated random splits, each tuned by k-fold CV"""
    cfg = cfg or CompareConfig()
    n_test = raw.n - cfg.n_train if cfg.n_test is None else cfg.n_test
    if n_test < 1 or cfg.n_train + n_test > raw.n:
        raise SplitTooLarge(f"split {cfg.n_train}+{n_test} does not fit {raw.n} rows")

    methods, curves = [], []
    for rep in range(cfg.reps):
        rep_methods, rep_curves = _compare_rep(raw, rep, cfg)
        methods.extend(rep_methods)
        curves.extend(rep_curves)
        _log.debug("comparison rep %d done", rep)
    return ComparisonReport(methods=methods, curves=curves)


def config_dict(cfg: CompareConfig) -> Dict:
    values = asdict(cfg)
    if values["lambdas"] is not None:
        values["lambdas"] = [float(v) for v in values["lambdas"]]
    return values
