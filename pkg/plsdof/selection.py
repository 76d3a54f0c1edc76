"""
selection.py
------------
Choosing the number of PLSR components.

Four criteria share one table layout:
- CV: k-fold cross-validated prediction error
- LANCZOS: BIC with DoF from dof_lanczos and sigma from the approximate hat matrix
- KRYLOV: BIC with DoF from dof_krylov and sigma = rss / (n - DoF)
- NAIVE: BIC with DoF = m + 1

A negative DoF at some m makes that m and every larger one unusable.

BIC tables pick the first local minimum of the criterion by default. With
sigma re-estimated per m, BIC can dip again once the fit nears
interpolation (rss -> 0 faster than n - DoF); the global rule is kept
for comparison.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import DEFAULT_FOLDS, TOLERANCE, get_settings
from .dataprep import RawDataset, StandardizedData, mean_abs_correlation, moments, standardize
from .dof_krylov import dof_krylov_path
from .dof_lanczos import approximate_hat_matrix, dof_lanczos
from .dof_oracle import dof_lower_bound
from .errors import (
    ComponentOutOfRange,
    DegenerateDenominator,
    DimensionTooSmall,
    DofExceedsN,
    FoldTooSmall,
    InputError,
    NumericalError,
)
from .pls_core import _check_m_max, fit_pls, max_components, predict_path

_log = logging.getLogger(__name__)

CV = "CV"
LANCZOS = "LANCZOS"
KRYLOV = "KRYLOV"
NAIVE = "NAIVE"

BIC_METHODS = (LANCZOS, KRYLOV, NAIVE)

FIRST_MINIMUM = "first"
GLOBAL_MINIMUM = "global"
MINIMUM_RULES = (FIRST_MINIMUM, GLOBAL_MINIMUM)

# command-line spelling -> method tag
METHOD_NAMES = {
    "cv": CV,
    "bic-lanczos": LANCZOS,
    "bic-krylov": KRYLOV,
    "bic-naive": NAIVE,
}

# predict_path(train_raw, X_test_raw) -> one prediction column per candidate
PathPredictor = Callable[[RawDataset, np.ndarray], np.ndarray]


def _finite_or_none(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


# ============================================================================
# CRITERION TABLES
# ============================================================================

@dataclass(frozen=True)
class CriterionRow:
    m: int
    rss: float
    dof: float
    sigma2_hat: float
    criterion_value: float
    valid: bool

    def to_dict(self) -> Dict:
        return {
            "m": self.m,
            "rss": _finite_or_none(self.rss),
            "dof": _finite_or_none(self.dof),
            "sigma2_hat": _finite_or_none(self.sigma2_hat),
            "criterion_value": _finite_or_none(self.criterion_value),
            "valid": self.valid,
        }


@dataclass(frozen=True)
class CriterionTable:
    """
    One row per candidate m

    chosen_m is the valid row picked by the table's rule: the global
    minimum of criterion_value or its first local minimum (smallest m on
    ties either way). Rows at or beyond truncated_at are invalid.
    """

    method: str
    rows: List[CriterionRow]
    chosen_m: int
    truncated_at: Optional[int] = None

    def row(self, m: int) -> CriterionRow:
        if m < 0 or m >= len(self.rows):
            raise ComponentOutOfRange(m, len(self.rows) - 1)
        return self.rows[m]

    @property
    def chosen(self) -> CriterionRow:
        return self.rows[self.chosen_m]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_dict(self) -> Dict:
        return {
            "method": self.method,
            "chosen_m": self.chosen_m,
            "truncated_at": self.truncated_at,
            "rows": [r.to_dict() for r in self.rows],
        }

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_dict() for r in self.rows])


def truncate_negative_dof(dof_path: Sequence[float]) -> Tuple[int, np.ndarray]:
    """
    Length of the usable prefix and per-entry validity flags

    The first entry that is negative (or not a number) ends the prefix;
    everything after it is invalid whatever its sign.
    """
    dof_path = np.asarray(dof_path, dtype=float)
    bad = np.flatnonzero(~(dof_path >= 0))
    length = int(bad[0]) if bad.size else dof_path.shape[0]
    flags = np.zeros(dof_path.shape[0], dtype=bool)
    flags[:length] = True
    return length, flags


def first_local_minimum(scores: np.ndarray) -> int:
    """
    Index of the first finite score that is not larger than the next finite
    one; the last finite index when the scores keep falling
    """
    scores = np.asarray(scores, dtype=float)
    finite = np.flatnonzero(np.isfinite(scores))
    if not finite.size:
        raise NumericalError("no finite criterion value")
    for here, after in zip(finite, finite[1:]):
        if scores[here] <= scores[after]:
            return int(here)
    return int(finite[-1])


def build_criterion_table(method: str, criterion: np.ndarray, rss: np.ndarray,
                          dof: np.ndarray, sigma2: np.ndarray,
                          truncated_at: Optional[int] = None,
                          rule: str = GLOBAL_MINIMUM) -> CriterionTable:
    """Assemble rows, apply the truncation cut and pick the minimum under rule"""
    if rule not in MINIMUM_RULES:
        raise InputError(f"unknown minimum rule '{rule}', expected one of {', '.join(MINIMUM_RULES)}")
    criterion = np.asarray(criterion, dtype=float)
    k = criterion.shape[0]
    prefix = k if truncated_at is None else min(k, truncated_at)
    if method != CV:
        negative_cut, _ = truncate_negative_dof(dof)
        prefix = min(prefix, negative_cut)

    valid = np.zeros(k, dtype=bool)
    valid[:prefix] = np.isfinite(criterion[:prefix])
    if not valid.any():
        raise NumericalError(f"{method}: no candidate m could be evaluated")

    scores = np.where(valid, criterion, np.inf)
    chosen = first_local_minimum(scores) if rule == FIRST_MINIMUM else int(np.argmin(scores))
    rows = [
        CriterionRow(m, float(rss[m]), float(dof[m]), float(sigma2[m]),
                     float(criterion[m]) if valid[m] else math.nan, bool(valid[m]))
        for m in range(k)
    ]
    cut = prefix if prefix < k else None
    _log.debug("%s: chosen m=%d by the %s minimum (truncated_at=%s)", method, chosen, rule, cut)
    return CriterionTable(method=method, rows=rows, chosen_m=chosen, truncated_at=cut)


# ============================================================================
# NOISE ESTIMATORS AND BIC
# ============================================================================

def sigma_hat_star(residual: np.ndarray, H: np.ndarray) -> float:
    """sqrt(||r||^2 / trace((I - H)(I - H)')) for a general (non-symmetric) H"""
    residual = np.asarray(residual, dtype=float).ravel()
    H = np.asarray(H, dtype=float)
    complement = np.eye(H.shape[0]) - H
    denominator = float(np.sum(complement ** 2))
    if denominator <= TOLERANCE * max(1.0, H.shape[0]):
        raise DegenerateDenominator(f"trace((I-H)(I-H)') = {denominator:.3g}")
    return math.sqrt(float(residual @ residual) / denominator)


def sigma_hat(rss: float, n: int, dof: float) -> float:
    """sqrt(rss / (n - dof))"""
    if not dof < n:
        raise DofExceedsN(dof, n)
    return math.sqrt(rss / (n - dof))


def bic(rss: float, n: int, sigma2: float, dof: float) -> float:
    return rss + math.log(n) * sigma2 * dof


def _plug_in_sigma2(rss: np.ndarray, n: int, dof: np.ndarray) -> np.ndarray:
    sigma2 = np.full(rss.shape[0], math.nan)
    for m, (r, d) in enumerate(zip(rss, dof)):
        if not np.isfinite(d):
            continue
        try:
            sigma2[m] = sigma_hat(r, n, d) ** 2
        except DofExceedsN as e:
            _log.debug("m=%d: %s", m, e)
    return sigma2


def select_bic(data: StandardizedData, m_max: int, method: str,
               rule: str = FIRST_MINIMUM) -> CriterionTable:
    """
    BIC over m = 0..m_max with the DoF and sigma of the chosen method

    sigma^2 is re-estimated for every m from that model's own residual.
    Rows whose DoF reaches n have no noise estimate and are invalid for
    every method.
    """
    if method not in BIC_METHODS:
        raise InputError(f"unknown BIC method '{method}'")
    _check_m_max(data, m_max)
    n = data.n
    model = fit_pls(data, m_max)
    rss = model.residual_sum_of_squares(data.y)
    truncated_at = model.truncated_at

    if method == LANCZOS:
        path = dof_lanczos(data, m_max, retain_jacobians=True)
        k = min(rss.shape[0], path.dof.shape[0])
        rss, dof = rss[:k], path.dof[:k]
        sigma2 = np.full(k, math.nan)
        for m in range(k):
            if not dof[m] < n:
                _log.debug("m=%d: %s", m, DofExceedsN(dof[m], n))
                continue
            residual = data.y - (model.fitted_path[:, m] - model.y_bar)
            try:
                sigma2[m] = sigma_hat_star(residual, approximate_hat_matrix(path, m)) ** 2
            except DegenerateDenominator as e:
                _log.debug("m=%d: %s", m, e)
        if path.truncated_at is not None:
            truncated_at = path.truncated_at
    elif method == KRYLOV:
        dof, krylov_cut = dof_krylov_path(data, model)
        sigma2 = _plug_in_sigma2(rss, n, dof)
        if krylov_cut is not None:
            truncated_at = krylov_cut
    else:
        dof = np.arange(rss.shape[0], dtype=float) + 1.0
        sigma2 = _plug_in_sigma2(rss, n, dof)

    criterion = np.array([
        bic(r, n, s2, d) if np.isfinite(s2) else math.nan
        for r, s2, d in zip(rss, sigma2, dof)
    ])
    return build_criterion_table(method, criterion, rss, dof, sigma2, truncated_at, rule=rule)


# ============================================================================
# CROSS-VALIDATION
# ============================================================================

@dataclass(frozen=True)
class CvConfig:
    folds: int = DEFAULT_FOLDS
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        if self.folds < 2:
            raise FoldTooSmall(f"need at least 2 folds, got {self.folds}")


def assign_folds(n: int, cfg: CvConfig) -> np.ndarray:
    """Fold id for every observation; fold sizes differ by at most one"""
    if cfg.folds > n:
        raise FoldTooSmall(f"{cfg.folds} folds for {n} observations")
    fold_ids = np.arange(n) % cfg.folds
    if cfg.shuffle:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
        fold_ids = rng.permutation(fold_ids)
    return fold_ids


def kfold_path_errors(raw: RawDataset, fold_ids: np.ndarray,
                      predict_path_fn: PathPredictor,
                      threads: Optional[int] = None) -> np.ndarray:
    """
    Sum of squared held-out errors, one row per fold, one column per candidate

    Every fold is fit on its own training rows only, so centering and
    scaling never see the held-out response. Candidates missing in some
    fold (shorter paths) are dropped from all folds.
    """
    fold_ids = np.asarray(fold_ids, dtype=int)
    if fold_ids.shape[0] != raw.n:
        raise InputError(f"{fold_ids.shape[0]} fold ids for {raw.n} observations")
    folds = np.unique(fold_ids)
    if folds.shape[0] < 2:
        raise FoldTooSmall("need at least 2 distinct folds")
    largest = max(int(np.sum(fold_ids == f)) for f in folds)
    if raw.n - largest < 3:
        raise FoldTooSmall(f"training folds would hold {raw.n - largest} rows")

    def fold_sse(fold: int) -> np.ndarray:
        held_out = fold_ids == fold
        train = raw.subset(np.flatnonzero(~held_out))
        predictions = predict_path_fn(train, raw.X_raw[held_out])
        return np.sum((raw.y_raw[held_out][:, None] - predictions) ** 2, axis=0)

    threads = threads or get_settings().threads
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_fold = list(pool.map(fold_sse, folds))
    else:
        per_fold = [fold_sse(f) for f in folds]

    width = min(sse.shape[0] for sse in per_fold)
    return np.vstack([sse[:width] for sse in per_fold])


def pls_path_predictor(m_max: int) -> PathPredictor:
    """PLSR path up to m_max (capped by each training fold's size)"""

    def predict(train: RawDataset, X_test_raw: np.ndarray) -> np.ndarray:
        data = standardize(train)
        model = fit_pls(data, min(m_max, max_components(data)))
        return predict_path(model, data, X_test_raw)

    return predict


def cv_table(raw: RawDataset, errors: np.ndarray, dof: Optional[np.ndarray] = None,
             rss: Optional[np.ndarray] = None) -> CriterionTable:
    """CV table from per-fold SSEs; criterion is the pooled mean squared error"""
    k = errors.shape[1]
    mse = errors.sum(axis=0) / raw.n
    dof = np.full(k, math.nan) if dof is None else np.asarray(dof, dtype=float)[:k]
    rss = np.full(k, math.nan) if rss is None else np.asarray(rss, dtype=float)[:k]
    return build_criterion_table(CV, mse, rss, dof, np.full(k, math.nan))


def cross_validate(raw: RawDataset, m_max: int, cfg: Optional[CvConfig] = None,
                   fold_ids: Optional[np.ndarray] = None) -> CriterionTable:
    """k-fold CV of the PLSR path; rss holds the full-data training error"""
    cfg = cfg or CvConfig()
    if fold_ids is None:
        fold_ids = assign_folds(raw.n, cfg)
    errors = kfold_path_errors(raw, fold_ids, pls_path_predictor(m_max))
    data = standardize(raw)
    model = fit_pls(data, min(m_max, max_components(data), errors.shape[1] - 1))
    rss = model.residual_sum_of_squares(data.y)
    k = min(errors.shape[1], rss.shape[0])
    return cv_table(raw, errors[:, :k], rss=rss[:k])


# ============================================================================
# DOF PROFILES
# ============================================================================

ENGINES = ("lanczos", "krylov", "naive")


@dataclass(frozen=True)
class DofProfile:
    """DoF versus m from one engine, with the one-component lower bound"""

    m: np.ndarray
    dof: np.ndarray
    provenance: str
    valid: np.ndarray
    truncated_at: Optional[int] = None
    lower_bound: Optional[float] = None
    mean_abs_correlation: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "engine": self.provenance,
            "truncated_at": self.truncated_at,
            "lower_bound": _finite_or_none(self.lower_bound),
            "mean_abs_correlation": _finite_or_none(self.mean_abs_correlation),
            "rows": [
                {"m": int(m), "dof": _finite_or_none(d), "naive": int(m) + 1, "valid": bool(v)}
                for m, d, v in zip(self.m, self.dof, self.valid)
            ],
        }


def dof_profile(data: StandardizedData, m_max: int, engine: str = "krylov") -> DofProfile:
    if engine not in ENGINES:
        raise InputError(f"unknown engine '{engine}', expected one of {', '.join(ENGINES)}")
    _check_m_max(data, m_max)

    if engine == "lanczos":
        path = dof_lanczos(data, m_max)
        dof, truncated_at = path.dof, path.truncated_at
    elif engine == "krylov":
        dof, truncated_at = dof_krylov_path(data, fit_pls(data, m_max))
    else:
        model = fit_pls(data, m_max)
        dof = np.arange(model.n_components + 1, dtype=float) + 1.0
        truncated_at = model.truncated_at

    length, valid = truncate_negative_dof(dof)
    if truncated_at is not None:
        valid[truncated_at:] = False
    if length < dof.shape[0]:
        truncated_at = length if truncated_at is None else min(truncated_at, length)

    S = moments(data).S
    try:
        s_bar = mean_abs_correlation(S)
    except DimensionTooSmall:
        s_bar = None
    return DofProfile(
        m=np.arange(dof.shape[0]),
        dof=np.asarray(dof, dtype=float),
        provenance=engine,
        valid=valid,
        truncated_at=truncated_at,
        lower_bound=dof_lower_bound(S),
        mean_abs_correlation=s_bar,
    )


# ============================================================================
# SELECTION RESULTS
# ============================================================================

@dataclass(frozen=True)
class SelectionResult:
    """Chosen model of one criterion, with holdout error when available"""

    method: str
    chosen_m: int
    chosen_dof: float
    sigma_hat: float
    table: CriterionTable
    test_mse: Optional[float] = None
    normalized_test_error: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "method": self.method,
            "chosen_m": self.chosen_m,
            "chosen_dof": _finite_or_none(self.chosen_dof),
            "sigma_hat": _finite_or_none(self.sigma_hat),
            "test_mse": _finite_or_none(self.test_mse),
            "normalized_test_error": _finite_or_none(self.normalized_test_error),
            "table": self.table.to_dict(),
        }


def holdout_errors(predictions: np.ndarray, y_test: np.ndarray, y_bar_train: float) -> Tuple[float, float]:
    """Test MSE and the same MSE divided by that of the training-mean model"""
    y_test = np.asarray(y_test, dtype=float)
    mse = float(np.mean((y_test - predictions) ** 2))
    trivial = float(np.mean((y_test - y_bar_train) ** 2))
    return mse, (mse / trivial if trivial > 0 else math.nan)


def select(raw: RawDataset, m_max: int, method: str, cfg: Optional[CvConfig] = None,
           test: Optional[RawDataset] = None, rule: str = FIRST_MINIMUM) -> SelectionResult:
    """
    Run one criterion end to end

    method is a tag (CV, LANCZOS, KRYLOV, NAIVE) or its command-line
    spelling. For CV the reported DoF is the Krylov DoF of the chosen
    model (m + 1 when that is unavailable) and sigma uses rss / (n - DoF).
    rule applies to the BIC criteria only; CV always takes the global
    minimum.
    """
    method = METHOD_NAMES.get(method, method)
    data = standardize(raw)
    _check_m_max(data, m_max)

    if method == CV:
        table = cross_validate(raw, m_max, cfg)
        chosen_m = table.chosen_m
        model = fit_pls(data, m_max)
        krylov, _ = dof_krylov_path(data, model, m_max=chosen_m)
        chosen_dof = float(krylov[chosen_m]) if np.isfinite(krylov[chosen_m]) else chosen_m + 1.0
        rss = float(model.residual_sum_of_squares(data.y)[chosen_m])
        try:
            sigma = sigma_hat(rss, data.n, chosen_dof)
        except DofExceedsN as e:
            _log.warning("%s; sigma unavailable for the CV choice", e)
            sigma = math.nan
    else:
        table = select_bic(data, m_max, method, rule=rule)
        chosen_m = table.chosen_m
        chosen_dof = table.chosen.dof
        sigma = math.sqrt(table.chosen.sigma2_hat)
        model = None

    test_mse = normalized = None
    if test is not None:
        model = model or fit_pls(data, m_max)
        predictions = predict_path(model, data, test.X_raw)[:, chosen_m]
        test_mse, normalized = holdout_errors(predictions, test.y_raw, data.y_bar)

    return SelectionResult(
        method=method,
        chosen_m=chosen_m,
        chosen_dof=chosen_dof,
        sigma_hat=sigma,
        table=table,
        test_mse=test_mse,
        normalized_test_error=normalized,
    )
