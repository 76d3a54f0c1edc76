"""
dataprep.py
-----------
Dataset ingestion, centering/scaling and the moment summaries every
other module consumes.

Standard deviations use the unbiased n-1 denominator throughout.
"""

import logging
import re
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from .config import DEGENERACY_RTOL, TOLERANCE
from .errors import (
    DimensionMismatch,
    DimensionTooSmall,
    MissingTarget,
    NonFiniteInput,
    NonNumericCell,
    ParseError,
    ZeroVarianceColumn,
)

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RawDataset:
    """Predictors and response in original units"""

    X_raw: np.ndarray
    y_raw: np.ndarray
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X_raw, dtype=float))
        y = np.asarray(self.y_raw, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if X.shape[0] < 2:
            raise DimensionTooSmall(f"need n >= 2 observations, got {X.shape[0]}")
        if X.shape[1] < 1:
            raise DimensionTooSmall("need at least one predictor column")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise NonFiniteInput("dataset contains NaN or infinite entries")
        names = list(self.names) or [f"x{j + 1}" for j in range(X.shape[1])]
        if len(names) != X.shape[1]:
            raise DimensionMismatch(f"{len(names)} names for {X.shape[1]} columns")
        object.__setattr__(self, "X_raw", X)
        object.__setattr__(self, "y_raw", y)
        object.__setattr__(self, "names", names)

    @property
    def n(self) -> int:
        return self.X_raw.shape[0]

    @property
    def p(self) -> int:
        return self.X_raw.shape[1]

    def subset(self, rows: Sequence[int]) -> "RawDataset":
        rows = np.asarray(rows, dtype=int)
        return RawDataset(self.X_raw[rows], self.y_raw[rows], list(self.names))


@dataclass(frozen=True)
class StandardizedData:
    """
    Centered and scaled design with centered response

    X columns have mean 0 and unit sample standard deviation; y has mean 0.
    x_bar, s_x and y_bar map results back to original units.
    """

    X: np.ndarray
    y: np.ndarray
    x_bar: np.ndarray
    s_x: np.ndarray
    y_bar: float

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_response(self, y_raw: np.ndarray) -> "StandardizedData":
        """Same design, new response (centered here)"""
        y_raw = np.asarray(y_raw, dtype=float).ravel()
        y_bar = float(y_raw.mean())
        return StandardizedData(self.X, y_raw - y_bar, self.x_bar, self.s_x, y_bar)


@dataclass(frozen=True)
class MomentSummary:
    """S = X'X/(n-1), s = X'y/(n-1), K = XX'"""

    S: np.ndarray
    s: np.ndarray
    K: np.ndarray


def standardize(raw: RawDataset) -> StandardizedData:
    """Center and scale predictors, center the response"""
    X_raw, y_raw = raw.X_raw, raw.y_raw
    x_bar = X_raw.mean(axis=0)
    s_x = X_raw.std(axis=0, ddof=1)
    scale = np.maximum(np.abs(x_bar), 1.0)
    for j, sd in enumerate(s_x):
        if not sd > DEGENERACY_RTOL * scale[j]:
            raise ZeroVarianceColumn(j, raw.names[j])
    X = (X_raw - x_bar) / s_x
    y_bar = float(y_raw.mean())
    return StandardizedData(X=X, y=y_raw - y_bar, x_bar=x_bar, s_x=s_x, y_bar=y_bar)


def moments(data: StandardizedData) -> MomentSummary:
    """Scatter matrix, covariance vector and kernel matrix"""
    X, y = data.X, data.y
    dof = data.n - 1
    S = X.T @ X / dof
    S = 0.5 * (S + S.T)
    K = X @ X.T
    K = 0.5 * (K + K.T)
    return MomentSummary(S=S, s=X.T @ y / dof, K=K)


def mean_abs_correlation(S: np.ndarray) -> float:
    """Average |s_ij| over all predictor pairs i < j"""
    S = np.asarray(S, dtype=float)
    p = S.shape[0]
    if p < 2:
        raise DimensionTooSmall("mean absolute correlation needs p >= 2")
    upper = np.abs(S[np.triu_indices(p, k=1)])
    return float(np.clip(2.0 * upper.sum() / (p * p - p), 0.0, 1.0))


def rescale_to_unit_box(X: np.ndarray) -> np.ndarray:
    """Map every column affinely onto [-1, 1]"""
    X = np.asarray(X, dtype=float)
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = hi - lo
    for j, width in enumerate(span):
        if width <= 0:
            raise ZeroVarianceColumn(j)
    return 2.0 * (X - lo) / span - 1.0


# ============================================================================
# CSV INGESTION
# ============================================================================

_LINE_PATTERN = re.compile(r"line (\d+)")


def load_csv(path: str, target_column: str) -> RawDataset:
    """
    Load a numeric CSV file with a header row

    The target column becomes y_raw; the remaining columns, in header
    order, become X_raw. Blank or non-numeric cells are rejected, not
    imputed.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True,
                            encoding="utf-8")
    except pd.errors.ParserError as e:
        match = _LINE_PATTERN.search(str(e))
        raise ParseError(str(e).strip(), int(match.group(1)) if match else None)
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty", 1)
    except UnicodeDecodeError as e:
        raise ParseError(f"not UTF-8: {e}")

    columns = [str(c).strip() for c in frame.columns]
    frame.columns = columns
    if target_column not in columns:
        raise MissingTarget(target_column)

    values = np.empty(frame.shape, dtype=float)
    for j, name in enumerate(columns):
        cells = frame[name].str.strip()
        bad = pd.to_numeric(cells, errors="coerce").isna().to_numpy()
        if bad.any():
            row = int(np.flatnonzero(bad)[0])
            # +2: header line plus 1-based numbering
            raise NonNumericCell(row + 2, name, frame[name].iloc[row])
        # float() per cell is correctly rounded, so %.17g text reads back exactly
        values[:, j] = cells.to_numpy(dtype=object).astype(float)

    target = columns.index(target_column)
    predictors = [c for c in columns if c != target_column]
    X = np.delete(values, target, axis=1)
    _log.debug("loaded %s: n=%d, p=%d", path, X.shape[0], X.shape[1])
    return RawDataset(X_raw=X, y_raw=values[:, target], names=predictors)


def save_csv(raw: RawDataset, path: str, target_name: str = "y") -> None:
    """Write a dataset so that load_csv(path, target_name) reproduces it"""
    frame = pd.DataFrame(raw.X_raw, columns=raw.names)
    frame[target_name] = raw.y_raw
    frame.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


def check_standardized(data: StandardizedData, tol: Optional[float] = None) -> bool:
    """True when column means vanish and column variances equal one"""
    tol = TOLERANCE if tol is None else tol
    n = data.n
    means_ok = np.all(np.abs(data.X.mean(axis=0)) <= tol)
    var_ok = np.all(np.abs(data.X.var(axis=0, ddof=1) - 1.0) <= tol)
    y_ok = abs(data.y.sum()) <= tol * max(n, 1) * max(1.0, float(np.abs(data.y).max(initial=0.0)))
    return bool(means_ok and var_ok and y_ok)
