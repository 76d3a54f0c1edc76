"""
pls_core.py
-----------
Partial Least Squares regression along the full component path.

fit_pls runs the Lanczos recursion on pseudo-weights v_i (t_i = X v_i)
with full Gram-Schmidt reorthogonalization. fit_nipals_reference is the
textbook deflation algorithm, kept as an independent cross-check.

Pseudo-weights are scaled so that every latent component t_i has unit
Euclidean norm; the coefficient update is then
beta_i = beta_{i-1} + v_i (t_i' y).
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .config import DEGENERACY_RTOL
from .dataprep import StandardizedData
from .errors import ComponentOutOfRange, DimensionMismatch

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PlsModel:
    """
    PLSR path for m = 0..n_components

    Column m of beta_path / fitted_path belongs to the m-component model;
    column 0 is the mean model. beta_path is on the standardized scale,
    intercept_path on the original scale.
    """

    m_max: int
    T: np.ndarray
    V: np.ndarray
    W: np.ndarray
    L: np.ndarray
    beta_path: np.ndarray
    intercept_path: np.ndarray
    fitted_path: np.ndarray
    y_bar: float
    truncated_at: Optional[int] = None

    @property
    def n_components(self) -> int:
        return self.T.shape[1]

    def residual_sum_of_squares(self, y_centered: np.ndarray) -> np.ndarray:
        """||y - y_hat_m||^2 for every m on the path"""
        fitted_centered = self.fitted_path - self.y_bar
        return np.sum((y_centered[:, None] - fitted_centered) ** 2, axis=0)


def max_components(data: StandardizedData) -> int:
    return min(data.n - 1, data.p)


def _check_m_max(data: StandardizedData, m_max: int) -> None:
    limit = max_components(data)
    if m_max < 0 or m_max > limit:
        raise ComponentOutOfRange(m_max, limit)


def degeneracy_threshold(data: StandardizedData) -> float:
    """
    Floor for ||X u|| below which a new direction counts as exhausted

    ||X u|| scales like ||X||_F^2 ||y|| through u ~ X' r, so the floor
    carries the same units.
    """
    return DEGENERACY_RTOL * float(np.sum(data.X ** 2)) * float(np.linalg.norm(data.y))


def _assemble(data: StandardizedData, m_max: int, T: np.ndarray, V: np.ndarray,
              W: np.ndarray, truncated_at: Optional[int]) -> PlsModel:
    """Build the coefficient and fitted-value paths from T and V"""
    X, y = data.X, data.y
    k = T.shape[1]
    scores = T.T @ y
    beta_path = np.zeros((data.p, k + 1))
    if k:
        beta_path[:, 1:] = np.cumsum(V * scores[None, :], axis=1)
    intercept_path = data.y_bar - (data.x_bar / data.s_x) @ beta_path
    fitted_path = data.y_bar + X @ beta_path
    L = T.T @ X @ W if k else np.zeros((0, 0))
    return PlsModel(
        m_max=m_max,
        T=T,
        V=V,
        W=W,
        L=L,
        beta_path=beta_path,
        intercept_path=intercept_path,
        fitted_path=fitted_path,
        y_bar=data.y_bar,
        truncated_at=truncated_at,
    )


def fit_pls(data: StandardizedData, m_max: int) -> PlsModel:
    """
    Fit PLSR with 0..m_max components via the Lanczos recursion

    A component whose direction collapses (Krylov space exhausted) ends
    the path early; the model records truncated_at instead of failing.
    """
    _check_m_max(data, m_max)
    X, y = data.X, data.y
    n, p = X.shape
    G = X.T @ X
    z = X.T @ y
    floor = degeneracy_threshold(data)

    T = np.zeros((n, m_max))
    V = np.zeros((p, m_max))
    W = np.zeros((p, m_max))
    beta = np.zeros(p)
    truncated_at = None
    k = 0

    for i in range(m_max):
        w = z - G @ beta
        Gw = G @ w
        # full Gram-Schmidt against every earlier pseudo-weight
        u = w - V[:, :i] @ (V[:, :i].T @ Gw)
        t = X @ u
        norm = float(np.linalg.norm(t))
        if norm < floor or not np.isfinite(norm):
            truncated_at = i + 1
            _log.warning("DegenerateComponent: component %d exhausted, path truncated at %d",
                         i + 1, i)
            break
        v, t = u / norm, t / norm
        if t @ y < 0:
            v, t = -v, -t
        T[:, i], V[:, i] = t, v
        W[:, i] = w / np.linalg.norm(w)
        beta = beta + v * (t @ y)
        k = i + 1
        _log.debug("component %d: t'y=%.6g", k, t @ y)

    return _assemble(data, m_max, T[:, :k], V[:, :k], W[:, :k], truncated_at)


def fit_nipals_reference(data: StandardizedData, m_max: int) -> PlsModel:
    """
    Deflation-based NIPALS, used only to cross-check fit_pls

    X_i = X - P_{t_1..t_{i-1}} X, w_i = X_i' y, t_i = X_i w_i (normalized).
    Pseudo-weights are recovered by solving X V = T in least squares.
    """
    _check_m_max(data, m_max)
    X, y = data.X, data.y
    n, p = X.shape
    floor = degeneracy_threshold(data)

    Xi = X.copy()
    T, W = [], []
    truncated_at = None
    for i in range(m_max):
        w = Xi.T @ y
        t = Xi @ w
        norm = float(np.linalg.norm(t))
        if norm < floor or not np.isfinite(norm):
            truncated_at = i + 1
            _log.warning("DegenerateComponent: NIPALS component %d exhausted", i + 1)
            break
        t = t / norm
        if t @ y < 0:
            t = -t
        T.append(t)
        W.append(w / np.linalg.norm(w))
        Xi = Xi - np.outer(t, t @ Xi)

    T = np.column_stack(T) if T else np.zeros((n, 0))
    W = np.column_stack(W) if W else np.zeros((p, 0))
    V = np.linalg.lstsq(X, T, rcond=None)[0] if T.shape[1] else np.zeros((p, 0))
    return _assemble(data, m_max, T, V, W, truncated_at)


def coefficients_original_scale(model: PlsModel, m: int,
                                data: StandardizedData) -> Tuple[float, np.ndarray]:
    """Intercept and slope vector of the m-component model in raw units"""
    if m < 0 or m > model.n_components:
        raise ComponentOutOfRange(m, model.n_components)
    beta = model.beta_path[:, m] / data.s_x
    intercept = data.y_bar - float(data.x_bar @ beta)
    return intercept, beta


def predict(intercept: float, beta: np.ndarray, X_new_raw: np.ndarray) -> np.ndarray:
    """Row-wise intercept + x' beta"""
    X_new = np.atleast_2d(np.asarray(X_new_raw, dtype=float))
    beta = np.asarray(beta, dtype=float).ravel()
    if X_new.shape[1] != beta.shape[0]:
        raise DimensionMismatch(f"X_new has {X_new.shape[1]} columns, model has {beta.shape[0]}")
    return intercept + X_new @ beta


def predict_path(model: PlsModel, data: StandardizedData, X_new_raw: np.ndarray) -> np.ndarray:
    """Predictions of every model on the path, one column per m"""
    X_new = np.atleast_2d(np.asarray(X_new_raw, dtype=float))
    if X_new.shape[1] != data.p:
        raise DimensionMismatch(f"X_new has {X_new.shape[1]} columns, model has {data.p}")
    return ((X_new - data.x_bar) / data.s_x) @ model.beta_path + data.y_bar
