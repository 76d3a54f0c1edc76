"""
dof_krylov.py
-------------
Degrees of Freedom as the trace of the Krylov-space Jacobian.

The first m latent components span the Krylov space {Ky, ..., K^m y}
with K = XX'. Writing the fit as a projection onto that space gives

  dy_hat/dy = 1 1'/n + T T' + sum_j c_j (I - T T') K^j
              + sum_j v_j (y - y_hat)' K^j

with B_ij = <t_i, K^j y>, c = B^-1 T'y and V = T B^-T. Its trace is

  1 + m + sum_j c_j tr(K^j) - sum_{j,l} c_j t_l' K^j t_l
        + (y - y_hat)' sum_j K^j v_j

Note the coefficient c_j inside the double sum; it follows from taking
the trace term by term. The intercept enters as 1 1'/n, whose trace is 1.

All powers of K are evaluated through one symmetric eigendecomposition.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from .config import get_settings
from .dataprep import StandardizedData
from .errors import ComponentOutOfRange, EigFailure, SingularBasis
from .pls_core import PlsModel

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class KernelSpectrum:
    """K = U diag(eigenvalues) U'"""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def power(self, j: int) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues ** j) @ U.T


def kernel_spectrum(K: np.ndarray) -> KernelSpectrum:
    """Symmetric eigendecomposition of a PSD kernel matrix"""
    K = np.asarray(K, dtype=float)
    try:
        eigenvalues, eigenvectors = scipy.linalg.eigh(0.5 * (K + K.T))
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigFailure(f"eigendecomposition of K failed: {e}")
    scale = max(float(np.abs(eigenvalues).max(initial=0.0)), 1.0)
    if eigenvalues.size and eigenvalues.min() < -1e-8 * scale:
        raise EigFailure(f"K is not positive semidefinite (eigenvalue {eigenvalues.min():.3g})")
    return KernelSpectrum(np.clip(eigenvalues, 0.0, None), eigenvectors)


def kernel_power_traces(K: np.ndarray, m: int,
                        spectrum: Optional[KernelSpectrum] = None) -> np.ndarray:
    """trace(K^j) for j = 1..m"""
    spectrum = spectrum or kernel_spectrum(K)
    lam = spectrum.eigenvalues
    return np.array([float(np.sum(lam ** j)) for j in range(1, m + 1)])


@dataclass(frozen=True)
class KrylovBasis:
    """Krylov representation of the m-component fit"""

    m: int
    T: np.ndarray
    B: np.ndarray
    c: np.ndarray
    V: np.ndarray
    K_powers_y: np.ndarray
    trace_K_powers: np.ndarray
    cond: float
    spectrum: KernelSpectrum

    def expansion(self) -> np.ndarray:
        """sum_j c_j K^j y, which equals T T' y"""
        return self.K_powers_y @ self.c


def krylov_basis(model: PlsModel, K: np.ndarray, y: np.ndarray, m: int,
                 spectrum: Optional[KernelSpectrum] = None,
                 cond_limit: Optional[float] = None) -> KrylovBasis:
    """
    Build B, c and V for the first m components

    The condition number is measured after scaling the columns of B to
    unit norm (the powers of K differ wildly in magnitude); above
    cond_limit the basis is rejected with SingularBasis.
    """
    if m < 0 or m > model.n_components:
        raise ComponentOutOfRange(m, model.n_components)
    cond_limit = cond_limit or get_settings().cond_limit
    y = np.asarray(y, dtype=float).ravel()
    spectrum = spectrum or kernel_spectrum(K)
    U, lam = spectrum.eigenvectors, spectrum.eigenvalues
    n = y.shape[0]

    T = model.T[:, :m]
    y_eig = U.T @ y
    powers = np.column_stack([U @ (lam ** j * y_eig) for j in range(1, m + 1)]) \
        if m else np.zeros((n, 0))
    traces = np.array([float(np.sum(lam ** j)) for j in range(1, m + 1)])

    if m == 0:
        return KrylovBasis(0, T, np.zeros((0, 0)), np.zeros(0), np.zeros((n, 0)),
                           powers, traces, 1.0, spectrum)

    B = T.T @ powers
    col_norms = np.linalg.norm(B, axis=0)
    if np.any(col_norms == 0) or not np.all(np.isfinite(B)):
        raise SingularBasis(m, np.inf)
    cond = float(np.linalg.cond(B / col_norms))
    if not np.isfinite(cond) or cond > cond_limit:
        raise SingularBasis(m, cond)

    lu = scipy.linalg.lu_factor(B)
    c = scipy.linalg.lu_solve(lu, T.T @ y)
    V = scipy.linalg.lu_solve(lu, T.T).T
    return KrylovBasis(m, T, B, c, V, powers, traces, cond, spectrum)


def _power_weights(lam: np.ndarray, m: int) -> np.ndarray:
    """Matrix with entry (k, j-1) = lam_k^j"""
    return lam[:, None] ** np.arange(1, m + 1)[None, :]


def dof_krylov(basis: KrylovBasis, model: PlsModel, y: np.ndarray) -> float:
    """Exact trace of the Krylov Jacobian plus the intercept"""
    m = basis.m
    if m == 0:
        return 1.0
    y = np.asarray(y, dtype=float).ravel()
    U, lam = basis.spectrum.eigenvectors, basis.spectrum.eigenvalues
    T = basis.T
    residual = y - T @ (T.T @ y)
    powers = _power_weights(lam, m)

    leverage = np.sum((U.T @ T) ** 2, axis=1)
    trace_free = basis.c @ basis.trace_K_powers
    trace_projected = basis.c @ (leverage @ powers)
    cross = np.sum(((U.T @ residual)[:, None] * (U.T @ basis.V)) * powers)
    return 1.0 + m + float(trace_free - trace_projected + cross)


def jacobian_krylov(basis: KrylovBasis, model: PlsModel, y: np.ndarray) -> np.ndarray:
    """Full n x n Jacobian of the fitted values (desk-scale n only)"""
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    H = np.full((n, n), 1.0 / n)
    if basis.m == 0:
        return H
    T = basis.T
    P = T @ T.T
    residual = y - P @ y
    complement = np.eye(n) - P
    H += P
    for j in range(1, basis.m + 1):
        Kj = basis.spectrum.power(j)
        H += basis.c[j - 1] * (complement @ Kj)
        H += np.outer(basis.V[:, j - 1], residual @ Kj)
    return H


def dof_krylov_path(data: StandardizedData, model: PlsModel,
                    m_max: Optional[int] = None,
                    K: Optional[np.ndarray] = None) -> Tuple[np.ndarray, Optional[int]]:
    """
    DoF for m = 0..m_max; entries after a singular basis are NaN

    Returns the path and the first m that could not be evaluated (or
    whose DoF came out negative), None when every entry is usable.
    """
    m_max = model.n_components if m_max is None else min(m_max, model.n_components)
    K = data.X @ data.X.T if K is None else K
    spectrum = kernel_spectrum(K)
    dofs = np.full(m_max + 1, np.nan)
    dofs[0] = 1.0
    truncated_at = None
    for m in range(1, m_max + 1):
        try:
            basis = krylov_basis(model, K, data.y, m, spectrum=spectrum)
        except SingularBasis as e:
            _log.warning("%s; Krylov path truncated at m=%d", e, m - 1)
            truncated_at = m
            break
        dofs[m] = dof_krylov(basis, model, data.y)
        if dofs[m] < 0 and truncated_at is None:
            _log.warning("NumericalInstability: negative Krylov DoF %.6g at m=%d", dofs[m], m)
            truncated_at = m
    if truncated_at is None and m_max == model.n_components:
        truncated_at = model.truncated_at
    return dofs, truncated_at
