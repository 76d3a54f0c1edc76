"""
dof_lanczos.py
--------------
Degrees of Freedom by differentiating the Lanczos recursion.

Every quantity of the fit (w_i, v_i, beta_i) is carried together with its
Jacobian with respect to the centered response. DoF(m) is then
1 + trace(X d(beta_m)/dy). The same Jacobians give an approximate hat
matrix and a first-order covariance of the coefficients.

Conventions shared with pls_core: G = X'X, ||X v_i|| = 1, and the
normalization derivative is
  d(u/||u||_G) = (I_p - u u' G / u'Gu) du / ||u||_G.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .dataprep import StandardizedData
from .errors import ComponentOutOfRange, InputError, JacobiansNotRetained
from .pls_core import _check_m_max, degeneracy_threshold

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JacobianPath:
    """
    dBeta[m] = d(beta_m)/dy (p x n) and dof[m] for m = 0..n_components

    truncated_at is the first m that is not usable: either the component
    that degenerated or the first negative DoF.
    """

    X: np.ndarray
    dof: np.ndarray
    dBeta: Optional[List[np.ndarray]]
    n_components: int
    truncated_at: Optional[int] = None

    @property
    def valid(self) -> np.ndarray:
        flags = np.ones(self.dof.shape[0], dtype=bool)
        if self.truncated_at is not None:
            flags[self.truncated_at:] = False
        return flags

    def jacobian(self, m: int) -> np.ndarray:
        if self.dBeta is None:
            raise JacobiansNotRetained("run dof_lanczos with retain_jacobians=True")
        if m < 0 or m >= len(self.dBeta):
            raise ComponentOutOfRange(m, len(self.dBeta) - 1)
        return self.dBeta[m]


def dof_lanczos(data: StandardizedData, m_max: int,
                retain_jacobians: bool = False) -> JacobianPath:
    """
    Propagate d(beta)/dy through the Lanczos recursion

    Without retain_jacobians only the running p x n buffer is kept.
    """
    _check_m_max(data, m_max)
    X, y = data.X, data.y
    n, p = X.shape
    G = X.T @ X
    z = X.T @ y
    dz = X.T
    floor = degeneracy_threshold(data)

    beta = np.zeros(p)
    dbeta = np.zeros((p, n))
    V: List[np.ndarray] = []
    dV: List[np.ndarray] = []
    dofs = [1.0]
    kept = [dbeta.copy()] if retain_jacobians else None
    truncated_at = None

    for i in range(m_max):
        w = z - G @ beta
        dw = dz - G @ dbeta
        Gw = G @ w
        dGw = G @ dw

        u = w.copy()
        du = dw.copy()
        for v_j, dv_j in zip(V, dV):
            a_j = v_j @ Gw
            u -= v_j * a_j
            # d(v v'z) = (v z' + v'z I) dv + v v' dz, with z = G w
            du -= np.outer(v_j, Gw @ dv_j) + a_j * dv_j + np.outer(v_j, v_j @ dGw)

        Gu = G @ u
        q = float(u @ Gu)
        norm = np.sqrt(max(q, 0.0))
        if norm < floor or not np.isfinite(norm):
            truncated_at = i + 1
            _log.warning("DegenerateComponent: derivative path stops at %d components", i)
            break

        v = u / norm
        dv = (du - np.outer(u, Gu @ du) / q) / norm
        if v @ z < 0:
            v, dv = -v, -dv

        score = float(v @ z)
        beta = beta + v * score
        # d(v v'z) with z = X'y: (v z' + v'z I) dv + v t'
        dbeta = dbeta + np.outer(v, z @ dv) + score * dv + np.outer(v, X @ v)
        V.append(v)
        dV.append(dv)

        dof = 1.0 + float(np.sum(X * dbeta.T))
        dofs.append(dof)
        if kept is not None:
            kept.append(dbeta.copy())
        _log.debug("m=%d dof=%.6g", i + 1, dof)

    dof_path = np.asarray(dofs)
    negative = np.flatnonzero(dof_path < 0)
    if negative.size:
        first = int(negative[0])
        _log.warning("NumericalInstability: negative DoF %.6g at m=%d", dof_path[first], first)
        truncated_at = first if truncated_at is None else min(truncated_at, first)

    return JacobianPath(
        X=X,
        dof=dof_path,
        dBeta=kept,
        n_components=len(V),
        truncated_at=truncated_at,
    )


def approximate_hat_matrix(jp: JacobianPath, m: int) -> np.ndarray:
    """
    H_m = d(y_hat_m)/dy including the intercept

    The intercept contributes 1 1'/n; X dBeta already annihilates the
    constant vector because X has centered columns.
    """
    dbeta = jp.jacobian(m)
    n = jp.X.shape[0]
    return np.full((n, n), 1.0 / n) + jp.X @ dbeta


def coefficient_covariance(jp: JacobianPath, m: int, sigma_hat: float) -> np.ndarray:
    """sigma^2 (d beta/dy)(d beta/dy)' on the standardized scale"""
    if m < 1:
        raise ComponentOutOfRange(m, jp.n_components)
    if sigma_hat < 0:
        raise InputError(f"sigma_hat must be non-negative, got {sigma_hat}")
    dbeta = jp.jacobian(m)
    cov = sigma_hat ** 2 * (dbeta @ dbeta.T)
    return 0.5 * (cov + cov.T)
