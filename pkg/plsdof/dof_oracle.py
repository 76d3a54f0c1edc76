"""
dof_oracle.py
-------------
Independent checks for the two DoF engines:

- fd_trace: trace of the Jacobian of any fitting map by finite differences
- closed_form_dof_one_component: exact DoF of the one-component fit
- dof_lower_bound: lower bound for DoF(1) under low collinearity
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .config import get_settings
from .dataprep import StandardizedData
from .errors import DegenerateComponent, EigFailure, InputError, NonDeterministicFit, ZeroGradient
from .pls_core import fit_pls

_log = logging.getLogger(__name__)

FitFunction = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FdConfig:
    """Finite-difference settings; epsilon=None means 1e-5 * (1 + max|y|)"""

    epsilon: Optional[float] = None
    scheme: str = "central"

    def __post_init__(self):
        if self.epsilon is not None and not self.epsilon > 0:
            raise InputError(f"epsilon must be positive, got {self.epsilon}")
        if self.scheme not in ("central", "forward"):
            raise InputError(f"unknown scheme '{self.scheme}'")

    def step(self, y: np.ndarray) -> float:
        if self.epsilon is not None:
            return self.epsilon
        return get_settings().fd_epsilon_scale * (1.0 + float(np.max(np.abs(y), initial=0.0)))


def fd_trace(fit_fn: FitFunction, y: np.ndarray, cfg: Optional[FdConfig] = None,
             threads: Optional[int] = None) -> float:
    """
    sum_i d(fit_fn(y))_i / dy_i by finite differences

    The n perturbed evaluations are independent; with threads > 1 they run
    in a thread pool and are summed in index order.
    """
    cfg = cfg or FdConfig()
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    eps = cfg.step(y)
    threads = threads or get_settings().threads

    base = np.asarray(fit_fn(y), dtype=float)
    if not np.array_equal(base, np.asarray(fit_fn(y.copy()), dtype=float)):
        raise NonDeterministicFit("fit_fn returned different values for the same response")

    def diagonal_entry(i: int) -> float:
        bumped = y.copy()
        bumped[i] += eps
        upper = fit_fn(bumped)[i]
        if cfg.scheme == "forward":
            return (upper - base[i]) / eps
        bumped[i] = y[i] - eps
        lower = fit_fn(bumped)[i]
        return (upper - lower) / (2.0 * eps)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(diagonal_entry, range(n)))
    else:
        entries = [diagonal_entry(i) for i in range(n)]
    return float(np.sum(entries))


def pls_fit_fn(data: StandardizedData, m: int) -> FitFunction:
    """Map a raw response to the m-component PLSR fitted values (X fixed)"""

    def fitted(y_raw: np.ndarray) -> np.ndarray:
        model = fit_pls(data.with_response(y_raw), m)
        if model.n_components < m:
            raise DegenerateComponent(model.n_components + 1)
        return model.fitted_path[:, m]

    return fitted


def closed_form_dof_one_component(S: np.ndarray, s: np.ndarray) -> float:
    """3 + (s's / s'Ss) [trace(S) - 2 s'S^2 s / s'Ss]"""
    S = np.asarray(S, dtype=float)
    s = np.asarray(s, dtype=float).ravel()
    Ss = S @ s
    sSs = float(s @ Ss)
    if not sSs > 0:
        raise ZeroGradient("s'Ss vanishes; the first component is undefined")
    return 3.0 + float(s @ s) / sSs * (float(np.trace(S)) - 2.0 * float(Ss @ Ss) / sSs)


def dof_lower_bound(S: np.ndarray) -> Optional[float]:
    """1 + trace(S)/lambda_max when lambda_max <= trace(S)/2, else None"""
    S = np.asarray(S, dtype=float)
    try:
        lam_max = float(scipy.linalg.eigvalsh(0.5 * (S + S.T))[-1])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise EigFailure(f"eigenvalues of S failed: {e}")
    trace = float(np.trace(S))
    if not lam_max > 0 or lam_max > 0.5 * trace:
        return None
    return 1.0 + trace / lam_max
