import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import NonPSDInput, NoConvergence, SingularLimit
from ._kernels import glasso_bcd

DEFAULT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 1_000
JITTER = 1e-6


@dataclass(frozen=True)
class PrecisionEstimate:
    precision: np.ndarray
    lambda4: float
    duality_gap: float = 0.0
    jitter: float = 0.0
    converged: bool = True

    @property
    def covariance(self) -> np.ndarray:
        return np.linalg.inv(self.precision)


def glasso_objective(S, precision, lambda4):
    """Penalized negative log-likelihood with an off-diagonal L1 term."""
    sign, logdet = np.linalg.slogdet(precision)
    if sign <= 0:
        return np.inf
    off = np.abs(precision).sum() - np.abs(np.diag(precision)).sum()
    return -logdet + float(np.sum(S * precision)) + lambda4 * off


def _check_cov(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S must be square")
    if not np.allclose(S, S.T, atol=1e-10 * max(1.0, np.abs(S).max())):
        raise ValueError("S must be symmetric")
    S = 0.5 * (S + S.T)
    if np.linalg.eigvalsh(S)[0] < -1e-8:
        raise NonPSDInput("empirical covariance has a negative eigenvalue")
    return S


class GlassoPath:
    """Warm-started graphical lasso along a decreasing penalty sequence."""

    def __init__(self, S, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
        self.S = _check_cov(S)
        Q = self.S.shape[0]
        self.W = self.S.copy()
        self.B = np.zeros((Q, Q))
        self.tol = tol
        self.max_sweeps = max_sweeps

    def solve(self, lambda4) -> PrecisionEstimate:
        S = self.S
        Q = S.shape[0]
        if lambda4 < 0:
            raise ValueError("lambda4 must be nonnegative")
        if np.any(np.diag(S) <= 0):
            raise NonPSDInput("empirical covariance has a zero variance")
        if Q == 1:
            return PrecisionEstimate(np.array([[1.0 / S[0, 0]]]), float(lambda4))
        if lambda4 == 0.0:
            return _unpenalized(S)
        theta, gap, _, ok = glasso_bcd(S, float(lambda4), self.W, self.B, float(self.tol),
                                       int(self.max_sweeps), 1e-10, 100_000)
        if not ok:
            warnings.warn(f"graphical lasso stopped with duality gap {gap:.3g}", NoConvergence,
                          stacklevel=3)
        return PrecisionEstimate(theta, float(lambda4), duality_gap=float(gap), converged=bool(ok))


def _unpenalized(S):
    vals = np.linalg.eigvalsh(S)
    jitter = 0.0
    if vals[0] <= 1e-10 * max(vals[-1], 1e-300):
        jitter = JITTER
        warnings.warn("singular covariance with lambda4=0; adding a ridge of 1e-6",
                      SingularLimit, stacklevel=4)
    prec = np.linalg.inv(S + jitter * np.eye(S.shape[0]))
    return PrecisionEstimate(0.5 * (prec + prec.T), 0.0, jitter=jitter)


def graphical_lasso(S, lambda4, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS) -> PrecisionEstimate:
    """Sparse precision matrix maximizing ``log det P - tr(S P) - lambda4 sum_{i!=j} |P_ij|``.

    Column-wise block coordinate descent on the covariance, stopped when
    the primal-dual gap drops below ``tol``. The diagonal is not penalized.
    """
    return GlassoPath(S, tol=tol, max_sweeps=max_sweeps).solve(lambda4)
