import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import NoConvergence
from ._kernels import cd_gram

DEFAULT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class LassoFit:
    coefs: np.ndarray
    intercept: float
    lambda1: float
    active_set: np.ndarray
    converged: bool = True
    sweeps: int = 0


def _gram(X, y):
    n = X.shape[0]
    xm = X.mean(axis=0)
    ym = float(np.mean(y))
    Xc = X - xm
    G = Xc.T @ Xc / n
    c = Xc.T @ (y - ym) / n
    return G, c, xm, ym


def lasso_objective(X, y, coefs, intercept, lambda1):
    r = y - intercept - X @ coefs
    return 0.5 * float(r @ r) / X.shape[0] + lambda1 * float(np.abs(coefs).sum())


def lasso(X, y, lambda1, init=None, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS) -> LassoFit:
    """Lasso with unpenalized intercept by cyclic coordinate descent.

    Minimizes ``(1/2n)|y - b0 - X b|^2 + lambda1 |b|_1`` until every
    coordinate meets the KKT conditions within ``tol``. Hitting
    ``max_sweeps`` returns the last iterate with ``converged=False`` and a
    :class:`NoConvergence` warning.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if lambda1 < 0:
        raise ValueError("lambda1 must be nonnegative")
    G, c, xm, ym = _gram(X, y)
    beta = np.zeros(X.shape[1]) if init is None else np.array(init, dtype=float)
    sweeps, ok = cd_gram(G, c, float(lambda1), beta, float(tol), int(max_sweeps))
    if not ok:
        warnings.warn(f"lasso did not converge in {max_sweeps} sweeps", NoConvergence, stacklevel=2)
    return LassoFit(coefs=beta, intercept=ym - float(xm @ beta), lambda1=float(lambda1),
                    active_set=np.flatnonzero(beta), converged=bool(ok), sweeps=int(sweeps))


def lasso_path(X, y, lambdas, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
    """Warm-started solutions along decreasing ``lambdas``.

    Returns
    -------
    coefs : (len(lambdas), p) array
    intercepts : (len(lambdas),) array
    """
    X = np.asarray(X, dtype=float)
    G, c, xm, ym = _gram(X, np.asarray(y, dtype=float))
    beta = np.zeros(X.shape[1])
    coefs = np.empty((len(lambdas), X.shape[1]))
    for i, lam in enumerate(lambdas):
        _, ok = cd_gram(G, c, float(lam), beta, float(tol), int(max_sweeps))
        if not ok:
            warnings.warn(f"lasso path did not converge at lambda={lam:g}", NoConvergence, stacklevel=2)
        coefs[i] = beta
    return coefs, ym - coefs @ xm
