"""Post-selection refits and the regression view of the precision matrix.

The refits take already-centered inputs and fit no intercept.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from ..errors import SingularDesign

COLLINEAR_TOL = 1e-10


@dataclass(frozen=True)
class OLSFit:
    coefs: np.ndarray
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


@dataclass(frozen=True)
class MixedModelFit:
    linear_coefs: np.ndarray
    nonlinear_coefs: list
    noise_var: float
    edf: float = 0.0
    dropped: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def _independent_columns(X):
    """Indices kept and dropped by pivoted QR with a relative diagonal cutoff."""
    s = X.shape[1]
    if s == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    _, R, piv = sla.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > COLLINEAR_TOL * diag[0])) if diag[0] > 0 else 0
    return np.sort(piv[:rank]), np.sort(piv[rank:])


def ols_refit(X_sel, y) -> OLSFit:
    X_sel = np.asarray(X_sel, dtype=float).reshape(len(y), -1)
    keep, dropped = _independent_columns(X_sel)
    coefs = np.zeros(X_sel.shape[1])
    if dropped.size:
        warnings.warn(f"dropped collinear columns {dropped.tolist()}", SingularDesign, stacklevel=2)
    if keep.size:
        coefs[keep] = np.linalg.lstsq(X_sel[:, keep], y, rcond=None)[0]
    return OLSFit(coefs=coefs, dropped=dropped)


def mixed_model_refit(X_sel, U_sel, gammas, lambda3s, y) -> MixedModelFit:
    """Best linear unbiased prediction with variance ratios held at ``lambda3``.

    Minimizes ``|y - X a - sum_j U_j b_j|^2 + sum_j lambda3_j b_j' Gamma_j b_j``
    (fixed linear effects, ridge-penalized random nonlinear effects).
    ``noise_var`` is ``RSS / (n - edf)`` with ``edf`` the trace of the hat matrix.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    X_sel = np.asarray(X_sel, dtype=float).reshape(n, -1)
    keep, dropped = _independent_columns(X_sel)
    if dropped.size:
        warnings.warn(f"dropped collinear columns {dropped.tolist()}", SingularDesign, stacklevel=2)
    Xk = X_sel[:, keep]
    sizes = [U.shape[1] for U in U_sel]
    D = np.hstack([Xk] + list(U_sel)) if (keep.size or U_sel) else np.zeros((n, 0))
    pen = np.concatenate([np.zeros(keep.size)]
                         + [lam * np.asarray(g, dtype=float) for g, lam in zip(gammas, lambda3s)])
    lin = np.zeros(X_sel.shape[1])
    blocks = []
    if D.shape[1] == 0:
        rss = float(y @ y)
        return MixedModelFit(lin, [], rss / max(n, 1), 0.0, dropped)
    if not U_sel:
        # pure fixed effects: same computation as ols_refit
        theta = np.linalg.lstsq(D, y, rcond=None)[0]
        edf = float(keep.size)
    else:
        cho = sla.cho_factor(D.T @ D + np.diag(pen))
        theta = sla.cho_solve(cho, D.T @ y)
        edf = float(np.trace(sla.cho_solve(cho, D.T @ D)))
    lin[keep] = theta[:keep.size]
    pos = keep.size
    for d in sizes:
        blocks.append(theta[pos:pos + d])
        pos += d
    r = y - D @ theta
    return MixedModelFit(lin, blocks, float(r @ r) / max(n - edf, 1.0), edf, dropped)


def alpha_from_precision(precision, q):
    """Coefficients of error ``q`` regressed on the other errors, and ``P[q, q]``.

    Returns ``(-P[others, q] / P[q, q], P[q, q])``.
    """
    P = np.asarray(getattr(precision, "precision", precision), dtype=float)
    sqq = float(P[q, q])
    others = np.r_[0:q, q + 1:P.shape[0]]
    return -P[others, q] / sqq, sqq
