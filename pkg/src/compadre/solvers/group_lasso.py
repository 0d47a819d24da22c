"""Group lasso with the sparsity-smoothness penalty.

Each covariate contributes a block ``U_j`` of nonlinear basis columns with
penalty ``lambda2 * sqrt(b' M_j b)``, ``M_j = U_j'U_j / n + lambda3_j Gamma_j``.
Writing ``M_j = R_j' R_j`` and ``theta_j = R_j b_j`` turns this into a plain
group lasso, solved by block coordinate descent with an exact scalar root
for each block update.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ..errors import NoConvergence
from ._kernels import bcd_group

DEFAULT_TOL = 1e-6
DEFAULT_MAX_SWEEPS = 5_000


@dataclass(frozen=True)
class GroupLassoFit:
    blocks: list
    lambda2: float
    active_groups: np.ndarray
    intercept: float = 0.0
    converged: bool = True
    sweeps: int = 0


def _factor(M, kind):
    if kind == "cholesky":
        return sla.cholesky(M, lower=False)
    if kind == "sqrt":
        vals, vecs = np.linalg.eigh(M)
        return (vecs * np.sqrt(vals)) @ vecs.T
    raise ValueError(f"unknown factor {kind!r}")


class SmoothGroupProblem:
    """Reparameterized group lasso data for one response.

    Built once per design/target pair so a whole lambda2 path can reuse
    the Gram matrix and the per-block eigendecompositions.
    """

    def __init__(self, blocks, gammas, lambda3s, y, factor="cholesky"):
        y = np.asarray(y, dtype=float)
        n = y.size
        self.n = n
        self.factor = factor
        self.sizes = np.array([b.shape[1] for b in blocks], dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(self.sizes)[:-1]]).astype(np.int64)
        self.means = [b.mean(axis=0) for b in blocks]
        self.y_mean = float(y.mean())
        yc = y - self.y_mean
        self.R = []
        cols = []
        for U, gam, lam3, mu in zip(blocks, gammas, lambda3s, self.means):
            Uc = U - mu
            M = Uc.T @ Uc / n + lam3 * np.diag(gam)
            R = _factor(0.5 * (M + M.T), factor)
            self.R.append(R)
            # A_j = U_j R_j^{-1}
            cols.append(sla.solve(R.T, Uc.T).T)
        A = np.hstack(cols) if cols else np.zeros((n, 0))
        self.G = A.T @ A / n
        self.c = A.T @ yc / n
        P = self.G.shape[0]
        self.eigvecs = np.zeros((P, int(self.sizes.max()) if P else 0))
        self.eigvals = np.zeros(P)
        for s, d in zip(self.starts, self.sizes):
            vals, vecs = np.linalg.eigh(self.G[s:s + d, s:s + d])
            self.eigvals[s:s + d] = vals
            self.eigvecs[s:s + d, :d] = vecs

    def lambda_max(self) -> float:
        if self.c.size == 0:
            return 0.0
        return max(float(np.linalg.norm(self.c[s:s + d])) for s, d in zip(self.starts, self.sizes))

    def solve(self, lambda2, theta=None, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
        theta = np.zeros(self.c.size) if theta is None else theta
        sweeps, ok = bcd_group(self.G, self.c, self.starts, self.sizes, self.eigvecs,
                               self.eigvals, float(lambda2), theta, float(tol), int(max_sweeps))
        return theta, int(sweeps), bool(ok)

    def transformed(self, blocks_new):
        """New rows mapped into theta space, centered by the training means.

        Predictions at those rows are ``y_mean + transformed(U_new) @ theta``.
        """
        cols = [sla.solve_triangular(R, (U - mu).T, trans="T", lower=False).T
                if self.factor == "cholesky" else np.linalg.solve(R.T, (U - mu).T).T
                for U, R, mu in zip(blocks_new, self.R, self.means)]
        return np.hstack(cols) if cols else np.zeros((len(blocks_new[0]) if blocks_new else 0, 0))

    def path(self, lambdas, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
        """Warm-started solutions, one row of theta per lambda, plus a convergence flag."""
        theta = np.zeros(self.c.size)
        out = np.empty((len(lambdas), self.c.size))
        all_ok = True
        for i, lam in enumerate(lambdas):
            theta, _, ok = self.solve(lam, theta, tol, max_sweeps)
            out[i] = theta
            all_ok &= ok
        return out, all_ok

    def to_blocks(self, theta):
        if self.factor == "cholesky":
            back = lambda R, t: sla.solve_triangular(R, t, lower=False)  # noqa: E731
        else:
            back = np.linalg.solve
        return [back(R, theta[s:s + d]) for R, s, d in zip(self.R, self.starts, self.sizes)]

    def intercept(self, blocks):
        return self.y_mean - sum(float(mu @ b) for mu, b in zip(self.means, blocks))


def group_lasso_smooth(blocks, gammas, lambda3s, y, lambda2, factor="cholesky",
                       tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS) -> GroupLassoFit:
    """Fit the smoothness-augmented group lasso for one response.

    Minimizes ``(1/2n)|y - b0 - sum_j U_j b_j|^2 + lambda2 sum_j sqrt(b_j' M_j b_j)``.
    ``factor`` selects the square root of ``M_j`` ("cholesky" or the
    symmetric "sqrt"); the solution does not depend on it.
    """
    if lambda2 < 0:
        raise ValueError("lambda2 must be nonnegative")
    prob = SmoothGroupProblem(blocks, gammas, lambda3s, y, factor=factor)
    theta, sweeps, ok = prob.solve(lambda2, tol=tol, max_sweeps=max_sweeps)
    if not ok:
        warnings.warn(f"group lasso did not converge in {max_sweeps} sweeps", NoConvergence,
                      stacklevel=2)
    coefs = prob.to_blocks(theta)
    active = np.array([g for g, b in enumerate(coefs) if np.any(b != 0.0)], dtype=int)
    return GroupLassoFit(blocks=coefs, lambda2=float(lambda2), active_groups=active,
                         intercept=prob.intercept(coefs), converged=ok, sweeps=sweeps)


def group_objective(blocks, gammas, lambda3s, y, coefs, intercept, lambda2):
    n = len(y)
    r = np.asarray(y, dtype=float) - intercept
    pen = 0.0
    for U, gam, lam3, b in zip(blocks, gammas, lambda3s, coefs):
        r = r - U @ b
        Uc = U - U.mean(axis=0)
        pen += np.sqrt(max(float(b @ (Uc.T @ Uc / n) @ b + lam3 * b @ (gam * b)), 0.0))
    return 0.5 * float(r @ r) / n + lambda2 * pen
