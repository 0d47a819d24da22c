"""O'Sullivan penalized splines and their Demmler-Reinsch form.

Every covariate is standardized, given cubic B-splines with knots at its
deciles, and rotated so that the smoothness penalty becomes diagonal. The
two unpenalized directions (constant and linear) are dropped from the
nonlinear block; the linear effect is carried by the standardized covariate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import (
    ConstantCovariate,
    OutOfRange,
    RankDeficient,
    TooFewDistinctValues,
)

DEGREE = 3
DEFAULT_GCV_GRID = np.logspace(-4, 6, 30)
DECILES = np.linspace(0.1, 0.9, 9)


@dataclass(frozen=True)
class KnotSet:
    interior_knots: np.ndarray
    boundary_knots: tuple[float, float]

    def __post_init__(self):
        interior = np.asarray(self.interior_knots, dtype=float)
        lo, hi = (float(b) for b in self.boundary_knots)
        if not (np.all(np.isfinite(interior)) and np.isfinite(lo) and np.isfinite(hi)):
            raise ValueError("knots must be finite")
        if not lo < hi:
            raise ValueError("boundary knots must be increasing")
        if interior.size and (np.any(np.diff(interior) <= 0)
                              or interior[0] <= lo or interior[-1] >= hi):
            raise ValueError("interior knots must be strictly increasing and inside the boundary")
        object.__setattr__(self, "interior_knots", interior)
        object.__setattr__(self, "boundary_knots", (lo, hi))

    @property
    def n_basis(self) -> int:
        return self.interior_knots.size + DEGREE + 1

    def full_knot_vector(self) -> np.ndarray:
        lo, hi = self.boundary_knots
        return np.concatenate([np.repeat(lo, DEGREE + 1), self.interior_knots,
                               np.repeat(hi, DEGREE + 1)])


@dataclass(frozen=True)
class RawSplineBasis:
    design: np.ndarray
    penalty: np.ndarray
    knots: KnotSet
    points: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class DRBasis:
    """Demmler-Reinsch design for one covariate.

    ``transform`` maps raw B-spline evaluations to the nonlinear columns, so
    the basis can be re-evaluated at new covariate values; ``gamma_nl`` is
    stored in increasing order (smoothest direction first).
    """

    linear_col: np.ndarray
    nonlinear_cols: np.ndarray
    gamma_nl: np.ndarray
    center: float
    scale: float
    knots: KnotSet
    transform: np.ndarray = field(repr=False)

    @property
    def n_nonlinear(self) -> int:
        return self.gamma_nl.size

    def linear_at(self, x: np.ndarray) -> np.ndarray:
        """Standardized covariate values for raw ``x``."""
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def nonlinear_at(self, x: np.ndarray) -> np.ndarray:
        """Nonlinear basis at raw ``x``; linear extrapolation past the boundary."""
        z = self.linear_at(x)
        return evaluate_basis(z, self.knots, extrapolate=True) @ self.transform


def standardize(x):
    """Center by the mean and scale by the sample standard deviation.

    Returns
    -------
    z, center, scale
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("standardize needs a vector of length >= 2")
    center = float(np.mean(x))
    scale = float(np.std(x, ddof=1))
    if scale == 0.0 or scale <= 1e-14 * max(np.max(np.abs(x)), 1.0):
        raise ConstantCovariate("covariate has zero standard deviation")
    z = (x - center) / scale
    # second pass removes the rounding left by the first
    z -= z.mean()
    return z, center, scale


def decile_knots(z, probs=DECILES) -> KnotSet:
    """Interior knots at empirical quantiles of ``z``, boundary at its range.

    Quantiles use the inverted empirical CDF, so every knot is an observed
    value and tied data collapse onto fewer knots.
    """
    z = np.asarray(z, dtype=float)
    lo, hi = float(np.min(z)), float(np.max(z))
    ordered = np.sort(z)
    # rounding keeps k/10 * n from landing a hair above an integer
    ranks = np.ceil(np.round(np.asarray(probs, dtype=float) * z.size, 9)).astype(int)
    interior = np.unique(ordered[np.clip(ranks, 1, z.size) - 1])
    interior = interior[(interior > lo) & (interior < hi)]
    if interior.size < 1:
        raise TooFewDistinctValues("deduplicated quantiles leave no interior knot")
    return KnotSet(interior, (lo, hi))


def _basis_spline(knots: KnotSet) -> BSpline:
    k = knots.n_basis
    return BSpline(knots.full_knot_vector(), np.eye(k), DEGREE, extrapolate=False)


def evaluate_basis(z, knots: KnotSet, extrapolate=False) -> np.ndarray:
    """Cubic B-spline design matrix at ``z``.

    With ``extrapolate=True`` points outside the boundary knots get the
    first-order Taylor expansion of each basis function at the nearest
    boundary, so any fitted curve continues as a straight line.
    """
    z = np.asarray(z, dtype=float)
    lo, hi = knots.boundary_knots
    below, above = z < lo, z > hi
    if (below.any() or above.any()) and not extrapolate:
        raise OutOfRange("covariate values outside the boundary knots")
    spl = _basis_spline(knots)
    inside = np.clip(z, lo, hi)
    design = spl(inside)
    if below.any() or above.any():
        d1 = spl.derivative(1)
        for mask, edge in ((below, lo), (above, hi)):
            if mask.any():
                design[mask] = spl(np.array([edge]))[0] + np.outer(z[mask] - edge, d1(np.array([edge]))[0])
    return design


def second_derivative_penalty(knots: KnotSet) -> np.ndarray:
    """Exact Gram matrix of basis second derivatives.

    Second derivatives of cubics are linear on each knot interval, so the
    two-point Gauss-Legendre rule integrates their products exactly.
    """
    spl2 = _basis_spline(knots).derivative(2)
    breaks = np.concatenate([[knots.boundary_knots[0]], knots.interior_knots,
                             [knots.boundary_knots[1]]])
    nodes, weights = np.polynomial.legendre.leggauss(2)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    wts = (half[:, None] * weights[None, :]).ravel()
    d2 = spl2(pts)
    omega = d2.T @ (wts[:, None] * d2)
    return 0.5 * (omega + omega.T)


def build_osullivan(z, knots: KnotSet) -> RawSplineBasis:
    design = evaluate_basis(z, knots, extrapolate=False)
    return RawSplineBasis(design=design, penalty=second_derivative_penalty(knots), knots=knots,
                          points=np.asarray(z, dtype=float))


def demmler_reinsch(raw: RawSplineBasis, center=0.0, scale=1.0) -> DRBasis:
    """Rotate a penalized spline basis to Demmler-Reinsch form.

    With ``Phi = U D V^T`` and ``D^-1 V^T Omega V D^-1 = W Gamma W^T`` the
    rotated basis ``U W`` diagonalizes the penalty. The two null directions
    of ``Gamma`` span the constant and linear functions and are dropped;
    the basis abscissae themselves become the linear column.
    """
    phi, omega = raw.design, raw.penalty
    n, k = phi.shape
    if n <= k:
        raise RankDeficient(f"need more rows than basis functions (n={n}, k={k})")
    _, d, vt = np.linalg.svd(phi, full_matrices=False)
    if d[-1] < 1e-10 * d[0]:
        raise RankDeficient("spline design has a vanishing singular value")
    vd = vt.T / d
    omega_t = vd.T @ omega @ vd
    gamma, w = np.linalg.eigh(0.5 * (omega_t + omega_t.T))
    null = gamma <= 1e-8 * gamma[-1]
    if null.sum() != 2:
        raise RankDeficient(f"penalty null space has dimension {null.sum()}, expected 2")
    transform = vd @ w[:, 2:]
    nonlinear = phi @ transform
    return DRBasis(
        linear_col=raw.points,
        nonlinear_cols=nonlinear,
        gamma_nl=gamma[2:].copy(),
        center=float(center),
        scale=float(scale),
        knots=raw.knots,
        transform=transform,
    )


def build_dr_basis(x, probs=DECILES) -> DRBasis:
    """Standardize ``x``, place decile knots and return its DR basis."""
    z, center, scale = standardize(x)
    knots = decile_knots(z, probs)
    return demmler_reinsch(build_osullivan(z, knots), center=center, scale=scale)


def dr_smooth(dr: DRBasis, y, lam: float) -> np.ndarray:
    """Penalized spline fit of ``y`` on one covariate at smoothing ``lam``.

    The unpenalized part is the least-squares projection on the constant and
    the standardized covariate; nonlinear coordinates shrink by
    ``1 / (1 + lam * gamma)``.
    """
    y = np.asarray(y, dtype=float)
    z = dr.linear_col
    fit = np.full_like(y, y.mean())
    zc = z - z.mean()
    fit += zc * (zc @ y) / (zc @ zc)
    coef = dr.nonlinear_cols.T @ y
    fit += dr.nonlinear_cols @ (coef / (1.0 + lam * dr.gamma_nl))
    return fit


def gcv_lambda3(y, dr: DRBasis, grid=DEFAULT_GCV_GRID) -> float:
    """Smoothing parameter minimizing generalized cross-validation.

    ``GCV = n * RSS / (n - tr S)^2`` over ``grid``; exact ties go to the
    larger value.
    """
    y = np.asarray(y, dtype=float)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise ValueError("empty GCV grid")
    n = y.size
    z = dr.linear_col
    zc = z - z.mean()
    yc = y - y.mean()
    base = yc - zc * (zc @ yc) / (zc @ zc)
    coef = dr.nonlinear_cols.T @ base
    # residual energy outside the nonlinear span does not depend on lambda
    outside = base @ base - coef @ coef
    shrink = 1.0 / (1.0 + np.outer(grid, dr.gamma_nl))
    rss = outside + ((1.0 - shrink) ** 2 * coef**2).sum(axis=1)
    trace = 2.0 + shrink.sum(axis=1)
    gcv = n * rss / (n - trace) ** 2
    best = np.flatnonzero(gcv <= gcv.min() * (1 + 1e-12))
    return float(grid[best[np.argmax(grid[best])]])
