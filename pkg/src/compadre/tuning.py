"""Penalty paths and K-fold cross-validation with the one-standard-error rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PATH_LENGTH = 50
PATH_RATIO = 1e-3
DEFAULT_FOLDS = 5
GUARD_FACTOR = 0.75
GUARD_MIN_P = 100


@dataclass(frozen=True)
class LambdaPath:
    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("a lambda path needs at least one value")
        if np.any(np.diff(values) >= 0):
            raise ValueError("lambda path must be strictly decreasing")
        if self.kind not in ("linear", "group", "precision"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        object.__setattr__(self, "values", values)

    @property
    def lambda_max(self) -> float:
        return float(self.values[0])

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class CVRecord:
    """Cross-validated error along a path.

    ``errors`` is (n_folds, n_lambda); ``chosen`` indexes the sparsest value
    whose mean error is within one standard error of the minimum.
    """

    lambdas: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    chosen: int
    errors: np.ndarray | None = None

    @property
    def best(self) -> float:
        return float(self.lambdas[self.chosen])


def lambda_max_linear(X, y) -> float:
    """Smallest lasso penalty with an all-zero solution: ``max_j |X_j' y| / n``.

    Columns and response are centered first because the lasso intercept
    is unpenalized.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xc = X - X.mean(axis=0)
    if Xc.shape[1] == 0:
        return 0.0
    return float(np.max(np.abs(Xc.T @ (y - y.mean()))) / y.size)


def lambda_max_group(blocks, gammas, lambda3s, y) -> float:
    """Smallest group penalty with an all-zero smooth group lasso solution."""
    from .solvers import SmoothGroupProblem

    return SmoothGroupProblem(blocks, gammas, lambda3s, y).lambda_max()


def lambda_path(lam_max, kind, length=PATH_LENGTH, ratio=PATH_RATIO) -> LambdaPath:
    """Log-spaced path from ``lam_max`` down to ``ratio * lam_max``.

    A zero ``lam_max`` (nothing to select) collapses to a one-point path.
    """
    lam_max = float(lam_max)
    if lam_max <= 0.0 or not np.isfinite(lam_max):
        return LambdaPath(np.array([max(lam_max, 0.0)]), kind)
    return LambdaPath(np.geomspace(lam_max, lam_max * ratio, length), kind)


def guard_lambda2_range(path: LambdaPath, p: int) -> LambdaPath:
    """Keep the group path above ``0.75 * lambda_max`` for high-dimensional designs.

    Applies when ``p >= 100``; the floor itself is appended so the guarded
    path always reaches it.
    """
    if p < GUARD_MIN_P:
        return path
    floor = GUARD_FACTOR * path.lambda_max
    kept = path.values[path.values >= floor]
    if kept[-1] > floor:
        kept = np.append(kept, floor)
    return LambdaPath(kept, path.kind)


def kfold_indices(n: int, k: int = DEFAULT_FOLDS, seed: int = 0):
    """Held-out index sets: a seeded permutation cut into contiguous blocks."""
    if k < 2:
        raise ValueError("need at least two folds")
    if n < 2 * k:
        raise ValueError(f"need n >= 2K (n={n}, K={k})")
    perm = np.random.Generator(np.random.Philox(seed)).permutation(n)
    return [np.sort(block) for block in np.array_split(perm, k)]


def one_se_choice(mean, se) -> int:
    """Index of the first (largest-lambda) entry within one SE of the minimum."""
    mean = np.asarray(mean, dtype=float)
    best = int(np.argmin(mean))
    limit = mean[best] + se[best]
    return int(np.flatnonzero(mean <= limit)[0])


def cv_select(fit_fold, path, folds) -> CVRecord:
    """Cross-validate ``fit_fold`` along ``path`` and apply the 1-SE rule.

    Parameters
    ----------
    fit_fold : callable
        ``fit_fold(train_idx, test_idx, lambdas)`` returning the held-out
        error for each lambda.
    path : LambdaPath or array
        Decreasing penalty values.
    folds : list of index arrays
        Held-out sets, e.g. from :func:`kfold_indices`.
    """
    lambdas = np.asarray(getattr(path, "values", path), dtype=float)
    n = sum(len(f) for f in folds)
    everything = np.arange(n)
    errors = np.empty((len(folds), lambdas.size))
    for i, test in enumerate(folds):
        train = np.setdiff1d(everything, test, assume_unique=True)
        errors[i] = fit_fold(train, test, lambdas)
    mean = errors.mean(axis=0)
    if len(folds) > 1:
        se = errors.std(axis=0, ddof=1) / np.sqrt(len(folds))
    else:
        se = np.zeros_like(mean)
    return CVRecord(lambdas=lambdas, mean=mean, se=se, chosen=one_se_choice(mean, se),
                    errors=errors)
