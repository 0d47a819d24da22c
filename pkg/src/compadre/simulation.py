"""Synthetic multi-response additive data and selection/estimation scoring.

Random design: four of the first five responses are active, each with one
to five covariates carrying a randomly drawn shape. Shape design: only the
pairs (response 0, covariate 0) and (response 1, covariate 1) carry the
same chosen shape. Errors share a Toeplitz covariance across responses.

All randomness flows from a counter-based Philox generator; replicate r of
a campaign uses the r-th child of ``SeedSequence(seed)``.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .core import Design, Effect, FitConfig, cv_lasso, fit, signal
from .solvers import lasso, ols_refit
from .tuning import kfold_indices

FUNCTION_PROBS = np.array([0.125, 0.125, 0.125, 0.125, 0.5])
BUMP_SD = 0.1
METHODS = ("compadre", "padre", "lasso")


def toeplitz_cov(Q: int, rho: float) -> np.ndarray:
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1)")
    idx = np.arange(Q)
    return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)


def eval_function(fid: int, delta: float, x) -> np.ndarray:
    """Shapes 1-5: saturating exponential, square, cube, narrow bump, line."""
    x = np.asarray(x, dtype=float)
    if fid == 1:
        return delta * (1.0 - np.exp(-2.0 * x))
    if fid == 2:
        return delta * x**2
    if fid == 3:
        return delta * x**3
    if fid == 4:
        return delta * np.exp(-(x**2) / (2.0 * BUMP_SD**2)) / (np.sqrt(2.0 * np.pi) * BUMP_SD)
    if fid == 5:
        return delta * x
    raise ValueError(f"unknown function id {fid}")


@dataclass(frozen=True)
class SimSetting:
    n: int = 250
    p: int = 10
    Q: int = 10
    rho: float = 0.9
    delta: float = 0.25
    seed: int = 0
    shape: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.shape is None and (self.p < 5 or self.Q < 5):
            raise ValueError("the random design needs p >= 5 and Q >= 5")
        if self.shape is not None and (self.shape not in range(1, 6) or min(self.p, self.Q) < 2):
            raise ValueError("shape must be 1..5 with p, Q >= 2")


@dataclass(frozen=True)
class TrueModel:
    """``assignment[j, q]`` is the shape id of covariate j in response q, 0 for null."""

    assignment: np.ndarray
    active_responses: np.ndarray

    @property
    def nonnull(self) -> np.ndarray:
        return self.assignment != 0


@dataclass(frozen=True)
class SimDataset:
    X: np.ndarray
    Y: np.ndarray
    truth: TrueModel
    true_f: np.ndarray


def sample_true_model(p: int, Q: int, rng: np.random.Generator) -> TrueModel:
    if p < 5:
        raise ValueError("need p >= 5")
    assignment = np.zeros((p, Q), dtype=np.int64)
    active = np.sort(rng.choice(min(5, Q), size=4, replace=False))
    for q in active:
        count = int(rng.integers(1, 6))
        covs = rng.choice(p, size=count, replace=False)
        assignment[covs, q] = rng.choice(5, size=count, p=FUNCTION_PROBS) + 1
    return TrueModel(assignment, active)


def shape_true_model(p: int, Q: int, shape: int) -> TrueModel:
    assignment = np.zeros((p, Q), dtype=np.int64)
    assignment[0, 0] = assignment[1, 1] = shape
    return TrueModel(assignment, np.array([0, 1]))


def signal_matrix(truth: TrueModel, X, delta) -> np.ndarray:
    F = np.zeros((X.shape[0], truth.assignment.shape[1]))
    for j, q in zip(*np.nonzero(truth.assignment)):
        F[:, q] += eval_function(int(truth.assignment[j, q]), delta, X[:, j])
    return F


def simulate(setting: SimSetting, rng: np.random.Generator | None = None) -> SimDataset:
    """Draw one dataset; with ``rng`` omitted the setting's seed drives a Philox stream."""
    if rng is None:
        rng = np.random.Generator(np.random.Philox(setting.seed))
    if setting.shape is None:
        truth = sample_true_model(setting.p, setting.Q, rng)
    else:
        truth = shape_true_model(setting.p, setting.Q, setting.shape)
    X = rng.uniform(-1.0, 1.0, size=(setting.n, setting.p))
    F = signal_matrix(truth, X, setting.delta)
    chol = np.linalg.cholesky(toeplitz_cov(setting.Q, setting.rho))
    E = rng.standard_normal((setting.n, setting.Q)) @ chol.T
    return SimDataset(X=X, Y=F + E, truth=truth, true_f=F)


def score(labels, truth: TrueModel, fitted_f=None, true_f=None) -> dict:
    """TPR and FPR over (covariate, response) pairs, plus MAD of the fitted signal.

    The truth is centered before the MAD because fitted effects are.
    TPR (FPR) is None when there are no non-null (null) pairs.
    """
    selected = np.asarray(labels) != Effect.NULL
    nonnull = truth.nonnull
    if selected.shape != nonnull.shape:
        raise ValueError("labels and truth have different shapes")
    n_pos = int(nonnull.sum())
    n_neg = nonnull.size - n_pos
    out = {
        "tpr": float((selected & nonnull).sum()) / n_pos if n_pos else None,
        "fpr": float((selected & ~nonnull).sum()) / n_neg if n_neg else None,
        "mad": None,
    }
    if fitted_f is not None and true_f is not None:
        centered = true_f - true_f.mean(axis=0)
        out["mad"] = float(np.mean(np.abs(np.asarray(fitted_f) - centered)))
    return out


def pair_hits(labels, truth: TrueModel, shape: int) -> tuple[int, int]:
    """(selected, total) among the non-null pairs carrying ``shape``."""
    mask = truth.assignment == shape
    return int((np.asarray(labels)[mask] != Effect.NULL).sum()), int(mask.sum())


def lasso_baseline(Y, X, folds=5, seed=0):
    """Per-response lasso (CV, 1-SE rule) with an OLS refit on the selected covariates.

    Returns
    -------
    labels : (p, Q) Effect codes (Linear or Null)
    fitted_f : (n, Q) estimated covariate effects
    """
    Y = np.asarray(Y, dtype=float)
    Z = Design.from_covariates(X).Z
    idx = kfold_indices(Y.shape[0], folds, seed)
    p, Q = Z.shape[1], Y.shape[1]
    beta = np.zeros((p, Q))
    for q in range(Q):
        y = Y[:, q]
        sel = lasso(Z, y, cv_lasso(Z, y, idx).best).active_set
        beta[sel, q] = ols_refit(Z[:, sel], y - y.mean()).coefs
    labels = np.where(beta != 0.0, Effect.LINEAR, Effect.NULL).astype(np.int8)
    return labels, Z @ beta


def replicate_seeds(seed: int, reps: int):
    return np.random.SeedSequence(seed).spawn(reps)


def run_replicate(setting: SimSetting, child, methods=("compadre", "padre"), fit_options=None):
    """Simulate one dataset from ``child`` and score each method on it."""
    rng = np.random.Generator(np.random.Philox(child))
    data = simulate(setting, rng)
    cv_seed = int(child.generate_state(1)[0])
    rows = []
    for method in methods:
        if method == "lasso":
            labels, fhat = lasso_baseline(data.Y, data.X, seed=cv_seed)
        elif method in ("compadre", "padre"):
            config = FitConfig(mode=method, seed=cv_seed, **(fit_options or {}))
            report = fit(data.Y, data.X, config)
            labels, fhat = report.labels, signal(report, data.X)
        else:
            raise ValueError(f"unknown method {method!r}")
        metrics = score(labels, data.truth, fhat, data.true_f)
        row = {**asdict(setting), "replicate": int(child.spawn_key[-1]), "method": method, **metrics}
        if setting.shape is not None:
            row["hits"], row["pairs"] = pair_hits(labels, data.truth, setting.shape)
        rows.append(row)
    return rows


def _run_one(args):
    return run_replicate(*args)


def run_campaign(setting: SimSetting, reps: int, methods=("compadre", "padre"), threads: int = 1,
                 fit_options=None) -> list:
    """Per-replicate metric rows, ordered by replicate then method."""
    jobs = [(setting, child, tuple(methods), fit_options)
            for child in replicate_seeds(setting.seed, reps)]
    if threads > 1 and reps > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(job) for job in jobs]
    return [row for rows in results for row in rows]


def _quantiles(values):
    vals = np.array([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return None, None, None
    q1, med, q3 = np.percentile(vals, [25, 50, 75])
    return float(med), float(q1), float(q3)


def mad_ratios(rows, numerator="compadre", denominator="padre") -> np.ndarray:
    """Per-replicate MAD ratio between two methods run on the same datasets."""
    mads = {}
    for r in rows:
        mads.setdefault(r["replicate"], {})[r["method"]] = r["mad"]
    return np.array([m[numerator] / m[denominator] for _, m in sorted(mads.items())
                     if numerator in m and denominator in m])


def aggregate(rows) -> list:
    """Median and quartiles of TPR, FPR and MAD per method, in first-seen method order."""
    methods = list(dict.fromkeys(r["method"] for r in rows))
    out = []
    for method in methods:
        sub = [r for r in rows if r["method"] == method]
        agg = {k: sub[0][k] for k in ("n", "p", "Q", "rho", "delta", "seed", "shape")}
        agg.update(method=method, reps=len(sub))
        for metric in ("tpr", "fpr", "mad"):
            med, q1, q3 = _quantiles(r[metric] for r in sub)
            agg[f"{metric}_median"], agg[f"{metric}_q1"], agg[f"{metric}_q3"] = med, q1, q3
        if "hits" in sub[0]:
            agg["pooled_tpr"] = sum(r["hits"] for r in sub) / sum(r["pairs"] for r in sub)
        out.append(agg)
    return out
