"""Joint selection of null, linear and nonlinear effects across correlated responses.

Each iteration runs, for every response q against a frozen copy of the
other responses' fits:

1. lasso on the standardized covariates (linear selection), then an OLS
   refit of the selected linear effects;
2. the smooth group lasso on the nonlinear Demmler-Reinsch blocks
   (nonlinear selection), then a ridge/BLUP refit of everything selected;
3. a graphical lasso on the residual covariance.

Response q sees the others through its residualized target: subtracting
``E_{-q} alpha_q`` with ``alpha_q = -P[-q, q] / P[q, q]`` removes the part
of its error predictable from the other responses' errors. The marginal
mode skips step 3 and keeps the precision at the identity.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .errors import (
    DimensionMismatch,
    InputError,
    NonPDPrecision,
    NoConvergence,
    NumericalError,
    SolverFailure,
)
from .solvers import (
    GlassoPath,
    PrecisionEstimate,
    SmoothGroupProblem,
    alpha_from_precision,
    graphical_lasso,
    lasso,
    lasso_path,
    mixed_model_refit,
    ols_refit,
)
from .spline_basis import DECILES, DEFAULT_GCV_GRID, KnotSet, build_dr_basis, evaluate_basis, gcv_lambda3
from .tuning import (
    DEFAULT_FOLDS,
    cv_select,
    guard_lambda2_range,
    kfold_indices,
    lambda_max_linear,
    lambda_path,
)

MODES = ("compadre", "padre")

log = logging.getLogger(__name__)


class Effect(IntEnum):
    NULL = 0
    LINEAR = 1
    NONLINEAR = 2

    @property
    def code(self) -> str:
        return ("N", "L", "NL")[self]


@dataclass(frozen=True)
class BasisMap:
    """What prediction needs to rebuild one covariate's columns at new values."""

    center: float
    scale: float
    knots: KnotSet
    transform: np.ndarray
    gamma: np.ndarray

    @classmethod
    def from_dr(cls, dr):
        return cls(dr.center, dr.scale, dr.knots, dr.transform, dr.gamma_nl)

    def linear_at(self, x):
        return (np.asarray(x, dtype=float) - self.center) / self.scale

    def nonlinear_at(self, x):
        return evaluate_basis(self.linear_at(x), self.knots, extrapolate=True) @ self.transform


@dataclass(frozen=True)
class Design:
    """Standardized linear columns ``Z`` and nonlinear blocks ``U`` for all covariates."""

    Z: np.ndarray
    U: list
    gammas: list
    maps: list

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @classmethod
    def from_covariates(cls, X, probs=DECILES):
        X = np.asarray(X, dtype=float)
        bases = [build_dr_basis(X[:, j], probs) for j in range(X.shape[1])]
        Z = np.column_stack([b.linear_col for b in bases]) if bases else np.zeros((X.shape[0], 0))
        return cls(Z=Z, U=[b.nonlinear_cols for b in bases], gammas=[b.gamma_nl for b in bases],
                   maps=[BasisMap.from_dr(b) for b in bases])


@dataclass(frozen=True)
class ModelState:
    """Coefficients on the working scale.

    ``beta_nl[j]`` is a (d_j, Q) array holding every response's nonlinear
    block for covariate j.
    """

    beta_lin: np.ndarray
    beta_nl: list
    intercepts: np.ndarray
    precision: PrecisionEstimate
    lambda3: np.ndarray

    @classmethod
    def initial(cls, design: Design, intercepts, lambda3):
        Q = len(intercepts)
        return cls(beta_lin=np.zeros((design.p, Q)),
                   beta_nl=[np.zeros((g.size, Q)) for g in design.gammas],
                   intercepts=np.asarray(intercepts, dtype=float).copy(),
                   precision=PrecisionEstimate(np.eye(Q), 0.0),
                   lambda3=np.asarray(lambda3, dtype=float))

    @property
    def Q(self) -> int:
        return self.intercepts.size


@dataclass
class FitConfig:
    """Options for :func:`fit`.

    Penalties are ``"cv"`` or fixed values; ``lambda1``/``lambda2`` accept a
    scalar or one value per response.
    """

    lambda1: object = "cv"
    lambda2: object = "cv"
    lambda4: object = "cv"
    max_iters: int = 5
    tol: float = 1e-4
    mode: str = "compadre"
    folds: int = DEFAULT_FOLDS
    seed: int = 0
    knot_probs: np.ndarray = field(default_factory=lambda: DECILES.copy())
    gcv_grid: np.ndarray = field(default_factory=lambda: DEFAULT_GCV_GRID.copy())
    scale_responses: bool = False
    select_once: bool = False

    def __post_init__(self):
        self.mode = str(self.mode).lower()
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.folds) < 2:
            raise ValueError("folds must be >= 2")
        self.folds = int(self.folds)
        self.max_iters = int(self.max_iters)


@dataclass(frozen=True)
class FitReport:
    state: ModelState
    labels: np.ndarray
    fitted: np.ndarray
    mse_trace: np.ndarray
    objective_trace: np.ndarray
    tuning: list
    lambda4_trace: np.ndarray
    converged: bool
    maps: list
    y_scale: np.ndarray

    @property
    def n_iter(self) -> int:
        return self.mse_trace.size


# ---------------------------------------------------------------- state algebra

def linear_part(state: ModelState, Z) -> np.ndarray:
    return Z @ state.beta_lin


def nonlinear_part(state: ModelState, U) -> np.ndarray:
    out = np.zeros((U[0].shape[0] if U else 0, state.Q))
    for Uj, bj in zip(U, state.beta_nl):
        out += Uj @ bj
    return out


def fitted_values(state: ModelState, design: Design) -> np.ndarray:
    return state.intercepts + linear_part(state, design.Z) + nonlinear_part(state, design.U)


def _others(Q, q):
    return np.r_[0:q, q + 1:Q]


def _cross_term(q, state, Y, L, NL):
    """``(Y_{-q} - L_{-q} - NL_{-q}) alpha_q`` without intercepts."""
    Q = state.Q
    if Q == 1:
        return np.zeros(Y.shape[0])
    alpha, _ = alpha_from_precision(state.precision, q)
    o = _others(Q, q)
    return Y[:, o] @ alpha - L[:, o] @ alpha - NL[:, o] @ alpha


def residual_target_linear(q, state: ModelState, Y, design: Design) -> np.ndarray:
    """Target for linear selection of response q (nonlinear part and cross errors removed)."""
    L = linear_part(state, design.Z)
    NL = nonlinear_part(state, design.U)
    return Y[:, q] - NL[:, q] - _cross_term(q, state, Y, L, NL)


def residual_target_nonlinear(q, state: ModelState, Y, design: Design) -> np.ndarray:
    """Target for nonlinear selection of response q (linear part and cross errors removed)."""
    L = linear_part(state, design.Z)
    NL = nonlinear_part(state, design.U)
    return Y[:, q] - L[:, q] - _cross_term(q, state, Y, L, NL)


def residual_target_joint(q, state: ModelState, Y, design: Design) -> np.ndarray:
    """Target for the joint refit of response q (only cross errors removed)."""
    L = linear_part(state, design.Z)
    NL = nonlinear_part(state, design.U)
    return Y[:, q] - _cross_term(q, state, Y, L, NL)


def classify(state: ModelState) -> np.ndarray:
    """(p, Q) array of :class:`Effect` codes.

    A nonzero nonlinear block wins over the linear coefficient.
    """
    labels = np.where(state.beta_lin != 0.0, Effect.LINEAR, Effect.NULL).astype(np.int8)
    for j, b in enumerate(state.beta_nl):
        labels[j, np.any(b != 0.0, axis=0)] = Effect.NONLINEAR
    return labels


def objective(state: ModelState, Y, design: Design, lambda1=0.0, lambda2=0.0, lambda4=0.0) -> float:
    """Penalized negative log-likelihood of the joint model.

    ``tr(R'R P / n) - log det P`` plus the lasso, smooth group lasso and
    off-diagonal precision penalties, with ``R`` the residual matrix.
    """
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    Q = state.Q
    P = state.precision.precision
    sign, logdet = np.linalg.slogdet(P)
    if sign <= 0:
        raise NonPDPrecision("precision matrix is not positive definite")
    R = Y - fitted_values(state, design)
    value = float(np.sum((R.T @ R / n) * P)) - logdet
    lam1 = np.broadcast_to(np.asarray(lambda1, dtype=float), (Q,))
    lam2 = np.broadcast_to(np.asarray(lambda2, dtype=float), (Q,))
    value += float(lam1 @ np.abs(state.beta_lin).sum(axis=0))
    for j, (Uj, gam, b) in enumerate(zip(design.U, design.gammas, state.beta_nl)):
        gram = Uj.T @ Uj / n
        for q in range(Q):
            if lam2[q] != 0.0 and np.any(b[:, q] != 0.0):
                quad = b[:, q] @ gram @ b[:, q] + state.lambda3[j, q] * (b[:, q] * gam) @ b[:, q]
                value += lam2[q] * np.sqrt(max(float(quad), 0.0))
    value += float(lambda4) * float(np.abs(P).sum() - np.abs(np.diag(P)).sum())
    return float(value)


def prediction_mse(R, precision) -> float:
    """Mean squared error of each response predicted from the covariates and the other errors.

    Row i of response q is predicted by its fit plus ``E_{i,-q} alpha_q``;
    the leftover is ``(R P)_q / P_qq``. With the identity precision this is
    the plain residual mean square.
    """
    P = np.asarray(precision, dtype=float)
    return float(np.mean(((R @ P) / np.diag(P)) ** 2))


# ---------------------------------------------------------------- tuning helpers

def _fold_pairs(folds, n):
    everything = np.arange(n)
    return [(np.setdiff1d(everything, te, assume_unique=True), te) for te in folds]


def cv_lasso(Z, t, folds):
    pairs = _fold_pairs(folds, t.size)
    top = max([lambda_max_linear(Z, t)] + [lambda_max_linear(Z[tr], t[tr]) for tr, _ in pairs])
    path = lambda_path(top, "linear")

    def fold_error(train, test, lams):
        coefs, ints = lasso_path(Z[train], t[train], lams)
        pred = ints + Z[test] @ coefs.T
        return np.mean((t[test, None] - pred) ** 2, axis=0)

    return cv_select(fold_error, path, folds)


def _cv_group(U, gammas, lambda3s, t, folds, guard_p=None):
    pairs = _fold_pairs(folds, t.size)
    full = SmoothGroupProblem(U, gammas, lambda3s, t)
    probs = {int(te[0]): SmoothGroupProblem([Uj[tr] for Uj in U], gammas, lambda3s, t[tr])
             for tr, te in pairs}
    top = max([full.lambda_max()] + [pr.lambda_max() for pr in probs.values()])
    path = lambda_path(top, "group")
    if guard_p is not None:
        path = guard_lambda2_range(path, guard_p)

    def fold_error(train, test, lams):
        prob = probs[int(test[0])]
        thetas, ok = prob.path(lams)
        if not ok:
            warnings.warn("group lasso did not converge inside cross-validation", NoConvergence,
                          stacklevel=2)
        pred = prob.y_mean + thetas @ prob.transformed([Uj[test] for Uj in U]).T
        return np.mean((t[test] - pred) ** 2, axis=1)

    return cv_select(fold_error, path, folds), full


def _cv_precision(R, folds):
    n = R.shape[0]
    pairs = _fold_pairs(folds, n)
    cov = lambda rows: R[rows].T @ R[rows] / rows.size  # noqa: E731
    S = R.T @ R / n
    mats = [(cov(tr), cov(te)) for tr, te in pairs]
    off = lambda M: np.max(np.abs(M - np.diag(np.diag(M))))  # noqa: E731
    top = max([off(S)] + [off(a) for a, _ in mats])
    path = lambda_path(top, "precision")
    by_fold = {int(te[0]): m for (_, te), m in zip(pairs, mats)}

    def fold_error(train, test, lams):
        S_tr, S_te = by_fold[int(test[0])]
        gp = GlassoPath(S_tr)
        err = np.empty(lams.size)
        for i, lam in enumerate(lams):
            P = gp.solve(lam).precision
            err[i] = -np.linalg.slogdet(P)[1] + np.sum(S_te * P)
        return err

    return cv_select(fold_error, path, folds), S


def _per_response(value, Q, name):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return np.full(Q, float(arr))
    if arr.shape != (Q,):
        raise InputError(f"{name} must be a scalar or have one value per response")
    return arr.copy()


# ---------------------------------------------------------------- fitting

def _check_inputs(Y, X):
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or X.ndim != 2:
        raise InputError("Y and X must be matrices")
    if Y.shape[0] != X.shape[0]:
        raise DimensionMismatch(f"Y has {Y.shape[0]} rows but X has {X.shape[0]}")
    if Y.shape[1] < 1 or X.shape[1] < 1:
        raise InputError("need at least one response and one covariate")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(X))):
        raise InputError("missing or non-finite values")
    return Y, X


def _step(iteration, step, response):
    """Context manager turning numerical errors into :class:`SolverFailure`."""
    class _Ctx:
        def __enter__(self):
            return self

        def __exit__(self, kind, exc, tb):
            if exc is None or isinstance(exc, SolverFailure):
                return False
            if isinstance(exc, (NumericalError, np.linalg.LinAlgError, FloatingPointError)):
                raise SolverFailure(str(exc), iteration, step, response) from exc
            return False
    return _Ctx()


def fit(Y, X, config: FitConfig | None = None, design: Design | None = None) -> FitReport:
    """Fit the joint additive model to responses ``Y`` (n x Q) and covariates ``X`` (n x p).

    Stops when the mean squared residual changes by less than ``config.tol``
    between iterations, or after ``config.max_iters`` iterations.
    """
    config = FitConfig() if config is None else config
    Y, X = _check_inputs(Y, X)
    n, Q = Y.shape
    if design is None:
        design = Design.from_covariates(X, config.knot_probs)
    p = design.p
    y_scale = Y.std(axis=0, ddof=1) if config.scale_responses else np.ones(Q)
    if np.any(y_scale == 0):
        raise InputError("constant response cannot be scaled")
    Yw = Y / y_scale
    lambda3 = np.array([[gcv_lambda3(Yw[:, q], _dr_view(design, j), config.gcv_grid)
                         for q in range(Q)] for j in range(p)])
    state = ModelState.initial(design, Yw.mean(axis=0), lambda3)
    folds = kfold_indices(n, config.folds, config.seed)
    joint = config.mode == "compadre" and Q > 1
    cv1, cv2 = config.lambda1 == "cv", config.lambda2 == "cv"
    cv4 = isinstance(config.lambda4, str) and config.lambda4 == "cv"
    lam1 = None if cv1 else _per_response(config.lambda1, Q, "lambda1")
    lam2 = None if cv2 else _per_response(config.lambda2, Q, "lambda2")
    lam4 = None if cv4 else float(config.lambda4)
    tuning = [{"lambda1": [], "lambda2": []} for _ in range(Q)]
    lambda4_trace, mse_trace, obj_trace = [], [], []
    mse_prev = float(np.mean((Yw - fitted_values(state, design)) ** 2))
    converged = False

    for it in range(config.max_iters):
        reselect = it == 0 or not config.select_once
        # Step 1 and 1.5: linear selection and OLS refit
        lam1_it = np.empty(Q)
        beta_lin = np.zeros((p, Q))
        for q in range(Q):
            with _step(it + 1, "linear selection", q):
                t = residual_target_linear(q, state, Yw, design)
                if cv1 and reselect:
                    lam1_it[q] = cv_lasso(design.Z, t, folds).best
                else:
                    lam1_it[q] = lam1[q] if not cv1 else tuning[q]["lambda1"][0]
                sel = lasso(design.Z, t, lam1_it[q]).active_set
            with _step(it + 1, "linear refit", q):
                beta_lin[sel, q] = ols_refit(design.Z[:, sel], t - t.mean()).coefs
            tuning[q]["lambda1"].append(float(lam1_it[q]))
        state = replace(state, beta_lin=beta_lin)

        # Step 2: nonlinear selection
        lam2_it = np.empty(Q)
        beta_nl = [np.zeros_like(b) for b in state.beta_nl]
        for q in range(Q):
            with _step(it + 1, "nonlinear selection", q):
                t = residual_target_nonlinear(q, state, Yw, design)
                guard = p if it == 0 else None
                if cv2 and reselect:
                    rec, prob = _cv_group(design.U, design.gammas, lambda3[:, q], t, folds, guard)
                    lam2_it[q] = rec.best
                else:
                    prob = SmoothGroupProblem(design.U, design.gammas, lambda3[:, q], t)
                    lam2_it[q] = lam2[q] if not cv2 else tuning[q]["lambda2"][0]
                theta, _, ok = prob.solve(lam2_it[q])
                if not ok:
                    warnings.warn(f"group lasso did not converge (response {q})", NoConvergence,
                                  stacklevel=2)
                for j, b in enumerate(prob.to_blocks(theta)):
                    beta_nl[j][:, q] = b
            tuning[q]["lambda2"].append(float(lam2_it[q]))
        state = replace(state, beta_nl=beta_nl)

        # Step 2.5: joint refit of the selected effects
        labels = classify(state)
        beta_lin = np.zeros((p, Q))
        beta_nl = [np.zeros_like(b) for b in state.beta_nl]
        for q in range(Q):
            with _step(it + 1, "mixed model refit", q):
                t = residual_target_joint(q, state, Yw, design)
                lin = np.flatnonzero(state.beta_lin[:, q] != 0.0)
                nl = np.flatnonzero(labels[:, q] == Effect.NONLINEAR)
                mm = mixed_model_refit(design.Z[:, lin], [design.U[j] for j in nl],
                                       [design.gammas[j] for j in nl], lambda3[nl, q], t - t.mean())
                beta_lin[lin, q] = mm.linear_coefs
                for j, b in zip(nl, mm.nonlinear_coefs):
                    beta_nl[j][:, q] = b
        state = replace(state, beta_lin=beta_lin, beta_nl=beta_nl)

        # Step 3: precision of the residuals
        R = Yw - fitted_values(state, design)
        lam4_it = 0.0
        if joint:
            with _step(it + 1, "precision selection", None):
                if cv4 and reselect:
                    rec, S = _cv_precision(R, folds)
                    lam4_it = rec.best
                else:
                    S = R.T @ R / n
                    lam4_it = lam4 if not cv4 else lambda4_trace[0]
                state = replace(state, precision=graphical_lasso(S, lam4_it))
            lambda4_trace.append(float(lam4_it))

        mse = prediction_mse(R, state.precision.precision)
        if mse_trace and mse > mse_trace[-1]:
            log.info("prediction MSE rose from %.6g to %.6g at iteration %d",
                     mse_trace[-1], mse, it + 1)
        mse_trace.append(mse)
        obj_trace.append(objective(state, Yw, design, lam1_it, lam2_it, lam4_it))
        if abs(mse - mse_prev) < config.tol:
            converged = True
            break
        mse_prev = mse

    fitted = fitted_values(state, design) * y_scale
    return FitReport(state=state, labels=classify(state), fitted=fitted,
                     mse_trace=np.array(mse_trace), objective_trace=np.array(obj_trace),
                     tuning=tuning, lambda4_trace=np.array(lambda4_trace), converged=converged,
                     maps=list(design.maps), y_scale=y_scale)


def _dr_view(design, j):
    return _DRView(design.Z[:, j], design.U[j], design.gammas[j])


@dataclass(frozen=True)
class _DRView:
    linear_col: np.ndarray
    nonlinear_cols: np.ndarray
    gamma_nl: np.ndarray


def predict_parts(report: FitReport, X_new):
    """Intercept, linear and nonlinear contributions at ``X_new`` on the response scale."""
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[:, None]
    p = len(report.maps)
    if X_new.ndim != 2 or X_new.shape[1] != p:
        raise DimensionMismatch(f"expected {p} covariate columns, got {X_new.shape[-1]}")
    state = report.state
    m = X_new.shape[0]
    lin = np.zeros((m, state.Q))
    nl = np.zeros((m, state.Q))
    for j, bmap in enumerate(report.maps):
        lin += np.outer(bmap.linear_at(X_new[:, j]), state.beta_lin[j])
        if np.any(state.beta_nl[j] != 0.0):
            nl += bmap.nonlinear_at(X_new[:, j]) @ state.beta_nl[j]
    return state.intercepts * report.y_scale, lin * report.y_scale, nl * report.y_scale


def predict(report: FitReport, X_new) -> np.ndarray:
    """Predicted responses at new covariate rows."""
    b0, lin, nl = predict_parts(report, X_new)
    return b0 + lin + nl


def signal(report: FitReport, X_new) -> np.ndarray:
    """Estimated covariate effects (prediction minus intercept)."""
    _, lin, nl = predict_parts(report, X_new)
    return lin + nl
