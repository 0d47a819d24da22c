"""Compiled inner loops shared by the lasso, group lasso and graphical lasso."""

import numpy as np
from numba import njit


@njit(cache=True)
def _soft(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@njit(cache=True)
def lasso_kkt_violation(G, c, lam, beta):
    grad = c - G @ beta
    worst = 0.0
    for j in range(beta.shape[0]):
        if beta[j] > 0.0:
            v = abs(grad[j] - lam)
        elif beta[j] < 0.0:
            v = abs(grad[j] + lam)
        else:
            v = abs(grad[j]) - lam
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def cd_gram(G, c, lam, beta, tol, max_sweeps):
    """Cyclic coordinate descent on 0.5 b'Gb - c'b + lam |b|_1, in place.

    Returns (sweeps used, converged flag).
    """
    p = c.shape[0]
    grad = c - G @ beta
    for sweep in range(max_sweeps):
        for j in range(p):
            gjj = G[j, j]
            old = beta[j]
            if gjj <= 0.0:
                new = 0.0
            else:
                new = _soft(grad[j] + gjj * old, lam) / gjj
            if new != old:
                d = new - old
                beta[j] = new
                for k in range(p):
                    grad[k] -= G[k, j] * d
        if lasso_kkt_violation(G, c, lam, beta) <= tol:
            return sweep + 1, True
        grad = c - G @ beta
    return max_sweeps, False


@njit(cache=True)
def _shrink_root(w, h, lam):
    """Norm t > 0 solving sum w_i^2 / (h_i t + lam)^2 = 1.

    The left side is convex and decreasing in t, so Newton started at the
    lower bound (|w| - lam) / max(h) increases monotonically to the root.
    """
    wn = np.sqrt(np.sum(w * w))
    if wn <= lam:
        # roundoff put a threshold-level gradient on the wrong side
        return 0.0
    t = (wn - lam) / np.max(h)
    for _ in range(200):
        den = h * t + lam
        f = np.sum(w * w / (den * den)) - 1.0
        fp = -2.0 * np.sum(w * w * h / (den * den * den))
        step = f / fp
        t -= step
        if abs(step) <= 1e-15 * max(t, 1e-300):
            break
    return t


@njit(cache=True)
def group_kkt_violation(G, c, starts, sizes, lam, theta):
    """Largest block stationarity violation, scaled so the tolerance is relative to lam."""
    grad = c - G @ theta
    scale = lam if lam > 0.0 else 1.0
    worst = 0.0
    for g in range(starts.shape[0]):
        s = starts[g]
        e = s + sizes[g]
        tn = np.sqrt(np.sum(theta[s:e] ** 2))
        gn = np.sqrt(np.sum(grad[s:e] ** 2))
        if tn == 0.0:
            v = (gn - lam) / scale
        else:
            r = grad[s:e] - lam * theta[s:e] / tn
            v = np.sqrt(np.sum(r * r)) / scale
        if v > worst:
            worst = v
    return worst


@njit(cache=True)
def bcd_group(G, c, starts, sizes, eigvecs, eigvals, lam, theta, tol, max_sweeps):
    """Block coordinate descent on 0.5 t'Gt - c't + lam sum_g |t_g|_2, in place.

    ``eigvecs`` stacks the eigenvectors of each diagonal block of G row-wise
    (block g occupies rows starts[g]:starts[g]+sizes[g], first sizes[g]
    columns); ``eigvals`` holds the matching eigenvalues.
    """
    ng = starts.shape[0]
    grad = c - G @ theta
    for sweep in range(max_sweeps):
        for g in range(ng):
            s = starts[g]
            d = sizes[g]
            e = s + d
            old = theta[s:e].copy()
            gj = grad[s:e].copy()
            for a in range(d):
                for b in range(d):
                    gj[a] += G[s + a, s + b] * old[b]
            gnorm = np.sqrt(np.sum(gj * gj))
            if gnorm <= lam:
                new = np.zeros(d)
            else:
                V = eigvecs[s:e, :d].copy()
                h = np.maximum(eigvals[s:e], 1e-300)
                w = V.T @ gj
                if lam == 0.0:
                    new = V @ (w / h)
                else:
                    t = _shrink_root(w, h, lam)
                    if t > 0.0:
                        new = V @ (t * w / (h * t + lam))
                    else:
                        new = np.zeros(d)
            delta = new - old
            if np.any(delta != 0.0):
                theta[s:e] = new
                for k in range(G.shape[0]):
                    acc = 0.0
                    for a in range(d):
                        acc += G[k, s + a] * delta[a]
                    grad[k] -= acc
        if group_kkt_violation(G, c, starts, sizes, lam, theta) <= tol:
            return sweep + 1, True
        grad = c - G @ theta
    return max_sweeps, False


@njit(cache=True)
def _precision_from_columns(W, B):
    Q = W.shape[0]
    theta = np.zeros((Q, Q))
    for j in range(Q):
        idx = np.concatenate((np.arange(j), np.arange(j + 1, Q)))
        b = B[idx, j]
        w12 = W[idx, j]
        tjj = 1.0 / (W[j, j] - w12 @ b)
        theta[j, j] = tjj
        for a in range(idx.shape[0]):
            theta[idx[a], j] = -b[a] * tjj
    # keep an entry only when both column solves agree it is nonzero
    out = np.zeros((Q, Q))
    for i in range(Q):
        out[i, i] = theta[i, i]
        for j in range(i + 1, Q):
            if theta[i, j] != 0.0 and theta[j, i] != 0.0:
                v = 0.5 * (theta[i, j] + theta[j, i])
                out[i, j] = v
                out[j, i] = v
    return out


@njit(cache=True)
def glasso_gap(S, lam, theta, W):
    """Primal minus dual objective; +inf when either matrix is not PD.

    ``W`` is first clipped to the dual feasible set ``|W - S|_ij <= lam``
    (off-diagonal) with ``diag W = diag S``, so a stale warm start can
    never report a spuriously small gap.
    """
    Q = S.shape[0]
    Wf = S.copy()
    for i in range(Q):
        for j in range(Q):
            if i != j:
                d = W[i, j] - S[i, j]
                if d > lam:
                    d = lam
                elif d < -lam:
                    d = -lam
                Wf[i, j] = S[i, j] + d
    s1, ld_t = np.linalg.slogdet(theta)
    s2, ld_w = np.linalg.slogdet(Wf)
    if s1 <= 0 or s2 <= 0:
        return np.inf
    off = 0.0
    for i in range(Q):
        for j in range(Q):
            if i != j:
                off += abs(theta[i, j])
    primal = -ld_t + np.sum(S * theta) + lam * off
    dual = ld_w + Q
    return primal - dual


@njit(cache=True)
def glasso_bcd(S, lam, W, B, tol, max_sweeps, inner_tol, inner_max):
    """Column-wise graphical lasso with an off-diagonal penalty, in place on W, B.

    Returns (precision, duality gap, sweeps used, converged flag).
    """
    Q = S.shape[0]
    theta = _precision_from_columns(W, B)
    gap = glasso_gap(S, lam, theta, W)
    if gap < tol:
        return theta, gap, 0, True
    for sweep in range(max_sweeps):
        for j in range(Q):
            idx = np.concatenate((np.arange(j), np.arange(j + 1, Q)))
            W11 = W[idx, :][:, idx].copy()
            s12 = S[idx, j].copy()
            b = B[idx, j].copy()
            cd_gram(W11, s12, lam, b, inner_tol, inner_max)
            w12 = W11 @ b
            for a in range(idx.shape[0]):
                B[idx[a], j] = b[a]
                W[idx[a], j] = w12[a]
                W[j, idx[a]] = w12[a]
        theta = _precision_from_columns(W, B)
        gap = glasso_gap(S, lam, theta, W)
        if gap < tol:
            return theta, gap, sweep + 1, True
    return theta, gap, max_sweeps, False
