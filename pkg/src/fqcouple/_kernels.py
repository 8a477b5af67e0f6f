"""Hot loops in two flavours: numba-compiled scalar loops and batched numpy.

The public entry points dispatch on ``_accel.USE_NUMBA``. Both flavours run the
same algorithm so their outputs agree to rounding.
"""

from __future__ import annotations

import math

import numpy as np

from . import _accel
from ._accel import njit

# ---------------------------------------------------------------------------
# inner problem: u* = argmin_u log W(e^u) - e*u, for W with log-coefficients lc


@njit(cache=True)
def _inner_one(lc, e, u0):
    D = lc.shape[0]
    lo, hi = -300.0, 300.0
    u = u0
    logw = 0.0
    for _ in range(200):
        mx = -np.inf
        for j in range(D):
            v = lc[j] + j * u
            if v > mx:
                mx = v
        s = 0.0
        s1 = 0.0
        s2 = 0.0
        for j in range(D):
            t = math.exp(lc[j] + j * u - mx)
            s += t
            s1 += j * t
            s2 += j * j * t
        mean = s1 / s
        var = s2 / s - mean * mean
        logw = mx + math.log(s)
        f = mean - e
        if f < 0:
            lo = u
        else:
            hi = u
        if var > 1e-300:
            un = u - f / var
        else:
            un = 0.5 * (lo + hi)
        if not (lo < un < hi):
            un = 0.5 * (lo + hi)
        if abs(un - u) < 1e-13 or hi - lo < 1e-13:
            u = un
            break
        u = un
    mx = -np.inf
    for j in range(D):
        v = lc[j] + j * u
        if v > mx:
            mx = v
    s = 0.0
    for j in range(D):
        s += math.exp(lc[j] + j * u - mx)
    logw = mx + math.log(s)
    return logw - e * u, u


def _inner_numpy(lc, e, u0):
    j = np.arange(lc.shape[0])
    lo = np.full(e.shape, -300.0)
    hi = np.full(e.shape, 300.0)
    u = u0.copy()
    done = np.zeros(e.shape, dtype=bool)
    for _ in range(200):
        ex = lc + j * u[..., None]
        mx = ex.max(-1, keepdims=True)
        t = np.exp(ex - mx)
        s = t.sum(-1)
        mean = (t * j).sum(-1) / s
        var = (t * j * j).sum(-1) / s - mean * mean
        f = mean - e
        lo = np.where(~done & (f < 0), u, lo)
        hi = np.where(~done & (f >= 0), u, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            un = np.where(var > 1e-300, u - f / var, 0.5 * (lo + hi))
        bad = ~((lo < un) & (un < hi))
        un = np.where(bad, 0.5 * (lo + hi), un)
        newdone = (np.abs(un - u) < 1e-13) | (hi - lo < 1e-13)
        u = np.where(done, u, un)
        done |= newdone
        if done.all():
            break
    ex = lc + j * u[..., None]
    mx = ex.max(-1)
    logw = mx + np.log(np.exp(ex - mx[..., None]).sum(-1))
    return logw - e * u, u


def inner_solve(lc, e, u0=None):
    """Vectorised min over u of log W(e^u) - e u. Returns (value, u*)."""
    e = np.asarray(e, dtype=float)
    if u0 is None:
        u0 = np.zeros(e.shape)
    if _accel.USE_NUMBA:
        flat_e = e.ravel()
        flat_u = np.broadcast_to(u0, e.shape).ravel()
        val = np.empty(flat_e.shape)
        uu = np.empty(flat_e.shape)
        for i in range(flat_e.shape[0]):
            val[i], uu[i] = _inner_one(lc, flat_e[i], flat_u[i])
        return val.reshape(e.shape), uu.reshape(e.shape)
    return _inner_numpy(lc, e, np.broadcast_to(u0, e.shape).astype(float))


# ---------------------------------------------------------------------------
# coupled growth objective and scaled projected-gradient ascent


@njit(cache=True)
def _hq(x, lq):
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return lq
    return -x * math.log(x) - (1.0 - x) * math.log(1.0 - x) + x * lq


@njit(cache=True)
def _dhq(x, lq):
    return math.log((1.0 - x) / x) + lq


@njit(cache=True)
def _objective_one(A, T, p, lc, lq, dl, dr, L, w, u, G, beta, clampeps):
    R, nT = A.shape
    K = beta.shape[0]
    twoL = 2.0 * L
    for k in range(K):
        beta[k] = 0.0
    for k in range(R):
        for t in range(nT):
            a = min(max(A[k, t], clampeps), p[t] - clampeps)
            for i in range(w):
                if T[t, i] != 0.0:
                    beta[k + i] += T[t, i] * a / dl
    val = 0.0
    for k in range(R):
        for t in range(nT):
            a = min(max(A[k, t], clampeps), p[t] - clampeps)
            val += p[t] * _hq(a / p[t], lq)
    gb = np.empty(K)
    for k in range(K):
        b = min(max(beta[k], 1e-14), 1.0 - 1e-14)
        Dmax = lc.shape[0] - 1
        e = min(dr * b, Dmax * (1.0 - 1e-12))
        v, uk = _inner_one(lc, e, u[k])
        u[k] = uk
        val += dl * (v / dr - _hq(b, lq))
        gb[k] = -uk - _dhq(b, lq)
    for k in range(R):
        for t in range(nT):
            a = min(max(A[k, t], clampeps), p[t] - clampeps)
            g = _dhq(a / p[t], lq)
            for i in range(w):
                if T[t, i] != 0.0:
                    g += T[t, i] * gb[k + i]
            G[k, t] = g / twoL
    return val / twoL


@njit(cache=True)
def _project_one(Y, p, total, Dinv, out):
    R, nT = Y.shape
    lo = -1e300
    hi = 1e300
    # bracket the shift
    lo = 0.0
    hi = 0.0
    for k in range(R):
        for t in range(nT):
            d = Dinv[k, t]
            lo = min(lo, (Y[k, t] - p[t]) / d)
            hi = max(hi, Y[k, t] / d)
    lo -= 1.0
    hi += 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = 0.0
        for k in range(R):
            for t in range(nT):
                s += min(max(Y[k, t] - mid * Dinv[k, t], 0.0), p[t])
        if s > total:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, abs(mid)):
            break
    mid = 0.5 * (lo + hi)
    for k in range(R):
        for t in range(nT):
            out[k, t] = min(max(Y[k, t] - mid * Dinv[k, t], 0.0), p[t])


@njit(cache=True)
def _ascent_one(A, T, p, lc, lq, dl, dr, L, w, total, max_iter, tol, clampeps):
    R, nT = A.shape
    K = R + w - 1
    u = np.zeros(K)
    beta = np.empty(K)
    G = np.empty((R, nT))
    Gn = np.empty((R, nT))
    An = np.empty((R, nT))
    Y = np.empty((R, nT))
    Dinv = np.empty((R, nT))
    f = _objective_one(A, T, p, lc, lq, dl, dr, L, w, u, G, beta, clampeps)
    step = 1.0
    stall = 0
    it = 0
    for it in range(max_iter):
        for k in range(R):
            for t in range(nT):
                x = min(max(A[k, t] / p[t], 1e-10), 1.0 - 1e-10)
                Dinv[k, t] = 2.0 * L * p[t] * x * (1.0 - x)
                Y[k, t] = A[k, t] + step * Dinv[k, t] * G[k, t]
        _project_one(Y, p, total, Dinv, An)
        fn = _objective_one(An, T, p, lc, lq, dl, dr, L, w, u, Gn, beta, clampeps)
        if fn >= f:
            gain = fn - f
            for k in range(R):
                for t in range(nT):
                    A[k, t] = An[k, t]
                    G[k, t] = Gn[k, t]
            f = fn
            step = min(step * 1.5, 1.0)
            if gain < tol:
                stall += 1
            else:
                stall = 0
        else:
            step *= 0.3
            stall += 1
        if stall >= 20 or step < 1e-12:
            break
    # refresh inner minimisers at the final point
    f = _objective_one(A, T, p, lc, lq, dl, dr, L, w, u, G, beta, clampeps)
    return f, it + 1, u


@njit(cache=True)
def _ascent_batch_numba(A, T, p, lc, lq, dl, dr, L, w, total, max_iter, tol, clampeps):
    S = A.shape[0]
    K = A.shape[1] + w - 1
    f = np.empty(S)
    iters = np.empty(S, dtype=np.int64)
    U = np.empty((S, K))
    for s in range(S):
        f[s], iters[s], U[s] = _ascent_one(A[s], T, p, lc, lq, dl, dr, L, w, total, max_iter, tol, clampeps)
    return f, iters, U


def _hq_np(x, lq):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -x * np.log(x) - (1 - x) * np.log1p(-x) + x * lq
    return np.where(x <= 0, 0.0, np.where(x >= 1, lq, v))


def _objective_np(A, T, p, lc, lq, dl, dr, L, w, U, clampeps):
    S, R, nT = A.shape
    K = R + w - 1
    Ac = np.clip(A, clampeps, p - clampeps)
    beta = np.zeros((S, K))
    for i in range(w):
        beta[:, i:i + R] += (Ac * T[:, i]).sum(-1) / dl
    b = np.clip(beta, 1e-14, 1 - 1e-14)
    e = np.minimum(dr * b, (lc.shape[0] - 1) * (1 - 1e-12))
    v, U = _inner_numpy(lc, e, U)
    val = (p * _hq_np(Ac / p, lq)).sum(axis=(1, 2)) + dl * (v / dr - _hq_np(b, lq)).sum(-1)
    gb = -U - (np.log((1 - b) / b) + lq)
    x = Ac / p
    G = np.log((1 - x) / x) + lq
    for i in range(w):
        G = G + gb[:, i:i + R, None] * T[:, i]
    return val / (2 * L), G / (2 * L), U


def _project_np(Y, p, total, Dinv):
    lo = np.minimum(((Y - p) / Dinv).min(axis=(1, 2)), 0.0) - 1.0
    hi = np.maximum((Y / Dinv).max(axis=(1, 2)), 0.0) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        s = np.clip(Y - mid[:, None, None] * Dinv, 0, p).sum(axis=(1, 2))
        lo = np.where(s > total, mid, lo)
        hi = np.where(s > total, hi, mid)
        if np.all(hi - lo <= 1e-15 * np.maximum(1.0, np.abs(mid))):
            break
    mid = 0.5 * (lo + hi)
    return np.clip(Y - mid[:, None, None] * Dinv, 0, p)


def _ascent_batch_numpy(A, T, p, lc, lq, dl, dr, L, w, total, max_iter, tol, clampeps):
    S, R, nT = A.shape
    K = R + w - 1
    U = np.zeros((S, K))
    f, G, U = _objective_np(A, T, p, lc, lq, dl, dr, L, w, U, clampeps)
    step = np.ones(S)
    stall = np.zeros(S, dtype=np.int64)
    active = np.ones(S, dtype=bool)
    iters = np.zeros(S, dtype=np.int64)
    for it in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        Aa = A[idx]
        x = np.clip(Aa / p, 1e-10, 1 - 1e-10)
        Dinv = 2.0 * L * p * x * (1 - x)
        An = _project_np(Aa + step[idx, None, None] * Dinv * G[idx], p, total, Dinv)
        fn, Gn, Un = _objective_np(An, T, p, lc, lq, dl, dr, L, w, U[idx], clampeps)
        U[idx] = Un
        ok = fn >= f[idx]
        gain = np.where(ok, fn - f[idx], 0.0)
        A[idx] = np.where(ok[:, None, None], An, Aa)
        G[idx] = np.where(ok[:, None, None], Gn, G[idx])
        f[idx] = np.where(ok, fn, f[idx])
        step[idx] = np.where(ok, np.minimum(step[idx] * 1.5, 1.0), step[idx] * 0.3)
        stall[idx] = np.where(ok & (gain >= tol), 0, stall[idx] + 1)
        iters[idx] = it + 1
        stop = (stall[idx] >= 20) | (step[idx] < 1e-12)
        active[idx[stop]] = False
    f, G, U = _objective_np(A, T, p, lc, lq, dl, dr, L, w, U, clampeps)
    return f, iters, U


def growth_ascent(A, T, p, lc, lq, dl, dr, L, w, total, max_iter=3000, tol=1e-15, clampeps=1e-10):
    """Run the ascent from every start in A. Returns (f, iters, log z*, final points)."""
    A = np.array(A, dtype=float, order="C")
    args = (A, np.ascontiguousarray(T, dtype=float), np.ascontiguousarray(p, dtype=float),
            np.ascontiguousarray(lc, dtype=float), float(lq), float(dl), float(dr), int(L), int(w),
            float(total), int(max_iter), float(tol), float(clampeps))
    if _accel.USE_NUMBA:
        f, it, U = _ascent_batch_numba(*args)
    else:
        f, it, U = _ascent_batch_numpy(*args)
    return f, it, U, A


# ---------------------------------------------------------------------------
# population message kernels


@njit(cache=True)
def _chk_pair_numba(X, Y, add):
    N, q = X.shape
    out = np.zeros((N, q))
    for n in range(N):
        for a in range(q):
            xa = X[n, a]
            if xa == 0.0:
                continue
            for b in range(q):
                out[n, add[a, b]] += xa * Y[n, b]
    return out


def _chk_pair_numpy(X, Y, add):
    N, q = X.shape
    out = np.zeros((N, q))
    for a in range(q):
        for b in range(q):
            out[:, add[a, b]] += X[:, a] * Y[:, b]
    return out


def chk_pair(X, Y, add):
    """Distribution of the sum of two independent F_q symbols, rowwise."""
    if _accel.USE_NUMBA:
        return _chk_pair_numba(np.ascontiguousarray(X), np.ascontiguousarray(Y), add)
    return _chk_pair_numpy(X, Y, add)


@njit(cache=True)
def _var_numba(stack, floor):
    M, N, q = stack.shape
    out = np.empty((N, q))
    for n in range(N):
        for a in range(q):
            out[n, a] = stack[0, n, a]
        for m in range(1, M):
            mx = 0.0
            for a in range(q):
                out[n, a] *= stack[m, n, a]
                if out[n, a] > mx:
                    mx = out[n, a]
            if mx > 0.0:
                for a in range(q):
                    out[n, a] /= mx
        s = 0.0
        for a in range(q):
            s += out[n, a]
        if s > 0.0:
            s2 = 0.0
            for a in range(q):
                out[n, a] = max(out[n, a] / s, floor)
                s2 += out[n, a]
            for a in range(q):
                out[n, a] /= s2
        else:
            for a in range(q):
                out[n, a] = np.nan
    return out


def _var_numpy(stack, floor):
    out = stack[0].copy()
    for m in range(1, stack.shape[0]):
        out *= stack[m]
        mx = out.max(-1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(mx > 0, out / mx, out)
    s = out.sum(-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.maximum(out / s, floor)
    return out / out.sum(-1, keepdims=True)


def var_product(stack, floor=0.0):
    """Rowwise normalised product over the leading axis; NaN rows mark all-zero products."""
    stack = np.ascontiguousarray(stack, dtype=float)
    if _accel.USE_NUMBA:
        return _var_numba(stack, floor)
    return _var_numpy(stack, floor)
