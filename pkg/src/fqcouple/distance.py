"""Weight and stopping-set distributions of coupled ensembles: exact averages,
growth rates and their smallest positive zeros."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.special import gammaln

from ._kernels import growth_ascent, inner_solve
from .ensembles import CoupledSpec
from .rng import substream

WEIGHT, STOPPING = "weight", "stopping"


@dataclass(frozen=True)
class EnumeratorPolynomial:
    coefficients: tuple[int, ...]
    kind: str
    q: int
    d_r: int

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, z):
        return sum(c * z**j for j, c in enumerate(self.coefficients))

    def log_coefficients(self) -> np.ndarray:
        return np.array([math.log(c) if c > 0 else -np.inf for c in self.coefficients])


def spc_enumerator(q: int, d_r: int) -> EnumeratorPolynomial:
    """Weight enumerator of the length-d_r single parity-check code over F_q."""
    coef = []
    for j in range(d_r + 1):
        num = comb(d_r, j) * ((q - 1) ** j + (q - 1) * (-1) ** j)
        assert num % q == 0
        coef.append(num // q)
    return EnumeratorPolynomial(tuple(coef), WEIGHT, q, d_r)


def ss_generating(d_r: int) -> EnumeratorPolynomial:
    coef = [comb(d_r, j) for j in range(d_r + 1)]
    coef[1] -= d_r
    return EnumeratorPolynomial(tuple(coef), STOPPING, 2, d_r)


def enumerator(kind: str, q: int, d_r: int) -> EnumeratorPolynomial:
    if kind == WEIGHT:
        return spc_enumerator(q, d_r)
    if kind == STOPPING:
        return ss_generating(d_r)
    raise ValueError(f"unknown kind {kind!r}")


def power_coeff(poly: EnumeratorPolynomial, m: int, e: int) -> int:
    """Exact coefficient of z^e in poly(z)^m."""
    if e < 0 or e > m * poly.degree:
        raise ValueError(f"e={e} outside [0, {m * poly.degree}]")
    base = list(poly.coefficients[: e + 1])
    acc = [1]
    for _ in range(m):
        nxt = [0] * min(len(acc) + len(base) - 1, e + 1)
        for i, a in enumerate(acc):
            if a:
                for j, b in enumerate(base):
                    if i + j > e:
                        break
                    nxt[i + j] += a * b
        acc = nxt
    return acc[e] if e < len(acc) else 0


def log_power_coeff(poly: EnumeratorPolynomial, m: int, e: int) -> float:
    """Natural log of power_coeff via log-sum-exp convolution (-inf for zero)."""
    if e < 0 or e > m * poly.degree:
        raise ValueError(f"e={e} outside [0, {m * poly.degree}]")
    lb = poly.log_coefficients()[: e + 1]
    acc = np.array([0.0])
    for _ in range(m):
        n = min(len(acc) + len(lb) - 1, e + 1)
        nxt = np.full(n, -np.inf)
        for j, b in enumerate(lb):
            if np.isfinite(b):
                seg = acc[: n - j] + b
                nxt[j:j + len(seg)] = np.logaddexp(nxt[j:j + len(seg)], seg)
        acc = nxt
    return float(acc[e]) if e < len(acc) else -np.inf


def Hq(x, q: int = 2):
    """q-ary entropy function in nats; H_q(0) = 0."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = -x * np.log(x) - (1 - x) * np.log1p(-x) + x * math.log(q - 1)
    v = np.where(x <= 0, 0.0, np.where(x >= 1, math.log(q - 1), v))
    return v if v.ndim else float(v)


def _log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _type_counts(spec: CoupledSpec, n: int):
    return [pt * n for pt in spec.profile.p]


def _socket_weights(spec: CoupledSpec, ell: np.ndarray) -> np.ndarray:
    T = np.array(spec.profile.types, dtype=np.int64)
    R = 2 * spec.L
    e = np.zeros(spec.K, dtype=np.int64)
    for i in range(spec.w):
        e[i:i + R] += ell @ T[:, i]
    return e


def avg_weight_type(spec: CoupledSpec, n: int, ell, kind: str = WEIGHT) -> float:
    """Log of the ensemble-average number of words with weight type ell (2L x |T|)."""
    ell = np.asarray(ell, dtype=np.int64)
    counts = _type_counts(spec, n)
    if ell.shape != (2 * spec.L, len(counts)):
        raise ValueError(f"type matrix must be {(2 * spec.L, len(counts))}")
    if any(c.denominator != 1 for c in counts) or (spec.d_l * n) % spec.d_r:
        raise ValueError("n gives non-integral node counts")
    counts = np.array([int(c) for c in counts])
    if np.any(ell < 0) or np.any(ell > counts):
        raise ValueError("infeasible weight type")
    q = spec.q if kind == WEIGHT else 2
    poly = enumerator(kind, spec.q, spec.d_r)
    m = spec.d_l * n // spec.d_r
    lq = math.log(q - 1) if q > 2 else 0.0
    total = float(np.sum(_log_binom(counts[None, :], ell))) + float(ell.sum()) * lq
    for e in _socket_weights(spec, ell):
        lc = log_power_coeff(poly, m, int(e))
        if lc == -np.inf:
            return -np.inf
        total += lc - float(_log_binom(spec.d_l * n, e)) - e * lq
    return total


def avg_ss_type(spec: CoupledSpec, n: int, ell) -> float:
    return avg_weight_type(spec, n, ell, kind=STOPPING)


def inf_log_ratio(poly: EnumeratorPolynomial, a: float):
    """min over z>0 of log W(z) - d_r a log z. Returns (value, z*)."""
    d_r = poly.d_r
    e = d_r * a
    if e < 0 or e > poly.degree + 1e-12:
        raise ValueError(f"exponent {e} outside [0, {poly.degree}]")
    top = max(j for j, c in enumerate(poly.coefficients) if c > 0)
    if e == 0:
        return 0.0, 0.0
    if abs(e - top) < 1e-12:
        return math.log(poly.coefficients[top]), math.inf
    if e > top:
        return -math.inf, math.inf
    v, u = inner_solve(poly.log_coefficients(), np.array([e]))
    return float(v[0]), math.exp(float(u[0]))


def growth_uncoupled(q: int, d_l: int, d_r: int, alpha: float, kind: str = WEIGHT) -> float:
    poly = enumerator(kind, q, d_r)
    qq = q if kind == WEIGHT else 2
    v, _ = inf_log_ratio(poly, alpha)
    return d_l / d_r * v - (d_l - 1) * Hq(alpha, qq)


def zero_uncoupled(q: int, d_l: int, d_r: int, kind: str = WEIGHT, tol: float = 1e-8) -> float:
    if kind == WEIGHT and not d_r >= d_l >= 3:
        raise ValueError("weight zero needs d_r >= d_l >= 3")
    if kind == STOPPING and not (d_l >= 3 and d_r >= 3):
        raise ValueError("stopping zero needs d_l, d_r >= 3")
    upper = 1 - 1 / q if kind == WEIGHT else 1.0 - 1e-9
    grid = np.linspace(0, upper, 2001)[1:]
    prev = 0.0
    for a in grid:
        if growth_uncoupled(q, d_l, d_r, a, kind) > 0:
            lo, hi = prev, a
            break
        prev = a
    else:
        return upper
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if growth_uncoupled(q, d_l, d_r, mid, kind) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class OptConfig:
    starts: int = 64
    max_iter: int = 500
    tol: float = 1e-11
    clamp: float = 1e-10
    seed: int = 0


@dataclass
class GrowthRateEval:
    alpha: float
    value: float
    maximizer: np.ndarray
    log_z: np.ndarray
    starts: int
    gap: float
    upper_bound: float
    iterations: int
    values: np.ndarray = field(repr=False, default=None)


def _uniform_start(p, R, alpha):
    return np.tile(p * alpha, (R, 1))


def _project_plain(Y, p, total):
    lo, hi = (Y - p).min() - 1.0, Y.max() + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.clip(Y - mid, 0, p).sum() > total:
            lo = mid
        else:
            hi = mid
    return np.clip(Y - 0.5 * (lo + hi), 0, p)


def growth_coupled(spec: CoupledSpec, alpha: float, kind: str = WEIGHT, cfg: OptConfig | None = None,
                   extra_starts=None) -> GrowthRateEval:
    cfg = cfg or OptConfig()
    prof = spec.profile
    T = prof.type_matrix()
    p = prof.p_array()
    R = 2 * spec.L
    qq = spec.q if kind == WEIGHT else 2
    lq = math.log(qq - 1) if qq > 2 else 0.0
    poly = enumerator(kind, spec.q, spec.d_r)
    lc = poly.log_coefficients()
    total = R * alpha

    if alpha <= 0 or alpha >= 1:
        A = np.tile(p * (0.0 if alpha <= 0 else 1.0), (R, 1))
        val = _objective_value(A, T, p, lc, lq, spec, kind)
        return GrowthRateEval(alpha, val, A, np.zeros(spec.K), 1, 0.0, val, 0, np.array([val]))

    rng = substream(cfg.seed, int(round(alpha * 1e9)))
    starts = [_uniform_start(p, R, alpha)]
    for _ in range(cfg.starts):
        starts.append(_project_plain(rng.random((R, len(p))) * p, p, total))
    for A0 in extra_starts or []:
        starts.append(_project_plain(np.asarray(A0, dtype=float), p, total))
    A = np.array(starts)
    f, iters, U, A = growth_ascent(A, T, p, lc, lq, spec.d_l, spec.d_r, spec.L, spec.w, total,
                                   cfg.max_iter, cfg.tol, cfg.clamp)
    order = np.argsort(f)[::-1]
    best = order[0]
    gap = float(f[best] - f[order[1]]) if len(f) > 1 else 0.0
    bound = _chain_bound(A[best], T, spec, kind)
    return GrowthRateEval(alpha, float(f[best]), A[best], U[best], len(f), gap, bound,
                          int(iters.max()), f)


def _betas(A, T, spec):
    R = A.shape[0]
    beta = np.zeros(spec.K)
    for i in range(spec.w):
        beta[i:i + R] += (A * T[:, i]).sum(-1) / spec.d_l
    return beta


def _objective_value(A, T, p, lc, lq, spec, kind):
    qq = spec.q if kind == WEIGHT else 2
    R = A.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(p > 0, A / p, 0)
    val = float((p * Hq(x, qq)).sum())
    poly = enumerator(kind, spec.q, spec.d_r)
    for b in _betas(A, T, spec):
        v, _ = inf_log_ratio(poly, min(b, poly.degree / spec.d_r))
        val += spec.d_l * (v / spec.d_r - Hq(b, qq))
    return val / R


def _chain_bound(A, T, spec, kind):
    # (1/2L) sum_k g_underlying(beta_k) bounds the objective from above
    return float(sum(growth_uncoupled(spec.q, spec.d_l, spec.d_r, b, kind)
                     for b in _betas(A, T, spec)) / (2 * spec.L))


def alpha_lower_bound(spec: CoupledSpec, kind: str = WEIGHT) -> float:
    base = zero_uncoupled(spec.q, spec.d_l, spec.d_r, kind)
    return spec.d_l * base / (2 * spec.L * spec.profile.t_max)


def zero_coupled(spec: CoupledSpec, kind: str = WEIGHT, cfg: OptConfig | None = None,
                 step: float = 1e-3, upper: float = 0.5, tol: float = 1e-5, log=None) -> float:
    """inf{alpha : g(alpha) > 0}: grid scan then bisection."""
    cfg = cfg or OptConfig()
    prev, prev_max = 0.0, None
    hi = None
    for a in np.arange(1, int(round(upper / step)) + 1) * step:
        extra = [prev_max * (a / prev)] if prev_max is not None else None
        ev = growth_coupled(spec, a, kind, cfg, extra)
        if log is not None:
            log(ev)
        if ev.value > 0:
            hi = a
            break
        prev, prev_max = a, ev.maximizer
    if hi is None:
        return 1.0
    lo = prev
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ev = growth_coupled(spec, mid, kind, cfg)
        if log is not None:
            log(ev)
        if ev.value > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
