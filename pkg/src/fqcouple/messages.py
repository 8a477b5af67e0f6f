"""P-domain messages: node combination rules, functionals and Dirichlet-mixture fits."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import digamma, gammaln, logsumexp, polygamma

from ._kernels import chk_pair, var_product
from .gf import FieldTables, build_field, dft, idft
from .rng import substream

FLOOR = 1e-300
FUNCTIONALS = ("B", "H", "P", "E", "Q")


class AllZeroProduct(ValueError):
    pass


class DegenerateFit(RuntimeWarning):
    pass


@dataclass
class Population:
    y: np.ndarray
    origin: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.y)


def as_array(pop) -> np.ndarray:
    return pop.y if isinstance(pop, Population) else np.asarray(pop, dtype=float)


def uniform(q: int, N: int = 1) -> np.ndarray:
    return np.full((N, q), 1.0 / q)


def vertex(q: int, N: int = 1) -> np.ndarray:
    y = np.zeros((N, q))
    y[:, 0] = 1.0
    return y


# -- single-message rules ----------------------------------------------------


def var_combine(msgs) -> np.ndarray:
    msgs = [np.asarray(m, dtype=float) for m in msgs]
    if not msgs:
        raise ValueError("need at least one message")
    prod = np.prod(msgs, axis=0)
    s = prod.sum()
    if s <= 0:
        raise AllZeroProduct("messages have disjoint supports")
    return prod / s


def _scale(y: np.ndarray, label: int, tables: FieldTables) -> np.ndarray:
    """Distribution of label*V when V ~ y."""
    out = np.zeros_like(y)
    out[..., tables.mul[label]] = y
    return out


def chk_combine(msgs, labels, tables: FieldTables | None = None, method: str = "dft") -> np.ndarray:
    """Check-node output along the last edge; labels has one more entry than msgs."""
    msgs = [np.asarray(m, dtype=float) for m in msgs]
    if tables is None:
        tables = build_field(msgs[0].shape[-1])
    if len(labels) != len(msgs) + 1:
        raise ValueError("labels must have one entry per input plus the output edge")
    if any(m.shape[-1] != tables.q for m in msgs):
        raise ValueError("message length does not match field order")
    scaled = [_scale(m, int(e), tables) for m, e in zip(msgs, labels[:-1])]
    if method == "dft":
        f = np.ones(tables.q, dtype=complex)
        for z in scaled:
            f = f * dft(z, tables)
        s = np.real(idft(f, tables))
        s = np.maximum(s, 0.0)
    elif method == "direct":
        s = scaled[0]
        for z in scaled[1:]:
            s = chk_pair(s[None, :], z[None, :], tables.add)[0]
    else:
        raise ValueError(f"unknown method {method!r}")
    # output symbol x must satisfy e_out * x = -S
    e_out = int(labels[-1])
    out = s[tables.neg[tables.mul[e_out]]]
    return out / out.sum()


# -- population rules ----------------------------------------------------------


def var_population(pops, floor: float = 0.0) -> np.ndarray:
    out = var_product(np.stack([as_array(p) for p in pops]), floor)
    if np.isnan(out).any():
        raise AllZeroProduct("a sample has an all-zero product")
    return out


def chk_population(pops, tables: FieldTables, labels=None) -> np.ndarray:
    """Rowwise check combination. labels: None (all ones) or a list of len(pops)+1 arrays."""
    arrs = [as_array(p) for p in pops]
    if labels is not None:
        arrs = [_scale_rows(a, lab, tables) for a, lab in zip(arrs, labels[:-1])]
    s = arrs[0]
    for a in arrs[1:]:
        s = chk_pair(s, a, tables.add)
    if labels is None:
        return s[:, tables.neg]
    idx = tables.neg[tables.mul[np.asarray(labels[-1])]]
    return np.take_along_axis(s, idx, axis=1)


def _scale_rows(y, labels, tables):
    out = np.zeros_like(y)
    np.put_along_axis(out, tables.mul[np.asarray(labels)], y, axis=1)
    return out


# -- functionals ----------------------------------------------------------------


def _kernel_allshift(Y: np.ndarray, which: str) -> np.ndarray:
    q = Y.shape[1]
    if which == "H":
        Yc = np.maximum(Y, FLOOR)
        return -(Y * np.log(Yc)).sum(1)
    if which == "E":
        return 1.0 - Y.max(1)
    if which == "Q":
        return (Y * Y).sum(1)
    if which == "B":
        r = np.sqrt(Y).sum(1)
        return (r * r - 1.0) / (q - 1)  # sum over i != j of sqrt(y_i y_j)
    if which == "P":
        S = np.sort(Y, axis=1)
        # sum_{i != j} min = 2 * sum_k S_k (q-1-k) for ascending S
        wts = 2.0 * (q - 1 - np.arange(q))
        return (S * wts).sum(1) / (2 * (q - 1))
    raise ValueError(f"unknown functional {which!r}")


def _kernel_shift(Y, which, rng, tables):
    q = Y.shape[1]
    a = rng.integers(0, q, size=len(Y))
    Ys = np.take_along_axis(Y, tables.add[a], axis=1)  # Ys[b] = Y[b + a]
    y0 = Ys[:, 0]
    if which == "H":
        return -q * y0 * np.log(np.maximum(y0, FLOOR))
    if which == "B":
        return q / (q - 1) * np.sqrt(y0[:, None] * Ys[:, 1:]).sum(1)
    if which == "P":
        return q / (2 * (q - 1)) * np.minimum(y0[:, None], Ys[:, 1:]).sum(1)
    # E and Q kernels are shift-invariant
    return _kernel_allshift(Ys, which)


def functional_values(pop, which: str, method: str = "allshift", seed: int = 0) -> np.ndarray:
    Y = as_array(pop)
    if method == "allshift":
        return _kernel_allshift(Y, which)
    if method == "logy0":
        if which != "H":
            raise ValueError("logy0 estimator only applies to H")
        return -np.log(np.maximum(Y[:, 0], FLOOR))
    if method == "shift":
        return _kernel_shift(Y, which, substream(seed, 7), build_field(Y.shape[1]))
    raise ValueError(f"unknown method {method!r}")


def functional_eval(pop, which: str, method: str = "allshift", seed: int = 0) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of a functional."""
    v = functional_values(pop, which, method, seed)
    n = len(v)
    se = float(v.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(math.fsum(v) / n), se


def all_functionals(pop) -> dict:
    return {w: functional_eval(pop, w)[0] for w in FUNCTIONALS}


# -- Dirichlet mixtures -------------------------------------------------------------


@dataclass
class DirichletMixture:
    K: int
    pi: np.ndarray
    alpha: np.ndarray
    pi_inf: float = 0.0
    meta: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"K": self.K, "pi": [float(x) for x in self.pi],
                           "alpha": [[float(a) for a in row] for row in self.alpha],
                           "pi_inf": float(self.pi_inf)})

    @classmethod
    def from_json(cls, text: str) -> "DirichletMixture":
        d = json.loads(text)
        return cls(int(d["K"]), np.array(d["pi"], float), np.array(d["alpha"], float), float(d["pi_inf"]))


@dataclass
class EMConfig:
    max_rounds: int = 500
    tol: float = 1e-6
    atom_dist: float = 1e-9
    fp_iters: int = 50


def _inv_digamma(y, iters=8):
    x = np.where(y >= -2.22, np.exp(y) + 0.5, -1.0 / (y - digamma(1.0)))
    for _ in range(iters):
        x = x - (digamma(x) - y) / polygamma(1, x)
    return x


def _dir_logpdf(logY, alpha):
    return gammaln(alpha.sum()) - gammaln(alpha).sum() + logY @ (alpha - 1.0)


def _dir_mle(logY, w, alpha0, iters):
    """Weighted Dirichlet MLE by the digamma fixed point."""
    sw = w.sum()
    if sw <= 0:
        return alpha0
    s = (w[:, None] * logY).sum(0) / sw
    a = alpha0.copy()
    for _ in range(iters):
        a_new = _inv_digamma(digamma(a.sum()) + s)
        a_new = np.maximum(a_new, 1e-8)
        if np.max(np.abs(a_new - a) / a) < 1e-10:
            a = a_new
            break
        a = a_new
    return a


def _moment_match(Y, w):
    sw = w.sum()
    m = (w[:, None] * Y).sum(0) / sw
    v = (w[:, None] * (Y - m) ** 2).sum(0) / sw
    i = int(np.argmax(v))
    s = m[i] * (1 - m[i]) / max(v[i], 1e-12) - 1.0
    return np.maximum(m * max(s, 1e-3), 1e-3)


def fit_mixture(pop, K: int = 3, cfg: EMConfig | None = None) -> DirichletMixture:
    cfg = cfg or EMConfig()
    Y = as_array(pop)
    N, q = Y.shape
    atom = np.abs(Y - vertex(q)[0]).max(1) < cfg.atom_dist
    pi_inf = float(atom.mean())
    Yr = Y[~atom]
    if len(Yr) == 0:
        return DirichletMixture(K, np.full(K, 1.0 / K), np.ones((K, q)), 1.0, {"rounds": 0})
    if len(Yr) < 10 * K * q:
        K = max(1, min(K, len(Yr) // (10 * q)))
    logY = np.log(np.maximum(Yr, FLOOR))
    # deterministic init: quantile groups of y_0
    order = np.argsort(Yr[:, 0], kind="stable")
    R = np.zeros((len(Yr), K))
    for k, chunk in enumerate(np.array_split(order, K)):
        R[chunk, k] = 1.0
    alpha = np.array([_moment_match(Yr, R[:, k]) if R[:, k].sum() > 0 else np.ones(q) for k in range(K)])
    pi = R.mean(0)
    prev = -np.inf
    rounds = 0
    for rounds in range(1, cfg.max_rounds + 1):
        alpha = np.array([_dir_mle(logY, R[:, k], alpha[k], cfg.fp_iters) for k in range(K)])
        pi = np.maximum(R.mean(0), 1e-300)
        lp = np.stack([_dir_logpdf(logY, alpha[k]) for k in range(K)], 1) + np.log(pi)
        ll = logsumexp(lp, axis=1)
        R = np.exp(lp - ll[:, None])
        cur = float(ll.mean())
        if cur - prev < cfg.tol:
            break
        prev = cur
    pi = R.mean(0)
    meta = {"rounds": rounds, "loglik": float(prev), "K": K}
    if np.any(pi < 1e-6):
        meta["degenerate"] = True
        warnings.warn(f"mixture component weights collapsed: {pi}", DegenerateFit, stacklevel=2)
    return DirichletMixture(K, pi * (1 - pi_inf), alpha, pi_inf, meta)


def sample_mixture(mix: DirichletMixture, N: int, seed: int, *key: int) -> np.ndarray:
    rng = substream(seed, *key)
    q = mix.alpha.shape[1]
    w = np.concatenate([mix.pi, [mix.pi_inf]])
    comp = rng.choice(len(w), size=N, p=w / w.sum())
    out = vertex(q, N)
    idx = np.flatnonzero(comp < mix.K)
    if len(idx):
        a = mix.alpha[comp[idx]]
        # log-domain Gamma(a) draws: Gamma(a+1) * U^(1/a) keeps small shapes finite
        g = rng.standard_gamma(a + 1.0)
        u = rng.random(a.shape)
        lg = np.log(g) + np.log(u) / a
        out[idx] = np.exp(lg - logsumexp(lg, axis=1, keepdims=True))
    return out
