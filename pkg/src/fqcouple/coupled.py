"""Sampled density evolution of coupled chains, the modified system and the coupled potential."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channels import ChannelFamily, ChannelModel, param_from_entropy
from .de import DEConfig, ThresholdResult, channel_draw
from .ensembles import CoupledSpec
from .gf import build_field
from .messages import chk_population, functional_eval, uniform, var_population, vertex
from .rng import substream

_STEP, _POT = 21, 22


@dataclass
class CoupledState:
    """Check-node-input populations at positions 1..K, stored as x[i-1]."""

    x: np.ndarray
    symmetric: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.x.shape[0]

    def entropies(self) -> np.ndarray:
        return np.array([functional_eval(p, "H")[0] for p in self.x])

    def errors(self) -> np.ndarray:
        return np.array([functional_eval(p, "E")[0] for p in self.x])


def initial_state(spec: CoupledSpec, n_pos: int, kind: str = "uniform") -> CoupledState:
    make = uniform if kind == "uniform" else vertex
    return CoupledState(np.stack([make(spec.q, n_pos) for _ in range(spec.K)]), symmetric=True)


def _offsets(spec: CoupledSpec, rng, n: int, count: int):
    """Per-sample variable offset k and `count` check offsets j (relative to the variable)."""
    w = spec.w
    k = rng.integers(0, w, size=n)
    if spec.kind == "standard":
        j = rng.integers(0, w, size=(n, count))
    else:
        # a uniform (count)-subset of {0..w-1} \ {k}: rank random keys and take the smallest
        keys = rng.random((n, w))
        keys[np.arange(n), k] = np.inf
        j = np.argsort(keys, axis=1)[:, :count]
    return k, j


def _gather_check(x, pos, d_r, tables, rng):
    """Check outputs whose d_r-1 inputs come from x at (0-based) positions pos."""
    n = len(pos)
    N = x.shape[1]
    draws = [x[pos, rng.integers(0, N, size=n)] for _ in range(d_r - 1)]
    return chk_population(draws, tables)


def coupled_de_step(state: CoupledState, spec: CoupledSpec, channel, cfg: DEConfig, it: int = 0,
                    n_pos: int | None = None) -> CoupledState:
    x = state.x
    K, N, q = x.shape
    if K != spec.K:
        raise ValueError(f"state has {K} positions, expected {spec.K}")
    n_pos = n_pos or N
    tables = build_field(q)
    out = np.empty((K, n_pos, q))
    twoL = 2 * spec.L
    for i in range(1, K + 1):
        rng = substream(cfg.seed, _STEP, it, i)
        k, j = _offsets(spec, rng, n_pos, spec.d_l - 1)
        v = i - k
        live = (v >= 1) & (v <= twoL)
        res = vertex(q, n_pos)
        idx = np.flatnonzero(live)
        if len(idx):
            chan = channel_draw(channel, len(idx), rng)
            parts = [_gather_check(x, v[idx] + j[idx, d] - 1, spec.d_r, tables, rng) for d in range(spec.d_l - 1)]
            res[idx] = var_population([chan] + parts)
        out[i - 1] = res
    return CoupledState(out, state.symmetric, dict(state.meta))


def modified_step(state: CoupledState, spec: CoupledSpec, channel, cfg: DEConfig, it: int = 0) -> CoupledState:
    new = coupled_de_step(state, spec, channel, cfg, it)
    i0 = math.ceil(spec.K / 2)
    new.x[i0:] = new.x[i0 - 1]
    new.meta["modified"] = True
    return new


def coupled_de(spec: CoupledSpec, channel, cfg: DEConfig, n_pos: int | None = None, modified: bool = False,
               state: CoupledState | None = None, trace: bool = False):
    """Iterate from the all-uninformative state. Returns (state, decoded, iterations, trace rows)."""
    n_pos = n_pos or max(cfg.N // 4, 1000)
    st = state or initial_state(spec, n_pos)
    rows, hist = [], []
    step = modified_step if modified else coupled_de_step
    decoded = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        st = step(st, spec, channel, cfg, it)
        Hs, Es = st.entropies(), st.errors()
        if trace:
            rows += [{"iter": it, "position": i + 1, "H": float(Hs[i]), "E": float(Es[i])} for i in range(spec.K)]
        hist.append(float(Hs.sum()))
        if Es.max() < cfg.eps_dec:
            decoded = True
            break
        w = cfg.window
        if len(hist) >= 2 * w and np.mean(hist[-2 * w:-w]) - np.mean(hist[-w:]) < cfg.tol * w:
            break
    return st, decoded, it, rows


def coupled_bp_threshold(spec: CoupledSpec, family: ChannelFamily, cfg: DEConfig, lo: float = 0.0,
                         hi: float | None = None, n_pos: int | None = None) -> ThresholdResult:
    hi = family.max_entropy if hi is None else hi
    steps = []
    while hi - lo > cfg.bisect_tol:
        mid = 0.5 * (lo + hi)
        _, decoded, iters, _ = coupled_de(spec, param_from_entropy(family, mid), cfg, n_pos=n_pos)
        steps.append({"h": mid, "decoded": decoded, "iters": iters})
        if decoded:
            lo = mid
        else:
            hi = mid
    return ThresholdResult({**spec.as_dict()}, {"kind": family.kind, "q": family.q},
                           0.5 * (lo + hi), 0.5 * (hi - lo), {"steps": steps})


def _g_samples(x, i, spec, channel, n, tables, rng):
    """Samples of c * g(x_i, ..., x_{i+w-1}) for variable position i (1-based)."""
    w = spec.w
    if spec.kind == "standard":
        j = rng.integers(0, w, size=(n, spec.d_l))
    else:
        keys = rng.random((n, w))
        j = np.argsort(keys, axis=1)[:, : spec.d_l]
    parts = [_gather_check(x, i - 1 + j[:, d], spec.d_r, tables, rng) for d in range(spec.d_l)]
    return var_population([channel_draw(channel, n, rng)] + parts)


def coupled_potential(state: CoupledState, spec: CoupledSpec, channel, cfg: DEConfig, n: int | None = None):
    """U_c of the state and its Monte Carlo standard error."""
    x = state.x
    K, N, q = x.shape
    n = n or N
    tables = build_field(q)
    total, var = 0.0, 0.0
    coef = spec.d_l / spec.d_r - spec.d_l
    for i in range(1, K + 1):
        rng = substream(cfg.seed, _POT, 0, i)
        pos = np.full(n, i - 1)
        b, sb = functional_eval(_gather_check(x, pos, spec.d_r, tables, rng), "H")
        draws = [x[i - 1, rng.integers(0, N, size=n)] for _ in range(spec.d_r)]
        a, sa = functional_eval(chk_population(draws, tables), "H")
        total += spec.d_l * b + coef * a
        var += (spec.d_l * sb) ** 2 + (coef * sa) ** 2
    for i in range(1, 2 * spec.L + 1):
        rng = substream(cfg.seed, _POT, 1, i)
        c, sc = functional_eval(_g_samples(x, i, spec, channel, n, tables, rng), "H")
        total -= c
        var += sc**2
    return total, math.sqrt(var)


def g_entropy(state: CoupledState, i: int, spec: CoupledSpec, channel, cfg: DEConfig, n: int | None = None):
    """H(c * g(x_i..x_{i+w-1})) with its standard error."""
    tables = build_field(state.x.shape[2])
    rng = substream(cfg.seed, _POT, 2, i)
    return functional_eval(_g_samples(state.x, i, spec, channel, n or state.x.shape[1], tables, rng), "H")


__all__ = [
    "CoupledState", "initial_state", "coupled_de_step", "modified_step", "coupled_de",
    "coupled_bp_threshold", "coupled_potential", "g_entropy",
]
