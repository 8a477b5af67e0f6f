"""Sampled density evolution for the uncoupled system, potential and fixed-point thresholds."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .channels import ChannelFamily, ChannelModel, channel_entropy, messages_from_uniforms, param_from_entropy
from .gf import build_field
from .messages import (
    FUNCTIONALS, DirichletMixture, all_functionals, chk_population, fit_mixture, functional_eval,
    sample_mixture, uniform, var_population, vertex,
)
from .rng import substream

# substream tags so that different stages never share draws
_FWD, _RX, _POT, _REFIT, _RES = 11, 12, 13, 14, 15


class NoSolution(RuntimeError):
    pass


class NonConvergent(RuntimeError):
    pass


@dataclass
class DEConfig:
    N: int = 20000
    max_iters: int = 2000
    tol: float = 2e-6
    window: int = 25
    eps_dec: float = 1e-4
    bisect_tol: float = 1e-3
    escalate: int = 2
    refit_period: int = 0
    mixture_K: int = 3
    potential_N: int = 0
    rx_points: int = 32
    rx_N: int = 0
    rx_iters: int = 300
    rx_window: int = 20
    rx_htol: float = 1e-7
    fp_tol: float = 2e-3
    seed: int = 0

    def __post_init__(self):
        if self.N < 1000:
            raise ValueError("population size must be at least 1000")
        if min(self.tol, self.eps_dec, self.bisect_tol, self.fp_tol) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class FixedPointRecord:
    population: np.ndarray = field(repr=False)
    h: float
    H: float
    functionals: dict
    residuals: dict
    iterations: int
    converged: bool
    decoded: bool = False
    mixture: DirichletMixture | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)


@dataclass
class ThresholdResult:
    system: dict
    family: dict
    value: float
    tolerance: float
    diagnostics: dict

    def to_dict(self):
        return asdict(self)


def _draw(X, N, rng):
    return X[rng.integers(0, len(X), size=N)]


def channel_draw(c, N, rng) -> np.ndarray:
    """N conditional-on-zero channel messages from a model or by resampling a population."""
    if isinstance(c, ChannelModel):
        return messages_from_uniforms(c, rng.random(N))
    return _draw(np.asarray(c), N, rng)


def _check_outputs(X, count, d_r, tables, rng, rho=None):
    """`count` check-node outputs, each fed by fresh draws from X."""
    if rho is None:
        return chk_population([_draw(X, count, rng) for _ in range(d_r - 1)], tables)
    degs = np.array(sorted(rho))
    which = rng.choice(len(degs), size=count, p=np.array([rho[d] for d in degs], float))
    out = np.empty((count, X.shape[1]))
    for i, d in enumerate(degs):
        idx = np.flatnonzero(which == i)
        if len(idx):
            out[idx] = chk_population([_draw(X, len(idx), rng) for _ in range(d - 1)], tables)
    return out


def _var_outputs(chan, X, d_l, d_r, tables, rng, lam=None, rho=None):
    N = len(chan)
    if lam is None:
        parts = [_check_outputs(X, N, d_r, tables, rng, rho) for _ in range(d_l - 1)]
        return var_population([chan] + parts) if parts else chan.copy()
    degs = np.array(sorted(lam))
    which = rng.choice(len(degs), size=N, p=np.array([lam[d] for d in degs], float))
    out = np.empty_like(chan)
    for i, d in enumerate(degs):
        idx = np.flatnonzero(which == i)
        if len(idx):
            parts = [_check_outputs(X, len(idx), d_r, tables, rng, rho) for _ in range(d - 1)]
            out[idx] = var_population([chan[idx]] + parts) if parts else chan[idx]
    return out


def de_step(pop, channel, d_l: int, d_r: int, cfg: DEConfig, rng, lam=None, rho=None, N=None) -> np.ndarray:
    """One sampled application of c * (x^{box (d_r-1)})^{* (d_l-1)}."""
    X = np.asarray(getattr(pop, "y", pop), dtype=float)
    N = N or cfg.N
    tables = build_field(X.shape[1])
    chan = channel_draw(channel, N, rng)
    return _var_outputs(chan, X, d_l, d_r, tables, rng, lam, rho)


def _H(X):
    return functional_eval(X, "H")[0]


def _E(X):
    return functional_eval(X, "E")[0]


def _stalled(hist, window, tol):
    if len(hist) < 2 * window:
        return False
    cur = np.mean(hist[-window:])
    prev = np.mean(hist[-2 * window:-window])
    return prev - cur < tol * window


def _maybe_refit(X, it, cfg, key):
    if cfg.refit_period and it % cfg.refit_period == 0 and _E(X) > cfg.eps_dec:
        mix = fit_mixture(X, cfg.mixture_K)
        return sample_mixture(mix, len(X), cfg.seed, _REFIT, *key, it), mix
    return X, None


def forward_de(d_l: int, d_r: int, channel, cfg: DEConfig, N=None, trace=True, stop_on_decode=True,
               lam=None, rho=None):
    """Iterate from the uninformative distribution until decoded, stalled or out of iterations."""
    q = channel.q if isinstance(channel, ChannelModel) else np.asarray(channel).shape[1]
    N = N or cfg.N
    X = uniform(q, N)
    rows, Hs = [], []
    decoded = converged = False
    mix = None
    it = 0
    for it in range(1, cfg.max_iters + 1):
        X = de_step(X, channel, d_l, d_r, cfg, substream(cfg.seed, _FWD, it), lam, rho, N)
        X, m = _maybe_refit(X, it, cfg, (_FWD,))
        mix = m or mix
        if trace:
            f = all_functionals(X)
            rows.append({"iter": it, **f})
            h, e = f["H"], f["E"]
        else:
            h, e = _H(X), _E(X)
        Hs.append(h)
        if e < cfg.eps_dec and (stop_on_decode or e == 0.0):
            decoded = converged = True
            break
        if _stalled(Hs, cfg.window, cfg.tol):
            converged = True
            break
    h_c = channel_entropy(channel) if isinstance(channel, ChannelModel) else functional_eval(channel, "H")[0]
    rec = _record(X, channel, h_c, d_l, d_r, cfg, it, converged, decoded, mix)
    return rec, rows


def _record(X, channel, h, d_l, d_r, cfg, iters, converged, decoded, mix=None):
    f = all_functionals(X)
    nxt = de_step(X, channel, d_l, d_r, cfg, substream(cfg.seed, _RES, iters), N=len(X))
    g = all_functionals(nxt)
    res = {k: g[k] - f[k] for k in FUNCTIONALS}
    return FixedPointRecord(X, h, f["H"], f, res, iters, converged, decoded, mix)


def bp_threshold_single(d_l: int, d_r: int, family: ChannelFamily, cfg: DEConfig, lo=0.0, hi=None,
                        lam=None, rho=None) -> ThresholdResult:
    """Largest entropy at which forward DE reaches E < eps_dec, by bisection."""
    hi = family.max_entropy if hi is None else hi
    steps = []
    while hi - lo > cfg.bisect_tol:
        mid = 0.5 * (lo + hi)
        N = cfg.N * (cfg.escalate if hi - lo < 4 * cfg.bisect_tol else 1)
        rec, _ = forward_de(d_l, d_r, param_from_entropy(family, mid), cfg, N=N, trace=False, lam=lam, rho=rho)
        steps.append({"h": mid, "decoded": rec.decoded, "iters": rec.iterations, "N": N})
        if rec.decoded:
            lo = mid
        else:
            hi = mid
    return ThresholdResult({"d_l": d_l, "d_r": d_r}, {"kind": family.kind, "q": family.q},
                           0.5 * (lo + hi), 0.5 * (hi - lo), {"steps": steps, "N": cfg.N})


def fixed_point_at_entropy(d_l: int, d_r: int, family: ChannelFamily, target: float, cfg: DEConfig,
                           N=None, key: int = 0) -> FixedPointRecord:
    """Run DE with the channel re-tuned every step so that H(x) stays at `target`."""
    if not 0 < target <= family.max_entropy + 1e-12 and not (family.kind != "QSC" and 0 < target):
        raise ValueError("target entropy out of range")
    N = N or cfg.N
    q = family.q
    tables = build_field(q)
    x0 = param_from_entropy(family, min(target, family.max_entropy))
    X = channel_draw(x0, N, substream(cfg.seed, _RX, key, 0))
    hs = []
    it = 0
    for it in range(1, cfg.rx_iters + 1):
        rng = substream(cfg.seed, _RX, key, it)
        u = rng.random(N)
        parts = [_check_outputs(X, N, d_r, tables, rng) for _ in range(d_l - 1)]
        cv = var_population(parts) if len(parts) > 1 else parts[0]

        def out(h):
            return var_population([messages_from_uniforms(param_from_entropy(family, h), u), cv])

        hi_val = out(family.max_entropy)
        if _H(hi_val) < target - 1e-12:
            raise NoSolution(f"no channel reaches entropy {target} at iteration {it}")
        lo, hi = 0.0, family.max_entropy
        Y = hi_val
        while hi - lo > cfg.rx_htol:
            mid = 0.5 * (lo + hi)
            Ym = out(mid)
            if _H(Ym) < target:
                lo = mid
            else:
                hi, Y = mid, Ym
        X = Y
        hs.append(hi)
        w = cfg.rx_window
        if len(hs) >= 2 * w and abs(np.mean(hs[-w:]) - np.mean(hs[-2 * w:-w])) < cfg.tol * w:
            break
    w = min(cfg.rx_window, len(hs))
    h = float(np.mean(hs[-w:]))
    converged = it < cfg.rx_iters
    rec = _record(X, param_from_entropy(family, h), h, d_l, d_r, cfg, it, converged, False)
    rec.meta["h_trace"] = hs
    return rec


def potential_single(x_pop, c, d_l: int, d_r: int, cfg: DEConfig, key: int = 0, N=None):
    """U_s(x; c) and its Monte Carlo standard error."""
    X = np.asarray(getattr(x_pop, "y", x_pop), dtype=float)
    N = N or cfg.potential_N or cfg.N
    tables = build_field(X.shape[1])
    rng = substream(cfg.seed, _POT, key)
    a, sa = functional_eval(chk_population([_draw(X, N, rng) for _ in range(d_r)], tables), "H")
    b, sb = functional_eval(chk_population([_draw(X, N, rng) for _ in range(d_r - 1)], tables), "H")
    chan = channel_draw(c, N, rng)
    parts = [_check_outputs(X, N, d_r, tables, rng) for _ in range(d_l)]
    cc, sc = functional_eval(var_population([chan] + parts), "H")
    k = d_l / d_r - d_l
    return k * a + d_l * b - cc, math.sqrt((k * sa) ** 2 + (d_l * sb) ** 2 + sc**2)


def stability_product(lam: dict, rho: dict, c_pop) -> float:
    """B(c) lambda'(0) rho'(1) for edge-perspective degree fractions {degree: fraction}."""
    lam0 = float(lam.get(2, 0.0))
    rho1 = float(sum(f * (d - 1) for d, f in rho.items()))
    return functional_eval(c_pop, "B")[0] * lam0 * rho1


def rx_sweep(d_l: int, d_r: int, family: ChannelFamily, h_bp: float, cfg: DEConfig, N=None):
    """Fixed points at a grid of target entropies on (0.9 h_BP, max entropy)."""
    pts = []
    top = family.max_entropy
    grid = np.linspace(0.9 * h_bp, top, cfg.rx_points + 2)[1:-1]
    for j, target in enumerate(grid):
        try:
            rec = fixed_point_at_entropy(d_l, d_r, family, float(target), cfg, N=N, key=j + 1)
        except NoSolution:
            continue
        if rec.functionals["E"] < cfg.eps_dec:
            continue
        U, se = potential_single(rec.population, param_from_entropy(family, rec.h), d_l, d_r, cfg, key=1000 + j)
        pts.append({"target": float(target), "h": rec.h, "U": U, "se": se, "converged": rec.converged})
    return pts


def _sweep_candidates(sweep, h):
    out = []
    for a, b in zip(sweep, sweep[1:]):
        if (a["h"] - h) * (b["h"] - h) <= 0 and a["h"] != b["h"]:
            t = (h - a["h"]) / (b["h"] - a["h"])
            out.append(a["U"] + t * (b["U"] - a["U"]))
    return out


def energy_gap_upper(d_l: int, d_r: int, family: ChannelFamily, h: float, cfg: DEConfig, sweep=None, N=None):
    """min of U_s over the nontrivial fixed points found at channel entropy h (+inf if none)."""
    c = param_from_entropy(family, h)
    rec, _ = forward_de(d_l, d_r, c, cfg, N=N, trace=False)
    cands, info = [], {"h": h, "forward_decoded": rec.decoded, "forward_iters": rec.iterations}
    if not rec.decoded:
        U, se = potential_single(rec.population, c, d_l, d_r, cfg, key=1)
        cands.append(U)
        info.update(forward_U=U, forward_se=se, forward_H=rec.H)
    rx = _sweep_candidates(sweep or [], h)
    info["rx_candidates"] = rx
    cands += rx
    if not cands:
        return math.inf, info
    val = min(cands)
    info["argmin"] = "forward" if (not rec.decoded and val == cands[0]) else "rx"
    return val, info


def h_fp_upper(d_l: int, d_r: int, family: ChannelFamily, cfg: DEConfig, h_bp: float | None = None,
               use_sweep: bool = True, N=None) -> ThresholdResult:
    """sup{h : energy gap > 0} by bisection on its sign."""
    if h_bp is None:
        h_bp = bp_threshold_single(d_l, d_r, family, cfg).value
    sweep = rx_sweep(d_l, d_r, family, h_bp, cfg, N=cfg.rx_N or N) if use_sweep and cfg.rx_points > 0 else []
    lo, hi = h_bp, family.max_entropy
    steps = []
    while hi - lo > cfg.fp_tol:
        mid = 0.5 * (lo + hi)
        gap, info = energy_gap_upper(d_l, d_r, family, mid, cfg, sweep, N=N)
        steps.append({"gap": gap, **{k: v for k, v in info.items() if k != "rx_candidates"}})
        if gap > 0:
            lo = mid
        else:
            hi = mid
    return ThresholdResult({"d_l": d_l, "d_r": d_r}, {"kind": family.kind, "q": family.q},
                           0.5 * (lo + hi), 0.5 * (hi - lo),
                           {"h_bp": h_bp, "steps": steps, "sweep": sweep, "N": N or cfg.N,
                            "refit_period": cfg.refit_period})
