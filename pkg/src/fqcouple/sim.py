"""Finite-length Monte Carlo: all-zero transmission over sampled coupled graphs with labeled BP."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest

from ._kernels import chk_pair
from .channels import ChannelFamily, ChannelModel, messages_from_uniforms, param_from_entropy
from .ensembles import CoupledGraph, CoupledSpec, sample_graph
from .gf import FieldTables, build_field
from .messages import vertex
from .rng import substream

CLAMP = 1e-300
TIE = 1e-9


@dataclass
class DecodeResult:
    converged: bool
    iterations: int
    symbol_errors: int
    per_position_errors: dict = field(default_factory=dict)
    decisions: np.ndarray | None = field(default=None, repr=False)
    undecided: np.ndarray | None = field(default=None, repr=False)


def transmit_all_zero(graph: CoupledGraph, model: ChannelModel, seed: int, *key: int) -> np.ndarray:
    msgs = messages_from_uniforms(model, substream(seed, *key).random(graph.n_vars))
    msgs[graph.virtual] = vertex(graph.q)[0]
    return msgs


class _Schedule:
    """Edge bookkeeping for flooding BP, grouped by check degree."""

    def __init__(self, graph: CoupledGraph, tables: FieldTables):
        order = np.lexsort((np.arange(len(graph.edge_chk)), graph.edge_chk))
        deg = graph.chk_degrees()
        self.groups = []
        starts = np.concatenate([[0], np.cumsum(deg)])
        for d in np.unique(deg[deg > 0]):
            chks = np.flatnonzero(deg == d)
            rows = np.stack([order[starts[c]:starts[c] + d] for c in chks])
            self.groups.append(rows)
        self.labels = graph.edge_label
        self.tables = tables


def _check_update(v2c: np.ndarray, sched: _Schedule) -> np.ndarray:
    t = sched.tables
    q = t.q
    c2v = np.empty_like(v2c)
    for rows in sched.groups:
        M, d = rows.shape
        lab = sched.labels[rows]
        # z[:, s] = distribution of label_s * V_s
        z = np.zeros((M, d, q))
        for s in range(d):
            np.put_along_axis(z[:, s], t.mul[lab[:, s]], v2c[rows[:, s]], axis=1)
        delta = np.zeros((M, q))
        delta[:, 0] = 1.0
        fwd = [delta]
        for s in range(d - 1):
            fwd.append(chk_pair(fwd[-1], z[:, s], t.add))
        bwd = [delta]
        for s in range(d - 1, 0, -1):
            bwd.append(chk_pair(bwd[-1], z[:, s], t.add))
        bwd = bwd[::-1]
        for s in range(d):
            excl = chk_pair(fwd[s], bwd[s], t.add)
            out = np.take_along_axis(excl, t.neg[t.mul[lab[:, s]]], axis=1)
            out = np.maximum(out / out.sum(1, keepdims=True), CLAMP)
            c2v[rows[:, s]] = out / out.sum(1, keepdims=True)
    return c2v


def _syndrome_ok(graph: CoupledGraph, dec: np.ndarray, sched: _Schedule) -> bool:
    t = sched.tables
    contrib = t.mul[graph.edge_label, dec[graph.edge_var]]
    for rows in sched.groups:
        s = np.zeros(rows.shape[0], dtype=np.int64)
        for j in range(rows.shape[1]):
            s = t.add[s, contrib[rows[:, j]]]
        if s.any():
            return False
    return True


def _decide(logpost: np.ndarray):
    """Hard decisions plus a mask of symbols whose maximum is not unique.

    Ties (erasures) must not count as correct just because argmax returns the
    all-zero symbol first.
    """
    dec = np.argmax(logpost, axis=1)
    top = logpost[np.arange(len(dec)), dec]
    tied = (logpost >= top[:, None] - TIE).sum(1) > 1
    return dec, tied


def bp_decode(graph: CoupledGraph, channel_msgs: np.ndarray, max_iters: int, tables: FieldTables | None = None,
              ) -> DecodeResult:
    t = tables or build_field(graph.q)
    sched = _Schedule(graph, t)
    logch = np.log(np.maximum(channel_msgs, CLAMP))
    v2c = np.maximum(channel_msgs[graph.edge_var], CLAMP)
    v2c /= v2c.sum(1, keepdims=True)
    real = ~graph.virtual
    dec, tied = _decide(logch)
    it = 0
    converged = not tied[real].any() and _syndrome_ok(graph, dec, sched)
    while not converged and it < max_iters:
        it += 1
        c2v = _check_update(v2c, sched)
        logc2v = np.log(c2v)
        post = logch.copy()
        np.add.at(post, graph.edge_var, logc2v)
        dec, tied = _decide(post)
        ext = post[graph.edge_var] - logc2v
        ext -= ext.max(1, keepdims=True)
        v2c = np.maximum(np.exp(ext), CLAMP)
        v2c /= v2c.sum(1, keepdims=True)
        converged = not tied[real].any() and _syndrome_ok(graph, dec, sched)
    dec = np.where(graph.virtual, 0, dec)
    wrong = ((dec != 0) | tied) & real
    per_pos = {}
    if graph.var_pos is not None:
        for k in np.unique(graph.var_pos[wrong]):
            per_pos[int(k)] = int(np.sum(wrong & (graph.var_pos == k)))
    return DecodeResult(bool(converged), it, int(wrong.sum()), per_pos, dec, tied & real)


def wilson_interval(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    ci = binomtest(k, n).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def _trial(args):
    spec, n, family, h, seed, hi, trial, max_iters, fixed_graph = args
    gseed = seed if fixed_graph else int(substream(seed, 31, trial).integers(0, 2**31 - 1))
    g = sample_graph(spec, n, gseed)
    msgs = transmit_all_zero(g, param_from_entropy(family, h), seed, 32, hi, trial)
    r = bp_decode(g, msgs, max_iters)
    return r.symbol_errors, len(g.real_vars)


def fer_curve(spec: CoupledSpec, n: int, family: ChannelFamily, h_list, trials: int, seed: int,
              max_iters: int = 100, fixed_graph: bool = False, workers: int = 1) -> list[dict]:
    """Frame and symbol error rates with Wilson intervals on the frame error rate."""
    if trials < 1:
        raise ValueError("trials must be positive")
    rows = []
    for hi, h in enumerate(h_list):
        jobs = [(spec, n, family, float(h), seed, hi, t, max_iters, fixed_graph) for t in range(trials)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                res = list(ex.map(_trial, jobs))
        else:
            res = [_trial(j) for j in jobs]
        errs = np.array([r[0] for r in res])
        nsym = res[0][1]
        fails = int(np.sum(errs > 0))
        lo, up = wilson_interval(fails, trials)
        rows.append({"h": float(h), "trials": trials, "FER": fails / trials,
                     "SER": float(errs.sum() / (nsym * trials)), "ci_lo": lo, "ci_hi": up})
    return rows
