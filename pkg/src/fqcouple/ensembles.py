"""Edge-spreading profiles, coupled chain geometry, graph sampling and tiny brute-force oracles."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .gf import build_field
from .rng import substream

KINDS = ("standard", "improved", "single_L")
INFINITE = math.inf


class InstanceTooLarge(ValueError):
    pass


def enumerate_edge_types(w: int, d_l: int, kind: str) -> list[tuple[int, ...]]:
    if kind not in KINDS:
        raise ValueError(f"unknown profile kind {kind!r}")
    if d_l < 1 or w < 1:
        raise ValueError("w and d_l must be positive")
    if kind == "single_L":
        if w != d_l:
            raise ValueError("single_L needs w == d_l")
        return [(1,) * w]
    if kind == "improved":
        if w < d_l:
            raise ValueError("improved profile needs w >= d_l")
        out = []
        for ones in itertools.combinations(range(w), d_l):
            t = [0] * w
            for i in ones:
                t[i] = 1
            out.append(tuple(t))
        return sorted(out, reverse=True)
    # compositions of d_l into w nonnegative parts, via stars and bars
    out = []
    for bars in itertools.combinations(range(d_l + w - 1), w - 1):
        prev, t = -1, []
        for b in bars:
            t.append(b - prev - 1)
            prev = b
        t.append(d_l + w - 2 - prev)
        out.append(tuple(t))
    return sorted(out, reverse=True)


@dataclass(frozen=True)
class SpreadingProfile:
    kind: str
    w: int
    d_l: int
    types: tuple[tuple[int, ...], ...]
    p: tuple[Fraction, ...]

    @property
    def t_max(self) -> int:
        return max(max(t) for t in self.types)

    def type_matrix(self) -> np.ndarray:
        return np.array(self.types, dtype=float)

    def p_array(self) -> np.ndarray:
        return np.array([float(x) for x in self.p])


def check_balance(profile: SpreadingProfile) -> bool:
    """Exact check that every offset sees d_l/w edges per variable node on average."""
    if sum(profile.p) != 1:
        return False
    target = Fraction(profile.d_l, profile.w)
    for i in range(profile.w):
        if sum(pt * t[i] for pt, t in zip(profile.p, profile.types)) != target:
            return False
    return True


def make_profile(kind: str, w: int, d_l: int) -> SpreadingProfile:
    types = enumerate_edge_types(w, d_l, kind)
    if kind == "standard":
        p = [Fraction(math.factorial(d_l), math.prod(math.factorial(x) for x in t) * w**d_l) for t in types]
    else:
        p = [Fraction(1, len(types))] * len(types)
    prof = SpreadingProfile(kind, w, d_l, tuple(types), tuple(p))
    if not check_balance(prof):
        raise AssertionError("edge-spreading balance violated")
    return prof


def design_rate(d_l: int, d_r: int, L: int) -> Fraction:
    s = sum(Fraction(i, d_l) ** d_l for i in range(1, d_l))
    ratio = Fraction(d_l, d_r)
    return (1 - ratio) - ratio * (d_l - 1 - 2 * s) / (2 * L)


@dataclass(frozen=True)
class CoupledSpec:
    q: int
    d_l: int
    d_r: int
    w: int
    L: int
    profile: SpreadingProfile

    def __post_init__(self):
        if self.d_l < 2 or self.d_r < 2 or self.L < 1 or self.w < self.d_l:
            raise ValueError(f"invalid coupled parameters {self.as_dict()}")
        if self.profile.w != self.w or self.profile.d_l != self.d_l:
            raise ValueError("profile does not match (w, d_l)")

    @property
    def K(self) -> int:
        return 2 * self.L + self.w - 1

    @property
    def kind(self) -> str:
        return self.profile.kind

    def as_dict(self) -> dict:
        return {"q": self.q, "d_l": self.d_l, "d_r": self.d_r, "w": self.w, "L": self.L,
                "kind": self.profile.kind}

    def n_step(self) -> int:
        """Least n for which every p(t) n and (d_l/d_r) n are integers."""
        dens = [x.denominator for x in self.profile.p]
        dens.append(Fraction(self.d_l, self.d_r).denominator)
        return math.lcm(*dens)

    def feasible_n(self, n: int) -> int:
        step = self.n_step()
        return max(step, -(-n // step) * step)


def coupled_spec(q: int, d_l: int, d_r: int, w: int, L: int, kind: str = "standard") -> CoupledSpec:
    return CoupledSpec(q, d_l, d_r, w, L, make_profile(kind, w, d_l))


@dataclass(eq=False)
class CoupledGraph:
    """Labeled Tanner graph. Virtual variable nodes are known to be zero."""

    q: int
    n_vars: int
    n_checks: int
    edge_var: np.ndarray
    edge_chk: np.ndarray
    edge_label: np.ndarray
    virtual: np.ndarray
    var_pos: np.ndarray | None = None
    var_type: np.ndarray | None = None
    chk_pos: np.ndarray | None = None
    spec: CoupledSpec | None = None
    n: int | None = None
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def real_vars(self) -> np.ndarray:
        return np.flatnonzero(~self.virtual)

    def var_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_var, minlength=self.n_vars)

    def chk_degrees(self) -> np.ndarray:
        return np.bincount(self.edge_chk, minlength=self.n_checks)

    def to_json(self) -> str:
        spec = None
        if self.spec is not None:
            spec = self.spec.as_dict()
        edges = [{"var": int(v), "chk": int(c), "label": int(l)}
                 for v, c, l in zip(self.edge_var, self.edge_chk, self.edge_label)]
        return json.dumps({"q": self.q, "spec": spec, "n": self.n, "seed": self.seed,
                           "virtual": [int(v) for v in np.flatnonzero(self.virtual)],
                           "edges": edges})


def tanner_graph(q: int, n_vars: int, n_checks: int, edges, virtual=None) -> CoupledGraph:
    """Build a graph from (var, chk, label) triples."""
    e = np.array(edges, dtype=np.int64).reshape(-1, 3)
    if np.any(e[:, 2] <= 0) or np.any(e[:, 2] >= q):
        raise ValueError("labels must lie in F_q^x")
    virt = np.zeros(n_vars, dtype=bool)
    if virtual is not None:
        virt[list(virtual)] = True
    return CoupledGraph(q, n_vars, n_checks, e[:, 0].copy(), e[:, 1].copy(), e[:, 2].copy(), virt)


def sample_graph(spec: CoupledSpec, n: int, seed: int) -> CoupledGraph:
    prof = spec.profile
    if any((pt * n).denominator != 1 for pt in prof.p) or (Fraction(spec.d_l, spec.d_r) * n).denominator != 1:
        raise ValueError(f"n={n} gives non-integral node counts; try {spec.feasible_n(n)}")
    w, L, K = spec.w, spec.L, spec.K
    m = spec.d_l * n // spec.d_r
    counts = [int(pt * n) for pt in prof.p]

    # variable positions 2-w..0 and 2L+1..2L+w-1 are virtual and pinned to zero
    positions = list(range(2 - w, 2 * L + w))
    var_pos, var_type, virtual = [], [], []
    for k in positions:
        for ti, c in enumerate(counts):
            var_pos += [k] * c
            var_type += [ti] * c
            virtual += [not (1 <= k <= 2 * L)] * c
    var_pos = np.array(var_pos, dtype=np.int64)
    var_type = np.array(var_type, dtype=np.int64)
    virtual = np.array(virtual, dtype=bool)
    types = np.array(prof.types, dtype=np.int64)

    edge_var, edge_chk, edge_label = [], [], []
    for j in range(1, K + 1):
        # arcs landing at check position j, in a fixed canonical order
        arcs = []
        for i in range(w):
            k = j - i
            sel = np.flatnonzero(var_pos == k)
            mult = types[var_type[sel], i]
            arcs.append(np.repeat(sel, mult))
        arcs = np.concatenate(arcs)
        assert len(arcs) == spec.d_l * n
        rng = substream(seed, j)
        perm = rng.permutation(len(arcs))
        sockets = np.empty(len(arcs), dtype=np.int64)
        sockets[perm] = np.arange(len(arcs))
        edge_var.append(arcs)
        edge_chk.append((j - 1) * m + sockets // spec.d_r)
        edge_label.append(rng.integers(1, spec.q, size=len(arcs)))
    g = CoupledGraph(
        spec.q, len(var_pos), K * m,
        np.concatenate(edge_var), np.concatenate(edge_chk), np.concatenate(edge_label),
        virtual, var_pos, var_type, np.repeat(np.arange(1, K + 1), m), spec, n, seed,
    )
    return g


def _parity_matrix(graph: CoupledGraph, q: int):
    """Dense check-by-real-variable matrix over F_q; parallel edges add up."""
    tab = build_field(q)
    real = graph.real_vars
    col = -np.ones(graph.n_vars, dtype=np.int64)
    col[real] = np.arange(len(real))
    H = np.zeros((graph.n_checks, len(real)), dtype=np.int64)
    for v, c, l in zip(graph.edge_var, graph.edge_chk, graph.edge_label):
        if col[v] >= 0:
            H[c, col[v]] = tab.add[H[c, col[v]], l]
    return H, tab


def brute_min_distance(graph: CoupledGraph, q: int | None = None, limit: int = 2**24):
    q = graph.q if q is None else q
    H, tab = _parity_matrix(graph, q)
    nv = H.shape[1]
    if q**nv > limit:
        raise InstanceTooLarge(f"{q}^{nv} vectors exceeds limit {limit}")
    for wt in range(1, nv + 1):
        for support in itertools.combinations(range(nv), wt):
            cols = H[:, support]
            for vals in itertools.product(range(1, q), repeat=wt):
                s = np.zeros(H.shape[0], dtype=np.int64)
                for c, v in zip(cols.T, vals):
                    s = tab.add[s, tab.mul[c, v]]
                if not s.any():
                    return wt
    return INFINITE


def brute_min_stopping_set(graph: CoupledGraph, limit: int = 24):
    real = graph.real_vars
    nv = len(real)
    if nv > limit:
        raise InstanceTooLarge(f"{nv} variable nodes exceeds limit {limit}")
    col = -np.ones(graph.n_vars, dtype=np.int64)
    col[real] = np.arange(nv)
    M = np.zeros((graph.n_checks, nv), dtype=np.int64)
    for v, c in zip(graph.edge_var, graph.edge_chk):
        if col[v] >= 0:
            M[c, col[v]] += 1
    for size in range(1, nv + 1):
        combos = itertools.combinations(range(nv), size)
        while True:
            batch = list(itertools.islice(combos, 4096))
            if not batch:
                break
            idx = np.array(batch)
            cnt = M[:, idx].sum(axis=2)
            ok = ~(cnt == 1).any(axis=0)
            if ok.any():
                return size
    return INFINITE
