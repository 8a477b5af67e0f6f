import math

import numpy as np
import pytest

from fqcouple.channels import QPEC2, QSC, ChannelFamily, ChannelModel, channel_entropy, param_from_entropy
from fqcouple.coupled import (
    CoupledState, coupled_bp_threshold, coupled_de, coupled_de_step, coupled_potential, g_entropy, initial_state,
    modified_step,
)
from fqcouple.de import DEConfig, channel_draw, forward_de, potential_single
from fqcouple.ensembles import coupled_spec
from fqcouple.gf import build_field
from fqcouple.messages import chk_population, functional_eval, uniform, var_population, vertex
from fqcouple.rng import substream

C3 = param_from_entropy(ChannelFamily(QSC, 3), 0.45)


def test_perfect_channel_one_step():
    spec = coupled_spec(3, 3, 6, 3, 3, "standard")
    st = coupled_de_step(initial_state(spec, 2000), spec, ChannelModel(QSC, 3, 0.0), DEConfig())
    assert (st.x == vertex(3, 2000)[None]).all()


def test_dimension_mismatch():
    spec = coupled_spec(3, 3, 6, 3, 3, "standard")
    bad = CoupledState(np.stack([uniform(3, 10)] * 3))
    with pytest.raises(ValueError):
        coupled_de_step(bad, spec, C3, DEConfig())


@pytest.mark.parametrize("kind", ["standard", "improved"])
def test_symmetry_preserved(kind):
    spec = coupled_spec(3, 3, 6, 4, 3, kind)
    K = spec.K
    diffs = []
    for r in range(6):
        st = initial_state(spec, 5000)
        cfg = DEConfig(seed=30 + r)
        for it in range(1, 5):
            st = coupled_de_step(st, spec, C3, cfg, it)
        H = st.entropies()
        diffs.append(H[: K // 2] - H[::-1][: K // 2])
    D = np.array(diffs)
    se = D.std(0, ddof=1) / math.sqrt(len(D))
    assert (np.abs(D.mean(0)) <= 3 * se).all()


def direct_single_edge_step(x, spec, channel, rng):
    """Reference update for w = d_l: every variable spreads one edge to each of its w check positions."""
    K, n, q = x.shape
    t = build_field(q)
    w = spec.w
    out = np.empty_like(x)
    per = n // w
    for i in range(1, K + 1):
        chunks = []
        for k in range(w):
            v = i - k
            if not 1 <= v <= 2 * spec.L:
                chunks.append(vertex(q, per))
                continue
            parts = [channel_draw(channel, per, rng)]
            for j in range(w):
                if j == k:
                    continue
                src = x[v + j - 1]
                parts.append(chk_population([src[rng.integers(0, n, per)] for _ in range(spec.d_r - 1)], t))
            chunks.append(var_population(parts))
        out[i - 1] = np.concatenate(chunks)
    return out


def test_improved_w_equals_dl_matches_direct():
    spec = coupled_spec(3, 3, 6, 3, 3, "improved")
    reps, steps, n = 6, 3, 6000
    A, B = [], []
    for r in range(reps):
        st = initial_state(spec, n)
        xd = st.x.copy()
        cfg = DEConfig(seed=50 + r)
        rng = substream(900 + r)
        for it in range(1, steps + 1):
            st = coupled_de_step(st, spec, C3, cfg, it)
            xd = direct_single_edge_step(xd, spec, C3, rng)
        A.append(st.entropies())
        B.append(np.array([functional_eval(p, "H")[0] for p in xd]))
    A, B = np.array(A), np.array(B)
    se = np.sqrt(A.var(0, ddof=1) / reps + B.var(0, ddof=1) / reps)
    assert (np.abs(A.mean(0) - B.mean(0)) <= 3 * se + 1e-12).all()


def test_modified_step_copies_tail():
    spec = coupled_spec(3, 3, 6, 3, 3, "standard")
    st = modified_step(initial_state(spec, 2000), spec, C3, DEConfig(), 1)
    i0 = math.ceil(spec.K / 2)
    for i in range(i0 + 1, spec.K + 1):
        assert (st.x[i - 1] == st.x[i0 - 1]).all()
    assert st.meta["modified"]


def test_modified_degrades_original():
    spec = coupled_spec(3, 3, 6, 3, 4, "standard")
    diffs = []
    for r in range(4):
        cfg = DEConfig(N=12000, max_iters=25, seed=60 + r)
        orig, *_ = coupled_de(spec, C3, cfg)
        mod, *_ = coupled_de(spec, C3, cfg, modified=True)
        diffs.append(mod.entropies() - orig.entropies())
    D = np.array(diffs)
    se = D.std(0, ddof=1) / math.sqrt(len(D))
    assert (D.mean(0) >= -3 * se).all()


def test_boundary_converges_first():
    spec = coupled_spec(3, 3, 6, 3, 4, "improved")
    st = initial_state(spec, 5000)
    cfg = DEConfig(seed=2)
    i0 = math.ceil(spec.K / 2)
    for it in range(1, 8):
        st = coupled_de_step(st, spec, C3, cfg, it)
        (h1, s1), (hm, sm) = functional_eval(st.x[0], "H"), functional_eval(st.x[i0 - 1], "H")
        assert h1 <= hm + 3 * math.hypot(s1, sm)


def test_coupled_beats_single_on_bec():
    # (3,6) single system fails above eps = 0.4294; the L = 4 chain still decodes at 0.45
    spec = coupled_spec(2, 3, 6, 3, 4, "standard")
    c = ChannelModel(QPEC2, 2, 0.45)
    _, decoded, iters, rows = coupled_de(spec, c, DEConfig(N=8000, seed=1), trace=True)
    assert decoded
    assert rows[0].keys() == {"iter", "position", "H", "E"}
    _, decoded, *_ = coupled_de(spec, ChannelModel(QPEC2, 2, 0.56), DEConfig(N=8000, seed=1))
    assert not decoded


def test_standard_and_improved_agree_far_from_threshold():
    cfg = DEConfig(N=8000, seed=4)
    for eps, expect in ((0.40, True), (0.56, False)):
        for kind in ("standard", "improved"):
            spec = coupled_spec(2, 3, 6, 3, 4, kind)
            _, decoded, *_ = coupled_de(spec, ChannelModel(QPEC2, 2, eps), cfg)
            assert decoded is expect


def test_coupled_threshold_above_single():
    spec = coupled_spec(2, 3, 6, 3, 3, "standard")
    res = coupled_bp_threshold(spec, ChannelFamily(QPEC2, 2), DEConfig(N=4000, bisect_tol=5e-3),
                               lo=0.25, hi=0.4)
    assert res.value > 0.4294 * math.log(2)
    assert res.system["L"] == 3


def test_potential_all_vertex_is_zero():
    spec = coupled_spec(3, 3, 6, 3, 3, "improved")
    st = initial_state(spec, 1000, kind="vertex")
    U, se = coupled_potential(st, spec, C3, DEConfig())
    assert U == 0.0


@pytest.mark.parametrize("kind", ["standard", "improved"])
def test_potential_constant_state_identity(kind):
    spec = coupled_spec(3, 3, 6, 3, 3, kind)
    cfg = DEConfig(N=40000, seed=9)
    rec, _ = forward_de(3, 6, C3, DEConfig(N=20000, max_iters=10), trace=False)
    X = rec.population
    st = CoupledState(np.stack([X] * spec.K), symmetric=True)
    Uc, sc = coupled_potential(st, spec, C3, cfg)
    Us, ss = potential_single(X, C3, 3, 6, cfg, key=5)
    Hg, sg = g_entropy(st, 1, spec, C3, cfg)
    pred = spec.K * Us + (spec.w - 1) * Hg
    se = math.sqrt(sc**2 + (spec.K * ss) ** 2 + ((spec.w - 1) * sg) ** 2)
    assert abs(Uc - pred) <= 3 * se


def test_potential_vertex_vs_uninformative():
    spec = coupled_spec(3, 3, 6, 3, 3, "standard")
    cfg = DEConfig(N=20000)
    st0 = initial_state(spec, 2000, kind="uniform")
    U0, se = coupled_potential(st0, spec, C3, cfg)
    # all-uniform: every check entropy is log q and every variable term is H(c)
    K, L = spec.K, spec.L
    pred = K * (3 * math.log(3) + (0.5 - 3) * math.log(3)) - 2 * L * channel_entropy(C3)
    assert abs(U0 - pred) <= 3 * se + 1e-9
    Uv, _ = coupled_potential(initial_state(spec, 2000, kind="vertex"), spec, C3, cfg)
    assert U0 - Uv == pytest.approx(2 * L * (0.5 * math.log(3) - channel_entropy(C3))
                                    + (spec.w - 1) * 0.5 * math.log(3), abs=3 * se + 1e-9)
