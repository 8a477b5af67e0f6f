import json
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from fqcouple.ensembles import (
    INFINITE, InstanceTooLarge, brute_min_distance, brute_min_stopping_set, check_balance, coupled_spec,
    design_rate, enumerate_edge_types, make_profile, sample_graph, tanner_graph,
)


def test_edge_types_examples():
    assert enumerate_edge_types(3, 3, "improved") == [(1, 1, 1)]
    assert set(enumerate_edge_types(3, 2, "improved")) == {(1, 1, 0), (1, 0, 1), (0, 1, 1)}
    assert len(enumerate_edge_types(3, 3, "standard")) == 10
    assert enumerate_edge_types(3, 3, "single_L") == [(1, 1, 1)]


@pytest.mark.parametrize("w,d_l", [(2, 2), (3, 3), (4, 3), (5, 2), (2, 5), (6, 4)])
def test_standard_count_is_compositions(w, d_l):
    types = enumerate_edge_types(w, d_l, "standard")
    assert len(types) == len(set(types)) == comb(w + d_l - 1, d_l)
    assert all(sum(t) == d_l and len(t) == w for t in types)


def test_invalid_kinds():
    with pytest.raises(ValueError):
        enumerate_edge_types(3, 3, "bogus")
    with pytest.raises(ValueError):
        enumerate_edge_types(2, 3, "improved")
    with pytest.raises(ValueError):
        make_profile("single_L", 4, 3)


def test_profile_probabilities():
    st = make_profile("standard", 2, 2)
    p = dict(zip(st.types, st.p))
    assert p[(2, 0)] == p[(0, 2)] == Fraction(1, 4) and p[(1, 1)] == Fraction(1, 2)
    im = make_profile("improved", 3, 2)
    assert all(x == Fraction(1, 3) for x in im.p)
    assert make_profile("single_L", 3, 3).p == (Fraction(1),)
    assert st.t_max == 2 and im.t_max == 1


@pytest.mark.parametrize("kind,w,d_l", [("standard", 3, 3), ("standard", 4, 4), ("improved", 5, 3),
                                        ("improved", 6, 4), ("single_L", 4, 4)])
def test_balance_exact(kind, w, d_l):
    assert check_balance(make_profile(kind, w, d_l))


DESIGN_RATES = {
    (3, 6, 6): "0.44444", (4, 8, 6): "0.40690", (5, 10, 6): "0.36800", (6, 12, 6): "0.32831",
    (4, 6, 10): "0.25885", (6, 9, 10): "0.19598", (8, 12, 10): "0.13142", (10, 15, 10): "0.06610",
    (6, 12, 8): "0.37123", (6, 12, 10): "0.39699", (6, 12, 12): "0.41415", (6, 12, 14): "0.42642",
}


@pytest.mark.parametrize("row", sorted(DESIGN_RATES))
def test_design_rates_known_rows(row):
    assert f"{float(design_rate(*row)):.5f}" == DESIGN_RATES[row]


def test_design_rate_limit():
    assert abs(float(design_rate(3, 6, 10**9)) - 0.5) < 1e-8
    assert isinstance(design_rate(3, 6, 6), Fraction)


def test_feasible_n():
    spec = coupled_spec(4, 3, 6, 3, 6, "standard")
    # p(t) denominators 27 and 9, rate 1/2
    assert spec.n_step() == 54
    assert spec.feasible_n(20) == 54
    assert coupled_spec(4, 3, 6, 3, 6, "single_L").feasible_n(5) == 6
    with pytest.raises(ValueError):
        sample_graph(spec, 20, 0)


@pytest.mark.parametrize("kind,w", [("standard", 3), ("improved", 4), ("single_L", 3)])
def test_sample_graph_invariants(kind, w):
    spec = coupled_spec(4, 3, 6, w, 3, kind)
    n = spec.feasible_n(24)
    g = sample_graph(spec, n, 7)
    deg = g.var_degrees()
    assert (deg[~g.virtual] == 3).all()
    assert (deg[g.virtual] <= 3).all()
    assert (g.chk_degrees() == 6).all()
    assert (g.edge_label >= 1).all() and (g.edge_label < 4).all()
    assert len(g.real_vars) == 2 * spec.L * n
    vp = g.var_pos[g.virtual]
    assert ((vp < 1) | (vp > 2 * spec.L)).all()
    assert set(np.unique(g.var_pos[~g.virtual])) == set(range(1, 2 * spec.L + 1))
    # each variable at position k only touches check positions k..k+w-1
    off = g.chk_pos[g.edge_chk] - g.var_pos[g.edge_var]
    assert off.min() >= 0 and off.max() <= w - 1
    g2 = sample_graph(spec, n, 7)
    assert (g.edge_var == g2.edge_var).all() and (g.edge_chk == g2.edge_chk).all()
    assert (g.edge_label == g2.edge_label).all()
    if kind != "standard":
        pairs = set(zip(g.edge_var.tolist(), g.edge_chk.tolist()))
        assert len(pairs) == len(g.edge_var)


def test_check_spread_fraction():
    spec = coupled_spec(2, 3, 6, 3, 4, "standard")
    g = sample_graph(spec, spec.feasible_n(600), 3)
    off = g.chk_pos[g.edge_chk] - g.var_pos[g.edge_var]
    interior = (g.chk_pos[g.edge_chk] >= 3) & (g.chk_pos[g.edge_chk] <= 2 * spec.L)
    frac = np.bincount(off[interior], minlength=3) / interior.sum()
    assert np.abs(frac - 1 / 3).max() < 0.03


def test_graph_json():
    spec = coupled_spec(2, 3, 6, 3, 2, "improved")
    g = sample_graph(spec, spec.feasible_n(2), 1)
    d = json.loads(g.to_json())
    assert d["q"] == 2 and d["seed"] == 1 and len(d["edges"]) == len(g.edge_var)
    assert set(d["edges"][0]) == {"var", "chk", "label"}


def spc3():
    return tanner_graph(2, 3, 1, [(0, 0, 1), (1, 0, 1), (2, 0, 1)])


def repetition4():
    return tanner_graph(2, 4, 3, [(0, 0, 1), (1, 0, 1), (1, 1, 1), (2, 1, 1), (2, 2, 1), (3, 2, 1)])


def test_brute_distance_small():
    assert brute_min_distance(spc3()) == 2
    assert brute_min_distance(repetition4()) == 4
    full_rank = tanner_graph(2, 2, 2, [(0, 0, 1), (1, 1, 1)])
    assert brute_min_distance(full_rank) == INFINITE


def test_brute_stopping_small():
    assert brute_min_stopping_set(spc3()) == 2
    # every singleton has a degree-1 check, so the answer exceeds 1
    assert brute_min_stopping_set(repetition4()) > 1


def test_brute_distance_labels_q3():
    # v0 + 2 v1 = 0 over F_3 has the weight-2 codeword (1, 1)
    g = tanner_graph(3, 2, 1, [(0, 0, 1), (1, 0, 2)])
    assert brute_min_distance(g) == 2


def test_brute_distance_exhaustive_self_oracle():
    spec = coupled_spec(2, 3, 6, 3, 1, "improved")
    n = spec.feasible_n(4)
    g = sample_graph(spec, n, 5)
    from itertools import product
    real = g.real_vars
    best = INFINITE
    for bits in product([0, 1], repeat=len(real)):
        if not any(bits):
            continue
        x = np.zeros(g.n_vars, dtype=np.int64)
        x[real] = bits
        s = np.bincount(g.edge_chk, weights=x[g.edge_var], minlength=g.n_checks) % 2
        if not s.any():
            best = min(best, sum(bits))
    assert brute_min_distance(g) == best


def test_stopping_set_label_invariant_and_cross_oracle():
    spec = coupled_spec(4, 3, 6, 3, 1, "improved")
    g = sample_graph(spec, spec.feasible_n(4), 2)
    ss = brute_min_stopping_set(g)
    g2 = sample_graph(spec, spec.feasible_n(4), 2)
    g2.edge_label = np.ones_like(g2.edge_label)
    assert brute_min_stopping_set(g2) == ss
    # any codeword support is a stopping set
    assert brute_min_distance(g) >= ss


def test_too_large():
    spec = coupled_spec(2, 3, 6, 3, 4, "improved")
    g = sample_graph(spec, spec.feasible_n(10), 0)
    with pytest.raises(InstanceTooLarge):
        brute_min_stopping_set(g)
    with pytest.raises(InstanceTooLarge):
        brute_min_distance(g)
