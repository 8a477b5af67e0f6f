import math

import numpy as np
import pytest

from fqcouple.channels import (
    QPEC2, QSC, ChannelFamily, ChannelModel, channel_entropy, param_from_entropy, sample_channel_messages,
)
from fqcouple.messages import functional_eval


def test_entropy_examples():
    assert channel_entropy(ChannelModel(QSC, 3, 2 / 3)) == pytest.approx(math.log(3))
    assert channel_entropy(ChannelModel(QSC, 5, 0.0)) == 0.0
    assert channel_entropy(ChannelModel(QPEC2, 4, 0.3)) == pytest.approx(0.3 * math.log(2))


def test_invalid_models():
    with pytest.raises(ValueError):
        ChannelModel(QSC, 3, 0.9)
    with pytest.raises(ValueError):
        ChannelModel("AWGN", 3, 0.1)


def test_param_from_entropy_examples():
    assert param_from_entropy(ChannelFamily(QSC, 3), math.log(3)).param == pytest.approx(2 / 3)
    assert param_from_entropy(ChannelFamily(QPEC2, 2), 0.5 * math.log(2)).param == pytest.approx(0.5)
    with pytest.raises(ValueError):
        param_from_entropy(ChannelFamily(QSC, 3), 1.2)


@pytest.mark.parametrize("q", [2, 3, 4, 7])
def test_roundtrip(q):
    fam = ChannelFamily(QSC, q)
    for h in np.linspace(0, math.log(q), 13):
        assert channel_entropy(param_from_entropy(fam, h)) == pytest.approx(h, abs=1e-9)


def test_entropy_monotone():
    eps = np.linspace(0, 2 / 3, 50)
    h = [channel_entropy(ChannelModel(QSC, 3, e)) for e in eps]
    assert np.all(np.diff(h) > 0)


def test_noiseless_samples_are_vertices():
    Y = sample_channel_messages(ChannelModel(QSC, 4, 0.0), 100, 0)
    assert (Y[:, 0] == 1).all()


def test_sample_shapes_and_determinism():
    m = ChannelModel(QSC, 3, 0.2)
    a = sample_channel_messages(m, 1000, 3, 1)
    b = sample_channel_messages(m, 1000, 3, 1)
    assert (a == b).all()
    assert np.allclose(a.sum(1), 1) and (a[:, 0] > 0).all()
    with pytest.raises(ValueError):
        sample_channel_messages(m, 0, 1)


@pytest.mark.parametrize("q,eps", [(3, 0.2), (4, 0.1), (5, 0.5)])
def test_qsc_bhattacharyya(q, eps):
    Y = sample_channel_messages(ChannelModel(QSC, q, eps), 200_000, 1)
    est, se = functional_eval(Y, "B")
    expect = (2 * math.sqrt((q - 1) * eps * (1 - eps)) + (q - 2) * eps) / (q - 1)
    assert abs(est - expect) <= 3 * se + 1e-12


@pytest.mark.parametrize("q,eps", [(2, 0.3), (3, 0.6), (4, 0.2)])
def test_qpec_bhattacharyya(q, eps):
    Y = sample_channel_messages(ChannelModel(QPEC2, q, eps), 200_000, 2)
    est, se = functional_eval(Y, "B")
    assert abs(est - eps / (q - 1)) <= 3 * se + 1e-12


@pytest.mark.parametrize("kind,q", [(QSC, 3), (QSC, 4), (QPEC2, 3)])
def test_entropy_estimate_matches(kind, q):
    fam = ChannelFamily(kind, q)
    for h in np.linspace(0.05, 0.95, 5) * fam.max_entropy:
        Y = sample_channel_messages(param_from_entropy(fam, h), 100_000, 4)
        for method in ("allshift", "logy0"):
            est, se = functional_eval(Y, "H", method)
            assert abs(est - h) <= 3 * se + 1e-9


def test_family_monotone_functionals():
    fam = ChannelFamily(QSC, 3)
    vals = []
    for h in (0.3, 0.6, 0.9):
        # common random numbers keep the comparison sharp
        Y = sample_channel_messages(param_from_entropy(fam, h), 100_000, 5)
        vals.append({w: functional_eval(Y, w)[0] for w in "BHPEQ"})
    for lo, hi in zip(vals, vals[1:]):
        for w in "BHPE":
            assert hi[w] > lo[w]
        assert hi["Q"] < lo["Q"]
