"""q-ary symmetric channel and partial-erasure channel (erasure set of size 2)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import substream

QSC, QPEC2 = "QSC", "QPEC2"


@dataclass(frozen=True)
class ChannelModel:
    kind: str
    q: int
    param: float

    def __post_init__(self):
        if self.kind == QSC:
            hi = (self.q - 1) / self.q
        elif self.kind == QPEC2:
            hi = 1.0
        else:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if not 0.0 <= self.param <= hi + 1e-15:
            raise ValueError(f"{self.kind} parameter {self.param} outside [0, {hi}]")


@dataclass(frozen=True)
class ChannelFamily:
    kind: str
    q: int
    tol: float = 1e-10

    @property
    def max_entropy(self) -> float:
        return math.log(self.q) if self.kind == QSC else math.log(2)

    @property
    def max_param(self) -> float:
        return (self.q - 1) / self.q if self.kind == QSC else 1.0


def channel_entropy(model: ChannelModel) -> float:
    e, q = model.param, model.q
    if model.kind == QPEC2:
        return e * math.log(2)
    if e == 0:
        return 0.0
    if e >= 1:
        return math.log(q - 1)
    return -e * math.log(e / (q - 1)) - (1 - e) * math.log1p(-e)


def param_from_entropy(family: ChannelFamily, h: float) -> ChannelModel:
    if not -1e-12 <= h <= family.max_entropy + 1e-12:
        raise ValueError(f"entropy {h} outside [0, {family.max_entropy}]")
    h = min(max(h, 0.0), family.max_entropy)
    if family.kind == QPEC2:
        return ChannelModel(QPEC2, family.q, h / math.log(2))
    lo, hi = 0.0, family.max_param
    while hi - lo > 1e-15:
        mid = 0.5 * (lo + hi)
        if channel_entropy(ChannelModel(QSC, family.q, mid)) < h:
            lo = mid
        else:
            hi = mid
        if abs(channel_entropy(ChannelModel(QSC, family.q, 0.5 * (lo + hi))) - h) < family.tol * 1e-2:
            break
    return ChannelModel(QSC, family.q, 0.5 * (lo + hi))


def messages_from_uniforms(model: ChannelModel, u: np.ndarray) -> np.ndarray:
    """Map iid U(0,1) draws to conditional-on-zero APP vectors (inverse-CDF)."""
    q, e = model.q, model.param
    N = len(u)
    # symbol 0 with prob 1-e, else j = 1..q-1 with prob e/(q-1) each
    frac = np.clip((u - (1 - e)) / max(e, 1e-300), 0.0, 1.0)
    j = np.where(u < 1 - e, 0, 1 + np.minimum((frac * (q - 1)).astype(np.int64), q - 2))
    rows = np.arange(N)
    if model.kind == QSC:
        Y = np.full((N, q), e / (q - 1))
        Y[rows, j] = 1 - e
    else:
        Y = np.zeros((N, q))
        Y[rows, 0] = np.where(j == 0, 1.0, 0.5)
        Y[rows, j] += np.where(j == 0, 0.0, 0.5)
    return Y


def sample_channel_messages(model: ChannelModel, N: int, seed: int, *key: int) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be positive")
    return messages_from_uniforms(model, substream(seed, *key).random(N))
