"""Finite-field tables for F_q, the additive character and the length-q DFT."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import product

import numpy as np


class NotPrimePower(ValueError):
    pass


def factor_prime_power(q: int) -> tuple[int, int]:
    """Return (p, r) with q = p**r, or raise NotPrimePower."""
    if q < 2:
        raise NotPrimePower(f"q={q} is not a prime power")
    p = next(d for d in range(2, q + 1) if q % d == 0)
    r, m = 0, q
    while m % p == 0:
        m //= p
        r += 1
    if m != 1:
        raise NotPrimePower(f"q={q} has at least two distinct prime factors")
    return p, r


def _polymod(a: list[int], mod: list[int], p: int) -> list[int]:
    # mod is monic; coefficients ascending
    a = list(a)
    r = len(mod) - 1
    for k in range(len(a) - 1, r - 1, -1):
        c = a[k] % p
        if c:
            for i in range(r + 1):
                a[k - r + i] = (a[k - r + i] - c * mod[i]) % p
    out = [x % p for x in a[:r]]
    return out + [0] * (r - len(out))


def _is_irreducible(mod: list[int], p: int) -> bool:
    r = len(mod) - 1
    for d in range(1, r // 2 + 1):
        for low in product(range(p), repeat=d):
            div = list(low) + [1]
            if not any(_polymod(mod, div, p)):
                return False
    return True


def canonical_modulus(p: int, r: int) -> tuple[int, ...]:
    """Smallest monic irreducible polynomial of degree r over F_p.

    Coefficients are ascending (constant term first, leading 1 last). Candidates
    are ordered by the base-p integer whose digit i is the coefficient of x^i.
    """
    if r == 1:
        return (0, 1)
    for code in range(p**r):
        low = [(code // p**i) % p for i in range(r)]
        if low[0] == 0:
            continue
        mod = low + [1]
        if _is_irreducible(mod, p):
            return tuple(mod)
    raise RuntimeError("no irreducible polynomial found")


@dataclass(frozen=True)
class FieldSpec:
    q: int
    p: int
    r: int
    modulus: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class FieldTables:
    spec: FieldSpec
    add: np.ndarray
    mul: np.ndarray
    inv: np.ndarray
    neg: np.ndarray
    trace: np.ndarray
    character: np.ndarray

    @property
    def q(self) -> int:
        return self.spec.q

    @property
    def chi_matrix(self) -> np.ndarray:
        """Matrix M[k, i] = chi(k*i)."""
        return self.character[self.mul]


def _digits(v: int, p: int, r: int) -> list[int]:
    return [(v // p**i) % p for i in range(r)]


def _undigits(d: list[int], p: int) -> int:
    return sum(c * p**i for i, c in enumerate(d))


@lru_cache(maxsize=None)
def build_field(q: int) -> FieldTables:
    p, r = factor_prime_power(q)
    modulus = canonical_modulus(p, r)
    digits = [_digits(v, p, r) for v in range(q)]

    add = np.empty((q, q), dtype=np.int64)
    mul = np.empty((q, q), dtype=np.int64)
    for a in range(q):
        for b in range(q):
            add[a, b] = _undigits([(x + y) % p for x, y in zip(digits[a], digits[b])], p)
            prod = [0] * (2 * r - 1)
            for i, x in enumerate(digits[a]):
                if x:
                    for j, y in enumerate(digits[b]):
                        prod[i + j] += x * y
            mul[a, b] = _undigits(_polymod(prod, list(modulus), p), p)

    inv = np.full(q, -1, dtype=np.int64)
    for a in range(1, q):
        inv[a] = int(np.flatnonzero(mul[a] == 1)[0])
    neg = np.array([int(np.flatnonzero(add[a] == 0)[0]) for a in range(q)], dtype=np.int64)

    trace = np.empty(q, dtype=np.int64)
    for v in range(q):
        acc, power = 0, v
        for _ in range(r):
            acc = add[acc, power]
            nxt = 1
            for _ in range(p):
                nxt = mul[nxt, power]
            power = nxt
        # the trace lands in the prime subfield, encoded as 0..p-1
        assert acc < p
        trace[v] = acc
    character = np.exp(2j * np.pi * trace / p)

    for arr in (add, mul, inv, neg, trace, character):
        arr.setflags(write=False)
    return FieldTables(FieldSpec(q, p, r, modulus), add, mul, inv, neg, trace, character)


def dft(v, tables: FieldTables) -> np.ndarray:
    """f_i = sum_k v_k chi(k i). Works on the last axis."""
    v = np.asarray(v)
    if v.shape[-1] != tables.q:
        raise ValueError(f"expected length {tables.q}, got {v.shape[-1]}")
    return v @ tables.chi_matrix


def idft(f, tables: FieldTables) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[-1] != tables.q:
        raise ValueError(f"expected length {tables.q}, got {f.shape[-1]}")
    # chi_matrix is symmetric and chi(-x) = conj(chi(x))
    return (f @ np.conj(tables.chi_matrix)) / tables.q
