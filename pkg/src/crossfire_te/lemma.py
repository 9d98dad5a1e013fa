"""Coupling probability of a fixed non-target node with the target.

If the affected node set is any subset of ``n`` nodes that contains the
target and has at most ``k`` members, all such subsets equally likely, the
chance that a given other node is in it is ``p_k = f_k / g_k`` with

    g_k = sum_{m=1..k} C(n-1, m-1)      (subsets containing the target)
    f_k = sum_{m=1..k} C(n-2, m-2)      (... that also contain the fixed node)

Everything is computed with Python integers and Fractions.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import comb

BRUTEFORCE_MAX_N = 20


def binom(a: int, b: int) -> int:
    """C(a, b) with C(a, b) = 0 whenever b < 0 or b > a."""
    if b < 0 or a < 0 or b > a:
        return 0
    return comb(a, b)


@dataclass(frozen=True)
class CouplingProbability:
    n: int
    k: int
    g_k: int
    f_k: int

    @property
    def p_k(self) -> Fraction:
        return Fraction(self.f_k, self.g_k)


def _check(n: int, k: int):
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")


def coupling_probability(n: int, k: int) -> CouplingProbability:
    _check(n, k)
    g = sum(binom(n - 1, m - 1) for m in range(1, k + 1))
    f = sum(binom(n - 2, m - 2) for m in range(1, k + 1))
    return CouplingProbability(n, k, g, f)


def coupling_probability_bruteforce(n: int, k: int) -> Fraction:
    """Same quantity by listing every qualifying subset; node 0 is the target, node 1 the fixed node."""
    _check(n, k)
    if n > BRUTEFORCE_MAX_N:
        raise ValueError(f"enumeration refused for n > {BRUTEFORCE_MAX_N}")
    others = range(1, n)
    total = hits = 0
    for size in range(0, k):
        for rest in itertools.combinations(others, size):
            total += 1
            hits += 1 in rest
    return Fraction(hits, total)


def monotonicity_check(n: int) -> bool:
    """True iff p_{k+1} > p_k for every k in [1, n-1]."""
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    ps = [coupling_probability(n, k).p_k for k in range(1, n + 1)]
    return all(b > a for a, b in zip(ps, ps[1:]))


def table(n: int) -> list[CouplingProbability]:
    return [coupling_probability(n, k) for k in range(1, n + 1)]
