"""Exact counting behind the moment argument for the hard vector.

Z_k = (||T D x / sqrt(m)||^2 - 1)^k for x = (1, ..., 1, 0, ...) / sqrt(s), and
its expectation counts the tuples of k triples (i, j, h) in [m] x [s] x [s],
j != h, that touch every column and every diagonal an even number of times:

    E[Z_k] = Gamma_k / (s^k m^k).

Everything here is computed exactly, with Python integers and Fractions.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import InvalidArgument, ResourceLimit, Tuple

DEFAULT_BUDGET = 10**8


@dataclass(frozen=True)
class GammaParams:
    m: int
    s: int
    k: int

    def __post_init__(self):
        if self.m < 1 or self.s < 2 or self.k < 0:
            raise InvalidArgument(f"need m >= 1, s >= 2, k >= 0; got {self}")

    @property
    def triples(self) -> int:
        """Number of admissible triples (i, j, h) with j != h."""
        return self.m * self.s * (self.s - 1)

    @property
    def diagonals(self) -> range:
        return range(-(self.m - 1), self.s)


def _check_budget(cost: int, budget: int, what: str):
    if cost > budget:
        raise ResourceLimit(f"{what} needs {cost} steps, above the budget of {budget}")


def all_triples(m: int, s: int):
    return [(i, j, h) for i in range(1, m + 1) for j in range(1, s + 1) for h in range(1, s + 1) if j != h]


def _triple_mask(p: GammaParams, t) -> int:
    """Parity bits touched by a triple: columns at 0..s-1, diagonals after."""
    i, j, h = t
    base = p.s + p.m - 1  # diagonal a sits at bit s + a + m - 1
    return (1 << (j - 1)) | (1 << (h - 1)) | (1 << (base + j - i)) | (1 << (base + h - i))


def is_even_tuple(p: GammaParams, S) -> bool:
    """Whether every column and diagonal is touched an even number of times."""
    acc = 0
    for t in S:
        if t[1] == t[2]:
            return False
        acc ^= _triple_mask(p, t)
    return acc == 0


def iter_gamma(p: GammaParams, budget: int = DEFAULT_BUDGET):
    """Yield every tuple counted by Gamma_k, in lexicographic order."""
    _check_budget(p.triples**p.k, budget, f"enumerating Gamma_{p.k}")
    triples = all_triples(p.m, p.s)
    masks = [_triple_mask(p, t) for t in triples]
    chosen: list = []

    def rec(depth: int, acc: int):
        if depth == p.k:
            if acc == 0:
                yield Tuple(tuple(chosen))
            return
        # each triple flips four parity bits
        if acc.bit_count() > 4 * (p.k - depth):
            return
        for t, mk in zip(triples, masks):
            chosen.append(t)
            yield from rec(depth + 1, acc ^ mk)
            chosen.pop()

    yield from rec(0, 0)


def _mask_counts(p: GammaParams, steps: int) -> Counter:
    counts = Counter({0: 1})
    masks = Counter(_triple_mask(p, t) for t in all_triples(p.m, p.s))
    for _ in range(steps):
        nxt: Counter = Counter()
        for acc, c in counts.items():
            for mk, w in masks.items():
                nxt[acc ^ mk] += c * w
        counts = nxt
    return counts


def enumerate_gamma(p: GammaParams, budget: int = DEFAULT_BUDGET) -> int:
    """Gamma_k: the number of ordered k-tuples of triples with all touches even.

    Counted exactly by meeting in the middle: a k-tuple is even iff its first
    ceil(k/2) and last floor(k/2) triples have equal parity masks.
    """
    _check_budget(p.triples**p.k, budget, f"enumerating Gamma_{p.k}")
    first = _mask_counts(p, (p.k + 1) // 2)
    second = first if p.k % 2 == 0 else _mask_counts(p, p.k // 2)
    return sum(c * second.get(mk, 0) for mk, c in first.items())


def _sign_table(bits: int) -> np.ndarray:
    """All 2**bits sign vectors as rows of +/-1, row r having bit q of r at column q."""
    r = np.arange(1 << bits, dtype=np.int64)[:, None]
    return (((r >> np.arange(bits)) & 1) * 2 - 1).astype(np.int64)


def q_distribution_bruteforce(m: int, s: int, budget: int = DEFAULT_BUDGET) -> Counter:
    """Distribution of Q = sum_i (sum_j t[j-i] d_j)^2 over all sign assignments.

    Walks every assignment of the m+s-1 relevant t-values and the s d-values.
    ||T D x / sqrt(m)||^2 equals Q / (s m) for the all-plus hard vector.
    """
    nt = m + s - 1
    _check_budget(1 << (nt + s), budget, "exhausting sign assignments")
    t_all = _sign_table(nt)  # column p is t at index p - (m-1)
    # row i (1..m) reads t[j - i] for j = 1..s, i.e. columns m-i .. m-i+s-1
    rows = np.stack([t_all[:, m - i : m - i + s] for i in range(1, m + 1)], axis=1)
    dist: Counter = Counter()
    for d in _sign_table(s):
        r = rows @ d
        q = np.einsum("ab,ab->a", r, r)
        vals, cnt = np.unique(q, return_counts=True)
        for v, c in zip(vals.tolist(), cnt.tolist()):
            dist[v] += c
    return dist


def q_distribution(m: int, s: int) -> Counter:
    """Same distribution as q_distribution_bruteforce, by a transfer matrix.

    For each assignment of d, the t-values are scanned left to right keeping
    the last s-1 of them as state together with the running Q, so all
    2**(m+s-1) t-assignments are counted without being listed.
    """
    if s < 2:
        raise InvalidArgument("s must be at least 2")
    n_states = 1 << (s - 1)
    q_max = m * s * s
    windows = _sign_table(s)
    half = np.arange(n_states // 2)
    dist: Counter = Counter()
    # Q is unchanged when d is negated, so only d with d_1 = +1 is walked.
    for d in _sign_table(s)[1::2]:
        r2 = (windows @ d) ** 2
        counts = np.zeros((n_states, q_max + 1), dtype=np.int64)
        counts[:, 0] = 1
        for _ in range(m):
            nxt = np.zeros_like(counts)
            for b in (0, 1):
                target = half | (b << (s - 2))
                for low in (0, 1):
                    # state 2u + low plus new bit b forms window 2u + low + b 2^(s-1)
                    src = 2 * half + low
                    shift = r2[src | (b << (s - 1))]
                    for v in np.unique(shift):
                        sel = shift == v
                        nxt[target[sel], v:] += counts[src[sel], : q_max + 1 - v]
            counts = nxt
        totals = counts.sum(axis=0)
        for q in np.flatnonzero(totals):
            dist[int(q)] += 2 * int(totals[q])
    return dist


def exact_moment(p: GammaParams, budget: int = DEFAULT_BUDGET) -> Fraction:
    """E[Z_k] for the all-plus hard vector with n = s, by exhausting every sign assignment."""
    dist = q_distribution_bruteforce(p.m, p.s, budget)
    sm = p.s * p.m
    total = sum(dist.values())
    acc = sum(c * (q - sm) ** p.k for q, c in dist.items())
    return Fraction(acc, total * sm**p.k)


def exact_tail_probability(m: int, s: int, epsilon: float, dist: Counter | None = None) -> Fraction:
    """Pr[ | ||f(x)||^2 - 1 | > epsilon ] exactly, x the all-plus vector of support s.

    Uses the same failure predicate as the Monte Carlo estimator.
    """
    from ._trials import within_distortion

    dist = q_distribution(m, s) if dist is None else dist
    total = sum(dist.values())
    bad = sum(c for q, c in dist.items() if not within_distortion(q, s * m, epsilon))
    return Fraction(bad, total)


@dataclass(frozen=True)
class Signature:
    columns: frozenset
    diagonals: frozenset


def signature(S) -> Signature:
    cols, diags = set(), set()
    for i, j, h in S:
        cols.update((j, h))
        diags.update((j - i, h - i))
    return Signature(frozenset(cols), frozenset(diags))


@dataclass(frozen=True)
class HalfEnumeration:
    size: int  # |S|, the number of half tuples
    sizes: tuple  # b_i, the number of half tuples per signature, descending
    signatures: int  # B

    @property
    def sum_b_squared(self) -> int:
        return sum(b * b for b in self.sizes)


def iter_half(p: GammaParams, budget: int = DEFAULT_BUDGET):
    """Yield the k/2-tuples touching each column and diagonal at most once."""
    if p.k % 2:
        raise InvalidArgument("half tuples need an even k")
    half = p.k // 2
    _check_budget(p.triples**half, budget, f"enumerating half tuples of length {half}")
    triples = all_triples(p.m, p.s)
    chosen: list = []

    def rec(depth, cols, diags):
        if depth == half:
            yield tuple(chosen)
            return
        for t in triples:
            i, j, h = t
            if j in cols or h in cols or (j - i) in diags or (h - i) in diags:
                continue
            chosen.append(t)
            yield from rec(depth + 1, cols | {j, h}, diags | {j - i, h - i})
            chosen.pop()

    yield from rec(0, frozenset(), frozenset())


def enumerate_half(p: GammaParams, budget: int = DEFAULT_BUDGET) -> HalfEnumeration:
    groups = Counter(signature(S) for S in iter_half(p, budget))
    sizes = tuple(sorted(groups.values(), reverse=True))
    return HalfEnumeration(sum(sizes), sizes, len(sizes))


def half_count_bound(r: int, c: int, t: int) -> int:
    """F(r, c, t) = r c (c-1) F(r, c-4, t-1), F(r, c, 0) = 1."""
    if t < 0:
        raise InvalidArgument("t must be non-negative")
    out = 1
    for step in range(t):
        cc = c - 4 * step
        out *= r * cc * (cc - 1)
    return out


@dataclass(frozen=True)
class CauchySchwarzReport:
    params: GammaParams
    gamma: int
    sum_b_squared: int
    half_size: int
    signatures: int
    f_bound: int
    f_bound_applies: bool  # k/2 <= s/8

    @property
    def cs_bound(self) -> Fraction:
        # no half tuples at all: the bound is vacuous
        return Fraction(self.half_size**2, self.signatures) if self.signatures else Fraction(0)

    @property
    def chain_holds(self) -> bool:
        return self.gamma >= self.sum_b_squared >= self.cs_bound

    @property
    def f_bound_holds(self) -> bool:
        return not self.f_bound_applies or self.half_size >= self.f_bound

    @property
    def holds(self) -> bool:
        return self.chain_holds and self.f_bound_holds


def cauchy_schwarz_check(p: GammaParams, budget: int = DEFAULT_BUDGET) -> CauchySchwarzReport:
    half = enumerate_half(p, budget)
    gamma = enumerate_gamma(p, budget)
    t = p.k // 2
    return CauchySchwarzReport(
        p, gamma, half.sum_b_squared, half.size, half.signatures,
        half_count_bound(p.m, p.s, t), 8 * t <= p.s,
    )


def paley_zygmund(e1, e2, theta) -> Fraction:
    """Lower bound (1 - theta)^2 E[X]^2 / E[X^2] on Pr[X > theta E[X]]."""
    e1, e2, theta = Fraction(e1), Fraction(e2), Fraction(theta)
    if e1 < 0 or e2 <= 0:
        raise InvalidArgument("need E[X] >= 0 and E[X^2] > 0")
    if not 0 <= theta <= 1:
        raise InvalidArgument("theta must lie in [0, 1]")
    if e2 < e1 * e1:
        raise InvalidArgument("inconsistent moments: E[X^2] < E[X]^2")
    return (1 - theta) ** 2 * e1 * e1 / e2


def z_tail_probability(m: int, s: int, k: int, threshold, budget: int = DEFAULT_BUDGET) -> Fraction:
    """Pr[Z_k > threshold] exactly, from the full sign-assignment distribution."""
    dist = q_distribution_bruteforce(m, s, budget)
    sm = s * m
    threshold = Fraction(threshold)
    total = sum(dist.values())
    hit = sum(c for q, c in dist.items() if Fraction(q - sm, sm) ** k > threshold)
    return Fraction(hit, total)


def default_grid() -> list[GammaParams]:
    """Parameter points used by the oracle suite."""
    pts = [(2, 2, 2), (3, 2, 2), (4, 4, 2), (2, 2, 4), (3, 3, 2), (2, 3, 4), (4, 8, 2), (8, 8, 2), (2, 4, 4), (1, 8, 4), (2, 2, 1), (3, 3, 3), (2, 2, 3)]
    return [GammaParams(*v) for v in pts]


def log2_ceil(v: int) -> int:
    return max(0, (v - 1).bit_length()) if v > 0 else 0

