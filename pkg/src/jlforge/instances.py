"""Hard input vectors: the fat-tailed unit vector and its shifted copies."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LANE_SIGNS, InvalidArgument, SignSequence, derive_stream, sample_rademacher


@dataclass(frozen=True)
class HardInstance:
    k: int
    s: int
    n: int
    x: np.ndarray
    sign_pattern: SignSequence

    @property
    def magnitude(self) -> float:
        return 1.0 / math.sqrt(self.s)


@dataclass(frozen=True)
class ShiftedFamily:
    base: HardInstance
    m: int
    spacing: int
    count: int
    vectors: tuple  # vectors[0] is the zero vector, vectors[q] is shifted by (q-1)*spacing

    @property
    def shifts(self) -> list[int]:
        return [q * self.spacing for q in range(self.count)]

    @property
    def members(self) -> tuple:
        """The nonzero members."""
        return self.vectors[1:]


def even_k(k: float) -> int:
    """Round a requested k up to an even integer, at least 2."""
    ki = math.ceil(k)
    return max(2, ki + (ki % 2))


def hard_vector(k: int, n: int, sign_seed: int = 0) -> HardInstance:
    """Unit vector with 4k entries of magnitude 1/sqrt(4k) in coordinates 1..4k.

    ``sign_seed == 0`` selects the all-plus pattern; any other seed draws the
    signs from its own stream.
    """
    if int(k) != k or k < 2 or k % 2:
        raise InvalidArgument(f"k must be an even integer >= 2, got {k}")
    k = int(k)
    s = 4 * k
    if n < s:
        raise InvalidArgument(f"n must be at least 4k = {s}, got {n}")
    if sign_seed == 0:
        signs = SignSequence(1, np.ones(s, dtype=np.int8))
    else:
        signs = sample_rademacher(derive_stream(sign_seed, 0).on_lane(LANE_SIGNS), 1, s)
    x = np.zeros(n)
    x[:s] = signs.values / math.sqrt(s)
    x.setflags(write=False)
    return HardInstance(k, s, n, x, signs)


def support_bounds(x) -> tuple[int, int] | None:
    """1-based (lo, hi) of the nonzero support, or None for the zero vector."""
    nz = np.flatnonzero(np.asarray(x))
    if nz.size == 0:
        return None
    return int(nz[0]) + 1, int(nz[-1]) + 1


def shift_vector(x, i: int) -> np.ndarray:
    """x moved up by i coordinates: output coordinate j is x_(j-i), zero for j <= i."""
    x = np.asarray(x, dtype=np.float64)
    bounds = support_bounds(x)
    last = bounds[1] if bounds else 0
    if i < 0 or i > x.size - last:
        raise InvalidArgument(f"shift {i} moves nonzeros past coordinate {x.size}")
    out = np.zeros_like(x)
    out[i:] = x[: x.size - i]
    return out


def touched_indices(x, m: int) -> tuple[range, range]:
    """Index ranges of the t- and d-variables that enter T D x.

    With nonzero support lo..hi, row i reads t[j - i] for i in 1..m, so the
    t-range is lo-m .. hi-1 and the d-range is lo .. hi.
    """
    bounds = support_bounds(x)
    if bounds is None:
        return range(0), range(0)
    lo, hi = bounds
    return range(lo - m, hi), range(lo, hi + 1)


def ranges_disjoint(a: range, b: range) -> bool:
    return len(a) == 0 or len(b) == 0 or a.stop <= b.start or b.stop <= a.start


def min_disjoint_spacing(k: int, m: int) -> int:
    """Smallest shift step for which consecutive copies touch disjoint variables."""
    return m + 4 * k - 1


def family_spacing(m: int, C: float) -> int:
    return m + math.ceil(C * math.sqrt(m))


def hard_family(k: int, n: int, m: int, C: float = 2.0, N: int = 1, sign_seed: int = 0) -> ShiftedFamily:
    """{0, x, x shifted by D, ..., x shifted by (N-1)D} with D = m + ceil(C sqrt(m))."""
    if N < 1:
        raise InvalidArgument(f"N must be positive, got {N}")
    spacing = family_spacing(m, C)
    s = 4 * k
    if n < s:
        raise InvalidArgument(f"n must be at least 4k = {s}, got {n}")
    max_n = (n - s) // spacing + 1
    if N > max_n:
        raise InvalidArgument(
            f"family of {N} shifted copies at spacing {spacing} does not fit in n={n}; "
            f"maximum feasible N is {max_n}"
        )
    base = hard_vector(k, n, sign_seed)
    vectors = [np.zeros(n)]
    for q in range(N):
        v = shift_vector(base.x, q * spacing)
        v.setflags(write=False)
        vectors.append(v)
    vectors[0].setflags(write=False)
    return ShiftedFamily(base, m, spacing, N, tuple(vectors))


def family_is_disjoint(family: ShiftedFamily) -> bool:
    ranges = [touched_indices(v, family.m) for v in family.members]
    for a in range(len(ranges)):
        for b in range(a + 1, len(ranges)):
            if not (ranges_disjoint(ranges[a][0], ranges[b][0]) and ranges_disjoint(ranges[a][1], ranges[b][1])):
                return False
    return True
