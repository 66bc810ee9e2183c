"""The embedding f(x) = T D x / sqrt(m) and its dense Rademacher baseline.

Realization layout (all bits come from the streams described in ``core``):

* Toeplitz: ``t[a]`` for a in -(m-1)..n-1 is bit ``a + m - 1`` of lane T;
  ``d[j]`` for j in 1..n is bit ``j - 1`` of lane D.
* Partial circulant: the n generating values ``t_c[b]`` reuse the first n
  bits of lane T, with ``t_c[b]`` taken from the Toeplitz position of
  index ``b`` when ``b <= n - m`` and of index ``b - n`` otherwise.  Rows of
  a partial circulant matrix only reach t_c[b] for b > n - m through the
  wrap-around, so on vectors supported in the first n - m + 1 coordinates
  the circulant and Toeplitz embeddings of one seed coincide exactly.
* Dense: A is cut into column blocks of 64; word ``b*m + i`` of lane DENSE
  holds row i of block b, bit l being column ``64*b + l``.  Realizing only
  the first c columns therefore reads a prefix of the stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .core import (
    LANE_D,
    LANE_DENSE,
    LANE_T,
    EmbeddingSpec,
    InvalidArgument,
    Kind,
    SignSequence,
    sample_rademacher,
    words_to_bits,
)


def _as_vector(x, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != n:
        raise InvalidArgument(f"expected a vector of length {n}, got shape {x.shape}")
    return x


def _next_pow2(v: int) -> int:
    return 1 << max(0, (v - 1).bit_length())


@dataclass(frozen=True)
class ToeplitzRealization:
    """T with entries t[j - i] (i in 1..m, j in 1..n) and D = diag(d)."""

    t: SignSequence
    d: SignSequence
    n: int
    m: int

    def __post_init__(self):
        if self.t.offset != -(self.m - 1) or len(self.t) != self.n + self.m - 1:
            raise InvalidArgument("t must cover indices -(m-1)..n-1")
        if self.d.offset != 1 or len(self.d) != self.n:
            raise InvalidArgument("d must cover indices 1..n")

    def matrix(self) -> np.ndarray:
        i = np.arange(1, self.m + 1)[:, None]
        j = np.arange(1, self.n + 1)[None, :]
        return self.t.values[(j - i) + (self.m - 1)].astype(np.float64)

    @cached_property
    def _block_spectra(self):
        # Overlap-save: input blocks of length m meet t-segments of length
        # 2m - 1 that overlap their neighbours by m - 1 values.
        m, n = self.m, self.n
        nblocks = -(-n // m)
        size = _next_pow2(2 * m)
        g = np.zeros(nblocks * m + m - 1)
        g[: n + m - 1] = self.t.values
        segments = np.lib.stride_tricks.sliding_window_view(g, 2 * m - 1)[::m]
        spectra = np.fft.rfft(segments, size, axis=1)
        spectra.setflags(write=False)
        return nblocks, size, spectra


@dataclass(frozen=True)
class CirculantRealization:
    """Partial circulant T with entries t[(j - i) mod n], plus D = diag(d)."""

    t: SignSequence
    d: SignSequence
    n: int
    m: int

    def __post_init__(self):
        if self.t.offset != 0 or len(self.t) != self.n:
            raise InvalidArgument("t must cover indices 0..n-1")
        if self.d.offset != 1 or len(self.d) != self.n:
            raise InvalidArgument("d must cover indices 1..n")

    @cached_property
    def as_toeplitz(self) -> ToeplitzRealization:
        a = np.arange(-(self.m - 1), self.n)
        t = SignSequence(-(self.m - 1), self.t.values[a % self.n])
        return ToeplitzRealization(t, self.d, self.n, self.m)


@dataclass(frozen=True)
class DenseRealization:
    a: np.ndarray  # (m, n) int8 entries in {-1, +1}

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]


def _check_structured(spec: EmbeddingSpec):
    if spec.m > spec.n:
        raise InvalidArgument(f"{spec.kind.value} embedding needs m <= n, got m={spec.m}, n={spec.n}")


def realize_toeplitz(spec: EmbeddingSpec) -> ToeplitzRealization:
    _check_structured(spec)
    stream = spec.stream
    t = sample_rademacher(stream.on_lane(LANE_T), -(spec.m - 1), spec.n + spec.m - 1)
    d = sample_rademacher(stream.on_lane(LANE_D), 1, spec.n)
    return ToeplitzRealization(t, d, spec.n, spec.m)


def circulant_positions(n: int, m: int) -> np.ndarray:
    """Lane-T bit position used for each circulant value t_c[0..n-1]."""
    b = np.arange(n)
    return np.where(b <= n - m, b, b - n) + (m - 1)


def realize_circulant(spec: EmbeddingSpec) -> CirculantRealization:
    _check_structured(spec)
    stream = spec.stream
    base = sample_rademacher(stream.on_lane(LANE_T), 0, spec.n).values
    t = SignSequence(0, base[circulant_positions(spec.n, spec.m)])
    d = sample_rademacher(stream.on_lane(LANE_D), 1, spec.n)
    return CirculantRealization(t, d, spec.n, spec.m)


def dense_bits(words: np.ndarray, m: int, columns: int) -> np.ndarray:
    """Unpack dense-layout words (..., nblocks*m) into (..., m, columns) bits."""
    nblocks = -(-columns // 64)
    words = words[..., : nblocks * m].reshape(words.shape[:-1] + (nblocks, m))
    words = np.swapaxes(words, -1, -2)  # (..., m, nblocks): one row's words in order
    return words_to_bits(words, columns)


def realize_dense(spec: EmbeddingSpec) -> DenseRealization:
    nblocks = -(-spec.n // 64)
    words = spec.stream.on_lane(LANE_DENSE).words(nblocks * spec.m)
    bits = dense_bits(words, spec.m, spec.n)
    a = bits.astype(np.int8) * 2 - 1
    a.setflags(write=False)
    return DenseRealization(a)


def toeplitz_apply_naive(r: ToeplitzRealization, x) -> np.ndarray:
    """T D x by direct summation over each row, Theta(n m) work."""
    x = _as_vector(x, r.n)
    v = r.d.values * x
    y = np.empty(r.m)
    for i in range(1, r.m + 1):
        y[i - 1] = np.dot(r.t.window(1 - i, r.n + 1 - i), v)
    return y


def toeplitz_apply_fft(r: ToeplitzRealization, x) -> np.ndarray:
    """T D x by blocked FFT correlation in O(n lg m)."""
    x = _as_vector(x, r.n)
    nblocks, size, spectra = r._block_spectra
    v = np.zeros(nblocks * r.m)
    v[: r.n] = r.d.values * x
    blocks = np.fft.rfft(v.reshape(nblocks, r.m), size, axis=1)
    # Row i of T D x is the correlation of v with t at lag m - i.
    corr = np.fft.irfft(np.sum(spectra * np.conj(blocks), axis=0), size)
    return corr[: r.m][::-1].copy()


def embed(spec: EmbeddingSpec, x) -> np.ndarray:
    """f(x) for the matrix family named by ``spec.kind``."""
    if spec.kind is Kind.CIRCULANT:
        return embed_circulant(spec, x)
    if spec.kind is Kind.DENSE:
        return embed_dense(spec, x)
    x = _as_vector(x, spec.n)
    return toeplitz_apply_fft(realize_toeplitz(spec), x) / math.sqrt(spec.m)


def embed_circulant(spec: EmbeddingSpec, x) -> np.ndarray:
    x = _as_vector(x, spec.n)
    r = realize_circulant(spec)
    return toeplitz_apply_fft(r.as_toeplitz, x) / math.sqrt(spec.m)


def embed_dense(spec: EmbeddingSpec, x) -> np.ndarray:
    x = _as_vector(x, spec.n)
    a = realize_dense(spec).a
    return (a @ x) / math.sqrt(spec.m)


def realize(spec: EmbeddingSpec):
    if spec.kind is Kind.CIRCULANT:
        return realize_circulant(spec)
    if spec.kind is Kind.DENSE:
        return realize_dense(spec)
    return realize_toeplitz(spec)
