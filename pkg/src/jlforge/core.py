"""Domain types and reproducible, splittable randomness.

Every random quantity in the package is drawn from a *stream*: the word
sequence of a Philox4x64-10 counter-based generator.  The mapping is fixed:

    word w of stream (master_seed, stream_id) on lane L
        = output word (w mod 4) of the Philox4x64-10 block with
          key     = (master_seed, L)
          counter = (w // 4 + 1, stream_id, 0, 0)

so any word can be computed without touching the words before it, and trial
``i`` of an experiment simply uses ``stream_id = i``.  Lanes separate the
independent families of variables of one realization (Toeplitz diagonal
values, the diagonal of D, dense matrix entries).

Rademacher values are extracted one bit per value, least significant bit
first within each 64-bit word; bit 1 means +1 and bit 0 means -1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

MASK64 = (1 << 64) - 1

LANE_T = 0
LANE_D = 1
LANE_DENSE = 2
LANE_SIGNS = 3


class InvalidArgument(ValueError):
    """A precondition on the arguments of a public operation failed."""


class ResourceLimit(RuntimeError):
    """An exact enumeration would exceed its configured step budget."""


def _u64(value: int, name: str) -> int:
    value = int(value)
    if not -(1 << 63) <= value <= MASK64:
        raise InvalidArgument(f"{name} must fit in 64 bits, got {value}")
    return value & MASK64


class Kind(str, enum.Enum):
    TOEPLITZ = "toeplitz"
    CIRCULANT = "circulant"
    DENSE = "dense"


@dataclass(frozen=True)
class SignSequence:
    """A run of +/-1 values indexed by the integers offset .. offset+len-1."""

    offset: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int8)
        if vals.ndim != 1:
            raise InvalidArgument("sign values must be one-dimensional")
        if vals.size and not np.all(np.abs(vals) == 1):
            raise InvalidArgument("sign values must be +1 or -1")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "offset", int(self.offset))

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def stop(self) -> int:
        return self.offset + len(self)

    def __getitem__(self, a: int) -> int:
        if not self.offset <= a < self.stop:
            raise IndexError(f"index {a} outside [{self.offset}, {self.stop})")
        return int(self.values[a - self.offset])

    def window(self, lo: int, hi: int) -> np.ndarray:
        """Values at indices lo..hi-1 as a read-only view."""
        if lo < self.offset or hi > self.stop or lo > hi:
            raise IndexError(f"window [{lo}, {hi}) outside [{self.offset}, {self.stop})")
        return self.values[lo - self.offset : hi - self.offset]

    def __eq__(self, other):
        if not isinstance(other, SignSequence):
            return NotImplemented
        return self.offset == other.offset and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.offset, self.values.tobytes()))


@dataclass(frozen=True)
class EmbeddingSpec:
    """Everything needed to realize T and D (or the dense matrix A)."""

    n: int
    m: int
    kind: Kind = Kind.TOEPLITZ
    master_seed: int = 0
    stream_id: int = 0

    def __post_init__(self):
        if int(self.n) < 1 or int(self.m) < 1:
            raise InvalidArgument(f"dimensions must be positive, got n={self.n}, m={self.m}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "master_seed", _u64(self.master_seed, "master_seed"))
        object.__setattr__(self, "stream_id", _u64(self.stream_id, "stream_id"))

    @property
    def stream(self) -> Stream:
        return derive_stream(self.master_seed, self.stream_id)


@dataclass(frozen=True)
class TailEstimate:
    epsilon: float
    m: int
    trials: int
    failures: int
    p_hat: float
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if not 0 <= self.failures <= self.trials:
            raise InvalidArgument("failures must lie in [0, trials]")


@dataclass(frozen=True)
class Tuple:
    """An ordered sequence of (row, column, column) triples, 1-based."""

    triples: tuple = field(default_factory=tuple)

    def __post_init__(self):
        triples = tuple(tuple(int(v) for v in t) for t in self.triples)
        for t in triples:
            if len(t) != 3:
                raise InvalidArgument(f"triple {t} does not have three entries")
            if t[1] == t[2]:
                raise InvalidArgument(f"triple {t} repeats its column")
        object.__setattr__(self, "triples", triples)

    def __len__(self):
        return len(self.triples)

    def __iter__(self):
        return iter(self.triples)

    def __getitem__(self, i):
        return self.triples[i]


@dataclass(frozen=True)
class Stream:
    """A value-like handle on one Philox word stream; cheap to copy."""

    master_seed: int
    stream_id: int
    lane: int = LANE_T

    def on_lane(self, lane: int) -> Stream:
        return Stream(self.master_seed, self.stream_id, lane)

    def words(self, count: int) -> np.ndarray:
        """The first ``count`` 64-bit words of the stream."""
        if count < 0:
            raise InvalidArgument("word count must be non-negative")
        return draw_words(self.master_seed, self.lane, [self.stream_id], count)[0]


def derive_stream(master_seed: int, stream_id: int) -> Stream:
    return Stream(_u64(master_seed, "master_seed"), _u64(stream_id, "stream_id"))


def draw_words(master_seed: int, lane: int, stream_ids, count: int) -> np.ndarray:
    """Words 0..count-1 of each listed stream, as a (len(stream_ids), count) array.

    One generator is reused and seeked with ``advance`` when stream ids are
    increasing, which is much cheaper than constructing a generator per stream.
    """
    ids = [int(i) & MASK64 for i in stream_ids]
    out = np.empty((len(ids), count), dtype=np.uint64)
    if count == 0 or not ids:
        return out
    blocks = -(-count // 4)
    bg = None
    position = None  # 256-bit counter value the generator was last left at
    for row, sid in enumerate(ids):
        start = sid << 64
        if bg is None or start < position:
            bg = np.random.Philox(
                key=np.array([master_seed & MASK64, lane], dtype=np.uint64),
                counter=np.array([0, sid, 0, 0], dtype=np.uint64),
            )
        else:
            bg.advance(start - position)
        out[row] = bg.random_raw(blocks * 4)[:count]
        position = start + blocks
    return out


def words_to_bits(words: np.ndarray, count: int) -> np.ndarray:
    """Unpack the first ``count`` bits (LSB first) of the trailing word axis."""
    words = np.ascontiguousarray(words, dtype="<u8")
    bits = np.unpackbits(words.view(np.uint8), axis=-1, bitorder="little")
    return bits[..., :count]


def bits_to_words(bits: np.ndarray) -> np.ndarray:
    """Inverse of words_to_bits; pads the trailing axis with zero bits."""
    bits = np.asarray(bits, dtype=np.uint8)
    pad = (-bits.shape[-1]) % 64
    if pad:
        bits = np.concatenate([bits, np.zeros(bits.shape[:-1] + (pad,), np.uint8)], axis=-1)
    packed = np.packbits(bits, axis=-1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def sample_rademacher(stream: Stream, offset: int, count: int) -> SignSequence:
    """``count`` Rademacher values from the leading bits of ``stream``."""
    if count < 0:
        raise InvalidArgument(f"count must be non-negative, got {count}")
    bits = words_to_bits(stream.words(-(-count // 64)), count)
    return SignSequence(offset, bits.astype(np.int8) * 2 - 1)


def as_fraction(value) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)
