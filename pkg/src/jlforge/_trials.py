"""Batched evaluation of ||f(x)||^2 over many independent realizations.

Trial ``i`` always uses the realization of ``EmbeddingSpec(n, m, kind, seed,
stream_id=i)`` restricted to the variables that touch the support of x, so
the numbers produced here agree with ``transforms.embed`` trial by trial.

When every nonzero coordinate of x has the same magnitude c, each output
coordinate is c times an integer (a signed count of +/-1 products).  That
integer is computed exactly by XOR-ing bit windows of the realization with
the sign bits of x and taking popcounts, so failure decisions for hard
instances involve no rounding at all.  Other vectors take a float path.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import LANE_D, LANE_DENSE, LANE_T, EmbeddingSpec, InvalidArgument, Kind, bits_to_words, draw_words, words_to_bits
from .instances import support_bounds
from .transforms import circulant_positions, dense_bits

# Upper bound on the uint64 scratch words a chunk of trials may use.
_CHUNK_WORDS = 1 << 21
_MAX_CHUNK = 4096


def worker_count() -> int:
    env = os.environ.get("JLFORGE_THREADS")
    if env:
        try:
            value = int(env)
        except ValueError:
            raise InvalidArgument(f"JLFORGE_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise InvalidArgument("JLFORGE_THREADS must be positive")
        return value
    return os.cpu_count() or 1


def within_distortion(image_sq, original_sq, epsilon) -> np.ndarray:
    """True where |image_sq - original_sq| <= epsilon * original_sq."""
    return np.abs(image_sq - original_sq) <= epsilon * original_sq


def _shift_words(words: np.ndarray, start: int, nbits: int) -> np.ndarray:
    """Bits start..start+nbits-1 of each row, re-aligned to bit 0."""
    q, r = divmod(start, 64)
    nw = -(-nbits // 64)
    src = words[..., q : q + nw + 1]
    if src.shape[-1] < nw + 1:
        pad = np.zeros(src.shape[:-1] + (nw + 1 - src.shape[-1],), np.uint64)
        src = np.concatenate([src, pad], axis=-1)
    lo = src[..., :nw] >> np.uint64(r)
    hi = (src[..., 1:] << np.uint64(1)) << np.uint64(63 - r)
    out = lo | hi
    tail = nbits % 64
    if tail:
        out[..., -1] &= np.uint64((1 << tail) - 1)
    return out


def _window_planes(words: np.ndarray, count: int, width: int) -> list[np.ndarray]:
    """Word planes of the sliding bit windows of each row.

    Plane o has shape (B, count); entry [b, c] holds bits c+64o .. c+64o+63 of
    row b, so together the planes cover the window of ``width`` bits at c.
    """
    nw = -(-width // 64)
    qm = -(-count // 64)
    nwords = qm + nw + 1
    src = words[:, :nwords]
    if src.shape[1] < nwords:
        src = np.concatenate([src, np.zeros((src.shape[0], nwords - src.shape[1]), np.uint64)], axis=1)
    rs = np.arange(64, dtype=np.uint64)
    # table[b, q, r] = bits 64q + r .. 64q + r + 63
    table = (src[:, :-1, None] >> rs) | ((src[:, 1:, None] << np.uint64(1)) << (np.uint64(63) - rs))
    return [table[:, o : o + qm, :].reshape(src.shape[0], qm * 64)[:, :count] for o in range(nw)]


def _row_planes(words: np.ndarray, start: int, width: int) -> list[np.ndarray]:
    """Word planes of bits start..start+width-1 for (B, W, m) row-word arrays."""
    q, r = divmod(start, 64)
    nw = -(-width // 64)
    planes = []
    for o in range(nw):
        lo = words[:, q + o, :] >> np.uint64(r)
        if r and q + o + 1 < words.shape[1]:
            lo = lo | (words[:, q + o + 1, :] << np.uint64(64 - r))
        planes.append(lo)
    return planes


@dataclass(frozen=True)
class TrialPlan:
    """Precomputed per-vector data shared by every chunk of trials."""

    x: np.ndarray
    m: int
    kind: Kind
    lo: int
    hi: int
    exact: bool
    count: int  # nonzero coordinates
    neg_words: np.ndarray  # sign bits of x over lo..hi (1 where negative)
    mask_words: np.ndarray  # 1 where x is nonzero over lo..hi

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    @property
    def original_sq(self):
        """||x||^2 on the scale used by chunk statistics."""
        if self.exact:
            return self.count * self.m
        return float(np.dot(self.x, self.x))

    def chunk_size(self) -> int:
        nw = -(-self.width // 64)
        if not self.exact:
            per_trial = 2 * self.m * self.width
        elif self.kind is Kind.DENSE:
            per_trial = self.m * (-(-self.hi // 64) + 2 * nw)
        else:
            per_trial = 64 * (-(-(self.m + self.width) // 64) + 2) + 2 * self.m * nw
        return int(max(1, min(_MAX_CHUNK, _CHUNK_WORDS // per_trial)))


def make_plan(x, m: int, kind) -> TrialPlan:
    x = np.asarray(x, dtype=np.float64)
    kind = Kind(kind)
    EmbeddingSpec(x.size, m, kind)  # dimension validation
    if kind is not Kind.DENSE and m > x.size:
        raise InvalidArgument(f"{kind.value} embedding needs m <= n, got m={m}, n={x.size}")
    bounds = support_bounds(x)
    if bounds is None:
        raise InvalidArgument("x must have a nonzero coordinate")
    lo, hi = bounds
    window = x[lo - 1 : hi]
    nz = window != 0
    mags = np.abs(window[nz])
    exact = bool(np.all(mags == mags[0]))
    neg = bits_to_words((window < 0).astype(np.uint8))
    mask = bits_to_words(nz.astype(np.uint8))
    return TrialPlan(x, m, kind, lo, hi, exact, int(nz.sum()), neg, mask)


def _t_bits_words(plan: TrialPlan, seed: int, ids) -> np.ndarray:
    """Lane-T words re-aligned so bit 0 is Toeplitz position lo-1."""
    m, lo, hi = plan.m, plan.lo, plan.hi
    span = m + plan.width - 1  # positions lo-1 .. hi+m-2
    if plan.kind is Kind.TOEPLITZ:
        need = hi + m - 1
        words = draw_words(seed, LANE_T, ids, -(-need // 64))
        return _shift_words(words, lo - 1, span)
    n = plan.n
    words = draw_words(seed, LANE_T, ids, -(-n // 64))
    bits = words_to_bits(words, n)
    # Circulant row i reads t_c[(j - i) mod n]; map each virtual Toeplitz
    # position to the lane bit that circulant value was drawn from.
    p = np.arange(lo - 1, hi + m - 1)
    a = p - (m - 1)
    src = circulant_positions(n, m)[a % n]
    return bits_to_words(bits[:, src])


def _d_words(plan: TrialPlan, seed: int, ids) -> np.ndarray:
    words = draw_words(seed, LANE_D, ids, -(-plan.hi // 64))
    return _shift_words(words, plan.lo - 1, plan.width)


def _exact_sq(plan: TrialPlan, seed: int, ids) -> np.ndarray:
    """Integer sum over rows of (signed count)^2, i.e. ||f(x)||^2 * count * m."""
    neg_w = [np.uint64(w) for w in plan.neg_words]
    mask_w = [np.uint64(w) for w in plan.mask_words]
    if plan.kind is Kind.DENSE:
        nblocks = -(-plan.hi // 64)
        words = draw_words(seed, LANE_DENSE, ids, nblocks * plan.m).reshape(len(ids), nblocks, plan.m)
        planes = _row_planes(words, plan.lo - 1, plan.width)
        signs = [w[None] for w in neg_w]
    else:
        t = _t_bits_words(plan, seed, ids)
        u = _d_words(plan, seed, ids)
        planes = _window_planes(t, plan.m, plan.width)
        signs = [(u[:, o] ^ neg_w[o])[:, None] for o in range(len(planes))]
    neg = np.zeros(planes[0].shape, dtype=np.int32)
    for plane, sign, mask in zip(planes, signs, mask_w):
        neg += np.bitwise_count((plane ^ sign) & mask)
    r = (plan.count - 2 * neg).astype(np.float64)
    # Each r^2 and every partial sum is an integer below 2**53, so this is exact.
    return np.einsum("ij,ij->i", r, r)


def _float_sq(plan: TrialPlan, seed: int, ids) -> np.ndarray:
    xw = plan.x[plan.lo - 1 : plan.hi]
    if plan.kind is Kind.DENSE:
        nblocks = -(-plan.hi // 64)
        words = draw_words(seed, LANE_DENSE, ids, nblocks * plan.m)
        a = dense_bits(words, plan.m, plan.hi)[..., plan.lo - 1 :].astype(np.float64) * 2 - 1
        y = a @ xw
    else:
        span = plan.m + plan.width - 1
        t = words_to_bits(_t_bits_words(plan, seed, ids), span).astype(np.float64) * 2 - 1
        d = words_to_bits(_d_words(plan, seed, ids), plan.width).astype(np.float64) * 2 - 1
        v = d * xw
        windows = np.lib.stride_tricks.sliding_window_view(t, plan.width, axis=1)
        y = np.einsum("bcw,bw->bc", windows, v)
    return np.einsum("ij,ij->i", y, y) / plan.m


def chunk_sq(plan: TrialPlan, seed: int, first: int, count: int) -> np.ndarray:
    """Per-trial squared norms on the plan's scale for trials first..first+count-1."""
    ids = range(first, first + count)
    if plan.exact:
        return _exact_sq(plan, seed, ids)
    return _float_sq(plan, seed, ids)


def normalized_sq(plan: TrialPlan, values: np.ndarray) -> np.ndarray:
    """Convert chunk statistics to ||f(x)||^2."""
    if plan.exact:
        return values.astype(np.float64) * (float(np.dot(plan.x, plan.x)) / plan.original_sq)
    return values


def chunks(trials: int, size: int):
    return [(a, min(size, trials - a)) for a in range(0, trials, size)]


def map_chunks(fn, trials: int, size: int, workers: int | None = None) -> list:
    """Apply fn(first, count) over fixed-size chunks; results in chunk order."""
    work = chunks(trials, size)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(work) <= 1:
        return [fn(a, c) for a, c in work]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda ac: fn(*ac), work))


def squared_norms(x, m: int, kind, seed: int, trials: int, workers: int | None = None) -> np.ndarray:
    """||f(x)||^2 for trials 0..trials-1."""
    plan = make_plan(x, m, kind)
    parts = map_chunks(lambda a, c: chunk_sq(plan, seed, a, c), trials, plan.chunk_size(), workers)
    if not parts:
        return np.empty(0)
    return normalized_sq(plan, np.concatenate(parts))


def count_failures(x, m: int, kind, epsilon: float, seed: int, trials: int, workers: int | None = None) -> int:
    plan = make_plan(x, m, kind)
    target = plan.original_sq

    def run(a, c):
        return int(np.count_nonzero(~within_distortion(chunk_sq(plan, seed, a, c), target, epsilon)))

    return sum(map_chunks(run, trials, plan.chunk_size(), workers))
