"""Cycle encoding of even tuples.

The two endpoints of a triple (i, j, h) sit on diagonals j - i (the left
endpoint) and h - i (the right endpoint).  In a tuple where every diagonal is
touched an even number of times the endpoints on each diagonal can be paired,
and the pairing links the triples into disjoint cycles.  Each cycle is then
written with one record per triple:

    head  00 | row | j | h
    mid   01 | j | h | predecessor | pred side | own side
    last  10 | predecessor | pred side | own side | column

A head carries its full triple.  A mid only needs its columns: its row follows
from the diagonal it shares with its predecessor.  The last triple of a cycle
also shares a diagonal with the head's left endpoint, so one column suffices.
Records appear in the original triple order; the predecessor is a global
triple index.  Field widths are fixed at ceil(lg v) bits for a field with v
possible values.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .combinatorics import GammaParams, is_even_tuple
from .core import InvalidArgument, Tuple

HEAD, MID, LAST = "00", "01", "10"
LEFT, RIGHT = 0, 1

# Additive constant per pair of triples in length_bound.  With w(v) the field
# width ceil(lg v), a cycle of c triples costs at most
#   c (w(m)/2 + w(s) + w(2k) + C/2) + (6 + w(s) - w(2k) - C) + (c-2)(4 + w(s) - w(m)/2 - C/2)
# bits, so the bound holds whenever w(s) - w(2k) <= C - 6 and 2 w(s) - w(m) <= C - 8.
# That includes every s = 4k with 16 k^2 <= m, where both left sides are at most 1.
C_CODE = 16


class DecodeError(ValueError):
    """The bit string is not the encoding of any tuple."""


def width(v: int) -> int:
    """Bits needed to write one of v values."""
    return max(0, (v - 1).bit_length())


def length_bound(m: int, s: int, k: int) -> int:
    """k w(m) + 2k w(s) + 2k w(2k) + C_CODE k, for tuples of 2k triples."""
    return k * width(m) + 2 * k * width(s) + 2 * k * width(2 * k) + C_CODE * k


@dataclass(frozen=True)
class CycleCode:
    bits: str
    k: int
    m: int
    s: int

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class Step:
    """One vertex of a cycle walk: the triple and the endpoints used to enter and leave it."""

    index: int
    enter: int
    leave: int


def _endpoint_diagonal(t, side: int) -> int:
    i, j, h = t
    return (h if side == RIGHT else j) - i


def _pairing(triples) -> dict:
    by_diag = defaultdict(list)
    for q, t in enumerate(triples):
        for side in (LEFT, RIGHT):
            by_diag[_endpoint_diagonal(t, side)].append((q, side))
    partner = {}
    for diag, ends in by_diag.items():
        if len(ends) % 2:
            raise InvalidArgument(f"diagonal {diag} is touched an odd number of times")
        ends.sort()
        for a, b in zip(ends[::2], ends[1::2]):
            partner[a], partner[b] = b, a
    return partner


def walk_cycles(S) -> list[list[Step]]:
    """Cycles of the endpoint pairing, each starting at its lowest triple index."""
    triples = S.triples if isinstance(S, Tuple) else tuple(tuple(t) for t in S)
    for t in triples:
        if t[1] == t[2]:
            raise InvalidArgument(f"triple {t} has equal columns")
    partner = _pairing(triples)
    seen = set()
    cycles = []
    for head in range(len(triples)):
        if head in seen:
            continue
        steps = [Step(head, LEFT, RIGHT)]
        seen.add(head)
        q, side = partner[(head, RIGHT)]
        while q != head:
            steps.append(Step(q, side, 1 - side))
            seen.add(q)
            q, side = partner[(q, 1 - side)]
        cycles.append(steps)
    return cycles


def build_cycles(S) -> list[list[int]]:
    """Cycle decomposition as lists of triple indices (0-based) in walk order."""
    return [[st.index for st in c] for c in walk_cycles(S)]


def _field(value: int, bits: int) -> str:
    return format(value, f"0{bits}b") if bits else ""


def codec_encode(S, m: int, s: int, k: int) -> CycleCode:
    triples = S.triples if isinstance(S, Tuple) else tuple(tuple(t) for t in S)
    if len(triples) != 2 * k:
        raise InvalidArgument(f"expected {2 * k} triples, got {len(triples)}")
    for i, j, h in triples:
        if not (1 <= i <= m and 1 <= j <= s and 1 <= h <= s):
            raise InvalidArgument(f"triple {(i, j, h)} out of range for m={m}, s={s}")
    if not is_even_tuple(GammaParams(m, s, 2 * k), triples):
        raise InvalidArgument("tuple does not touch every column and diagonal an even number of times")
    wm, ws, wl = width(m), width(s), width(2 * k)
    records = [""] * len(triples)
    for cycle in walk_cycles(triples):
        head = cycle[0].index
        i, j, h = triples[head]
        records[head] = HEAD + _field(i - 1, wm) + _field(j - 1, ws) + _field(h - 1, ws)
        for prev, st in zip(cycle, cycle[1:]):
            link = _field(prev.index, wl) + str(prev.leave) + str(st.enter)
            _, j, h = triples[st.index]
            if st is cycle[-1]:
                column = h if st.enter == RIGHT else j
                records[st.index] = LAST + link + _field(column - 1, ws)
            else:
                records[st.index] = MID + _field(j - 1, ws) + _field(h - 1, ws) + link
    return CycleCode("".join(records), k, m, s)


class _Reader:
    def __init__(self, bits: str):
        self.bits = bits
        self.pos = 0

    def take(self, count: int) -> int:
        if self.pos + count > len(self.bits):
            raise DecodeError("bit string ends inside a record")
        chunk = self.bits[self.pos : self.pos + count]
        self.pos += count
        return int(chunk, 2) if chunk else 0


def codec_decode(code: CycleCode) -> Tuple:
    m, s, k = code.m, code.s, code.k
    if set(code.bits) - {"0", "1"}:
        raise DecodeError("bits must be a string of 0 and 1")
    wm, ws, wl = width(m), width(s), width(2 * k)
    rd = _Reader(code.bits)
    records = []
    for _ in range(2 * k):
        tag = _field(rd.take(2), 2)
        if tag == HEAD:
            records.append(("head", rd.take(wm) + 1, rd.take(ws) + 1, rd.take(ws) + 1))
        elif tag == MID:
            j, h = rd.take(ws) + 1, rd.take(ws) + 1
            records.append(("mid", j, h, rd.take(wl), rd.take(1), rd.take(1)))
        elif tag == LAST:
            pred, pside, own = rd.take(wl), rd.take(1), rd.take(1)
            records.append(("last", pred, pside, own, rd.take(ws) + 1))
        else:
            raise DecodeError(f"unknown record type {tag}")
    if rd.pos != len(code.bits):
        raise DecodeError("trailing bits after the last record")

    triples: list = [None] * (2 * k)
    heads: dict = {}  # triple index -> head index of its cycle
    leaves: dict = {}  # triple index -> endpoint side used to leave it

    def resolve(q: int, active: frozenset):
        if triples[q] is not None:
            return
        rec = records[q]
        if rec[0] == "head":
            triples[q] = rec[1:]
            heads[q], leaves[q] = q, RIGHT
            return
        pred, pside, own = (rec[3], rec[4], rec[5]) if rec[0] == "mid" else rec[1:4]
        if pred >= 2 * k or pred in active:
            raise DecodeError(f"record {q} has a dangling predecessor {pred}")
        if records[pred][0] == "last":
            raise DecodeError(f"record {q} follows the last record of a cycle")
        resolve(pred, active | {q})
        if leaves[pred] != pside:
            raise DecodeError(f"record {q} links to an endpoint its predecessor does not leave by")
        diag = _endpoint_diagonal(triples[pred], pside)
        head = heads[pred]
        if rec[0] == "mid":
            j, h = rec[1], rec[2]
            row = (h if own == RIGHT else j) - diag
        else:
            column = rec[4]
            row = column - diag
            hi, hj, _ = triples[head]
            other = row + (hj - hi)
            j, h = (other, column) if own == RIGHT else (column, other)
        triples[q] = (row, j, h)
        heads[q], leaves[q] = head, 1 - own

    for q in range(2 * k):
        resolve(q, frozenset({q}))
    for t in triples:
        i, j, h = t
        if not (1 <= i <= m and 1 <= j <= s and 1 <= h <= s) or j == h:
            raise DecodeError(f"decoded triple {t} is out of range")
    try:
        again = codec_encode(triples, m, s, k)
    except InvalidArgument as exc:
        raise DecodeError(str(exc)) from None
    if again.bits != code.bits:
        raise DecodeError("bit string is not in canonical form")
    return Tuple(tuple(triples))
