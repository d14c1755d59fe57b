"""Seed-and-split toy aligner and its tab-separated alignment format.

Each alignment line is ``read_id  start  end  event`` where [start, end)
is the covered reference interval and ``event`` is ``.`` (no gap),
``I:<pos>:<bases>`` or ``D:<pos>:<length>`` with 0-based positions.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import kernels
from .sequencer import encode

K = 16
SEED_STEPS = 4
MAX_GAP = 50
MAX_MISMATCH_FRACTION = 0.1


class Alignment(NamedTuple):
    read_id: str
    start: int
    end: int
    event: str = "."


def kmer_codes(codes: np.ndarray, k: int = K) -> np.ndarray:
    """Integer code of every k-mer along the last axis."""
    windows = np.lib.stride_tricks.sliding_window_view(codes, k, axis=-1).astype(np.int64)
    weights = (4 ** np.arange(k - 1, -1, -1)).astype(np.int64)
    return windows @ weights


@dataclass
class KmerIndex:
    """Positions of k-mers occurring exactly once in the reference."""

    codes: np.ndarray
    positions: np.ndarray
    reference: np.ndarray

    @classmethod
    def build(cls, reference: str, k: int = K) -> "KmerIndex":
        ref = encode(reference)
        if len(ref) < k:
            return cls(np.zeros(0, np.int64), np.zeros(0, np.int64), ref)
        codes = kmer_codes(ref, k)
        uniq, first, counts = np.unique(codes, return_index=True, return_counts=True)
        keep = counts == 1
        return cls(uniq[keep], first[keep].astype(np.int64), ref)

    def lookup(self, codes: np.ndarray) -> np.ndarray:
        """Reference position per code, -1 when absent or repeated."""
        if len(self.codes) == 0:
            return np.full(codes.shape, -1, np.int64)
        idx = np.searchsorted(self.codes, codes)
        idx = np.clip(idx, 0, len(self.codes) - 1)
        hit = self.codes[idx] == codes
        return np.where(hit, self.positions[idx], -1)


def _first_hit(index: KmerIndex, reads: np.ndarray, offsets) -> np.ndarray:
    """Diagonal (ref pos - read offset) of the first seed that hits, else a sentinel."""
    diag = np.full(reads.shape[0], np.iinfo(np.int64).min, np.int64)
    for off in offsets:
        if off < 0 or off + K > reads.shape[1]:
            continue
        pos = index.lookup(kmer_codes(reads[:, off: off + K])[:, 0])
        fill = (diag == np.iinfo(np.int64).min) & (pos >= 0)
        diag[fill] = pos[fill] - off
    return diag


def toy_align(read_ids, seqs, reference, index: KmerIndex = None) -> list:
    """Place each read; unplaceable reads are dropped.

    Seeds from the read's left end and right end give two diagonals.  Equal
    diagonals mean an ungapped hit; different ones (within ``MAX_GAP``)
    mean one indel whose position is the split with fewest mismatches.
    """
    if not reference:
        raise ValueError("reference is empty")
    index = index or KmerIndex.build(reference)
    if not seqs:
        return []
    L = len(seqs[0])
    if any(len(s) != L for s in seqs):
        raise ValueError("reads must share one length")
    reads = encode("".join(seqs)).reshape(len(seqs), L)
    ref = index.reference
    none = np.iinfo(np.int64).min
    left = _first_hit(index, reads, [j * K for j in range(SEED_STEPS)])
    right = _first_hit(index, reads, [L - K - j * K for j in range(SEED_STEPS)])
    has_l, has_r = left != none, right != none
    left = np.where(has_l, left, right)
    right = np.where(has_r, right, left)
    placed = has_l | has_r
    gap = right - left
    placed &= np.abs(gap) <= MAX_GAP
    limit = int(MAX_MISMATCH_FRACTION * L)

    out = []
    straight = np.nonzero(placed & (gap == 0))[0]
    if len(straight):
        mm = kernels.mismatches(np.ascontiguousarray(reads[straight]), ref, np.ascontiguousarray(left[straight]))
        for i, bad in zip(straight, mm):
            if bad <= limit and 0 <= left[i] and left[i] + L <= len(ref):
                out.append(Alignment(read_ids[i], int(left[i]), int(left[i]) + L))
    gapped = np.nonzero(placed & (gap != 0))[0]
    if len(gapped):
        bps, costs = kernels.breakpoints(np.ascontiguousarray(reads[gapped]), ref,
                                         np.ascontiguousarray(left[gapped]), np.ascontiguousarray(right[gapped]))
        for i, bp, bad in zip(gapped, bps, costs):
            a, b = int(left[i]), int(right[i])
            if bad > limit or a < 0 or b + L > len(ref):
                continue
            if b < a:
                event = f"I:{a + bp}:{seqs[i][bp: bp + a - b]}"
            else:
                event = f"D:{a + bp}:{b - a}"
            out.append(Alignment(read_ids[i], a, b + L, event))
    out.sort(key=lambda x: (x.start, x.read_id))
    return out


def write_alignments(path, alignments) -> None:
    with open(path, "w") as fh:
        for a in alignments:
            fh.write(f"{a.read_id}\t{a.start}\t{a.end}\t{a.event}\n")


def read_alignments(path) -> list:
    f = Path(path).read_text().split()
    return list(map(Alignment, f[0::4], map(int, f[1::4]), map(int, f[2::4]), f[3::4]))
