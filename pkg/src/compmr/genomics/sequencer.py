"""Toy single-end sequencer and the plain-text read format.

A read record is three lines: ``@id``, the bases, and a per-base quality
flag line (``I`` for a faithful base, ``#`` where the sequencer erred).
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

BASES = np.frombuffer(b"ACGT", dtype=np.uint8)
_CODE = np.full(256, 255, dtype=np.uint8)
_CODE[np.frombuffer(b"ACGT", dtype=np.uint8)] = np.arange(4, dtype=np.uint8)

INDEL_ERROR_SHARE = 0.1  # fraction of sequencing errors that are 1-base indels


def encode(seq: str) -> np.ndarray:
    codes = _CODE[np.frombuffer(seq.encode("ascii"), dtype=np.uint8)]
    if (codes == 255).any():
        raise ValueError("sequence contains non-ACGT symbols")
    return codes


def decode(codes: np.ndarray) -> str:
    return BASES[codes].tobytes().decode("ascii")


def sample_seed(seed: int, sample: str, genome: str) -> int:
    # same genome -> same reads, so unchanged tests stay byte-identical
    h = hashlib.sha256(f"{seed}:{sample}:".encode() + hashlib.sha256(genome.encode()).digest())
    return int.from_bytes(h.digest()[:8], "big")


def simulate_reads(genome: str, read_length: int, coverage: float, noise_rate: float, seed: int):
    """Return (ids, sequences, qualities) for uniformly placed forward reads."""
    rng = np.random.default_rng(seed)
    g = encode(genome)
    L = read_length
    if len(g) <= L + 1:
        return [], [], []
    count = int(round(coverage * len(g) / L))
    starts = np.sort(rng.integers(0, len(g) - L, count))
    windows = g[starts[:, None] + np.arange(L + 1)]
    reads = windows[:, :L].copy()
    errors = np.zeros((count, L), dtype=bool)
    if noise_rate > 0:
        errors = rng.random((count, L)) < noise_rate
        shift = rng.integers(1, 4, (count, L)).astype(np.uint8)
        reads = np.where(errors, (reads + shift) % 4, reads).astype(np.uint8)
        indel = errors & (rng.random((count, L)) < INDEL_ERROR_SHARE)
        for r, i in zip(*np.nonzero(indel)):
            if i == 0:
                continue
            if rng.random() < 0.5:  # drop base i, pull in one more from the window
                row = np.concatenate([reads[r, :i], windows[r, i + 1: L + 1]])
            else:
                row = np.concatenate([reads[r, :i], [rng.integers(0, 4)], windows[r, i: L - 1]])
            reads[r] = row.astype(np.uint8)
    ids = [f"r{j}" for j in range(count)]
    seqs = [decode(row) for row in reads]
    flags = np.where(errors, ord("#"), ord("I")).astype(np.uint8)
    quals = [row.tobytes().decode("ascii") for row in flags]
    return ids, seqs, quals


def write_reads(path, ids, seqs, quals) -> None:
    with open(path, "w") as fh:
        for i, s, q in zip(ids, seqs, quals):
            fh.write(f"@{i}\n{s}\n{q}\n")


def read_reads(path):
    lines = Path(path).read_text().splitlines()
    if len(lines) % 3:
        raise ValueError(f"{path}: truncated read record")
    ids = [l[1:] for l in lines[0::3]]
    return ids, lines[1::3], lines[2::3]
