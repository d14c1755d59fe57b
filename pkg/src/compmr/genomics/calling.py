"""Pileup-threshold indel callers and the depth-ratio statistic."""

from __future__ import annotations

from collections import Counter
from pathlib import Path

import numpy as np

from .plan import VariantCall, normalize_deletion, normalize_insertion

MIN_SUPPORT = 2
MIN_FRACTION = 0.2


def depth(alignments, length: int) -> np.ndarray:
    """Number of reads covering each reference position."""
    diff = np.zeros(length + 1, dtype=np.int64)
    if alignments:
        starts = np.fromiter((a.start for a in alignments), np.int64, len(alignments))
        ends = np.fromiter((a.end for a in alignments), np.int64, len(alignments))
        np.add.at(diff, np.clip(starts, 0, length), 1)
        np.add.at(diff, np.clip(ends, 0, length), -1)
    return np.cumsum(diff)[:length]


def event_to_call(reference: str, event: str) -> VariantCall:
    kind, pos, what = event.split(":", 2)
    if kind == "I":
        return normalize_insertion(reference, int(pos), what)
    return normalize_deletion(reference, int(pos), int(what))


def call_germline(alignments, reference: str, min_support: int = MIN_SUPPORT,
                  min_fraction: float = MIN_FRACTION) -> set:
    """Calls supported by enough reads, both absolutely and relative to depth."""
    support = Counter(event_to_call(reference, a.event) for a in alignments if a.event != ".")
    if not support:
        return set()
    cov = depth(alignments, len(reference))
    calls = set()
    for call, n in support.items():
        if n >= min_support and n >= min_fraction * cov[call.pos - 1]:
            calls.add(call)
    return calls


def call_somatic(normal_alignments, tumor_alignments, reference: str, **kw) -> set:
    return call_germline(tumor_alignments, reference, **kw) - call_germline(normal_alignments, reference, **kw)


def depth_stat(normal_alignments, tumor_alignments, length: int):
    """Per-position (depth_normal, depth_tumor, ratio); ratio is NaN where normal depth is 0."""
    dn = depth(normal_alignments, length)
    dt = depth(tumor_alignments, length)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dn > 0, dt / np.maximum(dn, 1), np.nan)
    return dn, dt, ratio


def write_calls(path, calls) -> None:
    with open(path, "w") as fh:
        fh.write("POS\tREF\tALT\n")
        for c in sorted(calls):
            fh.write(f"{c.pos}\t{c.ref}\t{c.alt}\n")


def read_calls(path) -> set:
    lines = Path(path).read_text().splitlines()
    out = set()
    for line in lines[1:]:
        if line:
            pos, ref, alt = line.split("\t")
            out.add(VariantCall(int(pos), ref, alt))
    return out


def write_pileup(path, positions, dn, dt, ratio) -> None:
    rs = ["NA" if r != r else "%.4f" % r for r in np.asarray(ratio, dtype=float).tolist()]
    rows = map("%d\t%d\t%d\t%s\n".__mod__, zip(np.asarray(positions).tolist(), np.asarray(dn).tolist(),
                                                 np.asarray(dt).tolist(), rs))
    with open(path, "w") as fh:
        fh.write("pos\tdepth_normal\tdepth_tumor\tdepth_ratio\n")
        fh.writelines(rows)


def read_pileup(path):
    """Arrays (pos, depth_normal, depth_tumor, ratio) with NaN for NA."""
    f = Path(path).read_text().split()[4:]
    pos = np.array(f[0::4], dtype=np.int64)
    dn = np.array(f[1::4], dtype=np.int64)
    dt = np.array(f[2::4], dtype=np.int64)
    ratio = np.array([np.nan if r == "NA" else float(r) for r in f[3::4]], dtype=np.float64)
    return pos, dn, dt, ratio
