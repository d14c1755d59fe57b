"""Reference implementation of the alignment kernels (numpy, no compiler needed)."""

import numpy as np


def _matches(read, ref, diag):
    """Boolean per read base: does it equal the reference on this diagonal?"""
    idx = np.arange(read.shape[0]) + diag
    ok = (idx >= 0) & (idx < ref.shape[0])
    out = np.zeros(read.shape[0], dtype=bool)
    out[ok] = read[ok] == ref[idx[ok]]
    return out


def mismatches(reads, ref, diags):
    """Mismatch count of each read placed ungapped at ``diags``."""
    n, L = reads.shape
    idx = diags[:, None] + np.arange(L)
    ok = (idx >= 0) & (idx < ref.shape[0])
    ref_bases = ref[np.clip(idx, 0, ref.shape[0] - 1)]
    return ((reads != ref_bases) | ~ok).sum(axis=1).astype(np.int64)


def breakpoints(reads, ref, lefts, rights):
    """Best split of each gapped read between its left and right diagonals.

    A read with left diagonal a and right diagonal b has an insertion of
    a - b bases (b < a) or a deletion of b - a bases (b > a).  Bases before
    the split follow a, bases after the gap follow b.  Returns the split
    index minimizing mismatches (leftmost on ties) and that mismatch count.
    """
    n, L = reads.shape
    bps = np.zeros(n, dtype=np.int64)
    costs = np.zeros(n, dtype=np.int64)
    for i in range(n):
        a, b = int(lefts[i]), int(rights[i])
        ins = max(0, a - b)
        left_bad = np.concatenate([[0], np.cumsum(~_matches(reads[i], ref, a))])
        right_bad = np.concatenate([np.cumsum((~_matches(reads[i], ref, b))[::-1])[::-1], [0]])
        split = np.arange(0, L - ins + 1)
        cost = left_bad[split] + right_bad[split + ins]
        j = int(np.argmin(cost))
        bps[i] = split[j]
        costs[i] = cost[j]
    return bps, costs
