# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled alignment kernels; same contract as ``_align_py``."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def mismatches(const unsigned char[:, ::1] reads, const unsigned char[::1] ref, const long long[::1] diags):
    cdef Py_ssize_t n = reads.shape[0], L = reads.shape[1], G = ref.shape[0]
    cdef Py_ssize_t i, j
    cdef long long pos, bad
    out = np.zeros(n, dtype=np.int64)
    cdef long long[::1] o = out
    for i in range(n):
        bad = 0
        for j in range(L):
            pos = diags[i] + j
            if pos < 0 or pos >= G or reads[i, j] != ref[pos]:
                bad += 1
        o[i] = bad
    return out


def breakpoints(const unsigned char[:, ::1] reads, const unsigned char[::1] ref,
                const long long[::1] lefts, const long long[::1] rights):
    cdef Py_ssize_t n = reads.shape[0], L = reads.shape[1], G = ref.shape[0]
    cdef Py_ssize_t i, j, s, ins
    cdef long long a, b, pos, cost, best, best_s
    bps = np.zeros(n, dtype=np.int64)
    costs = np.zeros(n, dtype=np.int64)
    cdef long long[::1] bo = bps
    cdef long long[::1] co = costs
    # suffix mismatch counts on the right diagonal, reused per read
    suffix = np.zeros(L + 1, dtype=np.int64)
    cdef long long[::1] suf = suffix
    for i in range(n):
        a = lefts[i]
        b = rights[i]
        ins = a - b if a > b else 0
        suf[L] = 0
        for j in range(L - 1, -1, -1):
            pos = b + j
            suf[j] = suf[j + 1] + (1 if (pos < 0 or pos >= G or reads[i, j] != ref[pos]) else 0)
        cost = 0  # mismatches of read[:s] on the left diagonal
        best = suf[ins]
        best_s = 0
        for s in range(1, L - ins + 1):
            pos = a + s - 1
            if pos < 0 or pos >= G or reads[i, s - 1] != ref[pos]:
                cost += 1
            if cost + suf[s + ins] < best:
                best = cost + suf[s + ins]
                best_s = s
        bo[i] = best_s
        co[i] = best
    return bps, costs
