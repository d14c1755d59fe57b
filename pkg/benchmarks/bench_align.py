"""Time the alignment kernels: compiled extension against the numpy fallback.

    python benchmarks/bench_align.py [--reads 3000] [--repeat 5]

Reads are simulated on a random reference; half of them carry a small
indel so the breakpoint kernel has real work.  Both backends must agree.
"""

import argparse
import timeit

import numpy as np

from compmr.genomics import _align_py
from compmr.genomics.plan import random_reference
from compmr.genomics.sequencer import encode

try:
    from compmr.genomics import _kernels
except ImportError:
    _kernels = None


def workload(n_reads, read_length=150, seed=0):
    rng = np.random.default_rng(seed)
    ref = encode(random_reference(50_000, rng))
    lefts = rng.integers(100, len(ref) - 2 * read_length, n_reads).astype(np.int64)
    shift = rng.integers(-20, 21, n_reads)
    shift[::2] = 0
    rights = lefts + shift
    reads = ref[lefts[:, None] + np.arange(read_length)].copy()
    noise = rng.random(reads.shape) < 0.01
    reads[noise] = (reads[noise] + 1) % 4
    return reads, ref, lefts, rights


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--reads", type=int, default=3000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    reads, ref, lefts, rights = workload(args.reads)
    backends = {"numpy": _align_py}
    if _kernels is None:
        print("compiled kernels not built; timing the numpy fallback only")
    else:
        backends["cython"] = _kernels

    results = {}
    for name, mod in backends.items():
        mm = mod.mismatches(reads, ref, lefts)
        bp = mod.breakpoints(reads, ref, lefts, rights)
        results[name] = (mm, bp)
        t_mm = min(timeit.repeat(lambda: mod.mismatches(reads, ref, lefts), number=1, repeat=args.repeat))
        t_bp = min(timeit.repeat(lambda: mod.breakpoints(reads, ref, lefts, rights), number=1, repeat=args.repeat))
        print(f"{name:7s} mismatches {t_mm * 1e3:8.2f} ms   breakpoints {t_bp * 1e3:8.2f} ms   ({args.reads} reads)")

    if len(results) == 2:
        (mm_a, (b_a, c_a)), (mm_b, (b_b, c_b)) = results.values()
        same = np.array_equal(mm_a, mm_b) and np.array_equal(b_a, b_b) and np.array_equal(c_a, c_b)
        print("backends agree" if same else "BACKENDS DISAGREE")
        return 0 if same else 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
