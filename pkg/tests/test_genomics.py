import importlib

import numpy as np
import pytest

from compmr.errors import UsageError
from compmr.genomics import _align_py
from compmr.genomics.align import KmerIndex, read_alignments, toy_align, write_alignments
from compmr.genomics.calling import call_germline, call_somatic, depth_stat, read_calls, write_calls
from compmr.genomics.components import Fault, inject_fault
from compmr.genomics.plan import (
    GeneratorConfig, Kind, Lineage, MutationKind, build_plan, event_call, normalize_deletion, normalize_insertion,
    random_reference,
)
from compmr.genomics.sequencer import encode, read_reads, sample_seed, simulate_reads, write_reads

try:
    _kernels = importlib.import_module("compmr.genomics._kernels")
except ImportError:
    _kernels = None


def small(seed, **kw):
    kw.setdefault("reference_length", 20_000)
    kw.setdefault("indel_probability", 0.002)
    return GeneratorConfig(seed=seed, **kw)


def test_tumor_truth_is_normal_xor_somatic():
    for seed in range(100):
        plan = build_plan(small(seed, mutation_kind=MutationKind(("insertions", "deletions")[seed % 2])))
        for k in range(1, plan.series_length + 1):
            somatic = {event_call(plan.reference, m) for m in plan.active(k, (Lineage.SOMATIC,))
                       if m.kind is not Kind.DUPLICATION}
            assert plan.truth("tumor", k) == plan.truth("normal", k) ^ somatic
            assert plan.truth_somatic(k) == somatic
            assert plan.truth("normal", k) <= plan.truth("tumor", k)


def test_mutation_kind_respected():
    for seed in range(20):
        plan = build_plan(small(seed, mutation_kind=MutationKind.INSERTIONS))
        assert all(m.kind is not Kind.MICRO_DELETION for m in plan.mutations)
        assert all(c.is_insertion for c in plan.truth("tumor", plan.series_length))


def test_series_grows():
    plan = build_plan(small(4))
    truths = [plan.truth("tumor", k) for k in range(1, plan.series_length + 1)]
    assert all(a <= b for a, b in zip(truths, truths[1:]))
    assert truths[-1] > truths[0]


def test_plan_reproducible():
    a, b = build_plan(small(9)), build_plan(small(9))
    assert a.to_json() == b.to_json()
    assert build_plan(small(10)).to_json() != a.to_json()


def test_config_validation():
    with pytest.raises(UsageError):
        GeneratorConfig(max_indel_size=51)
    with pytest.raises(UsageError):
        GeneratorConfig(series_length=1)
    with pytest.raises(UsageError):
        GeneratorConfig(noise_rate=1.5)


def test_left_normalization():
    ref = "GATTTTC"
    # deleting any T of the run gives one call, anchored on the A before it
    assert normalize_deletion(ref, 4, 1) == normalize_deletion(ref, 2, 1)
    assert normalize_deletion(ref, 4, 1) == (2, "AT", "A")
    assert normalize_insertion(ref, 5, "T") == normalize_insertion(ref, 2, "T")


def test_reads_seeded_by_genome():
    g = random_reference(3000, np.random.default_rng(0))
    s1, s2 = sample_seed(1, "normal", g), sample_seed(1, "normal", g + "A")
    assert s1 != s2
    assert simulate_reads(g, 100, 5, 0.01, s1) == simulate_reads(g, 100, 5, 0.01, s1)


def test_reads_roundtrip(tmp_path):
    g = random_reference(2000, np.random.default_rng(1))
    ids, seqs, quals = simulate_reads(g, 100, 3, 0.02, 5)
    write_reads(tmp_path / "r.reads", ids, seqs, quals)
    assert read_reads(tmp_path / "r.reads") == (ids, seqs, quals)


def test_align_exact_read():
    ref = random_reference(5000, np.random.default_rng(2))
    out = toy_align(["a"], [ref[100:250]], ref)
    assert out == [("a", 100, 250, ".")]


def test_align_random_read_dropped():
    ref = random_reference(5000, np.random.default_rng(3))
    junk = random_reference(150, np.random.default_rng(99))
    assert toy_align(["x"], [junk], ref) == []


def test_align_finds_indels():
    ref = random_reference(5000, np.random.default_rng(4))
    ins = ref[1000:1075] + "GGG" + ref[1075:1147]
    dele = ref[2000:2075] + ref[2080:2155]
    got = {a.read_id: a for a in toy_align(["i", "d"], [ins, dele], ref)}
    assert got["i"].event.startswith("I:") and got["i"].end == 1147
    assert got["d"].event.startswith("D:") and got["d"].event.endswith(":5")


def test_clean_calls_match_truth(tmp_path):
    plan = build_plan(small(5, coverage_depth=30))
    index = KmerIndex.build(plan.reference)
    k = plan.series_length
    aligned = {}
    for sample in ("normal", "tumor"):
        g = plan.genome(sample, k)
        ids, seqs, _ = simulate_reads(g, 150, 30, 0.0, sample_seed(0, sample, g))
        aligned[sample] = toy_align(ids, seqs, plan.reference, index)
        assert call_germline(aligned[sample], plan.reference) == plan.truth(sample, k)
    assert call_somatic(aligned["normal"], aligned["tumor"], plan.reference) == plan.truth_somatic(k)
    write_alignments(tmp_path / "a.tsv", aligned["tumor"])
    assert read_alignments(tmp_path / "a.tsv") == aligned["tumor"]
    write_calls(tmp_path / "c.tsv", plan.truth("tumor", k))
    assert read_calls(tmp_path / "c.tsv") == plan.truth("tumor", k)


def test_depth_ratio_doubles_in_duplication():
    plan = build_plan(small(6, coverage_depth=50, indel_probability=0.0))
    dup = next(m for m in plan.mutations if m.kind is Kind.DUPLICATION)
    index = KmerIndex.build(plan.reference)
    al = {}
    for sample in ("normal", "tumor"):
        g = plan.genome(sample, 1)
        ids, seqs, _ = simulate_reads(g, 150, 50, 0.0, sample_seed(0, sample, g))
        al[sample] = toy_align(ids, seqs, plan.reference, index)
    _, _, ratio = depth_stat(al["normal"], al["tumor"], len(plan.reference))
    inner = ratio[dup.position + 300: dup.end - 300]
    assert np.nanmean(inner) == pytest.approx(2.0, rel=0.2)
    outside = ratio[1000: dup.position - 1000]
    assert np.nanmean(outside) == pytest.approx(1.0, rel=0.2)


@pytest.mark.skipif(_kernels is None, reason="compiled kernels not built")
def test_kernels_match_fallback():
    rng = np.random.default_rng(7)
    ref = encode(random_reference(4000, rng))
    n, L = 300, 120
    lefts = rng.integers(0, 3000, n).astype(np.int64)
    rights = lefts + rng.integers(-20, 21, n)
    reads = rng.integers(0, 4, (n, L)).astype(np.uint8)
    for i in range(0, n, 2):  # half the reads are real
        reads[i] = ref[lefts[i]: lefts[i] + L]
    assert np.array_equal(_kernels.mismatches(reads, ref, lefts), _align_py.mismatches(reads, ref, lefts))
    bc, cc = _kernels.breakpoints(reads, ref, lefts, rights)
    bp, cp = _align_py.breakpoints(reads, ref, lefts, rights)
    assert np.array_equal(bc, bp) and np.array_equal(cc, cp)


def test_inject_fault():
    ex = inject_fault("bwa", "offset")
    assert ex.name == "genomics.align" and ex.params == {"fault": "offset"}
    assert Fault.parse("drop-edge") is Fault.DROP_EDGE_CALLS
    with pytest.raises(UsageError):
        inject_fault("gatk", "offset")
    with pytest.raises(UsageError):
        inject_fault("bwa", "meltdown")
