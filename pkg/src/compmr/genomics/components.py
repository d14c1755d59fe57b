"""Registered executors, verdicts and the series generator of the genomics demo.

Vertex names follow the real tools they stand in for: ``bwa`` aligns both samples,
three ``strelka2-*`` callers find indels and ``sequenza-utils`` computes
the tumor/normal depth ratio.
"""

from __future__ import annotations

import enum
import threading
from pathlib import Path

import numpy as np

from ..errors import UsageError
from ..executors import BuiltinExecutor, register
from ..harness import failures_metric
from .align import Alignment, KmerIndex, read_alignments, toy_align, write_alignments
from .calling import (
    call_germline,
    call_somatic,
    depth_stat,
    event_to_call,
    read_calls,
    read_pileup,
    write_calls,
    write_pileup,
)
from .plan import EDGE, GeneratorConfig, MutationKind, build_plan
from .sequencer import read_reads, sample_seed, simulate_reads, write_reads

VERTICES = ("bwa", "strelka2-somatic", "strelka2-germline-tumor", "strelka2-germline-normal", "sequenza-utils")
BIN = 500
ELEVATED = 1.5
PERSIST = 1.3
INTERIOR_MARGIN = 2


class Fault(enum.Enum):
    DROP_EDGE_CALLS = "drop-edge"
    OFFSET_POSITIONS = "offset"
    SWALLOW_LAST_MUTATION = "swallow"

    @classmethod
    def parse(cls, text) -> "Fault":
        if isinstance(text, Fault):
            return text
        for f in cls:
            if text in (f.value, f.name, f.name.lower()):
                return f
        raise UsageError(f"unknown fault kind {text!r}; choose from {', '.join(f.value for f in cls)}")


_EXECUTOR_NAMES = {
    "bwa": "genomics.align",
    "strelka2-somatic": "genomics.call_somatic",
    "strelka2-germline-tumor": "genomics.call_germline",
    "strelka2-germline-normal": "genomics.call_germline",
    "sequenza-utils": "genomics.depth_ratio",
}


def inject_fault(component: str, fault) -> BuiltinExecutor:
    """Executor for ``component`` that corrupts its output on the last test."""
    fault = Fault.parse(fault)
    if component not in _EXECUTOR_NAMES:
        raise UsageError(f"{component!r} is not a genomics demo vertex")
    return BuiltinExecutor(_EXECUTOR_NAMES[component], {"fault": fault.value})


def _fault(params, ctx):
    f = params.get("fault")
    return Fault.parse(f) if f and ctx.is_last else None


_INDEX_CACHE: dict = {}
_INDEX_LOCK = threading.Lock()


def _reference(path) -> str:
    return Path(path).read_text().strip()


def _index(reference: str) -> KmerIndex:
    key = hash(reference)
    with _INDEX_LOCK:
        hit = _INDEX_CACHE.get(key)
        if hit is None:
            if len(_INDEX_CACHE) > 8:
                _INDEX_CACHE.clear()
            hit = _INDEX_CACHE[key] = KmerIndex.build(reference)
    return hit


def _near_edge(pos: int, length: int) -> bool:
    return pos <= EDGE or pos > length - EDGE


# -- executors -----------------------------------------------------------------


@register("executor", "genomics.align")
def align(inputs, outputs, params, ctx):
    ref = _reference(inputs["reference"])
    index = _index(ref)
    result = {}
    for sample in ("normal", "tumor"):
        ids, seqs, _ = read_reads(inputs[sample])
        result[sample] = toy_align(ids, seqs, ref, index)
    fault = _fault(params, ctx)
    if fault is Fault.DROP_EDGE_CALLS:
        for s, al in result.items():
            result[s] = [a for a in al if a.start >= EDGE and a.end <= len(ref) - EDGE]
    elif fault is Fault.OFFSET_POSITIONS:
        for s, al in result.items():
            result[s] = [_shift(a, 1) for a in al if a.end + 1 <= len(ref)]
    elif fault is Fault.SWALLOW_LAST_MUTATION:
        events = [event_to_call(ref, a.event) for al in result.values() for a in al if a.event != "."]
        if events:
            last = max(events)
            for s, al in result.items():
                result[s] = [a for a in al if a.event == "." or event_to_call(ref, a.event) != last]
    for s in ("normal", "tumor"):
        write_alignments(outputs[s], result[s])
    return f"aligned {len(result['normal'])}+{len(result['tumor'])} reads"


def _shift(a: Alignment, d: int) -> Alignment:
    event = a.event
    if event != ".":
        kind, pos, what = event.split(":", 2)
        event = f"{kind}:{int(pos) + d}:{what}"
    return Alignment(a.read_id, a.start + d, a.end + d, event)


def _caller_fault(calls: set, params, ctx, length: int) -> set:
    fault = _fault(params, ctx)
    if fault is Fault.DROP_EDGE_CALLS:
        return {c for c in calls if not _near_edge(c.pos, length)}
    if fault is Fault.OFFSET_POSITIONS:
        return {c._replace(pos=c.pos + 1) for c in calls}
    if fault is Fault.SWALLOW_LAST_MUTATION and calls:
        return calls - {max(calls)}
    return calls


def _thresholds(params):
    return {k: params[k] for k in ("min_support", "min_fraction") if k in params}


@register("executor", "genomics.call_germline")
def germline(inputs, outputs, params, ctx):
    ref = _reference(inputs["reference"])
    calls = call_germline(read_alignments(inputs["alignments"]), ref, **_thresholds(params))
    write_calls(outputs["calls"], _caller_fault(calls, params, ctx, len(ref)))


@register("executor", "genomics.call_somatic")
def somatic(inputs, outputs, params, ctx):
    ref = _reference(inputs["reference"])
    calls = call_somatic(read_alignments(inputs["normal"]), read_alignments(inputs["tumor"]), ref,
                         **_thresholds(params))
    write_calls(outputs["calls"], _caller_fault(calls, params, ctx, len(ref)))


def elevated_bins(ratio: np.ndarray, threshold: float = ELEVATED) -> np.ndarray:
    """Boolean per BIN-sized window: mean defined ratio at or above ``threshold``."""
    return bin_means(ratio) >= threshold


def bin_means(ratio: np.ndarray) -> np.ndarray:
    """Mean of the defined ratios in each window (0 when none is defined)."""
    n = len(ratio) // BIN
    r = ratio[: n * BIN].reshape(n, BIN)
    counts = (~np.isnan(r)).sum(axis=1)
    return np.where(counts > 0, np.nansum(r, axis=1) / np.maximum(counts, 1), 0.0)


def interior_bins(hot: np.ndarray, margin: int = INTERIOR_MARGIN) -> np.ndarray:
    """Elevated bins with ``margin`` elevated bins on both sides.

    A bin straddling a duplication boundary averages to about the
    threshold, so it and its neighbour are left out.
    """
    out = hot.copy()
    for d in range(1, margin + 1):
        out[d:] &= hot[:-d]
        out[:-d] &= hot[d:]
        out[:d] = False
        out[len(out) - d:] = False
    return out


def _runs(flags) -> list:
    """(first, last) index of each maximal run of True."""
    out, start = [], None
    for i, f in enumerate(list(flags) + [False]):
        if f and start is None:
            start = i
        elif not f and start is not None:
            out.append((start, i - 1))
            start = None
    return out


@register("executor", "genomics.depth_ratio")
def depth_ratio(inputs, outputs, params, ctx):
    ref = _reference(inputs["reference"])
    L = len(ref)
    dn, dt, ratio = depth_stat(read_alignments(inputs["normal"]), read_alignments(inputs["tumor"]), L)
    pos = np.arange(1, L + 1)
    fault = _fault(params, ctx)
    if fault is Fault.DROP_EDGE_CALLS:
        keep = ~((pos <= EDGE) | (pos > L - EDGE))
        pos, dn, dt, ratio = pos[keep], dn[keep], dt[keep], ratio[keep]
    elif fault is Fault.OFFSET_POSITIONS:
        pos = pos + 1
    elif fault is Fault.SWALLOW_LAST_MUTATION:
        runs = _runs(elevated_bins(ratio))
        if runs:
            # the longest run is the duplication; isolated noisy bins are not mutations
            first, last = max(runs, key=lambda r: (r[1] - r[0], r[0]))
            sl = slice(first * BIN, (last + 1) * BIN)
            dt = dt.copy()
            dt[sl] = dn[sl]
            ratio = ratio.copy()
            ratio[sl] = np.where(dn[sl] > 0, 1.0, np.nan)
    write_pileup(outputs["pileup"], pos, dn, dt, ratio)


# -- verdicts ------------------------------------------------------------------


def _calls(ctx, vertex, k, kind=None):
    calls = read_calls(ctx.output(vertex, "calls", k))
    if kind == "insertions":
        return {c for c in calls if c.is_insertion}
    if kind == "deletions":
        return {c for c in calls if c.is_deletion}
    return calls


def _series(ctx, vertex, params):
    return [_calls(ctx, vertex, k, params.get("kind")) for k in range(ctx.n)]


@register("verdict", "genomics.calls_grow")
def calls_grow(ctx, vertex, params):
    """Each test finds every call of the previous test (POS, REF, ALT identity)."""
    seq = _series(ctx, vertex, params)
    return all(a <= b for a, b in zip(seq, seq[1:]))


@register("metric", "genomics.calls_grow")
def calls_grow_metric(ctx, vertex, params):
    return failures_metric(_series(ctx, vertex, params))


@register("verdict", "genomics.alignments_nonempty")
def alignments_nonempty(ctx, vertex, params):
    return all(ctx.output(vertex, port, k).stat().st_size > 0 for k in range(ctx.n) for port in ("normal", "tumor"))


def _su_pairs(ctx, vertex):
    """Per adjacent pair: does the depth-ratio table reflect the series correctly?

    The real check is done by eye on a plot.  Here: the coordinate set
    is unchanged, and every interior elevated bin stays above ``PERSIST``
    on the next test.
    """
    tables = [read_pileup(ctx.output(vertex, "pileup", k)) for k in range(ctx.n)]
    ok = []
    for (p0, _, _, r0), (p1, _, _, r1) in zip(tables, tables[1:]):
        if len(p0) != len(p1) or not np.array_equal(p0, p1):
            ok.append(False)
            continue
        interior = interior_bins(elevated_bins(r0))
        ok.append(bool(np.all(bin_means(r1)[interior] >= PERSIST)))
    return ok


@register("verdict", "genomics.depth_ratio_persists")
def depth_ratio_persists(ctx, vertex, params):
    return all(_su_pairs(ctx, vertex))


@register("metric", "genomics.depth_ratio_persists")
def depth_ratio_metric(ctx, vertex, params):
    pairs = _su_pairs(ctx, vertex)
    return pairs.count(False) / len(pairs)


def _add_pairs(ctx, params):
    kind = params.get("kind")
    gt = [_calls(ctx, params["germline_tumor"], k, kind) for k in range(ctx.n)]
    gn = [_calls(ctx, params["germline_normal"], k, kind) for k in range(ctx.n)]
    so = [_calls(ctx, params["somatic"], k, kind) for k in range(ctx.n)]
    ok = []
    for j in range(ctx.n - 1):
        new_gt = gt[j + 1] - gt[j]
        new_gn = gn[j + 1] - gn[j]
        new_so = so[j + 1] - so[j]
        ok.append(new_gt == new_gn ^ new_so)
    return ok


@register("verdict", "genomics.germline_xor_somatic")
def germline_xor_somatic(ctx, vertex, params):
    """New tumor calls are exactly new normal calls xor new somatic calls."""
    return all(_add_pairs(ctx, params))


@register("metric", "genomics.germline_xor_somatic")
def germline_xor_somatic_metric(ctx, vertex, params):
    pairs = _add_pairs(ctx, params)
    return pairs.count(False) / len(pairs)


# -- generator -------------------------------------------------------------------

_CONFIG_FIELDS = set(GeneratorConfig.__dataclass_fields__) - {"seed", "mutation_kind"}


def generator_config(params: dict, class_tag: str, seed: int) -> GeneratorConfig:
    unknown = set(params) - _CONFIG_FIELDS
    if unknown:
        raise UsageError(f"unknown generator parameter(s): {', '.join(sorted(unknown))}")
    kind = {"add-insertions": MutationKind.INSERTIONS, "add-deletions": MutationKind.DELETIONS}.get(class_tag)
    if kind is None:
        raise UsageError(f"genomics generator has no class {class_tag!r}")
    return GeneratorConfig(seed=seed, mutation_kind=kind, **params)


def generate_series(cfg: GeneratorConfig, out_dir) -> tuple:
    """Write reference, per-test read files and the plan; return (plan, inputs)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    plan = build_plan(cfg)
    ref_path = out / "reference.txt"
    ref_path.write_text(plan.reference + "\n")
    plan.save(out / "plan.json")
    inputs = []
    for k in range(1, cfg.series_length + 1):
        bundle = {"reference": str(ref_path)}
        for sample in ("normal", "tumor"):
            genome = plan.genome(sample, k)
            reads = simulate_reads(genome, cfg.read_length, cfg.coverage_depth, cfg.noise_rate,
                                   sample_seed(cfg.seed, sample, genome))
            path = out / f"{sample}_{k}.reads"
            write_reads(path, *reads)
            bundle[sample] = str(path)
        inputs.append(bundle)
    return plan, inputs


@register("generator", "genomics.series")
def series(params, class_tag, index, seed, out_dir):
    params = dict(params)
    if "seed" in params:  # explicit seed wins over the derived per-group one
        seed = int(params.pop("seed"))
    cfg = generator_config(params, class_tag, seed)
    plan, inputs = generate_series(cfg, out_dir)
    return inputs, {"generator_seed": plan.config.seed if plan.config else seed,
                    "mutations": len(plan.mutations), "noise_rate": cfg.noise_rate,
                    "coverage_depth": cfg.coverage_depth}
