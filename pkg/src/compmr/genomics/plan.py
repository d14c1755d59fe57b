"""Mutation plans: which indels and duplications enter which test of a series."""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from ..errors import UsageError

BASES = "ACGT"
EDGE = 200  # distance from either end treated as "edge" by the fault injector
MARGIN = 100  # free bases around each indel segment
MAX_RETRIES = 10


class Kind(enum.Enum):
    MICRO_INSERTION = "MICRO_INSERTION"
    MICRO_DELETION = "MICRO_DELETION"
    DUPLICATION = "DUPLICATION"


class Lineage(enum.Enum):
    GERMLINE = "GERMLINE"
    SOMATIC = "SOMATIC"


class MutationKind(enum.Enum):
    INSERTIONS = "insertions"
    DELETIONS = "deletions"

    @property
    def indel(self) -> Kind:
        return Kind.MICRO_INSERTION if self is MutationKind.INSERTIONS else Kind.MICRO_DELETION

    @property
    def class_tag(self) -> str:
        return f"add-{self.value}"


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    indel_probability: float = 0.0005
    copynumber_probability: float = 0.001
    min_indel_size: int = 1
    max_indel_size: int = 50
    min_dup_size: int = 5000
    max_dup_size: int = 10000
    series_length: int = 9
    mutation_kind: MutationKind = MutationKind.INSERTIONS
    read_length: int = 150
    coverage_depth: float = 30.0
    noise_rate: float = 0.0
    reference_length: int = 50_000
    reference_path: Optional[str] = None
    germline_fraction: float = 0.5
    # guaranteed mutations near both ends and one duplication, present from test 1
    sentinels: bool = True

    def __post_init__(self):
        if isinstance(self.mutation_kind, str):
            object.__setattr__(self, "mutation_kind", MutationKind(self.mutation_kind))
        if not 1 <= self.min_indel_size <= self.max_indel_size <= 50:
            raise UsageError("indel sizes must satisfy 1 <= min <= max <= 50")
        if not 1 <= self.min_dup_size <= self.max_dup_size:
            raise UsageError("duplication sizes must satisfy 1 <= min <= max")
        for name in ("indel_probability", "copynumber_probability", "noise_rate", "germline_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1]")
        if self.series_length < 2:
            raise UsageError("series_length must be at least 2")
        if self.read_length < 40:
            raise UsageError("read_length must be at least 40")
        if self.coverage_depth <= 0:
            raise UsageError("coverage_depth must be positive")

    def to_json(self) -> dict:
        d = asdict(self)
        d["mutation_kind"] = self.mutation_kind.value
        return d


@dataclass(frozen=True)
class Mutation:
    position: int  # 0-based reference coordinate
    kind: Kind
    payload: str  # inserted bases, deleted bases, or duplicated segment
    lineage: Lineage
    introduced_at: int  # 1-based test index

    @property
    def end(self) -> int:
        """Reference end of the affected interval."""
        return self.position + (0 if self.kind is Kind.MICRO_INSERTION else len(self.payload))

    def to_json(self) -> dict:
        return {"position": self.position, "kind": self.kind.value, "payload": self.payload,
                "lineage": self.lineage.value, "introduced_at": self.introduced_at}

    @classmethod
    def from_json(cls, d) -> "Mutation":
        return cls(int(d["position"]), Kind(d["kind"]), d["payload"], Lineage(d["lineage"]), int(d["introduced_at"]))


class VariantCall(NamedTuple):
    pos: int  # 1-based anchor position, as in VCF
    ref: str
    alt: str

    @property
    def is_insertion(self) -> bool:
        return len(self.alt) > len(self.ref)

    @property
    def is_deletion(self) -> bool:
        return len(self.alt) < len(self.ref)


@dataclass(frozen=True)
class MutationPlan:
    reference: str
    segments: tuple  # ((start, end, Kind), ...) sorted, disjoint
    mutations: tuple
    series_length: int
    config: Optional[GeneratorConfig] = field(default=None, compare=False)

    def active(self, k: int, lineages=(Lineage.GERMLINE, Lineage.SOMATIC)) -> list:
        """Mutations carried by test ``k`` (1-based) for the given lineages."""
        return [m for m in self.mutations if m.introduced_at <= k and m.lineage in lineages]

    def genome(self, sample: str, k: int) -> str:
        return apply_mutations(self.reference, self.active(k, sample_lineages(sample)))

    def truth(self, sample: str, k: int) -> set:
        """Indel calls a perfect germline caller would make on ``sample`` at test k."""
        return {event_call(self.reference, m) for m in self.active(k, sample_lineages(sample))
                if m.kind is not Kind.DUPLICATION}

    def truth_somatic(self, k: int) -> set:
        return self.truth("tumor", k) - self.truth("normal", k)

    def to_json(self) -> dict:
        return {
            "reference_length": len(self.reference),
            "series_length": self.series_length,
            "segments": [[s, e, kind.value] for s, e, kind in self.segments],
            "mutations": [m.to_json() for m in self.mutations],
            "config": self.config.to_json() if self.config else None,
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")


def sample_lineages(sample: str) -> tuple:
    if sample == "normal":
        return (Lineage.GERMLINE,)
    if sample == "tumor":
        return (Lineage.GERMLINE, Lineage.SOMATIC)
    raise UsageError(f"unknown sample {sample!r}")


def apply_mutations(reference: str, mutations) -> str:
    """Sample genome; mutations are in reference coordinates and non-overlapping."""
    seq = reference
    for m in sorted(mutations, key=lambda m: m.position, reverse=True):
        if m.kind is Kind.MICRO_INSERTION:
            seq = seq[: m.position] + m.payload + seq[m.position:]
        elif m.kind is Kind.MICRO_DELETION:
            seq = seq[: m.position] + seq[m.end:]
        else:  # tandem copy right after the segment
            seq = seq[: m.end] + m.payload + seq[m.end:]
    return seq


def normalize_insertion(reference: str, pos: int, bases: str) -> VariantCall:
    """Left-align an insertion placed before reference[pos]."""
    while pos > 1 and reference[pos - 1] == bases[-1]:
        bases = reference[pos - 1] + bases[:-1]
        pos -= 1
    anchor = reference[pos - 1]
    return VariantCall(pos, anchor, anchor + bases)


def normalize_deletion(reference: str, pos: int, length: int) -> VariantCall:
    """Left-align a deletion of reference[pos:pos+length]."""
    while pos > 1 and reference[pos - 1] == reference[pos + length - 1]:
        pos -= 1
    return VariantCall(pos, reference[pos - 1: pos + length], reference[pos - 1])


def event_call(reference: str, m: Mutation) -> VariantCall:
    if m.kind is Kind.MICRO_INSERTION:
        return normalize_insertion(reference, m.position, m.payload)
    if m.kind is Kind.MICRO_DELETION:
        return normalize_deletion(reference, m.position, len(m.payload))
    raise UsageError("duplications have no indel call")


def random_reference(length: int, rng: np.random.Generator) -> str:
    return "".join(BASES[i] for i in rng.integers(0, 4, length))


def load_reference(path) -> str:
    """Import hook for a user-supplied genome: plain or FASTA-style text."""
    lines = Path(path).read_text().splitlines()
    seq = "".join(l.strip() for l in lines if l.strip() and not l.startswith(">")).upper()
    bad = set(seq) - set(BASES)
    if bad:
        raise UsageError(f"reference {path} contains non-ACGT symbols: {''.join(sorted(bad))}")
    if not seq:
        raise UsageError(f"reference {path} is empty")
    return seq


class _Layout:
    """Disjoint-interval bookkeeping for segment placement."""

    def __init__(self):
        self.taken: list = []

    def free(self, s, e) -> bool:
        return all(e <= a or s >= b for a, b, _ in self.taken)

    def add(self, s, e, kind):
        self.taken.append((s, e, kind))


def _indel(rng, cfg, kind: Kind, reference: str, pos: int, lineage, k) -> Mutation:
    size = int(rng.integers(cfg.min_indel_size, cfg.max_indel_size + 1))
    if kind is Kind.MICRO_INSERTION:
        payload = "".join(BASES[i] for i in rng.integers(0, 4, size))
    else:
        payload = reference[pos: pos + size]
    return Mutation(pos, kind, payload, lineage, k)


def _sample_plan(cfg: GeneratorConfig, seed: int) -> MutationPlan:
    rng = np.random.default_rng(seed)
    reference = load_reference(cfg.reference_path) if cfg.reference_path else random_reference(cfg.reference_length, rng)
    L = len(reference)
    n = cfg.series_length
    indel = cfg.mutation_kind.indel
    layout = _Layout()
    muts: list = []
    span = cfg.max_indel_size + 2 * MARGIN

    lo, hi = EDGE + span, L - EDGE - span
    if cfg.sentinels:
        dup_len = int(rng.integers(cfg.min_dup_size, cfg.max_dup_size + 1))
        dup_len = min(dup_len, int(0.4 * L))
        right_free = L - 3 * span
        if dup_len < 1 or right_free - dup_len < 2 * span + EDGE:
            raise UsageError(f"reference of {L} bases is too short for the edge mutations")
        # somatic near the left edge, somatic and germline near the right edge
        for pos, lineage in ((EDGE - 20 - cfg.max_indel_size, Lineage.SOMATIC),
                             (L - 2 * span, Lineage.SOMATIC),
                             (L - EDGE + 20, Lineage.GERMLINE)):
            m = _indel(rng, cfg, indel, reference, pos, lineage, 1)
            muts.append(m)
            layout.add(max(0, pos - MARGIN), min(L, pos + cfg.max_indel_size + MARGIN), indel)
        ds = right_free - dup_len
        muts.append(Mutation(ds, Kind.DUPLICATION, reference[ds:right_free], Lineage.SOMATIC, 1))
        layout.add(ds - MARGIN, right_free + MARGIN, Kind.DUPLICATION)
        hi = ds - MARGIN - span

    if hi > lo:
        # extra duplications, one draw per max-size segment
        for s in range(lo, hi - cfg.max_dup_size, cfg.max_dup_size + 2 * MARGIN):
            if rng.random() < cfg.copynumber_probability:
                size = int(rng.integers(cfg.min_dup_size, cfg.max_dup_size + 1))
                if layout.free(s - MARGIN, s + size + MARGIN):
                    muts.append(Mutation(s, Kind.DUPLICATION, reference[s: s + size], Lineage.SOMATIC,
                                         int(rng.integers(1, n + 1))))
                    layout.add(s - MARGIN, s + size + MARGIN, Kind.DUPLICATION)
        count = int(rng.binomial(hi - lo, cfg.indel_probability))
        attempts = 0
        placed = 0
        while placed < count and attempts < 50 * (count + 1):
            attempts += 1
            pos = int(rng.integers(lo, hi))
            seg = (pos - MARGIN, pos + cfg.max_indel_size + MARGIN)
            if not layout.free(*seg):
                continue
            lineage = Lineage.GERMLINE if rng.random() < cfg.germline_fraction else Lineage.SOMATIC
            muts.append(_indel(rng, cfg, indel, reference, pos, lineage, int(rng.integers(1, n + 1))))
            layout.add(*seg, indel)
            placed += 1

    muts.sort(key=lambda m: (m.position, m.kind.value))
    segments = tuple(sorted(layout.taken))
    return MutationPlan(reference, segments, tuple(muts), n, cfg)


def build_plan(cfg: GeneratorConfig) -> MutationPlan:
    """Sample a plan; an empty draw is retried with the next seed."""
    can_sample = cfg.sentinels or cfg.indel_probability > 0 or cfg.copynumber_probability > 0
    for attempt in range(MAX_RETRIES):
        plan = _sample_plan(cfg, cfg.seed + attempt)
        if plan.mutations or not can_sample:
            if attempt:
                plan = replace(plan, config=replace(cfg, seed=cfg.seed + attempt))
            return plan
    raise UsageError(f"no mutations sampled after {MAX_RETRIES} seeds starting at {cfg.seed}")


def load_plan(path, reference: str) -> MutationPlan:
    d = json.loads(Path(path).read_text())
    cfg = d.get("config")
    return MutationPlan(reference, tuple((s, e, Kind(k)) for s, e, k in d["segments"]),
                        tuple(Mutation.from_json(m) for m in d["mutations"]), d["series_length"],
                        GeneratorConfig(**cfg) if cfg else None)
