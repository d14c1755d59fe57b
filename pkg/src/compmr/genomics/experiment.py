"""One-call runs of the genomics demo from Python."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import yaml

from ..harness import ExecutionTrace, TestGroup, Verdict, evaluate, run_series
from ..specfile import PipelineSpec, load_spec_text
from .components import generate_series, generator_config, inject_fault
from .plan import MutationPlan, MutationKind

SPEC = Path(__file__).resolve().parent.parent / "specs" / "genomics.yaml"


def genomics_spec(fault: Optional[str] = None, vertex: Optional[str] = None) -> PipelineSpec:
    doc = yaml.safe_load(SPEC.read_text())
    if fault:
        ex = inject_fault(vertex, fault)
        doc["vertices"][vertex]["executor"] = {"builtin": ex.name, "params": dict(ex.params)}
    doc["groups"] = []
    return load_spec_text(yaml.safe_dump(doc, sort_keys=False), SPEC.parent, str(SPEC))


@dataclass
class SeriesRun:
    plan: MutationPlan
    group: TestGroup
    trace: ExecutionTrace
    verdict: Verdict


def run_genomics(workdir, kind="insertions", seed=0, fault=None, vertex=None, **params) -> SeriesRun:
    """Generate one series, run it, and evaluate the composite for its class."""
    workdir = Path(workdir)
    spec = genomics_spec(fault, vertex)
    tag = MutationKind(kind).class_tag
    cfg = generator_config(params, tag, seed)
    plan, inputs = generate_series(cfg, workdir / "inputs" / f"{tag}-{seed}")
    group = TestGroup(f"{tag}-{seed}", tag, inputs, {"seed": seed})
    trace = run_series(spec.graph, group, workdir)
    result = spec.derive()
    candidate = next(c for c in result.candidates if tag in c.domain)
    return SeriesRun(plan, group, trace, evaluate(candidate, group, trace, spec.graph))
