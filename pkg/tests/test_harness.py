import json
from pathlib import Path

import pytest

from compmr.algebra import FALSE, TRUE
from compmr.derivation import is_robust
from compmr.detector import spec_path
from compmr.errors import UsageError
from compmr.exprtext import parse_expr
from compmr.harness import (
    ExecutionTrace, Status, TestGroup, evaluate, failures_metric, report, run_groups, run_series,
)
from compmr.specfile import load_spec, load_spec_text

IDENTITY = """
name: ident
classes: [c]
vertices:
  A: {inputs: [x], outputs: [y], executor: identity}
inputs: {x: [A.x]}
outputs: [A.y]
atoms:
  R: {vertex: A, domain: all, verdict: {builtin: lines_subset_chain, params: {port: y}}}
"""

CHAIN_WITH_FAILURE = """
name: chain
classes: [c]
vertices:
  A: {inputs: [x], outputs: [y], executor: fail}
  B: {inputs: [x], outputs: [y], executor: identity}
inputs: {x: [A.x]}
edges: [A.y -> B.x]
atoms:
  RA: {vertex: A, domain: all, verdict: outputs_nonempty}
  RB: {vertex: B, domain: all, verdict: outputs_nonempty}
"""


def _files(tmp_path, *texts):
    out = []
    for i, t in enumerate(texts):
        p = tmp_path / f"in{i}.txt"
        p.write_text(t)
        out.append({"x": str(p)})
    return out


@pytest.mark.parametrize("seq, expected", [
    ([{1}, {1, 2}, {1, 2, 3}], 0.0),
    ([{1}] * 8 + [set()], 0.125),
    ([{1, 2}, {1}, set()], 1.0),
])
def test_failures_metric(seq, expected):
    assert failures_metric(seq) == pytest.approx(expected, abs=1e-12)


def test_failures_metric_needs_two():
    with pytest.raises(UsageError):
        failures_metric([{1}])


def test_group_needs_two_inputs():
    with pytest.raises(UsageError, match="at least 2"):
        TestGroup("g", "c", [{"x": "a"}])


def test_identity_trace(tmp_path):
    spec = load_spec_text(IDENTITY)
    group = TestGroup("g1", "c", _files(tmp_path, "a\n", "a\nb\n"))
    trace = run_series(spec.graph, group, tmp_path / "w")
    assert trace.computed("A")
    assert trace.output("A", "y", 1).read_text() == "a\nb\n"
    assert len(trace.records) == 2
    manifest = json.loads((tmp_path / "w" / "traces" / "g1.json").read_text())
    for rec in manifest["records"]:
        for rel in rec["outputs"].values():
            assert not Path(rel).is_absolute()
    cand = spec.derive()[0]
    v = evaluate(cand, group, trace, spec.graph)
    assert v.composite_value == TRUE and not v.suspects.vertex_ids


def test_failed_executor_skips_downstream(tmp_path):
    spec = load_spec_text(CHAIN_WITH_FAILURE)
    group = TestGroup("g", "c", _files(tmp_path, "a", "b"))
    trace = run_series(spec.graph, group, tmp_path / "w")
    a, b = trace.record("A", 0), trace.record("B", 0)
    assert a.status is Status.EXECUTED and not a.ok and "deliberate" in a.exit_info
    assert b.status is Status.SKIPPED
    v = evaluate(spec.derive()[0], group, trace, spec.graph)
    assert v.composite_value.is_not_computed


def test_resume_reuses_objects(tmp_path):
    spec = load_spec_text(IDENTITY)
    group = TestGroup("g", "c", _files(tmp_path, "a", "ab"))
    run_series(spec.graph, group, tmp_path / "w")
    objects = sorted(p.name for p in (tmp_path / "w" / "objects").iterdir())
    stamps = [(tmp_path / "w" / "objects" / o / ".done").stat().st_mtime_ns for o in objects]
    run_series(spec.graph, group, tmp_path / "w")
    assert sorted(p.name for p in (tmp_path / "w" / "objects").iterdir()) == objects
    assert [(tmp_path / "w" / "objects" / o / ".done").stat().st_mtime_ns for o in objects] == stamps


def test_offline_reevaluation(tmp_path):
    spec = load_spec_text(IDENTITY)
    group = TestGroup("g", "c", _files(tmp_path, "a\nb\n", "a\n"))
    run_series(spec.graph, group, tmp_path / "w")
    trace = ExecutionTrace.load(tmp_path / "w" / "traces" / "g.json")
    v = evaluate(spec.derive()[0], group, trace, spec.graph)
    assert v.composite_value == FALSE
    assert v.suspects.vertex_ids == {"A"}


def test_out_of_domain_group_rejected(tmp_path):
    spec = load_spec(spec_path(False, False))
    groups = spec.groups(tmp_path, seed=0)
    cand = spec.derive()[0]
    fake = TestGroup("x", "not-a-class", groups[0].inputs)
    with pytest.raises(UsageError, match="outside"):
        evaluate(cand, fake, None, spec.graph)


@pytest.fixture(scope="module")
def detector4_runs(tmp_path_factory):
    work = tmp_path_factory.mktemp("d4")
    spec = load_spec(spec_path(True, False))
    groups = spec.groups(work, seed=3)
    traces = run_groups(spec.graph, groups, work, parallel=2)
    return spec, groups, traces


def test_skipped_branch_records(detector4_runs):
    spec, groups, traces = detector4_runs
    pre = [(g, t) for g, t in zip(groups, traces) if g.class_tag == "pre-detector-false"]
    assert pre
    for g, t in pre:
        assert t.record("pre-detector-true", 0).status is Status.SKIPPED
        assert t.record("dog-detector", 0).status is Status.SKIPPED
        assert t.record("pre-detector-false", 0).status is Status.EXECUTED


def test_robust_candidates_defined_in_domain(detector4_runs):
    spec, groups, traces = detector4_runs
    result = spec.derive()
    robust = [c for c in result if is_robust(c.expr, spec.graph, result.atoms)]
    for c in robust:
        for g, t in zip(groups, traces):
            if g.class_tag in c.domain:
                assert evaluate(c, g, t, spec.graph).composite_value.is_defined


def test_bare_form_not_computed_on_skipped_branch(detector4_runs):
    spec, groups, traces = detector4_runs
    result = spec.derive()
    bare = result.find(parse_expr("and(and(atom(N), or(atom(P), atom(Q))), hat_or(atom(K), atom(D)))"))
    g, t = next((g, t) for g, t in zip(groups, traces) if g.class_tag == "add-cat")
    assert evaluate(bare, g, t, spec.graph).composite_value.is_not_computed


def test_report_tables(detector4_runs, tmp_path):
    spec, groups, traces = detector4_runs
    cand = spec.derive().preferred(spec.graph)
    verdicts = [evaluate(cand, g, t, spec.graph) for g, t in zip(groups, traces)]
    rep = report(verdicts)
    out = rep.write(tmp_path / "r")
    assert {p.name for p in out.iterdir()} == {"table2.csv", "table3.csv", "verdicts.csv", "summary.json"}
    assert rep.summary()["groups"] == len(groups)
    assert rep.table2_csv().splitlines()[0].startswith("composite,groups,failed_tests")


def test_empty_report():
    rep = report([])
    assert rep.summary()["groups"] == 0
    assert rep.table2_csv() == "composite,groups,failed_tests\n"
