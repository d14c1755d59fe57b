import random
from dataclasses import replace
from pathlib import Path

import pytest

from compmr.algebra import OUT_OF_DOMAIN, TRUE, Atom, Binary, DomainSet, Op, RelationAtom, domain_of, eval_expr
from compmr.derivation import (
    BranchMode, CombinationPolicy, RelationSet, derive, group_atoms_by_vertex, is_robust,
)
from compmr.detector import spec_path
from compmr.errors import ConfigurationError, UsageError
from compmr.exprtext import canonical_text, parse_expr, to_symbolic
from compmr.graph import Edge, PipelineGraph, Port, VertexSpec
from compmr.specfile import load_spec
from grammar_oracle import Recognizer, random_case

SPECS = Path(__file__).resolve().parent.parent / "src" / "compmr" / "specs"


def symbols(result):
    return [to_symbolic(c.expr) for c in result.candidates]


def test_three_component_golden():
    r = load_spec(spec_path(False, False)).derive()
    assert symbols(r) == ["N ∩ (K ∪̂ D)", "N ∩ (K ∩̂ D)"]
    assert r[0].domain.sorted() == ["add-cat", "add-dog"]


def test_starred_golden():
    r = load_spec(spec_path(False, True)).derive()
    assert r.find(parse_expr("and(atom(N), or(atom(Kstar), atom(Dstar)))")) is not None
    assert r.find(parse_expr("and(atom(N), and(atom(Kstar), atom(Dstar)))")) is not None
    assert len(r) == 4


def test_four_component_joint():
    spec = load_spec(spec_path(True, False))
    r = spec.derive()
    assert len(r) == 168
    assert symbols(r)[0] == "N ∩ (P ∪ Q) ∩ (K ∪̂ D)"
    wide = r.find(parse_expr("and(and(atom(N), or(def(atom(P)), def(atom(Q)))), hat_or(atom(K), def(atom(D))))"))
    assert wide is not None
    assert wide.domain.sorted() == ["add-cat", "add-dog", "pre-detector-false"]
    assert r.preferred(spec.graph) == wide


def test_four_component_per_branch():
    spec = load_spec(spec_path(True, False))
    spec.policy = replace(spec.policy, mode=BranchMode.PER_BRANCH)
    r = spec.derive()
    assert len(r) == 132
    s = symbols(r)
    assert s[0] == "N ∩ ((P ∩ (K ∪ D)) ∪̂ (Q ∩ (K ∪ INDEF(D))))"
    assert "N ∩ ((P ∩ (K ∪̂ D)) ∪̂ (Q ∩ (K ∪̂ INDEF(D))))" in s
    assert "N ∩ ((DEF(P) ∩ (K ∪̂ DEF(D))) ∪ (Q ∩ (K ∪̂ DEF(D))))" in s


def test_genomics_golden():
    r = load_spec(SPECS / "genomics.yaml").derive()
    assert symbols(r) == [
        "BWA ∩ (SU ∩ GN_i ∩ GT_i ∩ S_i) ∩ Add",
        "BWA ∩ (SU ∩ GN_d ∩ GT_d ∩ S_d) ∩ Add",
    ]
    assert [c.domain.sorted() for c in r] == [["add-insertions"], ["add-deletions"]]


def test_provenance_names_steps():
    r = load_spec(spec_path(True, False)).derive()
    steps = {p[0] for p in r[20].provenance}
    assert {"step1", "step2", "step3", "step7"} <= steps


def test_robustness():
    spec = load_spec(spec_path(True, False))
    r = spec.derive()
    robust = [c for c in r if is_robust(c.expr, spec.graph, r.atoms)]
    assert len(robust) == 48
    assert not is_robust(r[0].expr, spec.graph, r.atoms)
    for c in robust:
        text = to_symbolic(c.expr)
        assert "DEF(D)" in text or "INDEF(D)" in text


# -- randomized oracle -----------------------------------------------------------


def test_random_graphs_oracle():
    rng = random.Random(1234)
    policy = CombinationPolicy(max_candidates=512)
    violations, checked = [], 0
    for _ in range(100):
        graph, atoms, universe = random_case(rng)
        result = derive(graph, group_atoms_by_vertex(atoms), policy, cap=64, atoms=atoms, universe=universe)
        grammar = Recognizer(graph, atoms, policy.operators)
        keys = [canonical_text(c.expr) for c in result]
        assert len(keys) == len(set(keys))
        for c in result:
            checked += 1
            if not grammar.accepts(c.expr) or c.domain.is_empty():
                violations.append(to_symbolic(c.expr))
            assert c.domain == domain_of(c.expr, universe, atoms)
            # all atoms TRUE where defined: the composite is TRUE exactly on its domain
            for tag in universe:
                memo = {a: TRUE if tag in atoms[a].domain else OUT_OF_DOMAIN for a in atoms}
                got = eval_expr(c.expr, None, None, atoms, memo)
                assert got == (TRUE if tag in c.domain else OUT_OF_DOMAIN), (to_symbolic(c.expr), tag)
    assert violations == []
    assert checked > 100


def test_grammar_oracle_rejects_foreign_shapes():
    # v1 and v2 both read v0, so they may be joined by any operator; v0 may not
    v = [VertexSpec("v0", ("i",), ("o",)), VertexSpec("v1", ("i",), ("o",)), VertexSpec("v2", ("i",), ("o",))]
    e = [Edge(Port("v0", "o"), Port("v1", "i")), Edge(Port("v0", "o"), Port("v2", "i"))]
    g = PipelineGraph(v, e, {"x": (Port("v0", "i"),)})
    atoms = {k: RelationAtom(k, f"v{k[1]}", DomainSet(["a"]), lambda ctx: True) for k in ("A0", "A1", "A2")}
    r = Recognizer(g, atoms)
    assert r.accepts(parse_expr("and(atom(A0), hat_or(atom(A1), atom(A2)))"))
    assert not r.accepts(parse_expr("or(atom(A0), and(atom(A1), atom(A2)))"))
    assert not r.accepts(parse_expr("and(atom(A0), atom(A1))"))
    assert not r.accepts(parse_expr("and(atom(A0), and(atom(A1), and(atom(A2), atom(A2))))"))


# -- errors ------------------------------------------------------------------------


def _one_vertex():
    g = PipelineGraph([VertexSpec("A", ("i",), ("o",))], (), {"x": (Port("A", "i"),)})
    return g


def test_missing_relation_set():
    with pytest.raises(UsageError, match="no relation set"):
        derive(_one_vertex(), [], atoms={})


def test_empty_domain_relation_rejected():
    atoms = {
        "X": RelationAtom("X", "A", DomainSet(["a"]), lambda ctx: True),
        "Y": RelationAtom("Y", "A", DomainSet(["b"]), lambda ctx: True),
    }
    sets = [RelationSet("A", [Binary(Op.AND, Atom("X"), Atom("Y"))])]
    with pytest.raises(ConfigurationError, match="empty domain"):
        derive(_one_vertex(), sets, atoms=atoms)
