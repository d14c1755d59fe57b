import pytest

from compmr.algebra import ConstTrue
from compmr.detector import spec_path
from compmr.errors import ConfigurationError, UsageError
from compmr.exprtext import parse_expr, to_symbolic
from compmr.graph import Edge, PipelineGraph, Port, VertexSpec, subsystem_expr
from compmr.specfile import load_spec, load_spec_text


def V(name, ins=("i",), outs=("o",)):
    return VertexSpec(name, ins, outs)


def E(text):
    return Edge.parse(text)


def test_port_and_edge_parsing():
    assert Edge.parse("a.out -> b.in") == Edge(Port("a", "out"), Port("b", "in"))
    assert str(Port.parse("x.y.z")) == "x.y.z"
    with pytest.raises(ConfigurationError):
        Port.parse("nodot")
    with pytest.raises(ConfigurationError):
        Edge.parse("a.o b.i")


def test_cycle_message():
    g = PipelineGraph([V("A", ("i", "j")), V("B")], [E("A.o -> B.i"), E("B.o -> A.j")], {"x": [Port("A", "i")]})
    errors = g.validate()
    assert any(e.startswith("cycle detected: A -> B -> A") for e in errors)
    with pytest.raises(UsageError, match="cycle"):
        g.topological_order()


def test_fan_in_and_unconnected():
    g = PipelineGraph([V("A"), V("B"), V("C")], [E("A.o -> C.i"), E("B.o -> C.i")], {"x": [Port("A", "i")]})
    errors = g.validate()
    assert "fan-in on port C.i: 2 incoming edges" in errors
    assert "input port B.i is not connected" in errors


def test_unknown_ports():
    g = PipelineGraph([V("A")], [E("A.nope -> Z.i")], {"x": [Port("A", "i")]})
    errors = g.validate()
    assert "vertex A has no output port 'nope'" in errors
    assert any("unknown vertex 'Z'" in e for e in errors)


def test_topological_order_and_closures():
    g = PipelineGraph([V("c"), V("a"), V("b")], [E("a.o -> b.i"), E("b.o -> c.i")], {"x": [Port("a", "i")]})
    assert g.topological_order() == ["a", "b", "c"]
    assert g.ancestors("c").vertex_ids == {"a", "b", "c"}
    assert g.descendants("a") == {"b", "c"}
    with pytest.raises(UsageError):
        g.ancestors("zz")


def test_detector_spec_graph():
    spec = load_spec(spec_path(True, False))
    order = spec.graph.topological_order()
    assert order[0] == "normalizer"
    assert order.index("pre-detector-true") < order.index("dog-detector")
    assert spec.graph.group_of("pre-detector-false").name == "pre"


def test_subsystem_expr_drops_outside_atoms():
    spec = load_spec(spec_path(False, False))
    c = parse_expr("and(atom(N), hat_or(atom(K), atom(D)))")
    sub = spec.graph.subsystem(["normalizer", "cat-detector"])
    assert to_symbolic(subsystem_expr(c, sub, spec.atoms)) == "N ∩ (K ∪̂ 1)"
    empty = spec.graph.subsystem([])
    assert subsystem_expr(c, empty, spec.atoms) is ConstTrue


def test_spec_errors_carry_lines():
    text = "name: x\nclasses: [c]\nvertices:\n  A: {inputs: [i], outputs: [o], executor: identity}\n" \
           "inputs: {x: [A.i]}\natoms:\n  R: {vertex: Q, domain: all, verdict: outputs_nonempty}\n"
    with pytest.raises(ConfigurationError) as err:
        load_spec_text(text)
    assert "line 7" in str(err.value)


def test_spec_rejects_unknown_key():
    with pytest.raises(ConfigurationError, match="unknown top-level key 'vertexes'"):
        load_spec_text("name: x\nclasses: [c]\nvertexes: {}\n")


def test_explicit_groups(tmp_path):
    (tmp_path / "a.txt").write_text("1\n")
    (tmp_path / "b.txt").write_text("1\n2\n")
    text = """
name: g
classes: [c]
vertices:
  A: {inputs: [i], outputs: [o], executor: identity}
inputs: {x: [A.i]}
atoms:
  R: {vertex: A, domain: all, verdict: {builtin: lines_subset_chain, params: {port: o}}}
groups:
  - {id: one, class: c, inputs: [{x: a.txt}, {x: b.txt}]}
"""
    spec = load_spec_text(text, tmp_path)
    (g,) = spec.groups(tmp_path / "w")
    assert g.id == "one" and g.n == 2
    assert g.inputs[1]["x"] == str(tmp_path / "b.txt")
