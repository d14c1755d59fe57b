"""Pipeline DAG: vertices with ports, edges, branch groups, subsystems."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Optional

from .algebra import Atom, ConstTrue, Def, Expr, Indef, RelationAtom, Binary, simplify
from .errors import ConfigurationError, UsageError


@dataclass(frozen=True)
class Port:
    vertex: str
    port: str

    @classmethod
    def parse(cls, text: str) -> "Port":
        vertex, sep, port = text.strip().rpartition(".")
        if not sep or not vertex or not port:
            raise ConfigurationError(f"port reference must look like 'vertex.port': {text!r}")
        return cls(vertex, port)

    def __str__(self):
        return f"{self.vertex}.{self.port}"


@dataclass(frozen=True)
class Edge:
    source: Port
    target: Port

    @classmethod
    def parse(cls, text: str) -> "Edge":
        left, sep, right = text.partition("->")
        if not sep:
            raise ConfigurationError(f"edge must look like 'a.out -> b.in': {text!r}")
        return cls(Port.parse(left), Port.parse(right))

    def __str__(self):
        return f"{self.source} -> {self.target}"


@dataclass(frozen=True)
class VertexSpec:
    id: str
    inputs: tuple
    outputs: tuple
    executor: Any = None
    branch_group: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))


@dataclass(frozen=True)
class BranchGroup:
    """Mutually exclusive vertices; ``guard`` picks the member to run.

    ``taken`` optionally maps a member to the input classes on which it is
    the executed branch.  Derivation uses it to know where downstream
    relations cannot be computed.
    """

    name: str
    members: tuple
    guard: Any = None
    taken: Mapping[str, frozenset] = field(default_factory=dict)


@dataclass(frozen=True)
class Subsystem:
    vertex_ids: frozenset

    def __contains__(self, vertex):
        return vertex in self.vertex_ids

    def __iter__(self):
        return iter(sorted(self.vertex_ids))

    def __len__(self):
        return len(self.vertex_ids)


class PipelineGraph:
    """Immutable DAG description.

    ``system_inputs`` maps an external input name to the vertex ports it
    feeds; ``system_outputs`` lists ports read from outside.
    """

    def __init__(
        self,
        vertices: Iterable[VertexSpec],
        edges: Iterable[Edge] = (),
        system_inputs: Optional[Mapping[str, Iterable[Port]]] = None,
        system_outputs: Iterable[Port] = (),
        branch_groups: Iterable[BranchGroup] = (),
    ):
        self._vertex_list = list(vertices)
        self.vertices = {v.id: v for v in self._vertex_list}
        self.edges = tuple(edges)
        self.system_inputs = {name: tuple(ports) for name, ports in (system_inputs or {}).items()}
        self.system_outputs = tuple(system_outputs)
        self.branch_groups = {g.name: g for g in branch_groups}
        self._preds = {v: set() for v in self.vertices}
        self._succs = {v: set() for v in self.vertices}
        for e in self.edges:
            if e.source.vertex in self.vertices and e.target.vertex in self.vertices:
                self._preds[e.target.vertex].add(e.source.vertex)
                self._succs[e.source.vertex].add(e.target.vertex)

    # -- structure -------------------------------------------------------

    def predecessors(self, vertex: str) -> list:
        return sorted(self._preds[vertex])

    def successors(self, vertex: str) -> list:
        return sorted(self._succs[vertex])

    def incoming(self, vertex: str) -> dict:
        """Map input port name -> source Port (vertex edge) or system input name."""
        result: dict = {}
        for e in self.edges:
            if e.target.vertex == vertex:
                result[e.target.port] = e.source
        for name, ports in self.system_inputs.items():
            for p in ports:
                if p.vertex == vertex:
                    result[p.port] = name
        return result

    def group_of(self, vertex: str) -> Optional[BranchGroup]:
        name = self.vertices[vertex].branch_group
        if name is None:
            for g in self.branch_groups.values():
                if vertex in g.members:
                    return g
            return None
        return self.branch_groups.get(name)

    # -- checks ----------------------------------------------------------

    def validate(self) -> list:
        """All invariant violations as messages (empty list = valid)."""
        errors = []
        if not self.vertices:
            errors.append("graph has no vertices")
        if len(self.vertices) != len(self._vertex_list):
            errors.append("duplicate vertex id")
        for v in self._vertex_list:
            if len(v.outputs) < 1:
                errors.append(f"vertex {v.id} has no output ports")
            if len(set(v.inputs)) != len(v.inputs) or len(set(v.outputs)) != len(v.outputs):
                errors.append(f"vertex {v.id} declares a port twice")

        fan_in: dict = {}

        def check_port(p: Port, direction: str) -> bool:
            if p.vertex not in self.vertices:
                errors.append(f"unknown vertex {p.vertex!r} in {direction} port {p}")
                return False
            ports = self.vertices[p.vertex].outputs if direction == "source" else self.vertices[p.vertex].inputs
            if p.port not in ports:
                errors.append(f"vertex {p.vertex} has no {'output' if direction == 'source' else 'input'} port {p.port!r}")
                return False
            return True

        for e in self.edges:
            check_port(e.source, "source")
            if check_port(e.target, "target"):
                fan_in[e.target] = fan_in.get(e.target, 0) + 1
        for name, ports in self.system_inputs.items():
            for p in ports:
                if check_port(p, "target"):
                    fan_in[p] = fan_in.get(p, 0) + 1
        for p in self.system_outputs:
            check_port(p, "source")
        for p, count in sorted(fan_in.items(), key=lambda kv: str(kv[0])):
            if count > 1:
                errors.append(f"fan-in on port {p}: {count} incoming edges")
        for v in self._vertex_list:
            for port in v.inputs:
                if Port(v.id, port) not in fan_in:
                    errors.append(f"input port {v.id}.{port} is not connected")

        if self._find_cycle():
            errors.append("cycle detected: " + " -> ".join(self._find_cycle()))

        for g in self.branch_groups.values():
            missing = [m for m in g.members if m not in self.vertices]
            if missing:
                errors.append(f"branch group {g.name} names unknown vertices: {', '.join(missing)}")
                continue
            sigs = {(self.vertices[m].inputs, self.vertices[m].outputs) for m in g.members}
            if len(sigs) > 1:
                errors.append(f"branch group {g.name}: members have different port signatures")
            for m in g.taken:
                if m not in g.members:
                    errors.append(f"branch group {g.name}: 'taken' names non-member {m}")
        for v in self._vertex_list:
            if v.branch_group is not None and v.branch_group not in self.branch_groups:
                errors.append(f"vertex {v.id} references unknown branch group {v.branch_group}")
        return errors

    def _find_cycle(self) -> list:
        color = {v: 0 for v in self.vertices}
        stack_path: list = []

        def visit(v):
            color[v] = 1
            stack_path.append(v)
            for w in sorted(self._succs[v]):
                if color[w] == 1:
                    return stack_path[stack_path.index(w):] + [w]
                if color[w] == 0:
                    found = visit(w)
                    if found:
                        return found
            stack_path.pop()
            color[v] = 2
            return None

        for v in sorted(self.vertices):
            if color[v] == 0:
                found = visit(v)
                if found:
                    return found
        return []

    def ensure_valid(self):
        errors = self.validate()
        if errors:
            raise UsageError("invalid pipeline graph: " + "; ".join(errors))

    # -- queries ---------------------------------------------------------

    def topological_order(self) -> list:
        """Kahn's algorithm; ties broken by lexicographic vertex id."""
        self.ensure_valid()
        indeg = {v: len(p) for v, p in self._preds.items()}
        ready = [v for v, d in indeg.items() if d == 0]
        heapq.heapify(ready)
        order = []
        while ready:
            v = heapq.heappop(ready)
            order.append(v)
            for w in self._succs[v]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    heapq.heappush(ready, w)
        return order

    def ancestors(self, vertex: str) -> Subsystem:
        if vertex not in self.vertices:
            raise UsageError(f"unknown vertex {vertex!r}")
        seen = {vertex}
        stack = [vertex]
        while stack:
            for u in self._preds[stack.pop()]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return Subsystem(frozenset(seen))

    def descendants(self, vertex: str) -> set:
        seen: set = set()
        stack = [vertex]
        while stack:
            for w in self._succs[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return seen

    def subsystem(self, vertex_ids: Iterable[str]) -> Subsystem:
        ids = frozenset(vertex_ids)
        unknown = ids - set(self.vertices)
        if unknown:
            raise UsageError(f"unknown vertices: {', '.join(sorted(unknown))}")
        return Subsystem(ids)

    def induced_edges(self, sub: Subsystem) -> list:
        return [e for e in self.edges if e.source.vertex in sub and e.target.vertex in sub]

    def full(self) -> Subsystem:
        return Subsystem(frozenset(self.vertices))


def subsystem_expr(composite: Expr, sub: Subsystem, atoms: Mapping[str, RelationAtom]) -> Expr:
    """Composite relation restricted to a subsystem.

    Atoms of vertices outside ``sub`` (with any Def/Indef wrappers around
    them) become the constant 1.  Cross-vertex atoms survive only when
    every vertex they read lies inside ``sub``.
    """

    def keep(atom_id: str) -> bool:
        atom = atoms[atom_id]
        return all(v in sub for v in atom.reads)

    def sub_(node: Expr) -> Expr:
        core = node
        while isinstance(core, (Def, Indef)):
            core = core.child
        if isinstance(core, Atom):
            return node if keep(core.id) else ConstTrue
        if isinstance(node, Binary):
            return Binary(node.op, sub_(node.left), sub_(node.right))
        if isinstance(node, Def):
            return Def(sub_(node.child))
        if isinstance(node, Indef):
            return Indef(sub_(node.child))
        return node

    return simplify(sub_(composite))
