"""Independent recognizer for composites of branch-free pipelines.

Grammar, written from the composition rules rather than from the
derivation code:

    rel(v)  := atom of v | OP1(atom of v, other atom of v)
    comp(V) := rel(v)                        V = {v}
             | and(comp(V1), comp(V2))       V = V1 + V2, disjoint
             | OP(comp(V1), comp(V2))        same, and every vertex of V
                                             is a direct successor of one
                                             common vertex (a fan-out)

with OP1 the step-1 operators and OP any operator on the policy menu.  A
candidate is accepted when some parse covers every vertex exactly once.
"""

import random
from functools import lru_cache

from compmr.algebra import STEP1_OPERATORS, Atom, Binary, DomainSet, Op, RelationAtom
from compmr.graph import Edge, PipelineGraph, Port, VertexSpec


def random_case(rng: random.Random):
    n = rng.randint(1, 4)
    names = [f"v{i}" for i in range(n)]
    classes = ["a", "b", "c"]
    vertices, edges, sources = [], [], {}
    for i, v in enumerate(names):
        preds = [u for u in names[:i] if rng.random() < 0.5]
        ins = tuple(f"in{j}" for j in range(len(preds))) or ("in0",)
        vertices.append(VertexSpec(v, ins, ("out",)))
        for j, u in enumerate(preds):
            edges.append(Edge(Port(u, "out"), Port(v, f"in{j}")))
        if not preds:
            sources[f"x_{v}"] = (Port(v, "in0"),)
    atoms = {}
    for v in names:
        for j in range(rng.randint(1, 2)):
            dom = rng.sample(classes, rng.randint(1, 3))
            aid = f"{v.upper()}{j}"
            atoms[aid] = RelationAtom(aid, v, DomainSet(dom), lambda ctx: True)
    graph = PipelineGraph(vertices, edges, sources, [Port(names[-1], "out")])
    return graph, atoms, DomainSet(classes)


class Recognizer:
    def __init__(self, graph, atoms, menu=STEP1_OPERATORS):
        self.atoms = atoms
        self.menu = set(menu)
        self.all = frozenset(graph.vertices)
        self.preds = {v: set(graph.predecessors(v)) for v in graph.vertices}

    def siblings(self, vs) -> bool:
        common = set.intersection(*(self.preds[v] for v in vs))
        return bool(common)

    def rel_vertex(self, e):
        """Vertex whose extended relation set contains ``e``, else None."""
        if isinstance(e, Atom):
            return self.atoms[e.id].vertex
        if (isinstance(e, Binary) and e.op in STEP1_OPERATORS and isinstance(e.left, Atom)
                and isinstance(e.right, Atom) and e.left != e.right):
            v = self.atoms[e.left.id].vertex
            return v if self.atoms[e.right.id].vertex == v else None
        return None

    def covers(self, e) -> set:
        return self._covers(e)

    @lru_cache(maxsize=None)
    def _covers(self, e) -> frozenset:
        out = set()
        v = self.rel_vertex(e)
        if v is not None:
            out.add(frozenset([v]))
        if isinstance(e, Binary) and (e.op is Op.AND or e.op in self.menu):
            for left in self._covers(e.left):
                for right in self._covers(e.right):
                    if left & right:
                        continue
                    both = left | right
                    if e.op is Op.AND or self.siblings(both):
                        out.add(both)
        return frozenset(out)

    def accepts(self, e) -> bool:
        return self.all in self.covers(e)
