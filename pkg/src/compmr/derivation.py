"""Derivation of composite metamorphic relations from per-vertex relations.

The pipeline mirrors the seven-step construction:

1. ``extend_set``        -- pairwise combinations inside each vertex set
2. ``apply_partiality``  -- DEF wrapping / splitting of relations that may
                            not be computed (uses ``split_partial``)
3. ``enumerate_selections``
4. ``propagate_def``
5. ``compose``           -- conjunction along the DAG, fan-out menus
6. ``handle_branches``   -- JOINT or PER_BRANCH treatment of branch groups
7. ``derive``            -- keeps candidates with non-empty domain
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from .algebra import (
    BRANCH_OPERATORS,
    CROSS_VERTEX,
    STEP1_OPERATORS,
    Atom,
    Binary,
    ConstTrue,
    Def,
    DomainSet,
    Expr,
    Indef,
    Op,
    RelationAtom,
    conjoin,
    domain_of,
    simplify,
)
from .errors import ConfigurationError, UsageError
from .exprtext import canonical_text, to_symbolic
from .graph import BranchGroup, PipelineGraph


class BranchMode(enum.Enum):
    JOINT = "joint"
    PER_BRANCH = "per-branch"


@dataclass(frozen=True)
class CombinationPolicy:
    """Stands in for the tester's judgement when picking combinations.

    ``operators`` is the menu for step 1 and for fan-out points,
    ``branch_operators`` the menu for branch groups.  ``accept`` may veto
    individual combined relations.
    """

    operators: tuple = STEP1_OPERATORS
    branch_operators: tuple = BRANCH_OPERATORS
    extension_rounds: int = 1
    max_set_size: int = 32
    max_candidates: int = 4096
    mode: BranchMode = BranchMode.JOINT
    accept: Optional[Callable[[Expr], bool]] = field(default=None, compare=False)

    def accepts(self, expr: Expr) -> bool:
        return self.accept is None or bool(self.accept(expr))


DEFAULT_POLICY = CombinationPolicy()


@dataclass(frozen=True)
class RelationSet:
    vertex: str
    relations: tuple

    def __post_init__(self):
        object.__setattr__(self, "relations", tuple(self.relations))

    def __len__(self):
        return len(self.relations)


@dataclass(frozen=True)
class SelectionSet:
    chosen: Mapping[str, Expr]

    def describe(self) -> str:
        return ", ".join(f"{v}={to_symbolic(e)}" for v, e in sorted(self.chosen.items()))


@dataclass(frozen=True)
class CompositeCandidate:
    expr: Expr
    domain: DomainSet
    provenance: tuple = ()
    atoms: Mapping[str, RelationAtom] = field(default_factory=dict, compare=False, repr=False)

    @property
    def text(self) -> str:
        from .exprtext import to_text

        return to_text(self.expr)


class SelectionList(list):
    """Enumerated selections plus the size of the full product."""

    def __init__(self, items=(), total: int = 0):
        super().__init__(items)
        self.total = total


@dataclass
class DerivationResult:
    candidates: list
    atoms: dict
    universe: DomainSet
    selections_total: int = 0
    selections_tried: int = 0
    exhausted: list = field(default_factory=list)
    truncated: bool = False

    def __iter__(self):
        return iter(self.candidates)

    def __len__(self):
        return len(self.candidates)

    def __getitem__(self, i):
        return self.candidates[i]

    def preferred(self, graph: PipelineGraph) -> Optional[CompositeCandidate]:
        """Widest-domain candidate that stays defined when branches are skipped."""
        robust = [c for c in self.candidates if is_robust(c.expr, graph, self.atoms)]
        pool = robust or self.candidates
        if not pool:
            return None
        return min(pool, key=lambda c: (-len(c.domain), self.candidates.index(c)))

    def find(self, expr: Expr) -> Optional[CompositeCandidate]:
        key = canonical_text(expr)
        for c in self.candidates:
            if canonical_text(c.expr) == key:
                return c
        return None


def skippable_vertices(graph: PipelineGraph) -> set:
    """Branch members and everything downstream of them."""
    out: set = set()
    for g in graph.branch_groups.values():
        for m in g.members:
            out.add(m)
            out |= graph.descendants(m)
    return out


def is_robust(expr: Expr, graph: PipelineGraph, atoms: Mapping[str, RelationAtom]) -> bool:
    """Every atom that reads a possibly skipped vertex sits under DEF or INDEF."""
    risky = skippable_vertices(graph)

    def walk(node, wrapped):
        if isinstance(node, Atom):
            return wrapped or not (set(atoms[node.id].reads) & risky)
        if isinstance(node, (Def, Indef)):
            return walk(node.child, True)
        if isinstance(node, Binary):
            return walk(node.left, wrapped) and walk(node.right, wrapped)
        return True

    return walk(expr, False)


# -- step 1 ------------------------------------------------------------------


def extend_set(
    rset: RelationSet,
    policy: CombinationPolicy,
    atoms: Mapping[str, RelationAtom],
    universe: DomainSet,
) -> RelationSet:
    if not rset.relations:
        raise UsageError(f"relation set for {rset.vertex} is empty")
    members = list(rset.relations)
    seen = {canonical_text(e) for e in members}
    for _ in range(policy.extension_rounds):
        added = []
        for a, b in itertools.combinations(members, 2):
            for op in policy.operators:
                if op not in STEP1_OPERATORS:
                    continue
                combo = simplify(Binary(op, a, b))
                key = canonical_text(combo)
                if key in seen or not policy.accepts(combo):
                    continue
                if domain_of(combo, universe, atoms).is_empty():
                    continue
                seen.add(key)
                added.append(combo)
                if len(members) + len(added) >= policy.max_set_size:
                    break
            if len(members) + len(added) >= policy.max_set_size:
                break
        if not added:
            break
        members.extend(added)
    return RelationSet(rset.vertex, members)


# -- step 2 ------------------------------------------------------------------


def split_partial(atom: RelationAtom, known_undef_classes: DomainSet) -> list:
    """Divide a partially computable atom.

    Returns ``[Def(atom)]`` when the non-computed classes are unknown
    (empty), otherwise the restricted atom (same id, domain minus the
    known classes, dropped when empty) followed by ``Indef(atom)``.  The
    restricted atom itself is :func:`restricted_atom`.
    """
    known = DomainSet(known_undef_classes)
    if known.is_empty():
        return [Def(Atom(atom.id))]
    if not known <= atom.domain:
        raise UsageError(f"known undefined classes {known.sorted()} are not inside dom({atom.id})")
    result: list = []
    if not (atom.domain - known).is_empty():
        result.append(Atom(atom.id))
    result.append(Indef(Atom(atom.id)))
    return result


def restricted_atom(atom: RelationAtom, known_undef_classes: DomainSet) -> RelationAtom:
    return atom.restrict(atom.domain - DomainSet(known_undef_classes))


def member_ancestors(graph: PipelineGraph, vertex: str) -> dict:
    """Branch-group name -> members that ``vertex`` (strictly) depends on."""
    result: dict = {}
    for u in graph.ancestors(vertex).vertex_ids - {vertex}:
        g = graph.group_of(u)
        if g is not None:
            result.setdefault(g.name, set()).add(u)
    return result


def computed_classes(graph: PipelineGraph, vertex: str, universe: DomainSet) -> Optional[DomainSet]:
    """Classes on which ``vertex`` executes, ``None`` if unknowable.

    Vertices not downstream of any branch member execute everywhere.
    """
    deps = member_ancestors(graph, vertex)
    classes = universe
    for name, members in deps.items():
        group = graph.branch_groups[name]
        if len(members) > 1:
            return DomainSet()
        (m,) = members
        if m not in group.taken:
            return None
        classes = classes & DomainSet(group.taken[m])
    return classes


def apply_partiality(
    sets: Sequence[RelationSet],
    graph: PipelineGraph,
    atoms: Mapping[str, RelationAtom],
    universe: DomainSet,
):
    """Step 2 over all vertex sets.

    Returns ``(new_sets, new_atoms, notes)``.  Branch members keep their
    bare relations (step 6 reasons about them directly) and gain a DEF
    variant.  Relations downstream of a member are split into restricted
    and INDEF parts when the not-taken classes are declared, otherwise
    DEF-wrapped.
    """
    new_atoms = dict(atoms)
    new_sets, notes = [], []
    for rset in sets:
        if rset.vertex == CROSS_VERTEX:
            new_sets.append(rset)
            continue
        if graph.group_of(rset.vertex) is not None:
            rels = list(rset.relations)
            for r in rset.relations:
                if not isinstance(r, Def):
                    wrapped = Def(r)
                    if wrapped not in rels:
                        rels.append(wrapped)
            notes.append((rset.vertex, "branch member: DEF variants added"))
            new_sets.append(RelationSet(rset.vertex, rels))
            continue
        if not member_ancestors(graph, rset.vertex):
            new_sets.append(rset)
            continue
        computed = computed_classes(graph, rset.vertex, universe)
        rels: list = []
        split_ids = set()
        for r in rset.relations:
            if computed is None:
                rels.append(r if isinstance(r, Def) else Def(r))
                notes.append((rset.vertex, f"DEF({to_symbolic(r)}): execution conditions unknown"))
                continue
            not_computed = universe - computed
            if isinstance(r, Atom):
                atom = new_atoms[r.id]
                known = atom.domain & not_computed
                if known.is_empty():
                    rels.append(r)
                    continue
                rels.extend(split_partial(atom, known))
                new_atoms[r.id] = restricted_atom(atom, known)
                split_ids.add(r.id)
                notes.append((rset.vertex, f"split {r.id}: restricted to {new_atoms[r.id].domain.sorted()}, INDEF on {known.sorted()}"))
            else:
                if (domain_of(r, universe, atoms) & not_computed).is_empty():
                    rels.append(r)
                else:
                    rels.append(r if isinstance(r, Def) else Def(r))
                    notes.append((rset.vertex, f"DEF({to_symbolic(r)})"))
        unique: list = []
        for r in rels:
            if r not in unique:
                unique.append(r)
        new_sets.append(RelationSet(rset.vertex, unique))
    return new_sets, new_atoms, notes


# -- step 3 ------------------------------------------------------------------


def enumerate_selections(sets: Sequence[RelationSet], cap: int) -> SelectionList:
    if cap < 1:
        raise UsageError("selection cap must be >= 1")
    ordered = sorted((s for s in sets if s.vertex != CROSS_VERTEX), key=lambda s: s.vertex)
    total = 1
    for s in ordered:
        total *= len(s.relations)
    out = []
    for combo in itertools.islice(itertools.product(*(s.relations for s in ordered)), cap):
        out.append(SelectionSet({s.vertex: e for s, e in zip(ordered, combo)}))
    return SelectionList(out, total)


# -- step 4 ------------------------------------------------------------------


def propagate_def(selection: SelectionSet, graph: PipelineGraph) -> SelectionSet:
    chosen = dict(selection.chosen)
    for v in graph.topological_order():
        if v not in chosen or isinstance(chosen[v], Def):
            continue
        if any(isinstance(chosen.get(u), (Def, Indef)) for u in graph.predecessors(v)):
            chosen[v] = Def(chosen[v])
    return SelectionSet(chosen)


# -- steps 5 and 6 -------------------------------------------------------------


def fold_combinations(exprs: Sequence[Expr], operators: Sequence[Op]) -> list:
    """Every left fold of ``exprs`` with one operator per join."""
    if len(exprs) == 1:
        return [(exprs[0], ())]
    out = []
    for ops in itertools.product(operators, repeat=len(exprs) - 1):
        acc = exprs[0]
        for op, e in zip(ops, exprs[1:]):
            acc = Binary(op, acc, e)
        out.append((simplify(acc), ops))
    return out


def _fold_with(exprs: Sequence[Expr], ops: Sequence[Op]) -> Expr:
    acc = exprs[0]
    for op, e in zip(ops, exprs[1:]):
        acc = Binary(op, acc, e)
    return simplify(acc)


class _Composer:
    def __init__(self, selection: SelectionSet, graph: PipelineGraph, policy: CombinationPolicy):
        self.sel = selection.chosen
        self.graph = graph
        self.policy = policy
        self.order = graph.topological_order()
        self.rank = {v: i for i, v in enumerate(self.order)}

    def stages(self) -> list:
        done: set = set()
        stages = []
        for v in self.order:
            if v in done or v not in self.sel:
                continue
            stage = self._stage_of(v, done)
            done |= stage[1]
            stages.append(stage)
        return stages

    def _with_groups(self, vertices: set) -> set:
        out = set(vertices)
        for v in vertices:
            g = self.graph.group_of(v)
            if g is not None:
                out |= set(g.members)
        return out

    def _stage_of(self, v: str, done: set):
        preds = self.graph.predecessors(v)
        group = self.graph.group_of(v)
        fan_preds = [p for p in sorted(preds, key=self.rank.get) if len(self.graph.successors(p)) > 1]
        if not fan_preds:
            if group is None:
                return ("simple", {v}, None)
            return ("fanout", self._with_groups({v}) - done, None)
        b = fan_preds[0]
        members = {u for u in self.graph.successors(b) if u not in done and u in self.sel}
        return ("fanout", self._with_groups(members) - done, b)

    # branch-specific form of a vertex relation inside one branch
    def _form_in_branch(self, u: str, group: BranchGroup, member: str) -> Expr:
        rel = self.sel[u]
        deps = self.graph.ancestors(u).vertex_ids & set(group.members)
        if not deps:
            return rel
        if deps == {member}:
            return rel.child if isinstance(rel, Indef) else rel
        return rel if isinstance(rel, (Def, Indef)) else Indef(rel)

    def stage_options(self, stage) -> list:
        kind, vertices, source = stage
        if kind == "simple":
            (v,) = vertices
            return [((self.sel[v],), ("step5", f"C_t = C_(t-1) ∩ {to_symbolic(self.sel[v])} [{v}]"))]
        groups = []
        for v in sorted(vertices):
            g = self.graph.group_of(v)
            if g is not None and g not in groups:
                groups.append(g)
        members = {m for g in groups for m in g.members}
        others = sorted(vertices - members)
        where = f"fan-out of {source}" if source else "branch sources"
        if groups and self.policy.mode is BranchMode.PER_BRANCH:
            return self._per_branch(groups, others, where)
        other_opts = self._other_options(others)
        branch_opts = [handle_branches_joint(g, self.sel, self.policy) for g in groups]
        out = []
        for combo in itertools.product(*branch_opts, other_opts):
            exprs = tuple(e for e, _ in combo if e is not ConstTrue)
            note = "; ".join(n for _, n in combo if n)
            out.append((exprs, ("step5" if not groups else "step6a", f"{where}: {note}")))
        return out

    def _other_options(self, others: list) -> list:
        if not others:
            return [(ConstTrue, "")]
        rels = [self.sel[u] for u in others]
        result = []
        for expr, _ in fold_combinations(rels, self.policy.operators):
            if self.policy.accepts(expr):
                result.append((expr, f"A = {to_symbolic(expr)}"))
        return result

    def _per_branch(self, groups: list, others: list, where: str) -> list:
        group, rest = groups[0], groups[1:]
        rest_opts = [handle_branches_joint(g, self.sel, self.policy) for g in rest]
        shapes = [()] if len(others) <= 1 else list(itertools.product(self.policy.operators, repeat=len(others) - 1))
        out = []
        for shape in shapes:
            per_member = []
            for m in group.members:
                forms = [self._form_in_branch(u, group, m) for u in others]
                body = _fold_with(forms, shape) if forms else ConstTrue
                per_member.append(simplify(conjoin(self.sel[m], body) if body is not ConstTrue else self.sel[m]))
            for combined, ops in fold_combinations(per_member, self.policy.branch_operators):
                if not self.policy.accepts(combined):
                    continue
                for extra in itertools.product(*rest_opts):
                    expr = (combined,) + tuple(e for e, _ in extra)
                    note = f"{where}: per-branch {group.name} -> {to_symbolic(combined)}"
                    out.append((expr, ("step6b", note)))
        return out


def handle_branches_joint(group: BranchGroup, chosen: Mapping[str, Expr], policy: CombinationPolicy) -> list:
    rels = [chosen[m] for m in group.members if m in chosen]
    out = []
    for expr, _ in fold_combinations(rels, policy.branch_operators):
        if policy.accepts(expr):
            out.append((expr, f"{group.name}: {to_symbolic(expr)}"))
    return out


def handle_branches(
    candidates: list,
    group: BranchGroup,
    mode: BranchMode,
    chosen: Mapping[str, Expr],
    graph: PipelineGraph,
    policy: CombinationPolicy = DEFAULT_POLICY,
) -> list:
    """Combine one branch group into each partial composite.

    ``candidates`` are partial composites (expressions) built so far.
    JOINT merges the member relations into one relation; PER_BRANCH
    conjoins each member relation with every candidate and merges the
    per-branch composites.  Single-member groups leave candidates as they
    are.
    """
    if group.name not in graph.branch_groups:
        raise UsageError(f"unknown branch group {group.name!r}")
    members = [m for m in group.members if m in chosen]
    if len(members) <= 1:
        return list(candidates)
    out = []
    if mode is BranchMode.JOINT:
        for c in candidates:
            for expr, _ in handle_branches_joint(group, chosen, policy):
                out.append(simplify(conjoin(c, expr)))
        return out
    for c in candidates:
        per = [simplify(conjoin(chosen[m], c)) for m in members]
        for expr, _ in fold_combinations(per, policy.branch_operators):
            if policy.accepts(expr):
                out.append(expr)
    return out


def compose(
    selection: SelectionSet,
    graph: PipelineGraph,
    policy: CombinationPolicy = DEFAULT_POLICY,
    cross: Sequence[Expr] = (),
) -> list:
    """Build composite expressions for one selection (steps 5 and 6).

    Returns ``(expr, provenance)`` pairs; domains are not filtered here.
    """
    composer = _Composer(selection, graph, policy)
    partials: list = [(ConstTrue, ())]
    truncated = False
    for stage in composer.stages():
        options = composer.stage_options(stage)
        nxt = []
        for (c, prov), (e, note) in itertools.product(partials, options):
            nxt.append((conjoin(c, *e) if c is not ConstTrue else conjoin(*e), prov + (note,)))
            if len(nxt) >= policy.max_candidates:
                truncated = True
                break
        partials = nxt
    out = []
    for c, prov in partials:
        expr = simplify(conjoin(c, *cross))
        if cross:
            prov = prov + (("step5", "cross-vertex conjuncts: " + ", ".join(to_symbolic(x) for x in cross)),)
        out.append((expr, prov))
    if truncated:
        out.append(None)
    return out


# -- step 7 / driver -----------------------------------------------------------


def group_atoms_by_vertex(atoms: Mapping[str, RelationAtom]) -> list:
    by_vertex: dict = {}
    for a in atoms.values():
        by_vertex.setdefault(a.vertex, []).append(Atom(a.id))
    return [RelationSet(v, rels) for v, rels in sorted(by_vertex.items())]


def derive(
    graph: PipelineGraph,
    sets: Sequence[RelationSet],
    policy: CombinationPolicy = DEFAULT_POLICY,
    cap: int = 256,
    atoms: Optional[Mapping[str, RelationAtom]] = None,
    universe: Optional[DomainSet] = None,
) -> DerivationResult:
    if atoms is None:
        raise UsageError("derive needs the atom registry")
    graph.ensure_valid()
    if universe is None:
        universe = DomainSet()
        for a in atoms.values():
            universe = universe | a.domain
    vertex_sets = {s.vertex: s for s in sets if s.vertex != CROSS_VERTEX}
    missing = [v for v in graph.vertices if v not in vertex_sets]
    if missing:
        raise UsageError(f"no relation set for vertices: {', '.join(sorted(missing))}")
    unknown = [v for v in vertex_sets if v not in graph.vertices]
    if unknown:
        raise ConfigurationError(f"relation sets for unknown vertices: {', '.join(sorted(unknown))}")
    for s in sets:
        for e in s.relations:
            if domain_of(e, universe, atoms).is_empty():
                raise ConfigurationError(f"relation {to_symbolic(e)} of {s.vertex} has an empty domain")
    cross = [e for s in sets if s.vertex == CROSS_VERTEX for e in s.relations]

    extended = [extend_set(vertex_sets[v], policy, atoms, universe) for v in sorted(vertex_sets)]
    step1 = tuple(("step1", f"S'_{s.vertex} = {{{', '.join(to_symbolic(e) for e in s.relations)}}}") for s in extended)
    partial_sets, atoms2, notes = apply_partiality(extended, graph, atoms, universe)
    step2 = tuple(("step2", f"{v}: {n}") for v, n in notes)
    selections = enumerate_selections(partial_sets, cap)

    result = DerivationResult([], atoms2, universe, selections.total, len(selections))
    seen: set = set()
    for sel in selections:
        wrapped = propagate_def(sel, graph)
        changed = sorted(v for v in sel.chosen if sel.chosen[v] != wrapped.chosen[v])
        base = step1 + step2 + (("step3", sel.describe()),)
        if changed:
            base += (("step4", "DEF-wrapped: " + ", ".join(changed)),)
        produced = 0
        for item in compose(wrapped, graph, policy, cross):
            if item is None:
                result.truncated = True
                continue
            expr, prov = item
            dom = domain_of(expr, universe, atoms2)
            if dom.is_empty():
                continue
            produced += 1
            key = canonical_text(expr)
            if key in seen:
                continue
            seen.add(key)
            full = base + tuple(p for p in prov if p) + (("step7", f"domain {dom.sorted()}"),)
            result.candidates.append(CompositeCandidate(expr, dom, full, atoms2))
        if produced == 0:
            result.exhausted.append(sel.describe())
    return result
