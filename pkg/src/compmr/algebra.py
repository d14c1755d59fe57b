"""Three-valued relation outcomes and the composite-relation expression language.

A relation outcome is TRUE, FALSE or UNDEF.  UNDEF carries a cause:
``OUT_OF_DOMAIN`` (the test group lies outside the relation's domain) or
``NOT_COMPUTED`` (a value the relation reads was never produced because a
vertex was skipped or crashed).  ``NOT_COMPUTED`` is absorbing for every
binary operator; only ``Def``/``Indef`` turn it into a definite value.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator, Mapping, Optional, Union

from .errors import ConfigurationError, NotComputed, UsageError

CROSS_VERTEX = "*"


class Kind(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNDEF = "undef"


class Cause(enum.Enum):
    OUT_OF_DOMAIN = "out_of_domain"
    NOT_COMPUTED = "not_computed"


@dataclass(frozen=True)
class TriValue:
    kind: Kind
    undef_cause: Optional[Cause] = None

    def __post_init__(self):
        if (self.kind is Kind.UNDEF) != (self.undef_cause is not None):
            raise ValueError("undef_cause must be set exactly when kind is UNDEF")

    @property
    def is_defined(self) -> bool:
        return self.kind is not Kind.UNDEF

    @property
    def is_true(self) -> bool:
        return self.kind is Kind.TRUE

    @property
    def is_false(self) -> bool:
        return self.kind is Kind.FALSE

    @property
    def is_out_of_domain(self) -> bool:
        return self.undef_cause is Cause.OUT_OF_DOMAIN

    @property
    def is_not_computed(self) -> bool:
        return self.undef_cause is Cause.NOT_COMPUTED

    @classmethod
    def of(cls, flag: bool) -> "TriValue":
        return TRUE if flag else FALSE

    def __str__(self):
        if self.kind is Kind.UNDEF:
            return f"UNDEF({self.undef_cause.name})"
        return self.kind.name

    def to_text(self) -> str:
        return str(self)

    @classmethod
    def from_text(cls, text: str) -> "TriValue":
        for value in ALL_VALUES:
            if str(value) == text:
                return value
        raise ValueError(f"not a relation outcome: {text!r}")


TRUE = TriValue(Kind.TRUE)
FALSE = TriValue(Kind.FALSE)
OUT_OF_DOMAIN = TriValue(Kind.UNDEF, Cause.OUT_OF_DOMAIN)
NOT_COMPUTED = TriValue(Kind.UNDEF, Cause.NOT_COMPUTED)
ALL_VALUES = (TRUE, FALSE, OUT_OF_DOMAIN, NOT_COMPUTED)


@dataclass(frozen=True, init=False, repr=False)
class DomainSet:
    """Finite set of input-class tags."""

    classes: frozenset = frozenset()

    def __init__(self, classes: Iterable[str] = ()):
        object.__setattr__(self, "classes", frozenset(classes))

    def __or__(self, other: "DomainSet") -> "DomainSet":
        return DomainSet(self.classes | other.classes)

    def __and__(self, other: "DomainSet") -> "DomainSet":
        return DomainSet(self.classes & other.classes)

    def __sub__(self, other: "DomainSet") -> "DomainSet":
        return DomainSet(self.classes - other.classes)

    def __le__(self, other: "DomainSet") -> bool:
        return self.classes <= other.classes

    def __ge__(self, other: "DomainSet") -> bool:
        return self.classes >= other.classes

    def __contains__(self, tag: object) -> bool:
        return tag in self.classes

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self.classes))

    def __len__(self) -> int:
        return len(self.classes)

    def __bool__(self) -> bool:
        return bool(self.classes)

    def is_empty(self) -> bool:
        return not self.classes

    def sorted(self) -> list:
        return sorted(self.classes)

    def __repr__(self):
        return "DomainSet({" + ", ".join(sorted(self.classes)) + "})"


EMPTY_DOMAIN = DomainSet()


class Op(enum.Enum):
    AND = ("and", False)
    OR = ("or", False)
    XOR = ("xor", False)
    HAT_AND = ("hat_and", True)
    HAT_OR = ("hat_or", True)
    HAT_XOR = ("hat_xor", True)

    def __init__(self, text, hat):
        self.text = text
        self.hat = hat

    @property
    def symbol(self) -> str:
        base = {"and": "∩", "or": "∪", "xor": "⊕"}[self.text.replace("hat_", "")]
        return base + "̂" if self.hat else base

    def apply(self, a: bool, b: bool) -> bool:
        name = self.text.replace("hat_", "")
        if name == "and":
            return a and b
        if name == "or":
            return a or b
        return a != b

    @classmethod
    def from_text(cls, text: str) -> "Op":
        for op in cls:
            if op.text == text:
                return op
        raise KeyError(text)


STEP1_OPERATORS = (Op.OR, Op.AND, Op.HAT_OR, Op.HAT_AND)
BRANCH_OPERATORS = (Op.OR, Op.AND, Op.XOR, Op.HAT_OR, Op.HAT_AND, Op.HAT_XOR)


def combine(op: Op, a: TriValue, b: TriValue) -> TriValue:
    if a.is_not_computed or b.is_not_computed:
        return NOT_COMPUTED
    if op.hat:
        if a.is_out_of_domain and b.is_out_of_domain:
            return OUT_OF_DOMAIN
        if a.is_out_of_domain:
            return b
        if b.is_out_of_domain:
            return a
    elif a.is_out_of_domain or b.is_out_of_domain:
        return OUT_OF_DOMAIN
    return TriValue.of(op.apply(a.is_true, b.is_true))


# -- atoms -----------------------------------------------------------------

Verdict = Callable[["AtomContext"], Union[bool, TriValue]]


@dataclass(frozen=True)
class RelationAtom:
    """One per-component metamorphic relation.

    ``verdict`` receives an :class:`AtomContext` and returns a bool (or a
    TriValue).  ``reads`` lists the vertices whose values the verdict
    inspects; it defaults to the attached vertex.
    """

    id: str
    vertex: str
    domain: DomainSet
    verdict: Verdict = field(compare=False, repr=False)
    arity: int = 2
    reads: tuple = ()
    description: str = field(default="", compare=False)
    # optional series score in [0, 1] (e.g. the failures metric) for reports
    metric: Optional[Callable[["AtomContext"], float]] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.arity < 2:
            raise ConfigurationError(f"atom {self.id}: arity must be >= 2")
        if not isinstance(self.domain, DomainSet):
            object.__setattr__(self, "domain", DomainSet(self.domain))
        if not self.reads:
            if self.vertex == CROSS_VERTEX:
                raise ConfigurationError(f"atom {self.id}: cross-vertex atoms must list the vertices they read")
            object.__setattr__(self, "reads", (self.vertex,))
        else:
            object.__setattr__(self, "reads", tuple(self.reads))

    @property
    def cross_vertex(self) -> bool:
        return self.vertex == CROSS_VERTEX

    def restrict(self, domain: DomainSet) -> "RelationAtom":
        return replace(self, domain=DomainSet(domain))


class AtomContext:
    """Read-only view a verdict uses to look at one test series."""

    def __init__(self, group, trace):
        self.group = group
        self.trace = trace

    @property
    def n(self) -> int:
        return len(self.group.inputs)

    @property
    def class_tag(self) -> str:
        return self.group.class_tag

    def output(self, vertex: str, port: str, k: int):
        return self.trace.output(vertex, port, k)

    def outputs(self, vertex: str, port: str) -> list:
        return [self.trace.output(vertex, port, k) for k in range(self.n)]

    def input(self, vertex: str, port: str, k: int):
        return self.trace.input(vertex, port, k)


def _check_series(group, trace):
    if trace.group_id != group.id or trace.n != len(group.inputs):
        raise UsageError(
            f"trace for {trace.group_id!r} ({trace.n} tests) does not cover "
            f"group {group.id!r} ({len(group.inputs)} tests)"
        )


def eval_atom(atom: RelationAtom, group, trace) -> TriValue:
    """Evaluate one atom on one test series.

    Missing values win over domain membership: a skipped vertex makes
    every atom reading it NOT_COMPUTED even outside its domain.
    """
    _check_series(group, trace)
    for vertex in atom.reads:
        if not trace.computed(vertex):
            return NOT_COMPUTED
    if group.class_tag not in atom.domain:
        return OUT_OF_DOMAIN
    try:
        result = atom.verdict(AtomContext(group, trace))
    except NotComputed:
        return NOT_COMPUTED
    if isinstance(result, TriValue):
        return result
    return TriValue.of(bool(result))


# -- expressions -----------------------------------------------------------


class Expr:
    __slots__ = ()

    def children(self) -> tuple:
        return ()

    def __str__(self):
        from .exprtext import to_text

        return to_text(self)


@dataclass(frozen=True, repr=False)
class Atom(Expr):
    id: str

    def __repr__(self):
        return f"Atom({self.id!r})"


@dataclass(frozen=True, repr=False)
class _ConstTrue(Expr):
    def __repr__(self):
        return "ConstTrue"


ConstTrue = _ConstTrue()


@dataclass(frozen=True, repr=False)
class Binary(Expr):
    op: Op
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)

    def __repr__(self):
        return f"Binary({self.op.name}, {self.left!r}, {self.right!r})"


@dataclass(frozen=True, repr=False)
class Def(Expr):
    child: Expr

    def children(self):
        return (self.child,)

    def __repr__(self):
        return f"Def({self.child!r})"


@dataclass(frozen=True, repr=False)
class Indef(Expr):
    child: Expr

    def children(self):
        return (self.child,)

    def __repr__(self):
        return f"Indef({self.child!r})"


def And(l, r):
    return Binary(Op.AND, l, r)


def Or(l, r):
    return Binary(Op.OR, l, r)


def Xor(l, r):
    return Binary(Op.XOR, l, r)


def HatAnd(l, r):
    return Binary(Op.HAT_AND, l, r)


def HatOr(l, r):
    return Binary(Op.HAT_OR, l, r)


def HatXor(l, r):
    return Binary(Op.HAT_XOR, l, r)


def conjoin(*exprs: Expr) -> Expr:
    """Left-fold plain AND over ``exprs`` (ConstTrue when empty)."""
    result: Expr = ConstTrue
    for e in exprs:
        result = e if result is ConstTrue else And(result, e)
    return result


def atom_ids(expr: Expr) -> list:
    """Atom ids in left-to-right order, without duplicates."""
    seen: dict = {}
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Atom):
            seen.setdefault(node.id, None)
        stack.extend(reversed(node.children()))
    return list(seen)


def _resolve(atoms: Mapping[str, RelationAtom], atom_id: str) -> RelationAtom:
    try:
        return atoms[atom_id]
    except KeyError:
        raise ConfigurationError(f"unknown relation atom {atom_id!r}") from None


def eval_expr(
    expr: Expr,
    group,
    trace,
    atoms: Mapping[str, RelationAtom],
    atom_values: Optional[dict] = None,
) -> TriValue:
    """Evaluate ``expr`` recursively; ``atom_values`` memoises atom verdicts."""
    if atom_values is None:
        atom_values = {}

    def ev(node: Expr) -> TriValue:
        if isinstance(node, Atom):
            if node.id not in atom_values:
                atom_values[node.id] = eval_atom(_resolve(atoms, node.id), group, trace)
            return atom_values[node.id]
        if node is ConstTrue:
            return TRUE
        if isinstance(node, Binary):
            return combine(node.op, ev(node.left), ev(node.right))
        if isinstance(node, Def):
            value = ev(node.child)
            return value if value.is_defined else TRUE
        if isinstance(node, Indef):
            value = ev(node.child)
            if value.is_not_computed:
                return TRUE
            if value.is_out_of_domain:
                return OUT_OF_DOMAIN
            return FALSE
        raise TypeError(f"not a relation expression: {node!r}")

    return ev(expr)


def domain_of(expr: Expr, universe: DomainSet, atoms: Mapping[str, RelationAtom]) -> DomainSet:
    if isinstance(expr, Atom):
        atom = _resolve(atoms, expr.id)
        if not atom.domain <= universe:
            extra = ", ".join((atom.domain - universe).sorted())
            raise ConfigurationError(f"atom {atom.id} references undeclared classes: {extra}")
        return atom.domain
    if expr is ConstTrue or isinstance(expr, (Def, Indef)):
        if not (expr is ConstTrue):
            domain_of(expr.child, universe, atoms)
        return universe
    if isinstance(expr, Binary):
        left = domain_of(expr.left, universe, atoms)
        right = domain_of(expr.right, universe, atoms)
        return left | right if expr.op.hat else left & right
    raise TypeError(f"not a relation expression: {expr!r}")


_IDEMPOTENT = {Op.AND, Op.OR, Op.HAT_AND, Op.HAT_OR}


def simplify(expr: Expr) -> Expr:
    """Evaluation-preserving cleanup.

    Drops ConstTrue conjuncts of plain AND, collapses nested Def, folds
    Def(ConstTrue), and merges syntactically identical operands of
    idempotent operators (in either order).
    """
    if isinstance(expr, Binary):
        left, right = simplify(expr.left), simplify(expr.right)
        if expr.op is Op.AND:
            if left is ConstTrue:
                return right
            if right is ConstTrue:
                return left
        if expr.op in _IDEMPOTENT and left == right:
            return left
        return Binary(expr.op, left, right)
    if isinstance(expr, Def):
        child = simplify(expr.child)
        if isinstance(child, Def) or child is ConstTrue:
            return child
        return Def(child)
    if isinstance(expr, Indef):
        return Indef(simplify(expr.child))
    return expr


def strip_wrappers(expr: Expr) -> Expr:
    while isinstance(expr, (Def, Indef)):
        expr = expr.child
    return expr


def is_wrapped(expr: Expr) -> bool:
    return isinstance(expr, (Def, Indef))
