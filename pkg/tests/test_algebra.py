import itertools

import pytest
from hypothesis import given, strategies as st

from compmr.algebra import (
    ALL_VALUES, FALSE, NOT_COMPUTED, OUT_OF_DOMAIN, TRUE, Atom, Binary, ConstTrue, Def, DomainSet,
    Indef, Op, RelationAtom, TriValue, atom_ids, combine, domain_of, eval_expr, simplify,
)
from compmr.errors import ConfigurationError
from compmr.exprtext import canonical_text, parse_expr, to_symbolic, to_text

T, F, O, N = "T", "F", "O", "N"
SHORT = {TRUE: T, FALSE: F, OUT_OF_DOMAIN: O, NOT_COMPUTED: N}

# Written out by hand, row = left operand, column = right operand, order T F O N.
TABLE = {
    Op.AND:     ["TFON", "FFON", "OOON", "NNNN"],
    Op.OR:      ["TTON", "TFON", "OOON", "NNNN"],
    Op.XOR:     ["FTON", "TFON", "OOON", "NNNN"],
    Op.HAT_AND: ["TFTN", "FFFN", "TFON", "NNNN"],
    Op.HAT_OR:  ["TTTN", "TFFN", "TFON", "NNNN"],
    Op.HAT_XOR: ["FTTN", "TFFN", "TFON", "NNNN"],
}


@pytest.mark.parametrize("op", list(Op))
def test_truth_table_exhaustive(op):
    for (i, a), (j, b) in itertools.product(enumerate(ALL_VALUES), repeat=2):
        assert SHORT[combine(op, a, b)] == TABLE[op][i][j], (op, a, b)


@pytest.mark.parametrize("op", list(Op))
def test_defined_operands_are_classical(op):
    for a, b in itertools.product([True, False], repeat=2):
        assert combine(op, TriValue.of(a), TriValue.of(b)).is_true == op.apply(a, b)


def test_def_and_indef():
    got = {}
    for v in ALL_VALUES:
        atoms = {"A": RelationAtom("A", "v", DomainSet(["c"]), lambda ctx, v=v: v)}
        got[v] = (eval_expr(Def(Atom("A")), None, None, atoms, {"A": v}),
                  eval_expr(Indef(Atom("A")), None, None, atoms, {"A": v}))
    assert got[TRUE] == (TRUE, FALSE)
    assert got[FALSE] == (FALSE, FALSE)
    assert got[OUT_OF_DOMAIN] == (TRUE, OUT_OF_DOMAIN)
    assert got[NOT_COMPUTED] == (TRUE, TRUE)


def test_trivalue_text_roundtrip():
    for v in ALL_VALUES:
        assert TriValue.from_text(v.to_text()) == v


def _atoms(**domains):
    return {k: RelationAtom(k, "v", DomainSet(d), lambda ctx: True) for k, d in domains.items()}


def test_domain_rules():
    universe = DomainSet(["a", "b", "c"])
    atoms = _atoms(K=["a"], D=["b"])
    assert domain_of(parse_expr("hat_or(atom(K), atom(D))"), universe, atoms) == DomainSet(["a", "b"])
    assert domain_of(parse_expr("and(atom(K), atom(D))"), universe, atoms).is_empty()
    assert domain_of(parse_expr("def(atom(K))"), universe, atoms) == universe
    assert domain_of(parse_expr("indef(atom(K))"), universe, atoms) == universe


def test_domain_rejects_undeclared_class():
    with pytest.raises(ConfigurationError, match="undeclared"):
        domain_of(Atom("K"), DomainSet(["a"]), _atoms(K=["zz"]))


def test_simplify():
    a = Atom("A")
    assert simplify(Binary(Op.AND, ConstTrue, a)) == a
    assert simplify(Binary(Op.HAT_OR, a, a)) == a
    assert simplify(Def(Def(a))) == Def(a)
    assert simplify(Binary(Op.XOR, a, a)) == Binary(Op.XOR, a, a)


def test_symbolic_form():
    e = parse_expr("and(and(atom(N), atom(P)), hat_or(atom(K), atom(D)))")
    assert to_symbolic(e) == "N ∩ P ∩ (K ∪̂ D)"


def test_canonical_ignores_order_and_grouping():
    x = parse_expr("and(atom(A), and(atom(B), atom(C)))")
    y = parse_expr("and(and(atom(C), atom(A)), atom(B))")
    assert canonical_text(x) == canonical_text(y)
    assert canonical_text(x) != canonical_text(parse_expr("or(atom(A), and(atom(B), atom(C)))"))


@pytest.mark.parametrize("bad", ["", "and(atom(A))", "atom()", "nand(atom(A), atom(B))", "atom(A) x"])
def test_parse_errors(bad):
    with pytest.raises(ConfigurationError):
        parse_expr(bad)


ids = st.text(alphabet="ABCDKNPQ_1*", min_size=1, max_size=4)
exprs = st.recursive(
    st.one_of(ids.map(Atom), st.just(ConstTrue)),
    lambda sub: st.one_of(
        st.builds(Binary, st.sampled_from(list(Op)), sub, sub),
        sub.map(Def),
        sub.map(Indef),
    ),
    max_leaves=8,
)


@given(exprs)
def test_text_roundtrip(expr):
    assert parse_expr(to_text(expr)) == expr


@given(exprs)
def test_simplify_preserves_value(expr):
    names = sorted(set(atom_ids(expr)))
    atoms = {k: RelationAtom(k, "v", DomainSet(["c"]), lambda ctx: True) for k in names}
    for combo in itertools.islice(itertools.product(ALL_VALUES, repeat=len(names)), 64):
        memo = dict(zip(names, combo))
        assert eval_expr(simplify(expr), None, None, atoms, dict(memo)) == eval_expr(expr, None, None, atoms, dict(memo))

