import random

import pytest

from conftest import T
from patmat.terms import (
    ArityMismatch,
    AttributeInterpreter,
    OperatorSignature,
    SignatureConflict,
    Term,
    UnknownOperator,
    attr_eval,
    declare_op,
    extend_consistent,
    mk_term,
    subterms,
    term_depth,
    term_eq,
    term_size,
)
from patmat.gen import random_term


def test_declare_and_arity():
    sig = OperatorSignature()
    sig = declare_op(sig, "MatMul", 2)
    sig = declare_op(sig, "Trans", 1)
    assert sig.arity("MatMul") == 2
    assert sig.arity("Trans") == 1
    assert "MatMul" in sig and "Missing" not in sig


def test_declare_idempotent_and_functional():
    sig = OperatorSignature({"C": 0})
    again = declare_op(sig, "C", 0)
    assert again is sig
    extended = declare_op(sig, "D", 0)
    assert "D" in extended
    assert "D" not in sig  # the original is untouched


def test_declare_conflict():
    sig = OperatorSignature({"F": 1})
    with pytest.raises(SignatureConflict):
        declare_op(sig, "F", 2)


def test_declare_rejects_bad_entries():
    sig = OperatorSignature()
    with pytest.raises(Exception):
        declare_op(sig, "", 0)
    with pytest.raises(Exception):
        declare_op(sig, "F", -1)


def test_mk_term_builds_and_checks():
    sig = OperatorSignature({"MatMul": 2, "Trans": 1, "A": 0, "B": 0, "C": 0})
    a = mk_term(sig, "A")
    b = mk_term(sig, "B")
    t = mk_term(sig, "MatMul", [a, mk_term(sig, "Trans", [b])])
    assert t.op == "MatMul"
    assert t.children[1].children[0] is b

    with pytest.raises(UnknownOperator):
        mk_term(sig, "Nope", [])
    with pytest.raises(ArityMismatch):
        mk_term(sig, "Trans", [a, b])
    assert mk_term(sig, "C", []) == T("C")


def test_mk_term_destructuring_identity():
    sig = OperatorSignature({"f": 2, "C": 0})
    t = mk_term(sig, "f", [mk_term(sig, "C"), mk_term(sig, "C")], {"rank": 2})
    rebuilt = mk_term(sig, t.op, list(t.children), t.annotations_map())
    assert term_eq(t, rebuilt)


def test_term_eq_observes_annotations():
    # Attribute-sensitive oracle: the same guard behaves differently on the
    # two terms, so identifying them would be unsound.
    from patmat.patterns import Eq, Lit, VarAttr, eval_guard

    t2 = T("C", rank=2)
    t3 = T("C", rank=3)
    interp = AttributeInterpreter()
    guard = Eq(VarAttr("x", "rank"), Lit(2))
    assert eval_guard(interp, {"x": t2}, guard) is True
    assert eval_guard(interp, {"x": t3}, guard) is False
    assert not term_eq(t2, t3)
    assert term_eq(t2, T("C", rank=2))


def test_term_eq_is_equivalence():
    rng = random.Random(11)
    sig = OperatorSignature({"A": 0, "B": 0, "U": 1, "Pair": 2})
    terms = [random_term(sig, rng, 3) for _ in range(40)]
    for t in terms:
        assert term_eq(t, t)
    for t1 in terms:
        for t2 in terms:
            assert term_eq(t1, t2) == term_eq(t2, t1)


def test_annotations_canonical_order():
    assert T("C", b=1, a=2).annotations == (("a", 2), ("b", 1))
    assert T("C", a=2, b=1) == T("C", b=1, a=2)


def test_builtin_attributes():
    interp = AttributeInterpreter()
    leaf = T("C")
    t = T("f", leaf, T("g", leaf))
    # independent oracle: count nodes by traversal
    assert attr_eval(interp, "size", t) == len(list(subterms(t))) == 4
    assert attr_eval(interp, "depth", t) == 2
    assert attr_eval(interp, "arity", t) == 2
    assert attr_eval(interp, "depth", leaf) == 0


def test_annotation_overrides_builtin():
    interp = AttributeInterpreter()
    t = T("C", size=99)
    assert attr_eval(interp, "size", t) == 99


def test_attr_eval_partiality_and_annotations():
    interp = AttributeInterpreter()
    assert attr_eval(interp, "rank", T("C", rank=2)) == 2
    assert attr_eval(interp, "rank", T("C")) is None


def test_attr_eval_custom_resolver():
    interp = AttributeInterpreter({"leaves": lambda t: sum(1 for s in subterms(t) if not s.children)})
    assert attr_eval(interp, "leaves", T("f", T("C"), T("C"))) == 2


def test_size_depth_invariants():
    rng = random.Random(5)
    sig = OperatorSignature({"A": 0, "U": 1, "Pair": 2})
    for _ in range(100):
        t = random_term(sig, rng, 5)
        assert term_size(t) >= 1
        assert term_depth(t) < term_size(t)


def test_extend_consistent():
    c, d = T("C"), T("D")
    th = extend_consistent({}, "x", c)
    assert th == {"x": c}
    same = extend_consistent(th, "x", c)
    assert same == {"x": c}
    assert extend_consistent(th, "x", d) is None
    grown = extend_consistent(th, "y", d)
    assert grown == {"x": c, "y": d}
    assert th == {"x": c}  # never mutated


def test_extend_consistent_never_shrinks():
    rng = random.Random(3)
    sig = OperatorSignature({"A": 0, "U": 1})
    theta = {}
    for i in range(50):
        t = random_term(sig, rng, 3)
        out = extend_consistent(theta, f"v{rng.randrange(10)}", t)
        if out is not None:
            assert len(out) >= len(theta)
            for k, v in theta.items():
                assert out[k] == v
            theta = out
