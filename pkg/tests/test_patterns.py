import random

import pytest

from conftest import T
from patmat.patterns import (
    Add,
    Alt,
    And,
    App,
    Eq,
    Exists,
    FunApp,
    Guarded,
    Lit,
    Lt,
    MatchConstr,
    Mul,
    Not,
    Or,
    Rec,
    RecCall,
    Sub,
    TermAttr,
    Var,
    VarAttr,
    eval_expr,
    eval_guard,
    free_pattern_vars,
    rename_vars,
    unfold_rec,
    well_formed,
)
from patmat.terms import AttributeInterpreter, OperatorSignature

INTERP = AttributeInterpreter()


# --- free variables ---------------------------------------------------------

def test_free_vars_plain():
    p = App("MatMul", (Var("x"), App("Trans", (Var("y"),))))
    assert free_pattern_vars(p) == ({"x", "y"}, set())


def test_free_vars_exists_binds():
    p = Exists("y", App("f", (Var("x"), Var("y"))))
    assert free_pattern_vars(p) == ({"x"}, set())


def test_free_vars_fun_vars():
    p = FunApp("F", (FunApp("F", (Var("x"),)),))
    assert free_pattern_vars(p) == ({"x"}, {"F"})


def test_free_vars_guard_and_constraint():
    p = Guarded(MatchConstr(Var("x"), "x", Var("z")), Eq(VarAttr("w", "rank"), Lit(1)))
    pv, fv = free_pattern_vars(p)
    assert pv == {"x", "z", "w"}
    assert fv == set()


def test_free_vars_recursion():
    # the unary-chain shape: formals (x, F), actuals (x, F)
    body = Alt(
        FunApp("F", (RecCall("UC", ("x", "F")),)),
        FunApp("F", (Var("x"),)),
    )
    rec = Rec("UC", ("x", "F"), ("x", "F"), body)
    assert free_pattern_vars(rec) == ({"x"}, {"F"})
    # renamed actuals surface instead of the formals
    rec2 = Rec("UC", ("x", "F"), ("a", "G"), body)
    assert free_pattern_vars(rec2) == ({"a"}, {"G"})


def test_free_vars_self_loop():
    rec = Rec("P", ("x",), ("x",), RecCall("P", ("x",)))
    # x is only ever passed back into the recursion, never matched
    assert free_pattern_vars(rec) == (set(), set())


def test_free_vars_unfolding_subset_property():
    body = Alt(
        FunApp("F", (RecCall("UC", ("x", "F")),)),
        FunApp("F", (Var("x"),)),
    )
    rec = Rec("UC", ("x", "F"), ("a", "G"), body)
    pv, fv = free_pattern_vars(rec)
    body_pv, body_fv = free_pattern_vars(Rec("UC", ("x", "F"), ("x", "F"), body))
    allowed_pv = (body_pv - set(rec.formals)) | set(rec.actuals)
    allowed_fv = (body_fv - set(rec.formals)) | set(rec.actuals)
    upv, ufv = free_pattern_vars(unfold_rec(rec))
    assert upv <= allowed_pv
    assert ufv <= allowed_fv


# --- well-formedness --------------------------------------------------------

def test_well_formed_accepts_cublas_shape(sig6):
    sig = OperatorSignature({"MatMul": 2, "Trans": 1})
    p = Guarded(
        App("MatMul", (Var("x"), App("Trans", (Var("y"),)))),
        And(Eq(VarAttr("x", "rank"), Lit(2)), Eq(VarAttr("y", "rank"), Lit(2))),
    )
    assert well_formed(sig, p).ok


def test_well_formed_arity_mismatch():
    sig = OperatorSignature({"Trans": 1})
    report = well_formed(sig, App("Trans", (Var("x"), Var("y"))))
    assert "ArityMismatch" in report.codes()


def test_well_formed_unknown_operator():
    report = well_formed(OperatorSignature(), App("Mystery", ()))
    assert "UnknownOperator" in report.codes()


def test_well_formed_unbound_reccall():
    report = well_formed(OperatorSignature(), RecCall("Q", ("x",)))
    assert "UnboundRecCall" in report.codes()


def test_well_formed_reccall_arity():
    rec = Rec("P", ("x", "y"), ("x", "y"), RecCall("P", ("x",)))
    report = well_formed(OperatorSignature(), rec)
    assert "RecCallArity" in report.codes()


def test_well_formed_guard_scope():
    sig = OperatorSignature({"f": 1})
    good = Guarded(App("f", (Var("x"),)), Eq(VarAttr("x", "rank"), Lit(1)))
    assert well_formed(sig, good).ok
    bad = Guarded(App("f", (Var("x"),)), Eq(VarAttr("ghost", "rank"), Lit(1)))
    assert "GuardVarUnscoped" in well_formed(sig, bad).codes()


# --- unfolding ----------------------------------------------------------------

def test_unfold_pure_renaming():
    rec = Rec("P", ("x",), ("y",), Var("x"))
    assert unfold_rec(rec) == Var("y")


def test_unfold_self_loop_is_identity():
    rec = Rec("P", ("x",), ("y",), RecCall("P", ("x",)))
    assert unfold_rec(rec) == Rec("P", ("x",), ("y",), RecCall("P", ("x",)))


def test_unfold_two_steps_against_hand_expansion():
    # rec P(x)[y]. f(P(x)) unfolds to f(rec P(x)[y']. f(P(x))) with y' = y;
    # expanding twice by hand gives f(f(rec P(x)[..]. f(P(x)))).
    body = App("f", (RecCall("P", ("x",)),))
    rec = Rec("P", ("x",), ("y",), body)
    once = unfold_rec(rec)
    assert once == App("f", (Rec("P", ("x",), ("y",), body),))
    inner = once.args[0]
    twice = App("f", (unfold_rec(inner),))
    assert twice == App("f", (App("f", (Rec("P", ("x",), ("y",), body),)),))


def test_unfold_renames_shadowing_existential():
    # actual y collides with the local binder; the binder is alpha-renamed
    body = Exists("y", MatchConstr(Var("x"), "x", App("f", (Var("y"),))))
    rec = Rec("P", ("x",), ("y",), body)
    out = unfold_rec(rec)
    assert isinstance(out, Exists)
    assert out.var != "y"
    constr = out.body
    assert constr.var == "y"  # the formal occurrence now names the actual
    assert constr.constraint == App("f", (Var(out.var),))


def test_unfold_preserves_well_formedness():
    sig = OperatorSignature({"f": 1, "g": 2, "C": 0})
    body = Alt(
        Exists("y", MatchConstr(Var("x"), "x", FunApp("F", (RecCall("P", ("y", "F")),)))),
        Var("x"),
    )
    rec = Rec("P", ("x", "F"), ("x", "F"), body)
    assert well_formed(sig, rec).ok
    out = unfold_rec(rec)
    assert well_formed(sig, out).ok
    # keep unfolding a few layers through the nested binders
    inner = out
    for _ in range(3):
        recs = _collect_recs(inner)
        assert recs
        inner = unfold_rec(recs[0])
        assert well_formed(sig, inner).ok


def _collect_recs(p):
    out = []

    def go(q):
        if isinstance(q, Rec):
            out.append(q)
            return
        if isinstance(q, App) or isinstance(q, FunApp):
            for a in q.args:
                go(a)
        elif isinstance(q, Alt):
            go(q.left)
            go(q.right)
        elif isinstance(q, (Guarded, Exists)):
            go(q.body)
        elif isinstance(q, MatchConstr):
            go(q.body)
            go(q.constraint)

    go(p)
    return out


def test_rename_stops_at_shadowing_binder():
    p = Exists("x", App("f", (Var("x"),)))
    assert rename_vars(p, {"x": "z"}) == p


# --- expression and guard evaluation ----------------------------------------

def test_eval_expr_examples():
    theta = {"x": T("C", rank=2)}
    assert eval_expr(INTERP, theta, Add(VarAttr("x", "rank"), Lit(1))) == 3
    assert eval_expr(INTERP, {}, VarAttr("x", "rank")) is None
    assert eval_expr(INTERP, {}, Sub(Lit(5), Lit(7))) == -2
    assert eval_expr(INTERP, {}, Mul(Lit(6), Lit(7))) == 42
    assert eval_expr(INTERP, {}, TermAttr(T("C", rank=4), "rank")) == 4


def test_eval_expr_matches_direct_evaluator():
    # oracle equivalence on randomly generated closed expressions
    rng = random.Random(99)
    leaf_terms = [T("C", rank=rng.randrange(5), eltType=rng.randrange(3)) for _ in range(5)]

    def gen(depth):
        roll = rng.random()
        if depth <= 0 or roll < 0.3:
            if rng.random() < 0.5:
                return Lit(rng.randrange(-5, 6))
            return TermAttr(rng.choice(leaf_terms), rng.choice(["rank", "eltType", "size"]))
        cls = rng.choice([Add, Sub, Mul])
        return cls(gen(depth - 1), gen(depth - 1))

    def direct(e):
        if isinstance(e, Lit):
            return e.value
        if isinstance(e, TermAttr):
            val = e.term.annotation(e.key)
            if val is None and e.key == "size":
                val = 1
            return val
        a, b = direct(e.left), direct(e.right)
        if a is None or b is None:
            return None
        return {Add: a + b, Sub: a - b, Mul: a * b}[type(e)]

    for _ in range(1000):
        e = gen(3)
        assert eval_expr(INTERP, {}, e) == direct(e)


def test_eval_guard_three_valued():
    theta = {"x": T("A", rank=2), "y": T("B", rank=2)}
    g = And(Eq(VarAttr("x", "rank"), Lit(2)), Eq(VarAttr("y", "rank"), Lit(2)))
    assert eval_guard(INTERP, theta, g) is True
    assert eval_guard(INTERP, {}, Not(Lt(Lit(1), Lit(2)))) is False
    assert eval_guard(INTERP, {"x": T("A")}, Eq(VarAttr("x", "rank"), Lit(2))) is None


def test_eval_guard_strict_undefined():
    undef = Eq(VarAttr("x", "rank"), Lit(0))
    false_g = Lt(Lit(2), Lit(1))
    true_g = Lt(Lit(1), Lit(2))
    theta = {}
    assert eval_guard(INTERP, theta, And(false_g, undef)) is None
    assert eval_guard(INTERP, theta, Or(true_g, undef)) is None
    assert eval_guard(INTERP, theta, Not(undef)) is None


def test_eval_guard_total_on_annotated_terms():
    rng = random.Random(4)
    theta = {
        v: T("C", rank=rng.randrange(4), eltType=rng.randrange(4)) for v in ("x", "y")
    }

    def gen_guard(depth):
        if depth <= 0:
            lhs = VarAttr(rng.choice(["x", "y"]), rng.choice(["rank", "eltType", "size", "depth"]))
            return Eq(lhs, Lit(rng.randrange(4))) if rng.random() < 0.5 else Lt(lhs, Lit(3))
        cls = rng.choice([And, Or, Not])
        if cls is Not:
            return Not(gen_guard(depth - 1))
        return cls(gen_guard(depth - 1), gen_guard(depth - 1))

    for _ in range(300):
        assert eval_guard(INTERP, theta, gen_guard(3)) is not None
