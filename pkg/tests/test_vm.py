import random

import pytest

from conftest import T
from patmat.gen import PatternGenerator, random_term
from patmat.patterns import (
    Alt,
    App,
    Eq,
    Exists,
    FunApp,
    Guarded,
    Lit,
    MatchConstr,
    Rec,
    RecCall,
    Var,
    VarAttr,
)
from patmat.terms import AttributeInterpreter, OperatorSignature
from patmat.vm import (
    BacktrackFrame,
    BackMatch,
    BudgetExhausted,
    CheckBound,
    CheckGuard,
    DoMatch,
    Failure,
    Matched,
    NoMatch,
    Running,
    StuckError,
    Success,
    backtrack,
    cont,
    initial_state,
    run_match,
    step,
)

INTERP = AttributeInterpreter()
SIG = OperatorSignature({"A": 0, "B": 0, "C1": 0, "C2": 0, "f": 2, "g": 1})


def drive(p, t, sig=SIG, budget=10_000):
    return run_match(sig, INTERP, p, t, budget)


# --- initial state and backtrack ------------------------------------------------

def test_initial_state():
    st = initial_state(Var("x"), T("A"))
    assert st == Running({}, {}, None, cont(DoMatch(Var("x"), T("A"))))


def test_backtrack_empty_fails():
    assert backtrack(None) == Failure()


def test_backtrack_pops_one_frame():
    k1 = cont(DoMatch(Var("x"), T("A")))
    k2 = cont(DoMatch(Var("y"), T("B")))
    f1 = BacktrackFrame({"a": T("A")}, {}, k1)
    f2 = BacktrackFrame({"b": T("B")}, {}, k2)
    stack = (f1, (f2, None))
    st = backtrack(stack)
    assert isinstance(st, Running)
    assert st.theta == {"a": T("A")}
    assert st.k is k1
    # only the top frame was consumed
    assert st.stack == (f2, None)


# --- single transitions ---------------------------------------------------------

def test_var_bind_then_success():
    st = initial_state(Var("x"), T("A"))
    st, rule = step(SIG, INTERP, st)
    assert rule == "var-bind"
    assert st.theta == {"x": T("A")} and st.k is None
    st, rule = step(SIG, INTERP, st)
    assert rule == "success"
    assert st == Success({"x": T("A")}, {})


def test_var_conflict_nonlinear():
    p = App("f", (Var("x"), Var("x")))
    assert isinstance(drive(p, T("f", T("A"), T("A"))), Matched)
    assert isinstance(drive(p, T("f", T("A"), T("B"))), NoMatch)


def test_fun_conflict_with_empty_stack_fails():
    out = drive(App("g", (Var("x"),)), T("f", T("A"), T("A")))
    assert isinstance(out, NoMatch)
    assert out.steps == 1


def test_step_on_raw_recursive_call_is_stuck():
    st = initial_state(RecCall("P", ("x",)), T("A"))
    with pytest.raises(StuckError):
        step(SIG, INTERP, st)


def test_guard_pass_and_fail():
    p = Guarded(Var("x"), Eq(VarAttr("x", "rank"), Lit(2)))
    assert isinstance(drive(p, T("A", rank=2)), Matched)
    assert isinstance(drive(p, T("A", rank=3)), NoMatch)
    # undefined attribute reads as failure, not a wedge
    assert isinstance(drive(p, T("A")), NoMatch)


def test_exists_keeps_binding_and_requires_it():
    p = Exists("y", App("f", (Var("x"), Var("y"))))
    out = drive(p, T("f", T("A"), T("B")))
    assert isinstance(out, Matched)
    assert out.theta == {"x": T("A"), "y": T("B")}
    # a local that never binds fails the branch
    unused = Exists("y", App("g", (Var("x"),)))
    assert isinstance(drive(unused, T("g", T("A"))), NoMatch)


def test_match_constraint_resolution_order():
    p = MatchConstr(Var("x"), "x", App("g", (Var("y"),)))
    out = drive(p, T("g", T("A")))
    assert isinstance(out, Matched)
    assert out.theta["x"] == T("g", T("A"))
    assert out.theta["y"] == T("A")


def test_match_constraint_unbound_subject_backtracks():
    p = MatchConstr(App("g", (Var("y"),)), "x", Var("z"))
    assert isinstance(drive(p, T("g", T("A"))), NoMatch)


def test_fun_var_bind_bound_conflict():
    p = FunApp("F", (FunApp("F", (Var("x"),)),))
    out = drive(p, T("g", T("g", T("A"))))
    assert isinstance(out, Matched)
    assert out.phi == {"F": "g"}
    assert out.theta == {"x": T("A")}
    mixed = T("g", T("f", T("A"), T("A")))
    assert isinstance(drive(p, mixed), NoMatch)


def test_fun_var_arity_conflict():
    p = FunApp("F", (Var("x"),))
    assert isinstance(drive(p, T("f", T("A"), T("B"))), NoMatch)


def test_left_bias():
    p = Alt(App("f", (Var("x"), Var("y"))), App("f", (Var("y"), Var("x"))))
    t = T("f", T("C1"), T("C2"))
    out = drive(p, t)
    assert out.theta == {"x": T("C1"), "y": T("C2")}
    # agrees with running the left alternate alone
    left_only = drive(App("f", (Var("x"), Var("y"))), t)
    assert out.theta == left_only.theta


def test_budget_exhaustion_on_self_loop():
    rec = Rec("P", ("x",), ("x",), RecCall("P", ("x",)))
    out = drive(rec, T("A"), budget=5_000)
    assert isinstance(out, BudgetExhausted)
    assert out.steps == 5_000


# --- rule exclusivity and stack discipline --------------------------------------

RULE_GUARDS = [
    # (rule name, predicate over (theta, phi, head action))
    ("success", lambda th, ph, a: a is None),
    ("var-bind", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, Var) and a.pattern.name not in th),
    ("var-bound", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, Var) and th.get(a.pattern.name) == a.term),
    ("var-conflict", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, Var) and a.pattern.name in th and th[a.pattern.name] != a.term),
    ("op-unpack", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, App) and a.pattern.op == a.term.op and len(a.pattern.args) == len(a.term.children)),
    ("op-conflict", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, App) and (a.pattern.op != a.term.op or len(a.pattern.args) != len(a.term.children))),
    ("alt-push", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, Alt)),
    ("guard-defer", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, Guarded)),
    ("exists-open", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, Exists)),
    ("constraint-defer", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, MatchConstr)),
    ("funvar-bind", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, FunApp) and len(a.pattern.args) == len(a.term.children) and a.pattern.fvar not in ph),
    ("funvar-bound", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, FunApp) and len(a.pattern.args) == len(a.term.children) and ph.get(a.pattern.fvar) == a.term.op),
    ("funvar-conflict", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, FunApp) and (len(a.pattern.args) != len(a.term.children) or (a.pattern.fvar in ph and ph[a.pattern.fvar] != a.term.op))),
    ("rec-unfold", lambda th, ph, a: isinstance(a, DoMatch) and isinstance(a.pattern, Rec)),
    ("guard-pass", lambda th, ph, a: isinstance(a, CheckGuard)),
    ("guard-fail", lambda th, ph, a: isinstance(a, CheckGuard)),
    ("bound-check", lambda th, ph, a: isinstance(a, CheckBound) and a.var in th),
    ("bound-missing", lambda th, ph, a: isinstance(a, CheckBound) and a.var not in th),
    ("constraint-resolve", lambda th, ph, a: isinstance(a, BackMatch) and a.var in th),
    ("constraint-unbound", lambda th, ph, a: isinstance(a, BackMatch) and a.var not in th),
]


def test_rule_side_conditions_exclusive():
    rng = random.Random(78)
    for _ in range(120):
        gen = PatternGenerator(SIG, rng, max_depth=3)
        p = gen.pattern()
        t = random_term(SIG, rng, 3)
        st = initial_state(p, t)
        for _ in range(3000):
            if not isinstance(st, Running):
                break
            head = st.k[0] if st.k is not None else None
            theta, phi = st.theta, st.phi
            matching = [name for name, pred in RULE_GUARDS if pred(theta, phi, head)]
            st, rule = step(SIG, INTERP, st)
            if rule in ("guard-pass", "guard-fail"):
                assert set(matching) == {"guard-pass", "guard-fail"}
            else:
                assert matching == [rule], (matching, rule)


def test_step_is_deterministic():
    rng = random.Random(79)
    for _ in range(40):
        gen = PatternGenerator(SIG, rng, max_depth=3)
        p = gen.pattern()
        t = random_term(SIG, rng, 3)
        st = initial_state(p, t)
        for _ in range(500):
            if not isinstance(st, Running):
                break
            a = step(SIG, INTERP, st)
            b = step(SIG, INTERP, st)
            assert a == b
            st = a[0]


def test_stack_discipline():
    # every alt pushes exactly one frame, every backtrack pops exactly one,
    # and the depth never exceeds the number of alts unfolded so far
    rng = random.Random(80)
    for _ in range(100):
        gen = PatternGenerator(SIG, rng, max_depth=4)
        p = gen.pattern()
        t = random_term(SIG, rng, 3)
        st = initial_state(p, t)
        alts_unfolded = 0
        from patmat.vm import stack_depth

        prev_depth = 0
        for _ in range(3000):
            if not isinstance(st, Running):
                break
            st, rule = step(SIG, INTERP, st)
            if not isinstance(st, Running):
                break
            depth = stack_depth(st.stack)
            if rule == "alt-push":
                alts_unfolded += 1
                assert depth == prev_depth + 1
            elif rule in (
                "var-conflict",
                "op-conflict",
                "funvar-conflict",
                "guard-fail",
                "bound-missing",
                "constraint-unbound",
            ):
                assert depth == prev_depth - 1
            else:
                assert depth == prev_depth
            assert depth <= alts_unfolded
            prev_depth = depth


def test_trace_lines_emitted():
    lines = []
    out = run_match(SIG, INTERP, App("g", (Var("x"),)), T("g", T("A")), trace=lines.append)
    assert isinstance(out, Matched)
    assert lines[0].startswith("op-unpack ")
    assert lines[-1].startswith("success ")
    for line in lines:
        fields = dict(part.split("=") for part in line.split()[1:])
        assert set(fields) == {"theta", "phi", "stack", "k"}
