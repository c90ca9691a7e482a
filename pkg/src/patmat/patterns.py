"""Pattern syntax, guard expressions, well-formedness, and unfolding.

The pattern language over terms:

    p ::= x                      variable
        | f(p1,...,pn)           operator application
        | p || p'                alternate (left tried first)
        | p where g              guard over attribute expressions
        | exists x. p            locally scoped fresh variable
        | p where x <= p'        match constraint on a bound variable
        | F(p1,...,pn)           function-variable application
        | rec P(xs)[ys]. p       recursive pattern, unfolded one step at a time
        | P(xs)                  recursive call, bound by an enclosing rec

Guards are three-valued: attribute lookup is partial, so a guard can be
True, False, or undefined (None).  Matchers treat undefined as failure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .terms import (
    AttributeInterpreter,
    EngineError,
    OperatorSignature,
    Substitution,
    Term,
    attr_eval,
)


# ---------------------------------------------------------------------------
# Guard expressions
# ---------------------------------------------------------------------------

class Expr:
    """Arithmetic expression over attribute observations."""

    __slots__ = ()


@dataclass(frozen=True)
class TermAttr(Expr):
    term: Term
    key: str


@dataclass(frozen=True)
class VarAttr(Expr):
    var: str
    key: str


@dataclass(frozen=True)
class Lit(Expr):
    value: int


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr


class Guard:
    """Boolean constraint over expressions."""

    __slots__ = ()


@dataclass(frozen=True)
class Eq(Guard):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Lt(Guard):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class And(Guard):
    left: Guard
    right: Guard


@dataclass(frozen=True)
class Or(Guard):
    left: Guard
    right: Guard


@dataclass(frozen=True)
class Not(Guard):
    body: Guard


def eval_expr(interp: AttributeInterpreter, theta: Substitution, e: Expr) -> Optional[int]:
    """Exact signed integer evaluation; None when any attribute is undefined."""
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, TermAttr):
        return attr_eval(interp, e.key, e.term)
    if isinstance(e, VarAttr):
        bound = theta.get(e.var)
        if bound is None:
            return None
        return attr_eval(interp, e.key, bound)
    if isinstance(e, (Add, Sub, Mul)):
        lhs = eval_expr(interp, theta, e.left)
        rhs = eval_expr(interp, theta, e.right)
        if lhs is None or rhs is None:
            return None
        if isinstance(e, Add):
            return lhs + rhs
        if isinstance(e, Sub):
            return lhs - rhs
        return lhs * rhs
    raise EngineError(f"unknown expression node {e!r}")


def eval_guard(interp: AttributeInterpreter, theta: Substitution, g: Guard) -> Optional[bool]:
    """Three-valued guard evaluation: True, False, or None (undefined).

    Strict: any undefined operand makes the enclosing connective
    undefined; there is no short-circuit truth from undefined inputs.
    """
    if isinstance(g, (Eq, Lt)):
        lhs = eval_expr(interp, theta, g.left)
        rhs = eval_expr(interp, theta, g.right)
        if lhs is None or rhs is None:
            return None
        return lhs == rhs if isinstance(g, Eq) else lhs < rhs
    if isinstance(g, (And, Or)):
        lhs = eval_guard(interp, theta, g.left)
        rhs = eval_guard(interp, theta, g.right)
        if lhs is None or rhs is None:
            return None
        return (lhs and rhs) if isinstance(g, And) else (lhs or rhs)
    if isinstance(g, Not):
        inner = eval_guard(interp, theta, g.body)
        return None if inner is None else not inner
    raise EngineError(f"unknown guard node {g!r}")


def guard_vars(g: Guard) -> set[str]:
    """Variables mentioned by a guard through attribute access."""
    out: set[str] = set()

    def expr(e: Expr) -> None:
        if isinstance(e, VarAttr):
            out.add(e.var)
        elif isinstance(e, (Add, Sub, Mul)):
            expr(e.left)
            expr(e.right)

    def walk(h: Guard) -> None:
        if isinstance(h, (Eq, Lt)):
            expr(h.left)
            expr(h.right)
        elif isinstance(h, (And, Or)):
            walk(h.left)
            walk(h.right)
        else:
            walk(h.body)

    walk(g)
    return out


# ---------------------------------------------------------------------------
# Pattern AST
# ---------------------------------------------------------------------------

class Pattern:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Pattern):
    name: str


@dataclass(frozen=True)
class App(Pattern):
    op: str
    args: tuple[Pattern, ...]


@dataclass(frozen=True)
class Alt(Pattern):
    left: Pattern
    right: Pattern


@dataclass(frozen=True)
class Guarded(Pattern):
    body: Pattern
    guard: Guard


@dataclass(frozen=True)
class Exists(Pattern):
    var: str
    body: Pattern


@dataclass(frozen=True)
class MatchConstr(Pattern):
    body: Pattern
    var: str
    constraint: Pattern


@dataclass(frozen=True)
class FunApp(Pattern):
    fvar: str
    args: tuple[Pattern, ...]


@dataclass(frozen=True)
class Rec(Pattern):
    """Recursive binder: formals are bound in body, actuals are the call-site
    arguments substituted on unfolding."""

    name: str
    formals: tuple[str, ...]
    actuals: tuple[str, ...]
    body: Pattern


@dataclass(frozen=True)
class RecCall(Pattern):
    name: str
    args: tuple[str, ...]


# ---------------------------------------------------------------------------
# Name plumbing
# ---------------------------------------------------------------------------

def pattern_names(p: Pattern, include_guards: bool = True) -> set[str]:
    """Every variable-like name syntactically present (free or bound).

    With include_guards=False only structural and binding occurrences
    count, which is what guard scoping is checked against.
    """
    out: set[str] = set()

    def go(q: Pattern) -> None:
        if isinstance(q, Var):
            out.add(q.name)
        elif isinstance(q, App):
            for a in q.args:
                go(a)
        elif isinstance(q, Alt):
            go(q.left)
            go(q.right)
        elif isinstance(q, Guarded):
            if include_guards:
                out.update(guard_vars(q.guard))
            go(q.body)
        elif isinstance(q, Exists):
            out.add(q.var)
            go(q.body)
        elif isinstance(q, MatchConstr):
            out.add(q.var)
            go(q.body)
            go(q.constraint)
        elif isinstance(q, FunApp):
            out.add(q.fvar)
            for a in q.args:
                go(a)
        elif isinstance(q, Rec):
            out.update(q.formals)
            out.update(q.actuals)
            go(q.body)
        elif isinstance(q, RecCall):
            out.update(q.args)
        else:
            raise EngineError(f"unknown pattern node {q!r}")

    go(p)
    return out


def fresh_name(base: str, avoid: set[str]) -> str:
    # The DSL lexer never produces '%', so generated names cannot collide
    # with source-level identifiers.
    root = base.split("%", 1)[0]
    i = 1
    while f"{root}%{i}" in avoid:
        i += 1
    return f"{root}%{i}"


def _rename_expr(e: Expr, mapping: dict[str, str]) -> Expr:
    if isinstance(e, VarAttr):
        new = mapping.get(e.var)
        return VarAttr(new, e.key) if new else e
    if isinstance(e, (Add, Sub, Mul)):
        return type(e)(_rename_expr(e.left, mapping), _rename_expr(e.right, mapping))
    return e


def _rename_guard(g: Guard, mapping: dict[str, str]) -> Guard:
    if isinstance(g, (Eq, Lt)):
        return type(g)(_rename_expr(g.left, mapping), _rename_expr(g.right, mapping))
    if isinstance(g, (And, Or)):
        return type(g)(_rename_guard(g.left, mapping), _rename_guard(g.right, mapping))
    return Not(_rename_guard(g.body, mapping))


def rename_vars(p: Pattern, mapping: dict[str, str]) -> Pattern:
    """Capture-avoiding simultaneous renaming of free variable occurrences.

    Covers both namespaces: pattern variables and function variables share
    the renaming map (recursive binders may pass either kind through).
    Binders shadowing a mapping key stop the renaming; binders colliding
    with a mapping value are alpha-renamed to fresh names first.
    """
    mapping = {k: v for k, v in mapping.items() if k != v}
    if not mapping:
        return p

    if isinstance(p, Var):
        new = mapping.get(p.name)
        return Var(new) if new else p
    if isinstance(p, App):
        return App(p.op, tuple(rename_vars(a, mapping) for a in p.args))
    if isinstance(p, Alt):
        return Alt(rename_vars(p.left, mapping), rename_vars(p.right, mapping))
    if isinstance(p, Guarded):
        return Guarded(rename_vars(p.body, mapping), _rename_guard(p.guard, mapping))
    if isinstance(p, Exists):
        binder, body = p.var, p.body
        if binder in mapping.values():
            avoid = pattern_names(body) | set(mapping) | set(mapping.values())
            renamed = fresh_name(binder, avoid)
            body = rename_vars(body, {binder: renamed})
            binder = renamed
        inner = {k: v for k, v in mapping.items() if k != binder}
        return Exists(binder, rename_vars(body, inner))
    if isinstance(p, MatchConstr):
        return MatchConstr(
            rename_vars(p.body, mapping),
            mapping.get(p.var, p.var),
            rename_vars(p.constraint, mapping),
        )
    if isinstance(p, FunApp):
        return FunApp(
            mapping.get(p.fvar, p.fvar),
            tuple(rename_vars(a, mapping) for a in p.args),
        )
    if isinstance(p, Rec):
        actuals = tuple(mapping.get(a, a) for a in p.actuals)
        inner = {k: v for k, v in mapping.items() if k not in p.formals}
        body = p.body
        if inner:
            captured = set(inner.values()) & set(p.formals)
            if captured and any(f in pattern_names(p.body) for f in captured):
                raise EngineError(
                    f"variable capture by recursive binder {p.name}: {sorted(captured)}"
                )
            body = rename_vars(body, inner)
        return Rec(p.name, p.formals, actuals, body)
    if isinstance(p, RecCall):
        return RecCall(p.name, tuple(mapping.get(a, a) for a in p.args))
    raise EngineError(f"unknown pattern node {p!r}")


def _replace_calls(p: Pattern, rec: Rec) -> Pattern:
    """Close one level of recursion: calls to rec.name become rec binders
    carrying the call arguments as actuals."""
    if isinstance(p, RecCall):
        if p.name == rec.name:
            return Rec(rec.name, rec.formals, p.args, rec.body)
        return p
    if isinstance(p, Var):
        return p
    if isinstance(p, App):
        return App(p.op, tuple(_replace_calls(a, rec) for a in p.args))
    if isinstance(p, Alt):
        return Alt(_replace_calls(p.left, rec), _replace_calls(p.right, rec))
    if isinstance(p, Guarded):
        return Guarded(_replace_calls(p.body, rec), p.guard)
    if isinstance(p, Exists):
        return Exists(p.var, _replace_calls(p.body, rec))
    if isinstance(p, MatchConstr):
        return MatchConstr(_replace_calls(p.body, rec), p.var, _replace_calls(p.constraint, rec))
    if isinstance(p, FunApp):
        return FunApp(p.fvar, tuple(_replace_calls(a, rec) for a in p.args))
    if isinstance(p, Rec):
        if p.name == rec.name:
            return p  # shadowed; inner binder owns these calls
        return Rec(p.name, p.formals, p.actuals, _replace_calls(p.body, rec))
    raise EngineError(f"unknown pattern node {p!r}")


def unfold_rec(p: Rec) -> Pattern:
    """One-step unfolding of a recursive pattern.

    Recursive calls in the body are replaced by the binder itself (with the
    call arguments as actuals), then formals are renamed to the actuals.
    Renaming is deterministic and stateless, so repeated unfolding of equal
    binders yields equal patterns.
    """
    if not isinstance(p, Rec):
        raise EngineError("unfold_rec expects a recursive binder")
    if len(p.formals) != len(p.actuals):
        raise EngineError(f"recursive binder {p.name} has mismatched formals/actuals")
    body = _replace_calls(p.body, p)
    return rename_vars(body, dict(zip(p.formals, p.actuals)))


# ---------------------------------------------------------------------------
# Free variables
# ---------------------------------------------------------------------------

def free_pattern_vars(p: Pattern) -> tuple[set[str], set[str]]:
    """Free pattern variables and function variables of a pattern.

    Existentials bind pattern variables; recursive binders bind their
    formals and expose their actuals.  Whether a recursion argument is a
    pattern or a function variable follows from how the corresponding
    formal is used in the body, resolved by fixpoint iteration (a formal
    can be used only by passing it along to a recursive call).
    """
    if isinstance(p, Rec):
        pv_kinds, fv_kinds = _formal_kinds(p)
        pv, fv = _free_with_kinds(p.body, frozenset(), p, pv_kinds, fv_kinds)
        pv -= set(p.formals)
        fv -= set(p.formals)
        for i, f in enumerate(p.formals):
            if f in pv_kinds:
                pv.add(p.actuals[i])
            if f in fv_kinds:
                fv.add(p.actuals[i])
        return pv, fv
    return _free_with_kinds(p, frozenset(), None, set(), set())


def _formal_kinds(rec: Rec) -> tuple[set[str], set[str]]:
    pv_kinds: set[str] = set()
    fv_kinds: set[str] = set()
    while True:
        pv, fv = _free_with_kinds(rec.body, frozenset(), rec, pv_kinds, fv_kinds)
        new_pv = pv_kinds | (pv & set(rec.formals))
        new_fv = fv_kinds | (fv & set(rec.formals))
        if new_pv == pv_kinds and new_fv == fv_kinds:
            return pv_kinds, fv_kinds
        pv_kinds, fv_kinds = new_pv, new_fv


def _free_with_kinds(
    p: Pattern,
    bound: frozenset,
    ctx: Optional[Rec],
    pv_kinds: set[str],
    fv_kinds: set[str],
) -> tuple[set[str], set[str]]:
    pv: set[str] = set()
    fv: set[str] = set()

    def go(q: Pattern, bound: frozenset) -> None:
        if isinstance(q, Var):
            if q.name not in bound:
                pv.add(q.name)
        elif isinstance(q, App):
            for a in q.args:
                go(a, bound)
        elif isinstance(q, Alt):
            go(q.left, bound)
            go(q.right, bound)
        elif isinstance(q, Guarded):
            pv.update(v for v in guard_vars(q.guard) if v not in bound)
            go(q.body, bound)
        elif isinstance(q, Exists):
            go(q.body, bound | {q.var})
        elif isinstance(q, MatchConstr):
            if q.var not in bound:
                pv.add(q.var)
            go(q.body, bound)
            go(q.constraint, bound)
        elif isinstance(q, FunApp):
            if q.fvar not in bound:
                fv.add(q.fvar)
            for a in q.args:
                go(a, bound)
        elif isinstance(q, Rec):
            sub_pv, sub_fv = free_pattern_vars(q)
            pv.update(v for v in sub_pv if v not in bound)
            fv.update(v for v in sub_fv if v not in bound)
        elif isinstance(q, RecCall):
            if ctx is not None and q.name == ctx.name:
                for i, arg in enumerate(q.args):
                    if arg in bound or i >= len(ctx.formals):
                        continue
                    formal = ctx.formals[i]
                    if formal in pv_kinds:
                        pv.add(arg)
                    if formal in fv_kinds:
                        fv.add(arg)
            # calls to other names are rejected by well_formed
        else:
            raise EngineError(f"unknown pattern node {q!r}")

    go(p, bound)
    return pv, fv


# ---------------------------------------------------------------------------
# Well-formedness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str


@dataclass
class ValidationReport:
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return not self.diagnostics

    def codes(self) -> list[str]:
        return [d.code for d in self.diagnostics]


def well_formed(sig: OperatorSignature, p: Pattern) -> ValidationReport:
    """Check grammar side conditions against a signature.

    Diagnoses: UnknownOperator, ArityMismatch, UnboundRecCall,
    RecCallArity, GuardVarUnscoped.  Guard scoping is lenient: a guard
    variable only has to occur somewhere in the pattern; evaluation order
    is the matcher's concern.
    """
    diags: list[Diagnostic] = []
    visible = pattern_names(p, include_guards=False)

    def go(q: Pattern, recs: dict[str, int]) -> None:
        if isinstance(q, Var):
            return
        if isinstance(q, App):
            if q.op not in sig:
                diags.append(Diagnostic("UnknownOperator", f"operator {q.op} is not declared"))
            else:
                want = sig.arity(q.op)
                if want != len(q.args):
                    diags.append(Diagnostic(
                        "ArityMismatch",
                        f"{q.op} expects {want} arguments, got {len(q.args)}",
                    ))
            for a in q.args:
                go(a, recs)
        elif isinstance(q, Alt):
            go(q.left, recs)
            go(q.right, recs)
        elif isinstance(q, Guarded):
            for v in sorted(guard_vars(q.guard)):
                if v not in visible:
                    diags.append(Diagnostic(
                        "GuardVarUnscoped",
                        f"guard mentions {v}, which occurs nowhere in the pattern",
                    ))
            go(q.body, recs)
        elif isinstance(q, Exists):
            go(q.body, recs)
        elif isinstance(q, MatchConstr):
            go(q.body, recs)
            go(q.constraint, recs)
        elif isinstance(q, FunApp):
            for a in q.args:
                go(a, recs)
        elif isinstance(q, Rec):
            if len(q.formals) != len(q.actuals):
                diags.append(Diagnostic(
                    "ArityMismatch",
                    f"recursive binder {q.name} has {len(q.formals)} formals "
                    f"but {len(q.actuals)} actuals",
                ))
            go(q.body, {**recs, q.name: len(q.formals)})
        elif isinstance(q, RecCall):
            if q.name not in recs:
                diags.append(Diagnostic(
                    "UnboundRecCall",
                    f"recursive call {q.name} has no enclosing binder",
                ))
            elif recs[q.name] != len(q.args):
                diags.append(Diagnostic(
                    "RecCallArity",
                    f"recursive call {q.name} passes {len(q.args)} arguments, "
                    f"binder takes {recs[q.name]}",
                ))
        else:
            raise EngineError(f"unknown pattern node {q!r}")

    go(p, {})
    return ValidationReport(diags)
