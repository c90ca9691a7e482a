"""Textual pattern language: parsing, printing, and compilation to rule sets.

Source files hold three kinds of declarations:

    op MatMul/2;

    pattern MMxyT(x, y) {
        assert x.rank == 2;
        assert y.rank == 2;
        yt = Trans(y);
        return MatMul(x, yt);
    }

    rule MMxyT when x.eltType == 0 && y.eltType == 0 => cublasMM_xyT_f32(x, y);

Repeating a pattern name declares alternates, tried top to bottom.  A
pattern body may declare scoped variables (`local y;`), constrain a bound
variable against a sub-pattern (`y <= Trans(x);`), bind local aliases
(`yt = Trans(y);`, inlined, no binding of their own), and apply function
variables (`$F(x)`).  A pattern that calls itself compiles to a recursive
binder; calls to other patterns are inlined and must be acyclic.

Numeric literals in pattern bodies and templates stand for auto-declared
nullary operators (`2` -> `LitNat_2`, `0.5` -> `LitStr_0p5`).

Term files use `op{key=nat,...}(children...)` syntax; `print_term` emits
the canonical form that `parse_term` maps back to the same term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .patterns import (
    Add,
    Alt,
    And,
    App,
    Eq,
    Exists,
    FunApp,
    Guard,
    Guarded,
    Lit,
    Lt,
    MatchConstr,
    Mul,
    Not,
    Or,
    Pattern,
    Rec,
    RecCall,
    Sub,
    Var,
    VarAttr,
    guard_vars,
    pattern_names,
    rename_vars,
    well_formed,
)
from .rewriting import PatternDef, Rule, RuleClause, RuleSet, TApp, TFunApp, TVar, Template
from .terms import (
    ArityMismatch,
    EngineError,
    OperatorSignature,
    Term,
    UnknownOperator,
    freeze_annotations,
    mk_term,
)


class ParseError(EngineError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class CompileDiagnostic:
    code: str
    message: str
    context: str = ""

    def __str__(self) -> str:
        where = f" in {self.context}" if self.context else ""
        return f"{self.code}{where}: {self.message}"


class CompileError(EngineError):
    def __init__(self, diagnostics: list[CompileDiagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


# ---------------------------------------------------------------------------
# Lexer
# ---------------------------------------------------------------------------

_PUNCT2 = {"==", "&&", "||", "<=", "=>"}
_PUNCT1 = set("(){},;/=.$+-*<!")

_KEYWORDS = {"op", "pattern", "rule", "local", "assert", "return", "when"}


@dataclass(frozen=True)
class Token:
    kind: str  # ident, nat, float, punct, keyword, eof
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            kind = "keyword" if word in _KEYWORDS else "ident"
            toks.append(Token(kind, word, line, col))
            col += j - i
            i = j
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            if j < n and text[j] == "." and j + 1 < n and text[j + 1].isdigit():
                j += 1
                while j < n and text[j].isdigit():
                    j += 1
                toks.append(Token("float", text[i:j], line, col))
            else:
                toks.append(Token("nat", text[i:j], line, col))
            col += j - i
            i = j
            continue
        two = text[i : i + 2]
        if two in _PUNCT2:
            toks.append(Token("punct", two, line, col))
            i += 2
            col += 2
            continue
        if c in _PUNCT1:
            toks.append(Token("punct", c, line, col))
            i += 1
            col += 1
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


class _Cursor:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_punct(self, text: str) -> bool:
        tok = self.peek()
        return tok.kind == "punct" and tok.text == text

    def eat_punct(self, text: str) -> Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return self.next()

    def eat_kind(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise ParseError(f"expected {what}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return self.next()

    def eat_keyword(self, word: str) -> Token:
        tok = self.peek()
        if tok.kind != "keyword" or tok.text != word:
            raise ParseError(f"expected {word!r}, found {tok.text or 'end of input'!r}", tok.line, tok.col)
        return self.next()


# ---------------------------------------------------------------------------
# Terms
# ---------------------------------------------------------------------------

def parse_term(sig: OperatorSignature, text: str) -> Term:
    """Parse one term, validating operators and arities against the signature."""
    cur = _Cursor(_tokenize(text))
    t = _parse_term_node(sig, cur)
    tok = cur.peek()
    if tok.kind != "eof":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return t


def _parse_term_node(sig: OperatorSignature, cur: _Cursor) -> Term:
    name = cur.eat_kind("ident", "operator name")
    annotations: dict[str, int] = {}
    if cur.at_punct("{"):
        cur.next()
        while True:
            key = cur.eat_kind("ident", "annotation key")
            cur.eat_punct("=")
            val = cur.eat_kind("nat", "natural number")
            annotations[key.text] = int(val.text)
            if cur.at_punct(","):
                cur.next()
                continue
            break
        cur.eat_punct("}")
    children: list[Term] = []
    if cur.at_punct("("):
        cur.next()
        if not cur.at_punct(")"):
            children.append(_parse_term_node(sig, cur))
            while cur.at_punct(","):
                cur.next()
                children.append(_parse_term_node(sig, cur))
        cur.eat_punct(")")
    try:
        return mk_term(sig, name.text, children, annotations)
    except (UnknownOperator, ArityMismatch) as err:
        raise type(err)(f"{name.line}:{name.col}: {err}") from None


def print_term(t: Term) -> str:
    """Canonical rendering; parse_term(print_term(t)) == t."""
    parts = [t.op]
    if t.annotations:
        parts.append("{" + ", ".join(f"{k}={v}" for k, v in t.annotations) + "}")
    parts.append("(" + ", ".join(print_term(c) for c in t.children) + ")")
    return "".join(parts)


# ---------------------------------------------------------------------------
# Surface syntax
# ---------------------------------------------------------------------------

class SExpr:
    __slots__ = ()


@dataclass(frozen=True)
class SName(SExpr):
    name: str
    line: int = 0
    col: int = 0


@dataclass(frozen=True)
class SCall(SExpr):
    name: str
    args: tuple[SExpr, ...]
    line: int = 0
    col: int = 0


@dataclass(frozen=True)
class SFunCall(SExpr):
    name: str
    args: tuple[SExpr, ...]
    line: int = 0
    col: int = 0


@dataclass(frozen=True)
class SLitNat(SExpr):
    value: int


@dataclass(frozen=True)
class SLitFloat(SExpr):
    text: str


@dataclass
class SurfacePatternDef:
    name: str
    params: tuple[str, ...]
    locals: list[str] = field(default_factory=list)
    aliases: list[tuple[str, SExpr]] = field(default_factory=list)
    constraints: list[tuple[str, SExpr]] = field(default_factory=list)
    guards: list[Guard] = field(default_factory=list)
    body: SExpr = None


@dataclass
class SurfaceRuleDef:
    pattern_name: str
    guard: Optional[Guard]
    template: SExpr


@dataclass
class SurfaceProgram:
    op_decls: list[tuple[str, int]] = field(default_factory=list)
    pattern_defs: list[SurfacePatternDef] = field(default_factory=list)
    rule_defs: list[SurfaceRuleDef] = field(default_factory=list)


def parse_program(text: str) -> SurfaceProgram:
    """Parse a pattern-language source file, preserving declaration order."""
    cur = _Cursor(_tokenize(text))
    prog = SurfaceProgram()
    while True:
        tok = cur.peek()
        if tok.kind == "eof":
            return prog
        if tok.kind != "keyword":
            raise ParseError(f"expected a declaration, found {tok.text!r}", tok.line, tok.col)
        if tok.text == "op":
            cur.next()
            name = cur.eat_kind("ident", "operator name")
            cur.eat_punct("/")
            arity = cur.eat_kind("nat", "arity")
            cur.eat_punct(";")
            prog.op_decls.append((name.text, int(arity.text)))
        elif tok.text == "pattern":
            prog.pattern_defs.append(_parse_pattern_def(cur))
        elif tok.text == "rule":
            prog.rule_defs.append(_parse_rule_def(cur))
        else:
            raise ParseError(f"unexpected keyword {tok.text!r}", tok.line, tok.col)


def _parse_pattern_def(cur: _Cursor) -> SurfacePatternDef:
    cur.eat_keyword("pattern")
    name = cur.eat_kind("ident", "pattern name")
    cur.eat_punct("(")
    params: list[str] = []
    if not cur.at_punct(")"):
        params.append(cur.eat_kind("ident", "parameter").text)
        while cur.at_punct(","):
            cur.next()
            params.append(cur.eat_kind("ident", "parameter").text)
    cur.eat_punct(")")
    cur.eat_punct("{")
    out = SurfacePatternDef(name.text, tuple(params))
    while True:
        tok = cur.peek()
        if tok.kind == "keyword" and tok.text == "return":
            cur.next()
            out.body = _parse_pexpr(cur)
            cur.eat_punct(";")
            cur.eat_punct("}")
            return out
        if tok.kind == "keyword" and tok.text == "local":
            cur.next()
            out.locals.append(cur.eat_kind("ident", "local name").text)
            cur.eat_punct(";")
            continue
        if tok.kind == "keyword" and tok.text == "assert":
            cur.next()
            out.guards.append(_parse_gexpr(cur))
            cur.eat_punct(";")
            continue
        if tok.kind == "ident":
            ident = cur.next()
            if cur.at_punct("<="):
                cur.next()
                out.constraints.append((ident.text, _parse_pexpr(cur)))
            elif cur.at_punct("="):
                cur.next()
                out.aliases.append((ident.text, _parse_pexpr(cur)))
            else:
                bad = cur.peek()
                raise ParseError("expected '<=' or '=' after name", bad.line, bad.col)
            cur.eat_punct(";")
            continue
        raise ParseError(
            f"expected a statement or 'return', found {tok.text or 'end of input'!r}",
            tok.line,
            tok.col,
        )


def _parse_rule_def(cur: _Cursor) -> SurfaceRuleDef:
    cur.eat_keyword("rule")
    name = cur.eat_kind("ident", "pattern name")
    guard: Optional[Guard] = None
    tok = cur.peek()
    if tok.kind == "keyword" and tok.text == "when":
        cur.next()
        guard = _parse_gexpr(cur)
    cur.eat_punct("=>")
    template = _parse_pexpr(cur)
    cur.eat_punct(";")
    return SurfaceRuleDef(name.text, guard, template)


def _parse_pexpr(cur: _Cursor) -> SExpr:
    tok = cur.peek()
    if tok.kind == "nat":
        cur.next()
        return SLitNat(int(tok.text))
    if tok.kind == "float":
        cur.next()
        return SLitFloat(tok.text)
    if cur.at_punct("$"):
        cur.next()
        name = cur.eat_kind("ident", "function variable")
        args = _parse_pargs(cur)
        return SFunCall(name.text, args, name.line, name.col)
    name = cur.eat_kind("ident", "name")
    if cur.at_punct("("):
        args = _parse_pargs(cur)
        return SCall(name.text, args, name.line, name.col)
    return SName(name.text, name.line, name.col)


def _parse_pargs(cur: _Cursor) -> tuple[SExpr, ...]:
    cur.eat_punct("(")
    args: list[SExpr] = []
    if not cur.at_punct(")"):
        args.append(_parse_pexpr(cur))
        while cur.at_punct(","):
            cur.next()
            args.append(_parse_pexpr(cur))
    cur.eat_punct(")")
    return tuple(args)


# guard grammar: ! binds tightest, then comparisons, &&, ||; all left-assoc
def _parse_gexpr(cur: _Cursor) -> Guard:
    g = _parse_gand(cur)
    while cur.at_punct("||"):
        cur.next()
        g = Or(g, _parse_gand(cur))
    return g


def _parse_gand(cur: _Cursor) -> Guard:
    g = _parse_gnot(cur)
    while cur.at_punct("&&"):
        cur.next()
        g = And(g, _parse_gnot(cur))
    return g


def _parse_gnot(cur: _Cursor) -> Guard:
    if cur.at_punct("!"):
        cur.next()
        return Not(_parse_gnot(cur))
    if cur.at_punct("("):
        cur.next()
        g = _parse_gexpr(cur)
        cur.eat_punct(")")
        return g
    left = _parse_aexpr(cur)
    tok = cur.peek()
    if cur.at_punct("=="):
        cur.next()
        return Eq(left, _parse_aexpr(cur))
    if cur.at_punct("<"):
        cur.next()
        return Lt(left, _parse_aexpr(cur))
    raise ParseError("expected '==' or '<' in guard", tok.line, tok.col)


def _parse_aexpr(cur: _Cursor):
    e = _parse_amul(cur)
    while cur.at_punct("+") or cur.at_punct("-"):
        op = cur.next().text
        rhs = _parse_amul(cur)
        e = Add(e, rhs) if op == "+" else Sub(e, rhs)
    return e


def _parse_amul(cur: _Cursor):
    e = _parse_aatom(cur)
    while cur.at_punct("*"):
        cur.next()
        e = Mul(e, _parse_aatom(cur))
    return e


def _parse_aatom(cur: _Cursor):
    tok = cur.peek()
    if tok.kind == "nat":
        cur.next()
        return Lit(int(tok.text))
    if tok.kind == "ident":
        cur.next()
        cur.eat_punct(".")
        attr = cur.eat_kind("ident", "attribute name")
        return VarAttr(tok.text, attr.text)
    raise ParseError(
        f"expected an attribute access or number, found {tok.text or 'end of input'!r}",
        tok.line,
        tok.col,
    )


# ---------------------------------------------------------------------------
# Compilation
# ---------------------------------------------------------------------------

def literal_op_name(lit: SExpr) -> str:
    if isinstance(lit, SLitNat):
        return f"LitNat_{lit.value}"
    if isinstance(lit, SLitFloat):
        return "LitStr_" + lit.text.replace(".", "p")
    raise EngineError(f"not a literal: {lit!r}")


class _Compiler:
    def __init__(self, prog: SurfaceProgram):
        self.prog = prog
        self.diags: list[CompileDiagnostic] = []
        self.ops: dict[str, int] = {}
        self.defs_by_name: dict[str, list[SurfacePatternDef]] = {}
        self.order: list[str] = []
        self.compiled: dict[str, PatternDef] = {}
        self.in_progress: set[str] = set()

    def fail(self, code: str, message: str, context: str = "") -> None:
        self.diags.append(CompileDiagnostic(code, message, context))

    def run(self) -> RuleSet:
        for name, arity in self.prog.op_decls:
            old = self.ops.get(name)
            if old is not None and old != arity:
                self.fail("SignatureConflict", f"operator {name} declared /{old} and /{arity}")
                continue
            self.ops[name] = arity

        for sdef in self.prog.pattern_defs:
            if sdef.name not in self.defs_by_name:
                self.defs_by_name[sdef.name] = []
                self.order.append(sdef.name)
            self.defs_by_name[sdef.name].append(sdef)

        for name in self.order:
            self.compile_pattern(name)

        rules = self.compile_rules()
        if self.diags:
            raise CompileError(self.diags)

        sig = OperatorSignature(self.ops)
        patterns = [self.compiled[name] for name in self.order if name in self.compiled]
        return RuleSet(sig, patterns, rules)

    # --- operators ---------------------------------------------------------

    def declare_literal(self, lit: SExpr) -> str:
        name = literal_op_name(lit)
        old = self.ops.get(name)
        if old is None:
            self.ops[name] = 0
        elif old != 0:
            self.fail("SignatureConflict", f"literal operator {name} clashes with {name}/{old}")
        return name

    # --- patterns ------------------------------------------------------------

    def compile_pattern(self, name: str) -> Optional[PatternDef]:
        if name in self.compiled:
            return self.compiled[name]
        if name in self.in_progress:
            self.fail("CyclicPatternReference", f"pattern {name} participates in a reference cycle")
            return None
        self.in_progress.add(name)
        try:
            defs = self.defs_by_name[name]
            params = defs[0].params
            for d in defs[1:]:
                if d.params != params:
                    self.fail(
                        "AlternateParamMismatch",
                        f"alternate of {name} declares parameters {d.params}, first declared {params}",
                        name,
                    )
            recursive = any(self._references(d, name) for d in defs)
            alts = [self.compile_def(d, recursive) for d in defs]
            if any(a is None for a in alts):
                return None
            body = alts[-1]
            for a in reversed(alts[:-1]):
                body = Alt(a, body)
            if recursive:
                body = Rec(name, params, params, body)
            pdef = PatternDef(name, params, body)
            self.compiled[name] = pdef
            return pdef
        finally:
            self.in_progress.discard(name)

    def _references(self, sdef: SurfacePatternDef, name: str) -> bool:
        def walk(e: SExpr) -> bool:
            if isinstance(e, SCall):
                if e.name == name and e.name not in self.ops:
                    return True
                return any(walk(a) for a in e.args)
            if isinstance(e, SFunCall):
                return any(walk(a) for a in e.args)
            return False

        exprs = [sdef.body] + [e for _, e in sdef.aliases] + [e for _, e in sdef.constraints]
        return any(walk(e) for e in exprs if e is not None)

    def compile_def(self, sdef: SurfacePatternDef, recursive: bool) -> Optional[Pattern]:
        ctx = sdef.name
        seen: set[str] = set()
        for p in sdef.params:
            if p in seen:
                self.fail("DuplicateName", f"parameter {p} declared twice", ctx)
            seen.add(p)
        scope: dict[str, str] = {p: "param" for p in sdef.params}
        aliases: dict[str, Pattern] = {}

        for l in sdef.locals:
            if l in scope or l in aliases:
                self.fail("DuplicateName", f"local {l} shadows an existing name", ctx)
            scope[l] = "local"

        before = len(self.diags)

        def compile_sexpr(e: SExpr) -> Optional[Pattern]:  # noqa: C901 - flat dispatch
            if isinstance(e, (SLitNat, SLitFloat)):
                return App(self.declare_literal(e), ())
            if isinstance(e, SName):
                if e.name in aliases:
                    return aliases[e.name]
                if e.name in scope:
                    return Var(e.name)
                if e.name in self.ops:
                    if self.ops[e.name] != 0:
                        self.fail("ArityMismatch", f"{e.name} used without arguments", ctx)
                        return None
                    return App(e.name, ())
                self.fail("UnboundVariable", f"{e.name} is not a parameter, local, alias, or constant", ctx)
                return None
            if isinstance(e, SFunCall):
                if scope.get(e.name) != "param":
                    self.fail(
                        "UnboundVariable",
                        f"function variable {e.name} must be a pattern parameter",
                        ctx,
                    )
                    return None
                args = [compile_sexpr(a) for a in e.args]
                if any(a is None for a in args):
                    return None
                return FunApp(e.name, tuple(args))
            if isinstance(e, SCall):
                if e.name in self.ops:
                    want = self.ops[e.name]
                    if want != len(e.args):
                        self.fail(
                            "ArityMismatch",
                            f"{e.name} expects {want} arguments, got {len(e.args)}",
                            ctx,
                        )
                        return None
                    args = [compile_sexpr(a) for a in e.args]
                    if any(a is None for a in args):
                        return None
                    return App(e.name, tuple(args))
                if e.name == sdef.name and recursive:
                    argnames: list[str] = []
                    for a in e.args:
                        if isinstance(a, SName) and a.name in scope:
                            argnames.append(a.name)
                        else:
                            self.fail(
                                "UnsupportedPatternArg",
                                f"recursive call {e.name} takes parameters or locals only",
                                ctx,
                            )
                            return None
                    return RecCall(e.name, tuple(argnames))
                if e.name in self.defs_by_name:
                    target = self.compile_pattern(e.name)
                    if target is None:
                        return None
                    args = [compile_sexpr(a) for a in e.args]
                    if any(a is None for a in args):
                        return None
                    return self.inline_reference(target, args, ctx)
                self.fail("UnknownPattern", f"{e.name} names no operator or pattern", ctx)
                return None
            raise EngineError(f"unknown surface node {e!r}")

        # aliases resolve in statement order; a later alias may use an earlier one
        for alias_name, alias_expr in sdef.aliases:
            if alias_name in scope or alias_name in aliases:
                self.fail("DuplicateName", f"alias {alias_name} shadows an existing name", ctx)
                continue
            compiled_alias = compile_sexpr(alias_expr)
            if compiled_alias is not None:
                aliases[alias_name] = compiled_alias

        core = compile_sexpr(sdef.body)

        for var, constraint_expr in sdef.constraints:
            constraint = compile_sexpr(constraint_expr)
            if scope.get(var) not in ("param", "local"):
                self.fail(
                    "UnboundVariable",
                    f"match constraint subject {var} must be a parameter or local",
                    ctx,
                )
                continue
            if core is None or constraint is None:
                continue
            core = MatchConstr(core, var, constraint)

        for g in sdef.guards:
            for v in sorted(guard_vars(g)):
                if scope.get(v) not in ("param", "local"):
                    self.fail("UnboundVariable", f"guard mentions unknown variable {v}", ctx)

        if core is not None and sdef.guards:
            g = sdef.guards[0]
            for extra in sdef.guards[1:]:
                g = And(g, extra)
            core = Guarded(core, g)

        if core is not None:
            for l in reversed(sdef.locals):
                core = Exists(l, core)

        if len(self.diags) > before:
            return None
        return core

    def inline_reference(self, target: PatternDef, args: list[Pattern], ctx: str) -> Optional[Pattern]:
        if len(args) != len(target.params):
            self.fail(
                "ArityMismatch",
                f"pattern {target.name} takes {len(target.params)} arguments, got {len(args)}",
                ctx,
            )
            return None
        if isinstance(target.pattern, Rec):
            actuals: list[str] = []
            for a in args:
                if isinstance(a, Var):
                    actuals.append(a.name)
                else:
                    self.fail(
                        "UnsupportedPatternArg",
                        f"recursive pattern {target.name} takes variable arguments only",
                        ctx,
                    )
                    return None
            rec = target.pattern
            return Rec(rec.name, rec.formals, tuple(actuals), rec.body)
        mapping = dict(zip(target.params, args))
        if all(isinstance(a, Var) for a in args):
            return rename_vars(target.pattern, {p: a.name for p, a in mapping.items()})
        try:
            return _subst_patterns(target.pattern, mapping)
        except _NameOnlyPosition as err:
            self.fail("UnsupportedPatternArg", str(err), ctx)
            return None

    # --- rules ---------------------------------------------------------------

    def compile_rules(self) -> list[Rule]:
        grouped: dict[str, list[RuleClause]] = {}
        order: list[str] = []
        for rdef in self.prog.rule_defs:
            pdef = self.compiled.get(rdef.pattern_name)
            if rdef.pattern_name not in self.defs_by_name:
                self.fail("UnknownPattern", f"rule targets unknown pattern {rdef.pattern_name}")
                continue
            if pdef is None:
                continue  # the pattern itself failed to compile
            params = set(pdef.params)
            if rdef.guard is not None:
                for v in sorted(guard_vars(rdef.guard)):
                    if v not in params:
                        self.fail(
                            "UnboundVariable",
                            f"rule guard mentions {v}, not a parameter of {rdef.pattern_name}",
                            rdef.pattern_name,
                        )
            template = self.compile_template(rdef.template, params, rdef.pattern_name)
            if template is None:
                continue
            if rdef.pattern_name not in grouped:
                grouped[rdef.pattern_name] = []
                order.append(rdef.pattern_name)
            grouped[rdef.pattern_name].append(RuleClause(rdef.guard, template))
        return [Rule(name, tuple(grouped[name])) for name in order]

    def compile_template(self, e: SExpr, params: set[str], ctx: str) -> Optional[Template]:
        if isinstance(e, (SLitNat, SLitFloat)):
            return TApp(self.declare_literal(e), ())
        if isinstance(e, SName):
            if e.name in params:
                return TVar(e.name)
            if e.name in self.ops:
                if self.ops[e.name] != 0:
                    self.fail("ArityMismatch", f"{e.name} used without arguments", ctx)
                    return None
                return TApp(e.name, ())
            self.fail("UnboundVariable", f"template name {e.name} is not a parameter or constant", ctx)
            return None
        if isinstance(e, SFunCall):
            if e.name not in params:
                self.fail(
                    "UnboundVariable",
                    f"template function variable {e.name} is not a parameter",
                    ctx,
                )
                return None
            args = [self.compile_template(a, params, ctx) for a in e.args]
            if any(a is None for a in args):
                return None
            return TFunApp(e.name, tuple(args))
        if isinstance(e, SCall):
            if e.name not in self.ops:
                self.fail("UnknownOperator", f"template operator {e.name} is not declared", ctx)
                return None
            want = self.ops[e.name]
            if want != len(e.args):
                self.fail("ArityMismatch", f"{e.name} expects {want} arguments, got {len(e.args)}", ctx)
                return None
            args = [self.compile_template(a, params, ctx) for a in e.args]
            if any(a is None for a in args):
                return None
            return TApp(e.name, tuple(args))
        raise EngineError(f"unknown surface node {e!r}")


class _NameOnlyPosition(EngineError):
    pass


def _subst_patterns(p: Pattern, mapping: dict[str, Pattern]) -> Pattern:
    """Substitute patterns for free variables; name-only positions (guards,
    constraint subjects, recursion arguments) admit variable images only."""
    name_map: dict[str, str] = {}
    tree_map: dict[str, Pattern] = {}
    for k, v in mapping.items():
        if isinstance(v, Var):
            name_map[k] = v.name
        else:
            tree_map[k] = v

    def go(q: Pattern, shadowed: frozenset) -> Pattern:
        if isinstance(q, Var):
            if q.name in shadowed:
                return q
            if q.name in tree_map:
                return tree_map[q.name]
            if q.name in name_map:
                return Var(name_map[q.name])
            return q
        if isinstance(q, App):
            return App(q.op, tuple(go(a, shadowed) for a in q.args))
        if isinstance(q, Alt):
            return Alt(go(q.left, shadowed), go(q.right, shadowed))
        if isinstance(q, Guarded):
            for v in guard_vars(q.guard):
                if v in tree_map and v not in shadowed:
                    raise _NameOnlyPosition(f"argument for {v} reaches a guard and must be a variable")
            remap = {k: v for k, v in name_map.items() if k not in shadowed}
            from .patterns import _rename_guard  # local import to keep surface small

            return Guarded(go(q.body, shadowed), _rename_guard(q.guard, remap))
        if isinstance(q, Exists):
            binder = q.var
            body = q.body
            free_images = set()
            for v in tree_map.values():
                free_images |= pattern_names(v)
            free_images |= set(name_map.values())
            if binder in free_images:
                from .patterns import fresh_name

                renamed = fresh_name(binder, pattern_names(body) | free_images | set(mapping))
                body = rename_vars(body, {binder: renamed})
                binder = renamed
            return Exists(binder, go(body, shadowed | {binder}))
        if isinstance(q, MatchConstr):
            subject = q.var
            if subject not in shadowed:
                if subject in tree_map:
                    raise _NameOnlyPosition(
                        f"argument for {subject} is a constraint subject and must be a variable"
                    )
                subject = name_map.get(subject, subject)
            return MatchConstr(go(q.body, shadowed), subject, go(q.constraint, shadowed))
        if isinstance(q, FunApp):
            head = q.fvar
            if head not in shadowed:
                if head in tree_map:
                    raise _NameOnlyPosition(
                        f"argument for {head} is applied as a function variable and must be a variable"
                    )
                head = name_map.get(head, head)
            return FunApp(head, tuple(go(a, shadowed) for a in q.args))
        if isinstance(q, Rec):
            for a in q.actuals:
                if a in tree_map and a not in shadowed:
                    raise _NameOnlyPosition(
                        f"argument for {a} is passed through recursion and must be a variable"
                    )
            actuals = tuple(
                name_map.get(a, a) if a not in shadowed else a for a in q.actuals
            )
            return Rec(q.name, q.formals, actuals, go(q.body, shadowed | set(q.formals)))
        if isinstance(q, RecCall):
            for a in q.args:
                if a in tree_map and a not in shadowed:
                    raise _NameOnlyPosition(
                        f"argument for {a} is passed through recursion and must be a variable"
                    )
            return RecCall(q.name, tuple(name_map.get(a, a) if a not in shadowed else a for a in q.args))
        raise EngineError(f"unknown pattern node {q!r}")

    return go(p, frozenset())


def compile_program(prog: SurfaceProgram) -> RuleSet:
    """Lower a parsed program to a rule set.

    Alternates fold right-nested in declaration order; locals become
    existentials; constraints and conjoined asserts wrap the returned
    pattern; a self-referencing pattern becomes a recursive binder.
    Raises CompileError with the full diagnostic list on any failure.
    """
    ruleset = _Compiler(prog).run()
    diags: list[CompileDiagnostic] = []
    for pdef in ruleset.patterns:
        report = well_formed(ruleset.signature, pdef.pattern)
        for d in report.diagnostics:
            diags.append(CompileDiagnostic(d.code, d.message, pdef.name))
    if diags:
        raise CompileError(diags)
    return ruleset


def compile_text(text: str) -> RuleSet:
    return compile_program(parse_program(text))
