"""Portable rule-set format: canonical JSON, version 1.

The encoding is byte-deterministic: object keys are sorted, there is no
insignificant whitespace, operators are listed sorted by name, and
patterns and rules keep declaration order.  Any two producers of the same
rule set must emit identical bytes, which is what the cross-frontend
tests check.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from .patterns import (
    Add,
    Alt,
    And,
    App,
    Eq,
    Exists,
    Expr,
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
    TermAttr,
    Var,
    VarAttr,
)
from .rewriting import PatternDef, Rule, RuleClause, RuleSet, TApp, TFunApp, TVar, Template
from .terms import EngineError, OperatorSignature, Term

WIRE_VERSION = 1


class VersionMismatch(EngineError):
    pass


class SchemaError(EngineError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


# --- encoding ----------------------------------------------------------------

def _term_json(t: Term) -> dict:
    return {
        "op": t.op,
        "args": [_term_json(c) for c in t.children],
        "ann": {k: v for k, v in t.annotations},
    }


def _expr_json(e: Expr) -> dict:
    if isinstance(e, VarAttr):
        return {"k": "vattr", "x": e.var, "a": e.key}
    if isinstance(e, TermAttr):
        return {"k": "tattr", "t": _term_json(e.term), "a": e.key}
    if isinstance(e, Lit):
        return {"k": "lit", "v": e.value}
    if isinstance(e, Add):
        return {"k": "add", "l": _expr_json(e.left), "r": _expr_json(e.right)}
    if isinstance(e, Sub):
        return {"k": "sub", "l": _expr_json(e.left), "r": _expr_json(e.right)}
    if isinstance(e, Mul):
        return {"k": "mul", "l": _expr_json(e.left), "r": _expr_json(e.right)}
    raise EngineError(f"unknown expression node {e!r}")


def _guard_json(g: Guard) -> dict:
    if isinstance(g, Eq):
        return {"k": "eq", "l": _expr_json(g.left), "r": _expr_json(g.right)}
    if isinstance(g, Lt):
        return {"k": "lt", "l": _expr_json(g.left), "r": _expr_json(g.right)}
    if isinstance(g, And):
        return {"k": "and", "l": _guard_json(g.left), "r": _guard_json(g.right)}
    if isinstance(g, Or):
        return {"k": "or", "l": _guard_json(g.left), "r": _guard_json(g.right)}
    if isinstance(g, Not):
        return {"k": "not", "g": _guard_json(g.body)}
    raise EngineError(f"unknown guard node {g!r}")


def _pattern_json(p: Pattern) -> dict:
    if isinstance(p, Var):
        return {"k": "var", "x": p.name}
    if isinstance(p, App):
        return {"k": "app", "f": p.op, "args": [_pattern_json(a) for a in p.args]}
    if isinstance(p, Alt):
        return {"k": "alt", "l": _pattern_json(p.left), "r": _pattern_json(p.right)}
    if isinstance(p, Guarded):
        return {"k": "guard", "p": _pattern_json(p.body), "g": _guard_json(p.guard)}
    if isinstance(p, Exists):
        return {"k": "exists", "x": p.var, "p": _pattern_json(p.body)}
    if isinstance(p, MatchConstr):
        return {
            "k": "mconstr",
            "p": _pattern_json(p.body),
            "x": p.var,
            "c": _pattern_json(p.constraint),
        }
    if isinstance(p, FunApp):
        return {"k": "funapp", "F": p.fvar, "args": [_pattern_json(a) for a in p.args]}
    if isinstance(p, Rec):
        return {
            "k": "mu",
            "P": p.name,
            "formals": list(p.formals),
            "actuals": list(p.actuals),
            "p": _pattern_json(p.body),
        }
    if isinstance(p, RecCall):
        return {"k": "reccall", "P": p.name, "args": list(p.args)}
    raise EngineError(f"unknown pattern node {p!r}")


def _template_json(r: Template) -> dict:
    if isinstance(r, TVar):
        return {"k": "tvar", "x": r.name}
    if isinstance(r, TApp):
        return {"k": "tapp", "f": r.op, "args": [_template_json(a) for a in r.args]}
    if isinstance(r, TFunApp):
        return {"k": "tfunapp", "F": r.fvar, "args": [_template_json(a) for a in r.args]}
    raise EngineError(f"unknown template node {r!r}")


def ruleset_to_json(rs: RuleSet) -> dict:
    return {
        "version": WIRE_VERSION,
        "ops": [{"name": n, "arity": a} for n, a in rs.signature.items()],
        "patterns": [
            {"name": p.name, "params": list(p.params), "body": _pattern_json(p.pattern)}
            for p in rs.patterns
        ],
        "rules": [
            {
                "pattern": r.pattern_name,
                "clauses": [
                    {
                        "guard": None if c.guard is None else _guard_json(c.guard),
                        "template": _template_json(c.template),
                    }
                    for c in r.clauses
                ],
            }
            for r in rs.rules
        ],
    }


def serialize_ruleset(rs: RuleSet) -> bytes:
    """Canonical bytes for a rule set; deterministic for equal inputs."""
    return json.dumps(ruleset_to_json(rs), sort_keys=True, separators=(",", ":")).encode("utf-8")


# --- decoding ----------------------------------------------------------------

def _want(obj: Any, keys: set[str], path: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaError(path, f"expected an object, found {type(obj).__name__}")
    got = set(obj)
    if got != keys:
        missing = keys - got
        extra = got - keys
        bits = []
        if missing:
            bits.append(f"missing keys {sorted(missing)}")
        if extra:
            bits.append(f"unknown keys {sorted(extra)}")
        raise SchemaError(path, ", ".join(bits))


def _want_str(v: Any, path: str) -> str:
    if not isinstance(v, str) or not v:
        raise SchemaError(path, "expected a non-empty string")
    return v


def _want_nat(v: Any, path: str) -> int:
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        raise SchemaError(path, "expected a natural number")
    return v


def _want_list(v: Any, path: str) -> list:
    if not isinstance(v, list):
        raise SchemaError(path, "expected an array")
    return v


def _term_from(obj: Any, path: str) -> Term:
    _want(obj, {"op", "args", "ann"}, path)
    op = _want_str(obj["op"], f"{path}.op")
    args = tuple(
        _term_from(a, f"{path}.args[{i}]") for i, a in enumerate(_want_list(obj["args"], f"{path}.args"))
    )
    ann = obj["ann"]
    if not isinstance(ann, dict):
        raise SchemaError(f"{path}.ann", "expected an object")
    pairs = []
    for k in sorted(ann):
        pairs.append((_want_str(k, f"{path}.ann"), _want_nat(ann[k], f"{path}.ann.{k}")))
    return Term(op, args, tuple(pairs))


def _expr_from(obj: Any, path: str) -> Expr:
    if not isinstance(obj, dict) or "k" not in obj:
        raise SchemaError(path, "expected an expression object with a 'k' tag")
    k = obj["k"]
    if k == "vattr":
        _want(obj, {"k", "x", "a"}, path)
        return VarAttr(_want_str(obj["x"], f"{path}.x"), _want_str(obj["a"], f"{path}.a"))
    if k == "tattr":
        _want(obj, {"k", "t", "a"}, path)
        return TermAttr(_term_from(obj["t"], f"{path}.t"), _want_str(obj["a"], f"{path}.a"))
    if k == "lit":
        _want(obj, {"k", "v"}, path)
        v = obj["v"]
        if not isinstance(v, int) or isinstance(v, bool):
            raise SchemaError(f"{path}.v", "expected an integer")
        return Lit(v)
    if k in ("add", "sub", "mul"):
        _want(obj, {"k", "l", "r"}, path)
        cls = {"add": Add, "sub": Sub, "mul": Mul}[k]
        return cls(_expr_from(obj["l"], f"{path}.l"), _expr_from(obj["r"], f"{path}.r"))
    raise SchemaError(path, f"unknown expression tag {k!r}")


def _guard_from(obj: Any, path: str) -> Guard:
    if not isinstance(obj, dict) or "k" not in obj:
        raise SchemaError(path, "expected a guard object with a 'k' tag")
    k = obj["k"]
    if k in ("eq", "lt"):
        _want(obj, {"k", "l", "r"}, path)
        cls = Eq if k == "eq" else Lt
        return cls(_expr_from(obj["l"], f"{path}.l"), _expr_from(obj["r"], f"{path}.r"))
    if k in ("and", "or"):
        _want(obj, {"k", "l", "r"}, path)
        cls = And if k == "and" else Or
        return cls(_guard_from(obj["l"], f"{path}.l"), _guard_from(obj["r"], f"{path}.r"))
    if k == "not":
        _want(obj, {"k", "g"}, path)
        return Not(_guard_from(obj["g"], f"{path}.g"))
    raise SchemaError(path, f"unknown guard tag {k!r}")


def _pattern_from(obj: Any, path: str) -> Pattern:
    if not isinstance(obj, dict) or "k" not in obj:
        raise SchemaError(path, "expected a pattern object with a 'k' tag")
    k = obj["k"]
    if k == "var":
        _want(obj, {"k", "x"}, path)
        return Var(_want_str(obj["x"], f"{path}.x"))
    if k == "app":
        _want(obj, {"k", "f", "args"}, path)
        args = _want_list(obj["args"], f"{path}.args")
        return App(
            _want_str(obj["f"], f"{path}.f"),
            tuple(_pattern_from(a, f"{path}.args[{i}]") for i, a in enumerate(args)),
        )
    if k == "alt":
        _want(obj, {"k", "l", "r"}, path)
        return Alt(_pattern_from(obj["l"], f"{path}.l"), _pattern_from(obj["r"], f"{path}.r"))
    if k == "guard":
        _want(obj, {"k", "p", "g"}, path)
        return Guarded(_pattern_from(obj["p"], f"{path}.p"), _guard_from(obj["g"], f"{path}.g"))
    if k == "exists":
        _want(obj, {"k", "x", "p"}, path)
        return Exists(_want_str(obj["x"], f"{path}.x"), _pattern_from(obj["p"], f"{path}.p"))
    if k == "mconstr":
        _want(obj, {"k", "p", "x", "c"}, path)
        return MatchConstr(
            _pattern_from(obj["p"], f"{path}.p"),
            _want_str(obj["x"], f"{path}.x"),
            _pattern_from(obj["c"], f"{path}.c"),
        )
    if k == "funapp":
        _want(obj, {"k", "F", "args"}, path)
        args = _want_list(obj["args"], f"{path}.args")
        return FunApp(
            _want_str(obj["F"], f"{path}.F"),
            tuple(_pattern_from(a, f"{path}.args[{i}]") for i, a in enumerate(args)),
        )
    if k == "mu":
        _want(obj, {"k", "P", "formals", "actuals", "p"}, path)
        formals = tuple(
            _want_str(x, f"{path}.formals[{i}]")
            for i, x in enumerate(_want_list(obj["formals"], f"{path}.formals"))
        )
        actuals = tuple(
            _want_str(x, f"{path}.actuals[{i}]")
            for i, x in enumerate(_want_list(obj["actuals"], f"{path}.actuals"))
        )
        return Rec(_want_str(obj["P"], f"{path}.P"), formals, actuals, _pattern_from(obj["p"], f"{path}.p"))
    if k == "reccall":
        _want(obj, {"k", "P", "args"}, path)
        args = tuple(
            _want_str(x, f"{path}.args[{i}]")
            for i, x in enumerate(_want_list(obj["args"], f"{path}.args"))
        )
        return RecCall(_want_str(obj["P"], f"{path}.P"), args)
    raise SchemaError(path, f"unknown pattern tag {k!r}")


def _template_from(obj: Any, path: str) -> Template:
    if not isinstance(obj, dict) or "k" not in obj:
        raise SchemaError(path, "expected a template object with a 'k' tag")
    k = obj["k"]
    if k == "tvar":
        _want(obj, {"k", "x"}, path)
        return TVar(_want_str(obj["x"], f"{path}.x"))
    if k == "tapp":
        _want(obj, {"k", "f", "args"}, path)
        args = _want_list(obj["args"], f"{path}.args")
        return TApp(
            _want_str(obj["f"], f"{path}.f"),
            tuple(_template_from(a, f"{path}.args[{i}]") for i, a in enumerate(args)),
        )
    if k == "tfunapp":
        _want(obj, {"k", "F", "args"}, path)
        args = _want_list(obj["args"], f"{path}.args")
        return TFunApp(
            _want_str(obj["F"], f"{path}.F"),
            tuple(_template_from(a, f"{path}.args[{i}]") for i, a in enumerate(args)),
        )
    raise SchemaError(path, f"unknown template tag {k!r}")


def deserialize_ruleset(data: bytes | str) -> RuleSet:
    """Decode and validate a portable rule set; inverse of serialize_ruleset."""
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as err:
        raise SchemaError("$", f"invalid JSON: {err}") from None
    if not isinstance(obj, dict):
        raise SchemaError("$", "expected a top-level object")
    version = obj.get("version")
    if version != WIRE_VERSION:
        raise VersionMismatch(f"unsupported version {version!r}, expected {WIRE_VERSION}")
    _want(obj, {"version", "ops", "patterns", "rules"}, "$")

    sig = OperatorSignature()
    for i, entry in enumerate(_want_list(obj["ops"], "$.ops")):
        path = f"$.ops[{i}]"
        _want(entry, {"name", "arity"}, path)
        name = _want_str(entry["name"], f"{path}.name")
        arity = _want_nat(entry["arity"], f"{path}.arity")
        if name in sig:
            raise SchemaError(path, f"operator {name} listed twice")
        sig = sig.declare(name, arity)

    patterns: list[PatternDef] = []
    names: set[str] = set()
    for i, entry in enumerate(_want_list(obj["patterns"], "$.patterns")):
        path = f"$.patterns[{i}]"
        _want(entry, {"name", "params", "body"}, path)
        name = _want_str(entry["name"], f"{path}.name")
        if name in names:
            raise SchemaError(path, f"pattern {name} listed twice")
        names.add(name)
        params = tuple(
            _want_str(x, f"{path}.params[{j}]")
            for j, x in enumerate(_want_list(entry["params"], f"{path}.params"))
        )
        patterns.append(PatternDef(name, params, _pattern_from(entry["body"], f"{path}.body")))

    rules: list[Rule] = []
    for i, entry in enumerate(_want_list(obj["rules"], "$.rules")):
        path = f"$.rules[{i}]"
        _want(entry, {"pattern", "clauses"}, path)
        target = _want_str(entry["pattern"], f"{path}.pattern")
        if target not in names:
            raise SchemaError(f"{path}.pattern", f"rule targets unknown pattern {target}")
        clauses = []
        clause_list = _want_list(entry["clauses"], f"{path}.clauses")
        if not clause_list:
            raise SchemaError(f"{path}.clauses", "a rule needs at least one clause")
        for j, centry in enumerate(clause_list):
            cpath = f"{path}.clauses[{j}]"
            _want(centry, {"guard", "template"}, cpath)
            guard: Optional[Guard] = None
            if centry["guard"] is not None:
                guard = _guard_from(centry["guard"], f"{cpath}.guard")
            clauses.append(RuleClause(guard, _template_from(centry["template"], f"{cpath}.template")))
        rules.append(Rule(target, tuple(clauses)))

    return RuleSet(sig, patterns, rules)
