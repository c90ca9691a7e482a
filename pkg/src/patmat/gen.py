"""Random terms and patterns for differential testing and benchmarks.

Pattern shapes are drawn with fixed weights (applications 40%, variables
15%, alternates 15%, guards 10%, existentials 8%, match constraints 7%,
function applications 5%); recursive patterns are never synthesized, they
only enter a run through the rule set under test.  Existential and
constraint variables are always forced to occur on every structural path
of their scope so that a successful structural match is guaranteed to
bind them, which keeps the machine and the clairvoyant checker on the
same page.
"""

from __future__ import annotations

import random
from typing import Optional

from .patterns import (
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
    Not,
    Or,
    Pattern,
    Rec,
    RecCall,
    Var,
    VarAttr,
)
from .terms import OperatorSignature, Term

ATTR_KEYS = ("rank", "eltType")


def random_term(
    sig: OperatorSignature,
    rng: random.Random,
    max_depth: int = 5,
    annotate: float = 0.5,
) -> Term:
    ops = sig.items()
    leaves = [(n, a) for n, a in ops if a == 0]
    inner = [(n, a) for n, a in ops if a > 0]
    if not leaves:
        raise ValueError("signature has no constants to bottom out on")

    def build(depth: int) -> Term:
        if depth <= 0 or not inner or rng.random() < 0.2:
            name, _ = rng.choice(leaves)
            return Term(name, (), _random_annotations(rng, annotate))
        name, arity = rng.choice(inner)
        kids = tuple(build(depth - 1) for _ in range(arity))
        return Term(name, kids, _random_annotations(rng, annotate))

    return build(max_depth)


def random_term_of_size(
    sig: OperatorSignature,
    rng: random.Random,
    target_nodes: int,
    annotate: float = 0.5,
) -> Term:
    """Grow a term until it holds at least target_nodes nodes."""
    ops = sig.items()
    leaves = [(n, a) for n, a in ops if a == 0]
    inner = [(n, a) for n, a in ops if a > 0]
    budget = [target_nodes]

    def build() -> Term:
        budget[0] -= 1
        if budget[0] <= 0 or not inner or rng.random() < 0.1:
            name, _ = rng.choice(leaves)
            return Term(name, (), _random_annotations(rng, annotate))
        name, arity = rng.choice(inner)
        kids = tuple(build() for _ in range(arity))
        return Term(name, kids, _random_annotations(rng, annotate))

    t = build()
    while budget[0] > 0:
        name, arity = rng.choice(inner) if inner else rng.choice(leaves)
        if arity == 0:
            break
        budget[0] -= 1
        kids = [t] + [build() for _ in range(arity - 1)]
        t = Term(name, tuple(kids), _random_annotations(rng, annotate))
    return t


def _random_annotations(rng: random.Random, annotate: float) -> tuple:
    if rng.random() >= annotate:
        return ()
    out = []
    for key in ATTR_KEYS:
        if rng.random() < 0.7:
            out.append((key, rng.randrange(0, 4)))
    return tuple(sorted(out))


_KIND_WEIGHTS = (
    ("app", 40),
    ("var", 15),
    ("alt", 15),
    ("guarded", 10),
    ("exists", 8),
    ("mconstr", 7),
    ("funapp", 5),
)


class PatternGenerator:
    def __init__(self, sig: OperatorSignature, rng: random.Random, max_depth: int = 4):
        self.sig = sig
        self.rng = rng
        self.max_depth = max_depth
        self.counter = 0
        self.var_pool = ["x", "y", "z", "w"]
        self.fun_pool = ["F", "G"]

    def fresh_local(self) -> str:
        self.counter += 1
        return f"v{self.counter}"

    def pattern(self, depth: Optional[int] = None) -> Pattern:
        if depth is None:
            depth = self.max_depth
        return self._gen(depth)

    def _pick_kind(self, depth: int, no_scope: bool) -> str:
        if depth <= 0:
            return self.rng.choice(("var", "leafapp"))
        while True:
            total = sum(w for _, w in _KIND_WEIGHTS)
            roll = self.rng.randrange(total)
            acc = 0
            kind = "app"
            for name, weight in _KIND_WEIGHTS:
                acc += weight
                if roll < acc:
                    kind = name
                    break
            if no_scope and kind in ("exists", "mconstr"):
                continue
            return kind

    def _gen(self, depth: int, no_scope: bool = False) -> Pattern:
        kind = self._pick_kind(depth, no_scope)
        rng = self.rng
        if kind == "var":
            return Var(rng.choice(self.var_pool))
        if kind in ("app", "leafapp"):
            ops = self.sig.items()
            if kind == "leafapp":
                ops = [(n, a) for n, a in ops if a == 0] or ops
            name, arity = rng.choice(ops)
            return App(name, tuple(self._gen(depth - 1) for _ in range(arity)))
        if kind == "alt":
            return Alt(self._gen(depth - 1), self._gen(depth - 1))
        if kind == "guarded":
            body = self._gen(depth - 1)
            guard = self._guard_over(body)
            return Guarded(body, guard) if guard is not None else body
        if kind == "exists":
            # a directly nested scope would stack oracle candidate sweeps
            local = self.fresh_local()
            body = self._gen(depth - 1, no_scope=True)
            return Exists(local, _ensure_uses(body, local, self.rng))
        if kind == "mconstr":
            local = self.fresh_local()
            body = _ensure_uses(self._gen(depth - 1, no_scope=True), local, self.rng)
            constraint = self._gen(depth - 1)
            return Exists(local, MatchConstr(body, local, constraint))
        if kind == "funapp":
            inner = [(n, a) for n, a in self.sig.items() if a > 0]
            arity = self.rng.choice(inner)[1] if inner else 1
            return FunApp(
                rng.choice(self.fun_pool),
                tuple(self._gen(depth - 1) for _ in range(arity)),
            )
        raise AssertionError(kind)

    def _guard_over(self, body: Pattern) -> Optional[Guard]:
        # only variables bound on every structural path are fair game: the
        # machine evaluates the guard right after the body, never later
        names = sorted(_definitely_bound(body) & set(self.var_pool))
        rng = self.rng

        def atom() -> Guard:
            if names and rng.random() < 0.8:
                lhs = VarAttr(rng.choice(names), rng.choice(ATTR_KEYS + ("size", "depth")))
            else:
                lhs = Lit(rng.randrange(0, 4))
            rhs = Lit(rng.randrange(0, 4))
            return Eq(lhs, rhs) if rng.random() < 0.5 else Lt(lhs, rhs)

        g = atom()
        for _ in range(rng.randrange(0, 2)):
            other = atom()
            roll = rng.random()
            if roll < 0.4:
                g = And(g, other)
            elif roll < 0.8:
                g = Or(g, other)
            else:
                g = Not(g)
        return g


def _definitely_bound(p: Pattern) -> set[str]:
    """Variables bound by the time a structural match of p completes,
    whichever alternate branches were taken."""
    if isinstance(p, Var):
        return {p.name}
    if isinstance(p, (App, FunApp)):
        out: set[str] = set()
        for a in p.args:
            out |= _definitely_bound(a)
        return out
    if isinstance(p, Alt):
        return _definitely_bound(p.left) & _definitely_bound(p.right)
    if isinstance(p, (Guarded, Exists)):
        return _definitely_bound(p.body)
    if isinstance(p, MatchConstr):
        # the constraint resolves right after the body, so its bindings
        # are in place before any enclosing guard runs
        return _definitely_bound(p.body) | {p.var} | _definitely_bound(p.constraint)
    return set()


def _ensure_uses(p: Pattern, var: str, rng: random.Random) -> Pattern:
    """Guarantee `var` gets bound on every structural success path.

    A chosen position q becomes `MatchConstr(Var(var), var, q)`: the
    variable binds to the node there, then the node must still match q.
    Non-destructive, so nesting for several variables composes.
    """
    if isinstance(p, Alt):
        return Alt(_ensure_uses(p.left, var, rng), _ensure_uses(p.right, var, rng))
    if isinstance(p, Guarded):
        return Guarded(_ensure_uses(p.body, var, rng), p.guard)
    if isinstance(p, Exists):
        return Exists(p.var, _ensure_uses(p.body, var, rng))
    if isinstance(p, App) and p.args and rng.random() < 0.5:
        i = rng.randrange(len(p.args))
        args = list(p.args)
        args[i] = _ensure_uses(args[i], var, rng)
        return App(p.op, tuple(args))
    return MatchConstr(Var(var), var, p)
