"""Rules, replacement templates, and the destructive fixpoint rewriter.

A rule set pairs an ordered list of compiled patterns with rewrite rules.
Each rule is an ordered list of guarded clauses; when a pattern matches at
a node, the first clause whose guard holds instantiates its template and
the matched subtree is replaced in place.  The rewriting pass walks the
term in pre-order and restarts from the root after every fire, until a
full traversal fires nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .patterns import (
    Alt,
    App,
    Exists,
    FunApp,
    Guard,
    Guarded,
    MatchConstr,
    Pattern,
    Rec,
    RecCall,
    Var,
    eval_guard,
)
from .terms import (
    AttributeInterpreter,
    EngineError,
    FunSubstitution,
    OperatorSignature,
    Substitution,
    Term,
)
from . import vm

DEFAULT_PASS_LIMIT = 10_000


class UnboundTemplateVar(EngineError):
    """A template mentions a variable the match did not bind."""


class UnboundTemplateFunVar(EngineError):
    """A template applies a function variable the match did not bind."""


class BudgetExhaustedError(EngineError):
    """The match machine ran out of steps while rewriting."""


class StuckMatchError(EngineError):
    """The match machine got stuck while rewriting."""


# --- templates ---------------------------------------------------------------

class Template:
    __slots__ = ()


@dataclass(frozen=True)
class TVar(Template):
    name: str


@dataclass(frozen=True)
class TApp(Template):
    op: str
    args: tuple[Template, ...]


@dataclass(frozen=True)
class TFunApp(Template):
    fvar: str
    args: tuple[Template, ...]


def template_vars(r: Template) -> tuple[set[str], set[str]]:
    """Pattern variables and function variables a template consumes."""
    pv: set[str] = set()
    fv: set[str] = set()

    def go(node: Template) -> None:
        if isinstance(node, TVar):
            pv.add(node.name)
        elif isinstance(node, TApp):
            for a in node.args:
                go(a)
        elif isinstance(node, TFunApp):
            fv.add(node.fvar)
            for a in node.args:
                go(a)
        else:
            raise EngineError(f"unknown template node {node!r}")

    go(r)
    return pv, fv


def instantiate_template(
    sig: OperatorSignature,
    r: Template,
    theta: Substitution,
    phi: FunSubstitution,
) -> Term:
    """Ground the template with the match witness.

    Variables splice in the bound subterms unchanged (annotations kept);
    freshly built operator nodes carry empty annotation maps.
    """
    if isinstance(r, TVar):
        bound = theta.get(r.name)
        if bound is None:
            raise UnboundTemplateVar(f"template variable {r.name} is unbound")
        return bound
    if isinstance(r, TApp):
        arity = sig.arity(r.op)
        if arity != len(r.args):
            raise EngineError(
                f"template applies {r.op} to {len(r.args)} arguments, arity is {arity}"
            )
        return Term(r.op, tuple(instantiate_template(sig, a, theta, phi) for a in r.args))
    if isinstance(r, TFunApp):
        op = phi.get(r.fvar)
        if op is None:
            raise UnboundTemplateFunVar(f"template function variable {r.fvar} is unbound")
        arity = sig.arity(op)
        if arity != len(r.args):
            raise EngineError(
                f"template applies {r.fvar}={op} to {len(r.args)} arguments, arity is {arity}"
            )
        return Term(op, tuple(instantiate_template(sig, a, theta, phi) for a in r.args))
    raise EngineError(f"unknown template node {r!r}")


# --- rule sets ---------------------------------------------------------------

@dataclass(frozen=True)
class RuleClause:
    guard: Optional[Guard]  # None means unconditionally applicable
    template: Template


@dataclass(frozen=True)
class Rule:
    pattern_name: str
    clauses: tuple[RuleClause, ...]


@dataclass(frozen=True)
class PatternDef:
    name: str
    params: tuple[str, ...]
    pattern: Pattern


@dataclass
class RuleSet:
    signature: OperatorSignature
    patterns: list[PatternDef]
    rules: list[Rule]

    def __post_init__(self) -> None:
        names = {p.name for p in self.patterns}
        for rule in self.rules:
            if rule.pattern_name not in names:
                raise EngineError(f"rule targets unknown pattern {rule.pattern_name}")
        self._rules_by_pattern = {r.pattern_name: r for r in self.rules}
        self._root_ops = {p.name: _root_ops(p.pattern) for p in self.patterns}

    def pattern_def(self, name: str) -> Optional[PatternDef]:
        for p in self.patterns:
            if p.name == name:
                return p
        return None

    def rule_for(self, pattern_name: str) -> Optional[Rule]:
        return self._rules_by_pattern.get(pattern_name)

    def may_match_root(self, pattern_name: str, op: str) -> bool:
        roots = self._root_ops[pattern_name]
        return roots is None or op in roots

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, RuleSet)
            and self.signature == other.signature
            and self.patterns == other.patterns
            and self.rules == other.rules
        )


def _root_ops(p: Pattern) -> Optional[frozenset]:
    """Operators a match can possibly start with; None means unrestricted.

    Used only to skip machine runs that would conflict on the first step.
    """
    if isinstance(p, App):
        return frozenset((p.op,))
    if isinstance(p, Alt):
        left, right = _root_ops(p.left), _root_ops(p.right)
        if left is None or right is None:
            return None
        return left | right
    if isinstance(p, (Guarded, Exists)):
        return _root_ops(p.body)
    if isinstance(p, MatchConstr):
        return _root_ops(p.body)
    if isinstance(p, Rec):
        return _root_ops(p.body)
    # Var, FunApp, RecCall can open a match on any node.
    return None


# --- rewriting ---------------------------------------------------------------

@dataclass
class RewriteStats:
    fires: dict = field(default_factory=dict)
    traversals: int = 0
    vm_steps: int = 0
    non_terminating: bool = False

    def total_fires(self) -> int:
        return sum(self.fires.values())

    def as_items(self) -> list[tuple[str, str]]:
        out = [(f"fires.{name}", str(n)) for name, n in sorted(self.fires.items())]
        out.append(("total_fires", str(self.total_fires())))
        out.append(("traversals", str(self.traversals)))
        out.append(("vm_steps", str(self.vm_steps)))
        out.append(("non_terminating", "true" if self.non_terminating else "false"))
        return out


def _attempt(
    ruleset: RuleSet,
    interp: AttributeInterpreter,
    t_sub: Term,
    budget: int,
) -> tuple[Optional[Term], Optional[str], int]:
    """Try every pattern at one node; (replacement, pattern name, vm steps)."""
    steps = 0
    for pdef in ruleset.patterns:
        if not ruleset.may_match_root(pdef.name, t_sub.op):
            continue
        outcome = vm.run_match(ruleset.signature, interp, pdef.pattern, t_sub, budget)
        steps += outcome.steps
        if isinstance(outcome, vm.BudgetExhausted):
            raise BudgetExhaustedError(
                f"match budget exhausted on pattern {pdef.name}"
            )
        if isinstance(outcome, vm.StuckState):
            raise StuckMatchError(outcome.description)
        if isinstance(outcome, vm.NoMatch):
            continue
        rule = ruleset.rule_for(pdef.name)
        if rule is None:
            continue
        for clause in rule.clauses:
            if clause.guard is not None:
                if eval_guard(interp, outcome.theta, clause.guard) is not True:
                    continue
            replacement = instantiate_template(
                ruleset.signature, clause.template, outcome.theta, outcome.phi
            )
            return replacement, pdef.name, steps
        # matched but no clause passed: the pattern does not fire, later
        # patterns still get their chance at this node
    return None, None, steps


def try_rewrite_at(
    ruleset: RuleSet,
    interp: AttributeInterpreter,
    t_sub: Term,
    budget: int = vm.DEFAULT_STEP_BUDGET,
) -> Optional[Term]:
    """First firing replacement for the subtree, or None when nothing fires."""
    replacement, _, _ = _attempt(ruleset, interp, t_sub, budget)
    return replacement


def _splice(t: Term, path: tuple[int, ...], replacement: Term) -> Term:
    if not path:
        return replacement
    i = path[0]
    kids = list(t.children)
    kids[i] = _splice(kids[i], path[1:], replacement)
    return Term(t.op, tuple(kids), t.annotations)


def rewrite_fixpoint(
    ruleset: RuleSet,
    interp: AttributeInterpreter,
    t: Term,
    pass_limit: int = DEFAULT_PASS_LIMIT,
    budget: int = vm.DEFAULT_STEP_BUDGET,
) -> tuple[Term, RewriteStats]:
    """Greedy destructive rewriting to a fixpoint.

    Pre-order traversal, root before children, children left to right; a
    fire splices the replacement and restarts the traversal from the root.
    Stops when a full traversal fires nothing, or flags non-termination
    after pass_limit fires.
    """
    stats = RewriteStats()
    current = t
    while True:
        stats.traversals += 1
        fired = False
        # explicit stack of (path, node), children pushed right-to-left
        work: list[tuple[tuple[int, ...], Term]] = [((), current)]
        while work:
            path, node = work.pop()
            replacement, name, steps = _attempt(ruleset, interp, node, budget)
            stats.vm_steps += steps
            if replacement is not None:
                stats.fires[name] = stats.fires.get(name, 0) + 1
                current = _splice(current, path, replacement)
                fired = True
                break
            for i in range(len(node.children) - 1, -1, -1):
                work.append((path + (i,), node.children[i]))
        if not fired:
            return current, stats
        if stats.total_fires() >= pass_limit:
            stats.non_terminating = True
            return current, stats
