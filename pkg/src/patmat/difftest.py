"""Differential testing of the match machine against the declarative oracle.

Each case draws a pattern (from the rule set under test or freshly
synthesized) and a random term, runs the machine, and cross-checks the
outcome: a match witness must be derivable, a failed match must leave the
bounded witness enumeration empty.  Disagreements are shrunk greedily and
reported with enough context to replay them.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Callable, Optional

from . import declarative, vm, wire
from .frontend import print_term
from .gen import PatternGenerator, random_term
from .patterns import Alt, App, Exists, FunApp, Guarded, MatchConstr, Pattern, Rec, well_formed
from .rewriting import RuleSet
from .terms import AttributeInterpreter, OperatorSignature, Term, subterms

Matcher = Callable[..., object]


@dataclass
class Violation:
    case_index: int
    kind: str  # "unsound-match" or "incomplete-failure" or "stuck"
    pattern: Pattern
    term: Term
    detail: str

    def repro(self, seed: int) -> str:
        blob = {
            "seed": seed,
            "case": self.case_index,
            "kind": self.kind,
            "pattern": wire._pattern_json(self.pattern),
            "term": print_term(self.term),
        }
        return json.dumps(blob, sort_keys=True)


@dataclass
class CheckReport:
    cases: int = 0
    matched: int = 0
    failed: int = 0
    budget_exhausted: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def run_check(
    ruleset: RuleSet,
    interp: AttributeInterpreter,
    cases: int,
    seed: int,
    max_depth: int = 5,
    fuel: int = declarative.DEFAULT_FUEL,
    step_budget: int = vm.DEFAULT_STEP_BUDGET,
    matcher: Optional[Matcher] = None,
) -> CheckReport:
    """Run the machine/oracle cross-check over `cases` generated pairs.

    Case i is generated from a child seed derived from (seed, i), so a
    report is reproducible case by case regardless of batching.
    """
    matcher = matcher or vm.run_match
    sig = ruleset.signature
    report = CheckReport()
    ruleset_patterns = [p.pattern for p in ruleset.patterns]
    for i in range(cases):
        rng = random.Random(f"{seed}:{i}")
        pattern = _draw_pattern(ruleset_patterns, sig, rng, max_depth)
        term = random_term(sig, rng, max_depth)
        report.cases += 1
        outcome = matcher(sig, interp, pattern, term, step_budget)
        if isinstance(outcome, vm.Matched):
            report.matched += 1
        elif isinstance(outcome, vm.NoMatch):
            report.failed += 1
        elif isinstance(outcome, vm.BudgetExhausted):
            report.budget_exhausted += 1
        got = _cross_check(sig, interp, pattern, term, outcome, fuel)
        if got is not None:
            kind, _ = got
            pattern, term = _shrink(
                sig, interp, pattern, term, kind, fuel, step_budget, matcher
            )
            refreshed = _disagreement(sig, interp, pattern, term, fuel, step_budget, matcher)
            detail = refreshed[1] if refreshed else got[1]
            report.violations.append(Violation(i, kind, pattern, term, detail))
    return report


def _draw_pattern(
    ruleset_patterns: list,
    sig: OperatorSignature,
    rng: random.Random,
    max_depth: int,
) -> Pattern:
    if ruleset_patterns and rng.random() < 0.25:
        return rng.choice(ruleset_patterns)
    gen = PatternGenerator(sig, rng, max_depth=min(max_depth, 4))
    return gen.pattern()


def _cross_check(
    sig: OperatorSignature,
    interp: AttributeInterpreter,
    pattern: Pattern,
    term: Term,
    outcome: object,
    fuel: int,
) -> Optional[tuple[str, str]]:
    if isinstance(outcome, vm.Matched):
        verdict = declarative.check_match(
            sig, interp, pattern, term, outcome.theta, outcome.phi, fuel
        )
        if verdict is not declarative.Verdict.DERIVABLE:
            return "unsound-match", f"witness not derivable: {verdict.value}"
        return None
    if isinstance(outcome, vm.NoMatch):
        found = declarative.enumerate_witnesses(sig, interp, pattern, term, fuel)
        if found:
            theta, phi = found[0]
            return (
                "incomplete-failure",
                f"machine failed but {len(found)} witnesses exist, e.g. theta={_fmt_theta(theta)} phi={phi}",
            )
        return None
    if isinstance(outcome, vm.StuckState):
        return "stuck", outcome.description
    return None  # budget exhausted: no claim either way


def _disagreement(sig, interp, pattern, term, fuel, step_budget, matcher):
    outcome = matcher(sig, interp, pattern, term, step_budget)
    return _cross_check(sig, interp, pattern, term, outcome, fuel)


def _fmt_theta(theta) -> str:
    return "{" + ", ".join(f"{k}={print_term(v)}" for k, v in sorted(theta.items())) + "}"


def _shrink(
    sig: OperatorSignature,
    interp: AttributeInterpreter,
    pattern: Pattern,
    term: Term,
    kind: str,
    fuel: int,
    step_budget: int,
    matcher: Matcher,
) -> tuple[Pattern, Term]:
    """Greedy minimization: keep any subterm / sub-pattern replacement that
    still disagrees the same way."""

    def still_bad(p: Pattern, t: Term) -> bool:
        got = _disagreement(sig, interp, p, t, fuel, step_budget, matcher)
        return got is not None and got[0] == kind

    changed = True
    while changed:
        changed = False
        for sub in subterms(term):
            if sub is term:
                continue
            if still_bad(pattern, sub):
                term = sub
                changed = True
                break
        if changed:
            continue
        for cand in _sub_patterns(pattern):
            if well_formed(sig, cand).ok and still_bad(cand, term):
                pattern = cand
                changed = True
                break
    return pattern, term


def _sub_patterns(p: Pattern) -> list[Pattern]:
    if isinstance(p, (Alt,)):
        return [p.left, p.right]
    if isinstance(p, Guarded):
        return [p.body]
    if isinstance(p, Exists):
        return [p.body]
    if isinstance(p, MatchConstr):
        return [p.body, p.constraint]
    if isinstance(p, (App, FunApp)):
        return list(p.args)
    if isinstance(p, Rec):
        return []  # dropping the binder would free its calls
    return []
