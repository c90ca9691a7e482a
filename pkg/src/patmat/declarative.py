"""Declarative match semantics: a witness checker and a bounded enumerator.

The checker answers "does term t match pattern p under the given
substitutions", replaying the clairvoyant inference rules.  Recursion makes
the relation undecidable in general, so every recursive unfolding spends
one unit of fuel and running out yields a third verdict.

The enumerator searches for all weakening-minimal witnesses within
documented bounds (candidate terms are subterms of the matched term plus
all signature terms up to a depth bound).  It is the refutation oracle the
differential tests run against the virtual machine.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Optional

from .patterns import (
    free_pattern_vars,
    Alt,
    App,
    Exists,
    FunApp,
    Guarded,
    MatchConstr,
    Pattern,
    Rec,
    RecCall,
    Var,
    eval_guard,
    unfold_rec,
)
from .terms import (
    AttributeInterpreter,
    EngineError,
    FunSubstitution,
    OperatorSignature,
    Substitution,
    Term,
    extend_consistent,
    extend_fun_consistent,
    subterms,
    term_eq,
)

DEFAULT_FUEL = 64
DEFAULT_TERM_DEPTH_BOUND = 2


class Verdict(enum.Enum):
    DERIVABLE = "derivable"
    NOT_DERIVABLE = "not-derivable"
    FUEL_EXHAUSTED = "fuel-exhausted"


def _conj(a: Verdict, b: Verdict) -> Verdict:
    if a is Verdict.NOT_DERIVABLE or b is Verdict.NOT_DERIVABLE:
        return Verdict.NOT_DERIVABLE
    if a is Verdict.FUEL_EXHAUSTED or b is Verdict.FUEL_EXHAUSTED:
        return Verdict.FUEL_EXHAUSTED
    return Verdict.DERIVABLE


def _disj(a: Verdict, b: Verdict) -> Verdict:
    if a is Verdict.DERIVABLE or b is Verdict.DERIVABLE:
        return Verdict.DERIVABLE
    if a is Verdict.FUEL_EXHAUSTED or b is Verdict.FUEL_EXHAUSTED:
        return Verdict.FUEL_EXHAUSTED
    return Verdict.NOT_DERIVABLE


@lru_cache(maxsize=8192)
def _has_binders(p: Pattern) -> bool:
    """True when checking p may search (existentials or recursion inside)."""
    if isinstance(p, (Exists, Rec)):
        return True
    if isinstance(p, (Var, RecCall)):
        return False
    if isinstance(p, (App, FunApp)):
        return any(_has_binders(a) for a in p.args)
    if isinstance(p, Alt):
        return _has_binders(p.left) or _has_binders(p.right)
    if isinstance(p, Guarded):
        return _has_binders(p.body)
    if isinstance(p, MatchConstr):
        return _has_binders(p.body) or _has_binders(p.constraint)
    raise EngineError(f"unknown pattern node {p!r}")


def _conj_order(pairs: list) -> list:
    """Conjunction obligations, cheap shape checks before searching ones.

    The combined verdict is order-independent, so this only avoids
    exploring an expensive subproof when a sibling refutes the whole
    conjunction cheaply.
    """
    if all(not _has_binders(p) for p, _ in pairs):
        return pairs
    return sorted(pairs, key=lambda pt: _has_binders(pt[0]))


@lru_cache(maxsize=32)
def _terms_up_to_depth(sig_key: tuple, depth: int) -> tuple[Term, ...]:
    entries = list(sig_key)
    layers: list[list[Term]] = [[Term(n) for n, a in entries if a == 0]]
    for d in range(1, depth + 1):
        prev = [t for layer in layers for t in layer]
        layer: list[Term] = []
        for name, arity in entries:
            if arity == 0:
                continue
            combos: list[tuple[Term, ...]] = [()]
            for _ in range(arity):
                combos = [c + (t,) for c in combos for t in prev]
            layer.extend(Term(name, c) for c in combos)
        layers.append(layer)
    seen: dict[Term, None] = {}
    for layer in layers:
        for t in layer:
            seen.setdefault(t, None)
    return tuple(seen)


def candidate_terms(sig: OperatorSignature, t: Term, depth_bound: int) -> list[Term]:
    """Witness universe: subterms of t, then all signature terms of bounded depth."""
    seen: dict[Term, None] = {}
    for sub in subterms(t):
        seen.setdefault(sub, None)
    for cand in _terms_up_to_depth(tuple(sig.items()), depth_bound):
        seen.setdefault(cand, None)
    return list(seen)


def check_match(
    sig: OperatorSignature,
    interp: AttributeInterpreter,
    p: Pattern,
    t: Term,
    theta: Substitution,
    phi: FunSubstitution,
    fuel: int = DEFAULT_FUEL,
) -> Verdict:
    """Verify that (theta, phi) witnesses a match of t against p.

    Fuel bounds the recursion-unfolding depth along any derivation path;
    the verdict is monotone in fuel.  For an existential whose variable
    the witness leaves unbound, candidate terms from the bounded universe
    are tried, so the checker is exact on machine-produced witnesses and
    bounded-complete otherwise.
    """
    if isinstance(p, Var):
        bound = theta.get(p.name)
        if bound is not None and term_eq(bound, t):
            return Verdict.DERIVABLE
        return Verdict.NOT_DERIVABLE

    if isinstance(p, App):
        if t.op != p.op or len(t.children) != len(p.args):
            return Verdict.NOT_DERIVABLE
        verdict = Verdict.DERIVABLE
        for sub_p, sub_t in _conj_order(list(zip(p.args, t.children))):
            verdict = _conj(verdict, check_match(sig, interp, sub_p, sub_t, theta, phi, fuel))
            if verdict is Verdict.NOT_DERIVABLE:
                return verdict
        return verdict

    if isinstance(p, Alt):
        # disjunction is order-independent; try branches that cannot open
        # candidate sweeps first
        branches: list[Pattern] = []
        stack = [p]
        while stack:
            node = stack.pop()
            if isinstance(node, Alt):
                stack.append(node.right)
                stack.append(node.left)
            else:
                branches.append(node)
        branches.sort(key=_has_binders)
        verdict = Verdict.NOT_DERIVABLE
        for branch in branches:
            verdict = _disj(verdict, check_match(sig, interp, branch, t, theta, phi, fuel))
            if verdict is Verdict.DERIVABLE:
                return verdict
        return verdict

    if isinstance(p, Guarded):
        body = check_match(sig, interp, p.body, t, theta, phi, fuel)
        if body is Verdict.NOT_DERIVABLE:
            return body
        if eval_guard(interp, theta, p.guard) is not True:
            return Verdict.NOT_DERIVABLE
        return body

    if isinstance(p, Exists):
        bound = theta.get(p.var)
        if bound is not None:
            return check_match(sig, interp, p.body, t, theta, phi, fuel)
        candidates = candidate_terms(sig, t, DEFAULT_TERM_DEPTH_BOUND)
        pv, _ = free_pattern_vars(p.body)
        if p.var not in pv:
            # body ignores the local: any candidate serves as the witness
            candidates = candidates[:1]
        verdict = Verdict.NOT_DERIVABLE
        for cand in candidates:
            extended = extend_consistent(theta, p.var, cand)
            if extended is None:
                continue
            verdict = _disj(verdict, check_match(sig, interp, p.body, t, extended, phi, fuel))
            if verdict is Verdict.DERIVABLE:
                return verdict
        return verdict

    if isinstance(p, MatchConstr):
        body = check_match(sig, interp, p.body, t, theta, phi, fuel)
        if body is Verdict.NOT_DERIVABLE:
            return body
        target = theta.get(p.var)
        if target is None:
            return Verdict.NOT_DERIVABLE
        return _conj(body, check_match(sig, interp, p.constraint, target, theta, phi, fuel))

    if isinstance(p, FunApp):
        op = phi.get(p.fvar)
        if op is None or op != t.op or len(p.args) != len(t.children):
            return Verdict.NOT_DERIVABLE
        verdict = Verdict.DERIVABLE
        for sub_p, sub_t in _conj_order(list(zip(p.args, t.children))):
            verdict = _conj(verdict, check_match(sig, interp, sub_p, sub_t, theta, phi, fuel))
            if verdict is Verdict.NOT_DERIVABLE:
                return verdict
        return verdict

    if isinstance(p, Rec):
        if fuel <= 0:
            return Verdict.FUEL_EXHAUSTED
        return check_match(sig, interp, unfold_rec(p), t, theta, phi, fuel - 1)

    if isinstance(p, RecCall):
        raise EngineError("check_match reached a free recursive call")

    raise EngineError(f"unknown pattern node {p!r}")


# ---------------------------------------------------------------------------
# Bounded witness enumeration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _Partial:
    theta_items: tuple
    phi_items: tuple


def enumerate_witnesses(
    sig: OperatorSignature,
    interp: AttributeInterpreter,
    p: Pattern,
    t: Term,
    fuel: int = DEFAULT_FUEL,
    term_depth_bound: int = DEFAULT_TERM_DEPTH_BOUND,
) -> list[tuple[Substitution, FunSubstitution]]:
    """All weakening-minimal witnesses within the documented bounds.

    Every returned pair passes check_match.  Completeness is relative to
    the candidate-term bounds and the fuel: paths that run out of fuel are
    dropped rather than reported.
    """
    universe = candidate_terms(sig, t, term_depth_bound)
    results: list[tuple[Substitution, FunSubstitution]] = []
    seen: set[tuple] = set()
    for theta, phi in _solve(sig, interp, p, t, {}, {}, fuel, universe):
        key = (tuple(sorted(theta.items())), tuple(sorted(phi.items())))
        if key in seen:
            continue
        seen.add(key)
        if check_match(sig, interp, p, t, theta, phi, fuel) is not Verdict.DERIVABLE:
            continue
        results.append((theta, phi))
    # search order is deterministic, left alternates first
    return results


def _solve(
    sig: OperatorSignature,
    interp: AttributeInterpreter,
    p: Pattern,
    t: Term,
    theta: Substitution,
    phi: FunSubstitution,
    fuel: int,
    universe: list[Term],
) -> Iterator[tuple[Substitution, FunSubstitution]]:
    if isinstance(p, Var):
        extended = extend_consistent(theta, p.name, t)
        if extended is not None:
            yield extended, phi
        return

    if isinstance(p, App):
        if t.op != p.op or len(t.children) != len(p.args):
            return
        yield from _solve_seq(sig, interp, list(zip(p.args, t.children)), theta, phi, fuel, universe)
        return

    if isinstance(p, Alt):
        yield from _solve(sig, interp, p.left, t, theta, phi, fuel, universe)
        yield from _solve(sig, interp, p.right, t, theta, phi, fuel, universe)
        return

    if isinstance(p, Guarded):
        for th, ph in _solve(sig, interp, p.body, t, theta, phi, fuel, universe):
            verdict = eval_guard(interp, th, p.guard)
            if verdict is False:
                continue
            # Undefined guards may become true once later bindings arrive;
            # the final check_match filter settles them.
            yield th, ph
        return

    if isinstance(p, Exists):
        for th, ph in _solve(sig, interp, p.body, t, theta, phi, fuel, universe):
            if p.var in th:
                yield th, ph
            else:
                for cand in universe:
                    extended = extend_consistent(th, p.var, cand)
                    if extended is not None:
                        yield extended, ph
        return

    if isinstance(p, MatchConstr):
        for th, ph in _solve(sig, interp, p.body, t, theta, phi, fuel, universe):
            target = th.get(p.var)
            if target is not None:
                yield from _solve(sig, interp, p.constraint, target, th, ph, fuel, universe)
            else:
                for cand in universe:
                    extended = extend_consistent(th, p.var, cand)
                    if extended is None:
                        continue
                    yield from _solve(sig, interp, p.constraint, cand, extended, ph, fuel, universe)
        return

    if isinstance(p, FunApp):
        if len(p.args) != len(t.children):
            return
        extended_phi = extend_fun_consistent(phi, p.fvar, t.op)
        if extended_phi is None:
            return
        yield from _solve_seq(
            sig, interp, list(zip(p.args, t.children)), theta, extended_phi, fuel, universe
        )
        return

    if isinstance(p, Rec):
        if fuel <= 0:
            return
        yield from _solve(sig, interp, unfold_rec(p), t, theta, phi, fuel - 1, universe)
        return

    if isinstance(p, RecCall):
        raise EngineError("witness search reached a free recursive call")

    raise EngineError(f"unknown pattern node {p!r}")


def _solve_seq(
    sig: OperatorSignature,
    interp: AttributeInterpreter,
    obligations: list[tuple[Pattern, Term]],
    theta: Substitution,
    phi: FunSubstitution,
    fuel: int,
    universe: list[Term],
) -> Iterator[tuple[Substitution, FunSubstitution]]:
    if not obligations:
        yield theta, phi
        return
    head_p, head_t = obligations[0]
    for th, ph in _solve(sig, interp, head_p, head_t, theta, phi, fuel, universe):
        yield from _solve_seq(sig, interp, obligations[1:], th, ph, fuel, universe)
