"""Backtracking match machine.

A deterministic small-step transition system over continuations of match
obligations.  Alternates push a saved (theta, phi, continuation) frame; any
conflict pops the most recent frame, or fails when the stack is empty.
Continuations and the frame stack are persistent cons lists, so pushing a
frame captures the current continuation without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

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
    unfold_rec,
)
from .terms import (
    AttributeInterpreter,
    EngineError,
    FunSubstitution,
    OperatorSignature,
    Substitution,
    Term,
    term_eq,
)

DEFAULT_STEP_BUDGET = 100_000


class StuckError(EngineError):
    """The machine reached a state no transition rule covers."""


# --- actions ---------------------------------------------------------------

@dataclass(frozen=True)
class DoMatch:
    pattern: Pattern
    term: Term


@dataclass(frozen=True)
class CheckGuard:
    guard: Guard


@dataclass(frozen=True)
class CheckBound:
    var: str


@dataclass(frozen=True)
class BackMatch:
    var: str
    pattern: Pattern


Action = object

# A continuation is None (empty) or a pair (action, rest).
Continuation = Optional[tuple]


def cont(*actions: Action, rest: Continuation = None) -> Continuation:
    k = rest
    for a in reversed(actions):
        k = (a, k)
    return k


def cont_len(k: Continuation) -> int:
    n = 0
    while k is not None:
        n += 1
        k = k[1]
    return n


@dataclass(frozen=True)
class BacktrackFrame:
    saved_theta: Substitution
    saved_phi: FunSubstitution
    saved_k: Continuation


# The stack is None (empty) or a pair (frame, rest).
Stack = Optional[tuple]


def stack_depth(stk: Stack) -> int:
    n = 0
    while stk is not None:
        n += 1
        stk = stk[1]
    return n


# --- states ----------------------------------------------------------------

@dataclass(frozen=True)
class Running:
    theta: Substitution
    phi: FunSubstitution
    stack: Stack
    k: Continuation


@dataclass(frozen=True)
class Success:
    theta: Substitution
    phi: FunSubstitution


@dataclass(frozen=True)
class Failure:
    pass


MachineState = object


# --- outcomes --------------------------------------------------------------

@dataclass(frozen=True)
class Matched:
    theta: Substitution
    phi: FunSubstitution
    steps: int = 0


@dataclass(frozen=True)
class NoMatch:
    steps: int = 0


@dataclass(frozen=True)
class BudgetExhausted:
    steps: int = 0


@dataclass(frozen=True)
class StuckState:
    description: str
    steps: int = 0


Outcome = object


def initial_state(p: Pattern, t: Term) -> Running:
    """Empty substitutions, empty stack, single obligation to match p with t."""
    return Running({}, {}, None, cont(DoMatch(p, t)))


def backtrack(stack: Stack) -> MachineState:
    """Pop the most recent choice point, or fail on an empty stack."""
    if stack is None:
        return Failure()
    frame, rest = stack
    return Running(frame.saved_theta, frame.saved_phi, rest, frame.saved_k)


def step(
    sig: OperatorSignature,
    interp: AttributeInterpreter,
    st: Running,
) -> tuple[MachineState, str]:
    """One transition.  Returns the next state and the name of the rule taken.

    Exactly one rule applies to every state reachable from initial_state of
    a well-formed pattern; a raw recursive call in an obligation raises
    StuckError.
    """
    if not isinstance(st, Running):
        raise StuckError(f"step on terminal state {st!r}")
    if st.k is None:
        return Success(st.theta, st.phi), "success"

    action, k = st.k

    if isinstance(action, DoMatch):
        p, t = action.pattern, action.term

        if isinstance(p, Var):
            bound = st.theta.get(p.name)
            if bound is None:
                theta = dict(st.theta)
                theta[p.name] = t
                return Running(theta, st.phi, st.stack, k), "var-bind"
            if term_eq(bound, t):
                return Running(st.theta, st.phi, st.stack, k), "var-bound"
            return backtrack(st.stack), "var-conflict"

        if isinstance(p, App):
            if p.op != t.op or len(p.args) != len(t.children):
                return backtrack(st.stack), "op-conflict"
            new_k = k
            for sub_p, sub_t in zip(reversed(p.args), reversed(t.children)):
                new_k = (DoMatch(sub_p, sub_t), new_k)
            return Running(st.theta, st.phi, st.stack, new_k), "op-unpack"

        if isinstance(p, Alt):
            frame = BacktrackFrame(st.theta, st.phi, (DoMatch(p.right, t), k))
            return (
                Running(st.theta, st.phi, (frame, st.stack), (DoMatch(p.left, t), k)),
                "alt-push",
            )

        if isinstance(p, Guarded):
            new_k = (DoMatch(p.body, t), (CheckGuard(p.guard), k))
            return Running(st.theta, st.phi, st.stack, new_k), "guard-defer"

        if isinstance(p, Exists):
            new_k = (DoMatch(p.body, t), (CheckBound(p.var), k))
            return Running(st.theta, st.phi, st.stack, new_k), "exists-open"

        if isinstance(p, MatchConstr):
            new_k = (DoMatch(p.body, t), (BackMatch(p.var, p.constraint), k))
            return Running(st.theta, st.phi, st.stack, new_k), "constraint-defer"

        if isinstance(p, FunApp):
            if len(p.args) != len(t.children):
                return backtrack(st.stack), "funvar-conflict"
            bound = st.phi.get(p.fvar)
            if bound is not None and bound != t.op:
                return backtrack(st.stack), "funvar-conflict"
            new_k = k
            for sub_p, sub_t in zip(reversed(p.args), reversed(t.children)):
                new_k = (DoMatch(sub_p, sub_t), new_k)
            if bound is None:
                phi = dict(st.phi)
                phi[p.fvar] = t.op
                return Running(st.theta, phi, st.stack, new_k), "funvar-bind"
            return Running(st.theta, st.phi, st.stack, new_k), "funvar-bound"

        if isinstance(p, Rec):
            new_k = (DoMatch(unfold_rec(p), t), k)
            return Running(st.theta, st.phi, st.stack, new_k), "rec-unfold"

        if isinstance(p, RecCall):
            raise StuckError(f"obligation holds a raw recursive call {p.name}")

        raise StuckError(f"unknown pattern node {p!r}")

    if isinstance(action, CheckGuard):
        verdict = eval_guard(interp, st.theta, action.guard)
        if verdict is True:
            return Running(st.theta, st.phi, st.stack, k), "guard-pass"
        # False and undefined both fail the match; an undefined attribute
        # reads as a failed assertion.
        return backtrack(st.stack), "guard-fail"

    if isinstance(action, CheckBound):
        if action.var in st.theta:
            return Running(st.theta, st.phi, st.stack, k), "bound-check"
        # A local variable the structural match never reached cannot be
        # witnessed by this machine; give up on this branch.
        return backtrack(st.stack), "bound-missing"

    if isinstance(action, BackMatch):
        target = st.theta.get(action.var)
        if target is not None:
            new_k = (DoMatch(action.pattern, target), k)
            return Running(st.theta, st.phi, st.stack, new_k), "constraint-resolve"
        return backtrack(st.stack), "constraint-unbound"

    raise StuckError(f"unknown action {action!r}")


def run_match(
    sig: OperatorSignature,
    interp: AttributeInterpreter,
    p: Pattern,
    t: Term,
    step_budget: int = DEFAULT_STEP_BUDGET,
    trace: Optional[Callable[[str], None]] = None,
) -> Outcome:
    """Drive the machine from the initial state to an outcome.

    The step budget totalizes runs over diverging recursive patterns.
    When a trace sink is given it receives one line per transition with
    the rule name and the state dimensions.
    """
    state: MachineState = initial_state(p, t)
    steps = 0
    while steps < step_budget:
        if isinstance(state, Success):
            return Matched(state.theta, state.phi, steps)
        if isinstance(state, Failure):
            return NoMatch(steps)
        try:
            nxt, rule = step(sig, interp, state)
        except StuckError as err:
            return StuckState(str(err), steps)
        steps += 1
        if trace is not None:
            if isinstance(nxt, Running):
                trace(
                    f"{rule} theta={len(nxt.theta)} phi={len(nxt.phi)} "
                    f"stack={stack_depth(nxt.stack)} k={cont_len(nxt.k)}"
                )
            elif isinstance(nxt, Success):
                trace(f"{rule} theta={len(nxt.theta)} phi={len(nxt.phi)} stack=0 k=0")
            else:
                trace(f"{rule} theta=0 phi=0 stack=0 k=0")
        state = nxt
    return BudgetExhausted(steps)
