"""Operator signatures, ground terms, and match substitutions.

Terms are immutable operator trees.  Every node carries a (possibly empty)
map of natural-valued annotations; two terms are equal only when their
operators, child lists, and annotation maps all agree.  Annotations feed
the attribute interpreter used by pattern guards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Optional


class EngineError(Exception):
    """Base class for every error raised by this package."""


class SignatureConflict(EngineError):
    """An operator was redeclared with a different arity."""


class UnknownOperator(EngineError):
    """A term or pattern uses an operator the signature does not declare."""


class ArityMismatch(EngineError):
    """An operator application has the wrong number of arguments."""


class OperatorSignature:
    """Immutable map from operator names to arities.

    Constants are operators of arity 0.  `declare` is functional: it
    returns a new signature and never mutates the receiver.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[str, int] | None = None):
        ents = dict(entries) if entries else {}
        for name, arity in ents.items():
            _check_entry(name, arity)
        self._entries = ents

    def declare(self, name: str, arity: int) -> "OperatorSignature":
        _check_entry(name, arity)
        old = self._entries.get(name)
        if old is not None:
            if old != arity:
                raise SignatureConflict(
                    f"operator {name} already declared with arity {old}, not {arity}"
                )
            return self
        out = OperatorSignature.__new__(OperatorSignature)
        out._entries = {**self._entries, name: arity}
        return out

    def arity(self, name: str) -> int:
        try:
            return self._entries[name]
        except KeyError:
            raise UnknownOperator(f"operator {name} is not declared") from None

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def names(self) -> list[str]:
        return sorted(self._entries)

    def items(self) -> list[tuple[str, int]]:
        return sorted(self._entries.items())

    def __eq__(self, other: object) -> bool:
        return isinstance(other, OperatorSignature) and self._entries == other._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __repr__(self) -> str:
        inner = ", ".join(f"{n}/{a}" for n, a in self.items())
        return f"OperatorSignature({inner})"


def _check_entry(name: str, arity: int) -> None:
    if not isinstance(name, str) or not name:
        raise EngineError("operator names must be non-empty strings")
    if not isinstance(arity, int) or isinstance(arity, bool) or arity < 0:
        raise EngineError(f"arity of {name} must be a natural number")


def declare_op(sig: OperatorSignature, name: str, arity: int) -> OperatorSignature:
    """Functional signature extension; idempotent on exact redeclaration."""
    return sig.declare(name, arity)


@dataclass(frozen=True, eq=True)
class Term:
    """Ground operator tree node.

    `annotations` is kept as a tuple of (key, value) pairs sorted by key so
    terms are hashable and annotation maps compare canonically.  The hash
    is cached at construction; equality checks short-circuit on it.
    """

    op: str
    children: tuple["Term", ...] = ()
    annotations: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.op, self.children, self.annotations)))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        if self is other:
            return True
        if not isinstance(other, Term):
            return NotImplemented
        return (
            self._hash == other._hash
            and self.op == other.op
            and self.children == other.children
            and self.annotations == other.annotations
        )

    def annotation(self, key: str) -> Optional[int]:
        for k, v in self.annotations:
            if k == key:
                return v
        return None

    def annotations_map(self) -> dict[str, int]:
        return dict(self.annotations)

    def __repr__(self) -> str:
        parts = [self.op]
        if self.annotations:
            parts.append("{" + ",".join(f"{k}={v}" for k, v in self.annotations) + "}")
        parts.append("(" + ",".join(repr(c) for c in self.children) + ")")
        return "".join(parts)


def freeze_annotations(annotations: Mapping[str, int] | None) -> tuple[tuple[str, int], ...]:
    if not annotations:
        return ()
    out = []
    for key in sorted(annotations):
        value = annotations[key]
        if not isinstance(key, str) or not key:
            raise EngineError("annotation keys must be non-empty strings")
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise EngineError(f"annotation {key} must map to a natural number")
        out.append((key, value))
    return tuple(out)


def mk_term(
    sig: OperatorSignature,
    op: str,
    children: list[Term] | tuple[Term, ...] = (),
    annotations: Mapping[str, int] | None = None,
) -> Term:
    """Build a well-formed term, enforcing declaration and arity."""
    arity = sig.arity(op)
    kids = tuple(children)
    if len(kids) != arity:
        raise ArityMismatch(f"{op} expects {arity} children, got {len(kids)}")
    return Term(op, kids, freeze_annotations(annotations))


def term_eq(t1: Term, t2: Term) -> bool:
    """Structural equality, annotations included."""
    return t1 == t2


def term_size(t: Term) -> int:
    """Number of nodes."""
    n = 0
    stack = [t]
    while stack:
        cur = stack.pop()
        n += 1
        stack.extend(cur.children)
    return n


def term_depth(t: Term) -> int:
    """Height of the tree; a leaf has depth 0."""
    if not t.children:
        return 0
    return 1 + max(term_depth(c) for c in t.children)


def subterms(t: Term) -> Iterator[Term]:
    """Pre-order iteration over all subterms, the term itself first."""
    stack = [t]
    while stack:
        cur = stack.pop()
        yield cur
        stack.extend(reversed(cur.children))


class AttributeInterpreter:
    """Deterministic partial map from (attribute key, term) to naturals.

    Resolution order: the node's own annotation for the key, then a
    custom resolver registered for the key, then the builtin structural
    attributes `depth`, `size` and `arity`, otherwise undefined (None).
    """

    def __init__(self, resolvers: Mapping[str, Callable[[Term], Optional[int]]] | None = None):
        self._resolvers = dict(resolvers) if resolvers else {}

    def eval(self, key: str, t: Term) -> Optional[int]:
        val = t.annotation(key)
        if val is not None:
            return val
        resolver = self._resolvers.get(key)
        if resolver is not None:
            got = resolver(t)
            if got is not None and (not isinstance(got, int) or got < 0):
                raise EngineError(f"resolver for {key} returned a non-natural value")
            return got
        if key == "depth":
            return term_depth(t)
        if key == "size":
            return term_size(t)
        if key == "arity":
            return len(t.children)
        return None


DEFAULT_INTERPRETER = AttributeInterpreter()


def attr_eval(interp: AttributeInterpreter, key: str, t: Term) -> Optional[int]:
    """Interpretation value of an attribute on a term, or None when undefined."""
    return interp.eval(key, t)


# Substitutions are plain dicts treated as immutable: extension always
# builds a new dict, so backtracking frames can share references safely.
Substitution = dict  # var name -> Term
FunSubstitution = dict  # function-variable name -> operator name


def extend_consistent(theta: Substitution, x: str, t: Term) -> Optional[Substitution]:
    """Consistent union theta ∪ {x -> t}.

    Returns theta itself when x is already bound to an equal term, a new
    extended dict when x is unbound, and None on a conflicting binding.
    """
    bound = theta.get(x)
    if bound is None:
        out = dict(theta)
        out[x] = t
        return out
    if term_eq(bound, t):
        return theta
    return None


def extend_fun_consistent(phi: FunSubstitution, fvar: str, op: str) -> Optional[FunSubstitution]:
    """Consistent union for function substitutions."""
    bound = phi.get(fvar)
    if bound is None:
        out = dict(phi)
        out[fvar] = op
        return out
    if bound == op:
        return phi
    return None
