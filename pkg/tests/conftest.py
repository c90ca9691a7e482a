import os

import pytest

from patmat.terms import AttributeInterpreter, OperatorSignature, Term, freeze_annotations

FIXTURES = os.path.join(os.path.dirname(__file__), "..", "src", "patmat", "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def fixture_text(name: str) -> str:
    with open(fixture_path(name), "r", encoding="utf-8") as fh:
        return fh.read()


def T(op: str, *children: Term, **annotations: int) -> Term:
    """Unchecked term builder for tests."""
    return Term(op, tuple(children), freeze_annotations(annotations))


@pytest.fixture
def sig6() -> OperatorSignature:
    return OperatorSignature({"A": 0, "B": 0, "U": 1, "V": 1, "Pair": 2, "Mix": 2})


@pytest.fixture
def interp() -> AttributeInterpreter:
    return AttributeInterpreter()
