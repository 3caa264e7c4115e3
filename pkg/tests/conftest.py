"""Shared paths and loaders for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
ROOT = TESTS.parent
CORPUS = ROOT / "corpus"

sys.path.insert(0, str(TESTS))  # modelgen, oracle_sim


def corpus_text(name: str) -> str:
    return (CORPUS / name).read_text(encoding="utf-8")


def load(name: str):
    """Parse a corpus file, failing the test on syntax errors."""
    from amn.diagnostics import has_errors
    from amn.dsl import parse

    model, diags = parse(corpus_text(name), name)
    assert not has_errors(diags), [d.to_line() for d in diags]
    return model


def corpus_models() -> list[str]:
    """Every runnable corpus model (the mutation fixtures are invalid on purpose)."""
    names = ["scenario_helpful.amn", "scenario_selfinterested.amn", "golden/scenario_helpful.amn"]
    names += sorted(f"patterns/{p.name}" for p in (CORPUS / "patterns").glob("*.amn"))
    return names


@pytest.fixture
def helpful():
    return load("scenario_helpful.amn")


@pytest.fixture
def selfish():
    return load("scenario_selfinterested.amn")


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance lines (one per criterion) after the run."""
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(module.RESULTS):
        terminalreporter.write_line(module._line(n))
