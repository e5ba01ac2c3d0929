from __future__ import annotations

from pathlib import Path

import pytest

from deidflow.corpus.generate import default_corpus_spec, generate_corpus
from deidflow.rules import ScriptParams, default_rules

DATA = Path(__file__).parent / "data"

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def rules():
    return default_rules()


@pytest.fixture
def params():
    return ScriptParams("ACN123", "MRN123", -6, "salt")


@pytest.fixture(scope="session")
def corpus_1000(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus1000")
    ledger = generate_corpus(default_corpus_spec(1000, seed=0), root)
    return root, ledger


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
