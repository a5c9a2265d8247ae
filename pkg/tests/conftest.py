import pathlib

import pytest

from donut.bibtex import load_corpus
from donut.index import build_index

FIXTURES = pathlib.Path(__file__).parent / "fixtures"
GOLDEN = FIXTURES / "golden.bib"


@pytest.fixture(scope="session")
def golden_entries():
    entries, diagnostics = load_corpus(str(GOLDEN))
    assert not [d for d in diagnostics if d.severity == "error"], diagnostics
    assert len(entries) == 10
    return entries


@pytest.fixture(scope="session")
def golden_snapshot(golden_entries):
    return build_index(golden_entries)
