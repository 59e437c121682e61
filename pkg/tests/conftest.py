import io
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from chemrolekg.ontology import TermKind, build_lexicon, classify, parse_obo  # noqa: E402

import synth  # noqa: E402


@pytest.fixture(scope="session")
def mini_ontology():
    return parse_obo(io.StringIO(synth.mini_obo()))


@pytest.fixture(scope="session")
def mini_kinds(mini_ontology):
    return classify(mini_ontology)


@pytest.fixture(scope="session")
def role_lexicon(mini_ontology, mini_kinds):
    return build_lexicon(mini_ontology, mini_kinds, [TermKind.ROLE], 4)


@pytest.fixture(scope="session")
def chem_lexicon2(mini_ontology, mini_kinds):
    return build_lexicon(mini_ontology, mini_kinds, [TermKind.CHEMICAL], 2)


@pytest.fixture(scope="session")
def role_lexicon2(mini_ontology, mini_kinds):
    return build_lexicon(mini_ontology, mini_kinds, [TermKind.ROLE], 2)


@pytest.fixture
def obo_file(tmp_path):
    p = tmp_path / "mini.obo"
    p.write_text(synth.mini_obo(), encoding="utf-8")
    return p


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion(request):
    """Record pass/fail for the criterion named by the test's ``criterion`` marker."""
    n = request.node.get_closest_marker("criterion").args[0]
    notes: list[str] = []
    yield notes
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    ACCEPTANCE[n] = (ok, "; ".join(notes))
    print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} {'; '.join(notes)}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, note = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {note}")
