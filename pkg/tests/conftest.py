import pytest

from inactive_tse.scenarios import CorpusSpec, build_corpus

# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def default_corpus():
    return build_corpus(CorpusSpec())


@pytest.fixture(scope="session")
def small_corpus():
    return build_corpus(CorpusSpec(n_mixtures=8))


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  criterion {key}: {detail}")
