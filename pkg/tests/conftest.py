from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
APPS = FIXTURES / "apps"
CORPUS = FIXTURES / "corpus"
JS = FIXTURES / "js"
URLS = FIXTURES / "urls"

# filled in by test_acceptance.py, printed once at the end of the run
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, title, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {num}: {title} ({detail})")
