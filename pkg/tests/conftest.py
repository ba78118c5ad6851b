import pytest

from blowlab.acceptance import Context, run_checks


@pytest.fixture(scope="session")
def flagship():
    """Shared default-experiment context; the expensive run is built lazily
    and reused by every test that needs the full trajectory."""
    return Context()


@pytest.fixture(scope="session")
def suite_results(flagship):
    report = run_checks(context=flagship)
    return {r.index: r for r in report.results}
