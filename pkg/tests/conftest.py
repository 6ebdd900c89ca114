import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_pair(rng, d):
    x = rng.standard_normal(d)
    p = rng.dirichlet(np.ones(d))
    return x, p


# acceptance reporting: one PASS/FAIL line per criterion at the end of the run
ACCEPTANCE = {}


@pytest.fixture
def note(request):
    """Attach a measured-value summary to the current acceptance criterion."""
    def _note(text):
        ACCEPTANCE.setdefault(request.node.nodeid, {})["note"] = text
    return _note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None:
        return
    entry = ACCEPTANCE.setdefault(item.nodeid, {})
    entry["label"] = crit.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        entry["passed"] = rep.passed


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    rows = [e for e in ACCEPTANCE.values() if "label" in e and "passed" in e]
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for e in sorted(rows, key=lambda e: e["label"]):
        status = "PASS" if e["passed"] else "FAIL"
        extra = f"  ({e['note']})" if e.get("note") else ""
        terminalreporter.write_line(f"{status}  {e['label']}{extra}")
