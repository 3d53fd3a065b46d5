import re

import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run the hours-scale simulation-study acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    tr = terminalreporter
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in tr.stats.get(outcome, []):
            if getattr(rep, "when", None) != "call":
                continue
            m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", rep.nodeid)
            if m:
                results[int(m.group(1))] = (m.group(2), outcome.upper().replace("ERROR", "FAIL"))
    for rep in tr.stats.get("skipped", []):
        m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", rep.nodeid)
        if m and int(m.group(1)) not in results:
            results[int(m.group(1))] = (m.group(2), "SKIPPED")
    if not results:
        return
    tr.write_sep("-", "acceptance criteria")
    for num in sorted(results):
        name, outcome = results[num]
        tr.write_line(f"criterion {num:02d} ({name.replace('_', ' ')}): {outcome}")
