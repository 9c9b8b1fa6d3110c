import os
from collections import defaultdict

import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.load_profile("ci")


def pytest_addoption(parser):
    parser.addoption("--paper-scale", action="store_true", default=False,
                     help="run the full-dataset reproduction checks (hours)")
    parser.addoption("--dataset-dir", default=os.environ.get("GANIDS_DATASET_DIR"),
                     help="directory holding the CIC-IDS2017 flow CSVs")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config._criteria = defaultdict(list)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        item.config._criteria[mark.args[0]].append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = config._criteria
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        outcomes = [o for _, o in crit[n]]
        if any(o == "failed" for o in outcomes):
            verdict = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            verdict = "SKIP"
        else:
            verdict = "PASS"
        names = ", ".join(f"{name}={o}" for name, o in crit[n])
        terminalreporter.write_line(f"criterion {n:>2}: {verdict}  ({names})")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def paper_dataset(request):
    if not request.config.getoption("--paper-scale"):
        pytest.skip("paper-scale checks need --paper-scale")
    d = request.config.getoption("--dataset-dir")
    if not d or not os.path.isdir(d):
        pytest.skip("paper-scale checks need --dataset-dir pointing at the CIC-IDS2017 CSVs")
    return d
