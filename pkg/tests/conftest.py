import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("acceptance")
    if marker is not None and (report.when == "call" or (report.when == "setup" and report.failed)):
        number, title = marker.args
        detail = dict(item.user_properties).get("detail", "")
        item.config.stash[_ACCEPTANCE].append((number, title, report.passed, report.duration, detail))
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = sorted(config.stash[_ACCEPTANCE])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, seconds, detail in rows:
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} {status}  {title} ({seconds:.1f}s)"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
