import pytest
from hypothesis import settings

from dialmask.fixtures import load_bat_scene, load_mini_corpus

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def mini_corpus():
    return load_mini_corpus()


@pytest.fixture(scope="session")
def bat_scene():
    return load_bat_scene()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            ACCEPTANCE_RESULTS[value] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{ACCEPTANCE_RESULTS[name]}  {name}")
