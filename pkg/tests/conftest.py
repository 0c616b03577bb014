import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "pmllab", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("pmllab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# acceptance reporting: tests marked ``criterion(name)`` get one PASS/FAIL
# line each in the terminal summary; ``criterion_detail`` attaches numbers
_CRITERIA: dict[str, tuple[str, str]] = {}


@pytest.fixture
def criterion_detail(request):
    def note(text: str) -> None:
        request.node.user_properties.append(("detail", text))
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    _CRITERIA[item.nodeid] = (f"{'PASS' if rep.passed else 'FAIL'}  {mark.args[0]}", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for line, detail in _CRITERIA.values():
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
