import os
import sys

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from fpcs_lab.random_systems import fig1_potential, generator, random_potential

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SCENARIOS = os.path.join(os.path.dirname(os.path.dirname(__file__)), "scenarios")


@st.composite
def potentials(draw, n=None, m=None, field_scale=0.0):
    """Random potentials drawn through a seeded generator."""
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = generator(seed)
    return random_potential(rng, n, m, field_scale)


@st.composite
def potentials_with_point(draw, n=None, m=None, field_scale=0.0):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = generator(seed)
    phi = random_potential(rng, n, m, field_scale)
    return phi, rng.uniform(-3.0, 3.0, size=phi.dim)


@st.composite
def point_clouds(draw, max_points=8, max_dim=3):
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = generator(seed)
    k = int(rng.integers(1, max_points + 1))
    n = int(rng.integers(1, max_dim + 1))
    return rng.normal(size=(k, n)) * 10.0 ** rng.uniform(-2, 2)


@pytest.fixture
def fig1():
    return fig1_potential()


@pytest.fixture
def rng():
    return generator(12345)


@pytest.fixture
def scenario_path():
    def path(name):
        return os.path.join(SCENARIOS, name)
    return path


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the session
# ---------------------------------------------------------------------------

_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record ``(passed, detail)`` for the test's acceptance criterion."""
    number, title = request.node.get_closest_marker("criterion").args

    def record(passed, detail=""):
        _ACCEPTANCE[number] = (title, bool(passed), detail)
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    number, title = mark.args
    if report.failed:
        detail = _ACCEPTANCE.get(number, (title, False, "error"))[2]
        _ACCEPTANCE[number] = (title, False, detail)
    elif number not in _ACCEPTANCE:
        _ACCEPTANCE[number] = (title, True, "")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, ok, detail = _ACCEPTANCE[num]
        line = f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
