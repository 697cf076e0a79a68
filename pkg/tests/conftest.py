import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# -- acceptance summary ---------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one result line per acceptance criterion.

    Call ``acceptance(number, ok, detail, extra="")``; the line is printed
    immediately and repeated in the terminal summary.
    """
    lines = request.config.stash[_ACCEPTANCE]
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def record(number: int, ok: bool, detail: str, extra: str = ""):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((number, line, extra))
        with capman.global_and_fixture_disabled():
            print("\n" + line + ("\n" + extra if extra else ""), flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line, extra in sorted(lines, key=lambda r: r[0]):
        terminalreporter.write_line(line)
        if extra:
            terminalreporter.write_line(extra)
