import os
import time

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


def _fmt(name, ok, value, bound):
    if value is None:
        return f"{name}={'ok' if ok else 'FAIL'}"
    text = f"{name}={value:.4g}" if isinstance(value, float) else f"{name}={value}"
    return text + (f" (bound {bound:g})" if bound is not None else "")


class Criterion:
    """Collects the checks of one acceptance criterion and prints a verdict line."""

    def __init__(self, number, title, budget, capsys):
        self.number, self.title, self.budget, self.capsys = number, title, budget, capsys
        self.checks = []

    def check(self, name, ok, value=None, bound=None):
        self.checks.append((name, bool(ok), value, bound))

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.start
        if exc_type is not None:
            self.check(f"raised {exc_type.__name__}", False)
        self.check("runtime_s", elapsed < self.budget, round(elapsed, 2), self.budget)
        failed = [c[0] for c in self.checks if not c[1]]
        verdict = "FAIL" if failed else "PASS"
        line = f"{verdict} criterion {self.number} [{self.title}]: " + "; ".join(_fmt(*c) for c in self.checks)
        ACCEPTANCE_LINES.append(line)
        with self.capsys.disabled():
            print("\n" + line)
        if exc_type is None:
            assert not failed, f"criterion {self.number} failed: {failed}"
        return False


@pytest.fixture
def criterion(capsys):
    return lambda number, title, budget: Criterion(number, title, budget, capsys)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
