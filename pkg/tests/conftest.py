import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kramerslab.potential import builtin

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ORACLE_FILE = Path(__file__).parent / "oracles" / "values.json"


@pytest.fixture(scope="session")
def oracle():
    """Frozen high-precision reference values (see tests/oracles/generate.py)."""
    return json.loads(ORACLE_FILE.read_text())


@pytest.fixture(scope="session")
def quartic():
    return builtin("quartic1d")


@pytest.fixture(scope="session")
def threewell():
    return builtin("threewell1d")


@pytest.fixture(scope="session")
def doublewell():
    return builtin("doublewell2d")




@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion, echoed in the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(tag: str, ok: bool, detail: str) -> bool:
        line = f"[{tag:>3}] {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: (int("".join(c for c in s[1:4] if c.isdigit())), s)):
            terminalreporter.write_line(line)
