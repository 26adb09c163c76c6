import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from semilinear.suites import random_model

settings.register_profile("default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

seeds = st.integers(min_value=0, max_value=2**32 - 1)
sizes = st.integers(min_value=1, max_value=12)


def model_from(seed, n, kind="sub", weights=False):
    return random_model(np.random.default_rng(seed), n, kind, weights)


@pytest.fixture
def sym2():
    from semilinear.state_model import validate_generator

    return validate_generator([[-2.0, 1.0], [1.0, -2.0]])


@pytest.fixture
def scalar():
    from semilinear.state_model import validate_generator

    return validate_generator([[-1.0]])


# one PASS/FAIL line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
