import numpy as np
import pytest

from metabbo.problems import build_suite, make_soo_instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_sphere():
    """Sphere-5D with a 2000-FE budget: 20 generations at n = 100."""
    return make_soo_instance("sphere", 5, 3, max_fes=2000)


@pytest.fixture
def tiny_suite():
    return build_suite({"suite": "soo-10d", "max_fes": 1000, "train": 2, "test": 4,
                        "families": ["sphere", "rastrigin", "ellipsoid"], "seed": 5})


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> bool:
        ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
