import numpy as np
import pytest

from tunedim.filterbank import build_gabor_bank
from tunedim.stimuli import mixed_corpus


@pytest.fixture(scope="session")
def bank():
    return build_gabor_bank()


@pytest.fixture(scope="session")
def small_corpus():
    return mixed_corpus(400, size=32, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[str, str] = {}


def record_acceptance(criterion: str, passed: bool, detail: str, soft: bool = False) -> None:
    status = "PASS" if passed else ("WARN" if soft else "FAIL")
    ACCEPTANCE_LINES[criterion] = f"{criterion} {status}: {detail}"
    print(ACCEPTANCE_LINES[criterion])


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
