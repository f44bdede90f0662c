import numpy as np
import pytest

from nslab.data import SynthConfig, generate_synthetic


@pytest.fixture(scope="session")
def small_ds():
    return generate_synthetic(SynthConfig(n_clips=12, n_topics=3, d_in=4, vocab_size=20, frames_range=(1, 4), tokens_range=(1, 5)), seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_line():
    """Records one acceptance verdict line; all lines are printed in the terminal summary."""

    def record(criterion: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {criterion}{'  ' + detail if detail else ''}")
        print(_ACCEPTANCE_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
