"""Shared fixtures and the acceptance-criteria summary hook."""

import numpy as np
import pytest

_RESULTS: dict[int, tuple[str, bool, str]] = {}


def record_criterion(num: int, label: str, passed: bool, detail: str = "") -> None:
    _RESULTS[num] = (label, bool(passed), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_RESULTS):
        label, passed, detail = _RESULTS[num]
        line = f"criterion {num}: {'PASS' if passed else 'FAIL'}  {label}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
