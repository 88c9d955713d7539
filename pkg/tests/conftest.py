"""Shared fixtures: the shipped desk datasets (built once per session) and the acceptance log."""

from __future__ import annotations

import os

for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, "1")

import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def desk1d():
    from carleman_cip.datasets import build_dataset, desk_1d

    return build_dataset(desk_1d())


@pytest.fixture(scope="session")
def desk2d():
    from carleman_cip.datasets import build_dataset, desk_2d

    return build_dataset(desk_2d())


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
