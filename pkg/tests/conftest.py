"""Shared fixtures plus a one-line-per-criterion acceptance summary."""

from __future__ import annotations

import re

import numpy as np
import pytest

_ACCEPTANCE: dict[str, tuple[str, str]] = {}
_CRITERION = re.compile(r"test_criterion_(\d+)")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.match(item.name)
    if not m or item.module.__name__.rsplit(".", 1)[-1] != "test_acceptance":
        return
    title = (item.function.__doc__ or item.name).strip().splitlines()[0]
    key = m.group(1)
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "SKIP" if rep.skipped else ("PASS" if rep.passed else "FAIL")
        _ACCEPTANCE[key] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=int):
        status, title = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:>2}: {status}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
