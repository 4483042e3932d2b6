from __future__ import annotations

import contextlib
import time

import numpy as np
import pytest

_ACCEPTANCE: dict[int, tuple] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


class _Record:
    detail = ""


@pytest.fixture
def acceptance():
    """Context manager that times one acceptance criterion and records its outcome."""

    @contextlib.contextmanager
    def run(number: int, title: str, budget: float):
        rec = _Record()
        t0 = time.perf_counter()
        ok = False
        try:
            yield rec
            ok = True
        finally:
            dt = time.perf_counter() - t0
            within = dt <= budget
            _ACCEPTANCE[number] = (title, ok and within, dt, budget, rec.detail)
        assert within, f"criterion {number} took {dt:.1f} s, budget {budget:.0f} s"

    return run


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, dt, budget, detail = _ACCEPTANCE[n]
        status = "PASS" if ok else "FAIL"
        line = f"[{status}] {n}. {title} ({dt:.2f} s of {budget:.0f} s)"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
