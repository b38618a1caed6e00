import os
from pathlib import Path

import numpy as np
import pytest

from qrswave.wavelet_core import WaveletSpec

MITDB_RECORDS = ("100", "105", "108", "109", "203", "222")


def mitdb_dir():
    """Directory holding MIT-BIH ``.hea``/``.dat`` files and annotation dumps."""
    env = os.environ.get("QRSWAVE_MITDB")
    candidates = [Path(env)] if env else []
    candidates.append(Path(__file__).parent / "data" / "mitdb")
    for c in candidates:
        if (c / "100.hea").exists():
            return c
    return None


@pytest.fixture(scope="session")
def morlet6():
    return WaveletSpec(6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion for the summary."""

    def record(name, ok, detail=""):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        line = f"[{status}] {name}" + (f" :: {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
