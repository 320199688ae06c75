import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cimforge.macro import MacroConfig  # noqa: E402
from cimforge.variation import NoiseModel  # noqa: E402


@pytest.fixture
def quiet_cfg():
    """Default operating point (16 rows, 4-bit in-SRAM ADC, cutoff 0.5) without noise."""
    return MacroConfig(noise=NoiseModel.disabled())


# acceptance results, filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
