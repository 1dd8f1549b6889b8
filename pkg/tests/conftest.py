import numpy as np
import pytest

from lobefit import presets
from lobefit.zoa import build_sld, sample_at_speeds


@pytest.fixture(scope="session")
def references():
    """Target boundary of each synthetic case sampled at 50 speeds."""
    out = {}
    for name, case in presets.CASES.items():
        speeds = np.linspace(*case.speed_range, 50)
        out[name] = sample_at_speeds(build_sld(case.target, case.cutting, case.speed_range), speeds)
    return out


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
