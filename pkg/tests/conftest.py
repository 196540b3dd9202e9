import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Two small synthetic varieties (12 images each) at a reduced geometry."""
    from seedpure.imaging import write_synthetic_dataset
    root = tmp_path_factory.mktemp("synth")
    write_synthetic_dataset(root, 12, seed=5, height=40, width=64)
    return root


# -- acceptance summary: one line per criterion ------------------------------

_criteria = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or report.failed or report.skipped:
        state = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
        detail = "; ".join(f"{k}={v}" for k, v in report.user_properties)
        prev = _criteria.get(name)
        if prev is None or prev[0] == "PASS":
            _criteria[name] = (state, detail, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_criteria):
        state, detail, secs = _criteria[name]
        number = int(name.split("_")[2])
        label = " ".join(name.split("_")[3:])
        terminalreporter.write_line(f"criterion {number:2d} {state}  {label} ({secs:.1f}s) {detail}")
