import re

import numpy as np
import pytest

from gplandscape.data import schwefel_dataset, split


@pytest.fixture(scope="session")
def schwefel_small():
    """3d Schwefel, 40 points, split 32/8 with standardized targets."""
    return split(schwefel_dataset(d=3, n=40, seed=1), 0.2, seed=0,
                 standardize_features=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _criterion(nodeid):
    m = re.search(r"test_ac(\d+)_", nodeid)
    return int(m.group(1)) if m else None


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, with its measured detail."""
    lines = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            n = _criterion(getattr(rep, "nodeid", ""))
            if n is None or (rep.when != "call" and rep.passed):
                continue
            detail = "; ".join(v for k, v in rep.user_properties if k == "acceptance")
            verdict = "PASS" if rep.passed else "FAIL"
            lines[n] = f"AC{n} {verdict} {detail or '(no measurement recorded)'}"
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
