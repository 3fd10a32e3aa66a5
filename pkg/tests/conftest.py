import numpy as np
import pytest

from qpgrating.profile import GratingProfile
from qpgrating.waveguide import WaveguideCell

SQ3 = np.sqrt(3.0)


@pytest.fixture(scope="session")
def sinusoid():
    return GratingProfile(2 * np.pi, sin=(0.1,))


@pytest.fixture(scope="session")
def strip_cell():
    return WaveguideCell.strip(np.pi, fourier_order=6, poly_count=16)


@pytest.fixture(scope="session")
def curved_cell():
    lower = GratingProfile(2 * np.pi, cos=(0.2,))
    upper = GratingProfile(2 * np.pi, sin=(0.2,), offset=2.0)
    return WaveguideCell(lower, upper, fourier_order=6, poly_count=12)


def strip_mu_oracle(h, k):
    """All mu in (-1, 1) with (mu k + n)^2 + (m pi / h)^2 = k^2, by enumeration."""
    out = []
    m = 1
    while (m * np.pi / h) ** 2 <= k * k:
        r = np.sqrt(k * k - (m * np.pi / h) ** 2)
        for n in range(-int(2 * k) - 2, int(2 * k) + 3):
            for s in (r, -r):
                mu = (s - n) / k
                if -1 < mu < 1:
                    out.append(mu)
        m += 1
    out = np.sort(out)
    if out.size == 0:
        return out
    keep = np.concatenate([[True], np.diff(out) > 1e-9])
    return out[keep]


def set_distance(a, b):
    """Hausdorff distance between two finite real sets (inf if exactly one is empty)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return np.inf
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


# one line per acceptance criterion, collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
