import numpy as np
import pytest

from rsma_gmi.channel import CsiModel, complex_normal
from rsma_gmi.rates import PrecoderSet


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_csi(rng, nt, k, sigma_e2=0.1, sigma_n2=1.0):
    return CsiModel(complex_normal(rng, (k, nt)), sigma_e2, sigma_n2)


def random_precoders(rng, nt, k, p_t):
    p = complex_normal(rng, (k + 1) * nt)
    p *= np.sqrt(p_t) / np.linalg.norm(p)
    return PrecoderSet.from_stacked(p, k)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def record(criterion: int, ok: bool, detail: str):
    ACCEPTANCE_LINES.append((criterion, f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
