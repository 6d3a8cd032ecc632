import numpy as np
import pytest


def ginibre(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_hermitian(rng, d, scale=1.0):
    a = ginibre(rng, d, d)
    return scale * (a + a.conj().T) / 2


def random_density(rng, d, rank=None):
    a = ginibre(rng, d, rank or d)
    m = a @ a.conj().T
    return m / np.trace(m).real


def random_unitary(rng, d):
    q, r = np.linalg.qr(ginibre(rng, d, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
