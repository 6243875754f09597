import numpy as np
import pytest


def random_hurwitz(rng, n, shift=0.1):
    """Random matrix shifted so its spectral abscissa is ``-shift``."""
    M = rng.normal(size=(n, n))
    lam = np.linalg.eigvals(M).real.max()
    return M - (lam + shift) * np.eye(n)


def random_spd(rng, n):
    L = rng.normal(size=(n, n))
    return L @ L.T + n * np.eye(n) * 0.1


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# criterion id -> (title, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid:>2}. {title}: {detail}")
