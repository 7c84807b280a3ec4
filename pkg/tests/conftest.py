import math
from pathlib import Path

import numpy as np
import pytest

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "src" / "adicheck" / "data" / "scenarios"

THETA = 0.1
OMEGA_RES = math.cos(THETA)
T_RABI = math.pi / math.sin(THETA)


def random_hermitian(rng, d, scale=1.0, real=False):
    A = rng.normal(size=(d, d))
    if not real:
        A = A + 1j * rng.normal(size=(d, d))
    return scale * 0.5 * (A + np.conj(A.T))


def random_unitary(rng, d):
    Z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def spread_spectrum(rng, d, real=False, min_gap=0.6):
    """Random Hermitian matrix whose eigenvalues are at least ``min_gap`` apart."""
    E = np.cumsum(min_gap + rng.uniform(0.0, 1.0, size=d))
    E -= E.mean()
    if real:
        Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    else:
        Q = random_unitary(rng, d)
    return (Q * E) @ np.conj(Q.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


# one summary line per acceptance criterion, echoed at the end of the session
_CRITERIA = {}


@pytest.fixture
def criterion():
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
