import numpy as np
import pytest

from kolmo.operator import validate_operator

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def k2():
    return validate_operator(np.diag([1.0, 0.0]), np.array([[0.0, 0.0], [1.0, 0.0]]), m=(1, 1))


def k2_perturbed(b00=0.3):
    return validate_operator(np.diag([1.0, 0.0]), np.array([[b00, 0.0], [1.0, 0.0]]), m=(1, 1))


def chain3():
    """Three strata of size one: ``q = (1, 3, 5)``, ``Q = 9``."""
    B = np.zeros((3, 3))
    B[1, 0] = 1.0
    B[2, 1] = 1.0
    return validate_operator(np.diag([1.0, 0.0, 0.0]), B, m=(1, 1, 1))


def wide():
    """``m = (2, 1)`` with a non-diagonal ``A0`` and starred blocks."""
    A = np.zeros((3, 3))
    A[:2, :2] = [[1.5, 0.3], [0.3, 0.8]]
    B = np.array([[0.2, -0.1, 0.4], [0.0, 0.1, 0.0], [1.0, 0.5, -0.2]])
    return validate_operator(A, B, m=(2, 1))


@pytest.fixture
def K2():
    return k2()


@pytest.fixture
def K2p():
    return k2_perturbed()


@pytest.fixture
def K3():
    return chain3()


@pytest.fixture
def W3():
    return wide()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def record():
    def _record(n: int, ok: bool, detail: str):
        _ACCEPTANCE[n] = (bool(ok), detail)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
