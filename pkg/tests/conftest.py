import numpy as np
import pytest

from exchangeq import DensityMatrix, Povm, named_matrix

ACCEPTANCE_LINES = []


def random_density(n, rng):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_ket(n, rng):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def random_isometry(rows, cols, rng):
    g = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_povm(n, k, rng):
    """k-outcome POVM E_i = V_i^dag V_i from a random isometry V (k*n x n)."""
    v = random_isometry(k * n, n, rng)
    return [v[i * n:(i + 1) * n].conj().T @ v[i * n:(i + 1) * n] for i in range(k)]


def random_kraus(n, k, rng):
    v = random_isometry(k * n, n, rng)
    return [v[i * n:(i + 1) * n] for i in range(k)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def qubit_registry():
    return {
        "z": Povm([named_matrix("qubit:+z"), named_matrix("qubit:-z")], "z", ["+z", "-z"]),
        "x": Povm([named_matrix("qubit:+x"), named_matrix("qubit:-x")], "x", ["+x", "-x"]),
    }


@pytest.fixture
def plus_z():
    return DensityMatrix(named_matrix("qubit:+z"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
