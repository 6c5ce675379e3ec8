import numpy as np
import pytest

from idleleak.device import ShotDictionary

WORKED_EXAMPLE_SHOTS = {
    "XXY": "101 101 101 111 001 101 101 001 101 100",
    "XYY": "111 101 111 111 011 111 101 011 101 101",
    "XZY": "101 111 011 111 011 110 111 001 101 110",
}

ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def random_density_matrix(rng, n_qubits, rank=None):
    d = 2**n_qubits
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_statevector(rng, n_qubits):
    v = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return v / np.linalg.norm(v)


def random_aphysical(rng, n_qubits, scale=0.15):
    """Unit-trace Hermitian matrix with at least one negative eigenvalue."""
    d = 2**n_qubits
    while True:
        rho = random_density_matrix(rng, n_qubits, rank=rng.integers(1, d + 1))
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = (h + h.conj().T) / 2
        h -= np.trace(h).real / d * np.eye(d)
        mu = rho + scale * h
        if np.linalg.eigvalsh(mu)[0] < -1e-3:
            return mu


@pytest.fixture
def worked_example_dicts():
    return [ShotDictionary.from_shots(b, s.split()) for b, s in WORKED_EXAMPLE_SHOTS.items()]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}: {detail}")
