"""Dense linear algebra for small qubit registers.

Register position 0 is the leftmost tensor factor, the leftmost letter of a
Pauli string and the leftmost character of a bitstring.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from idleleak.device import HamiltonianSpec

TOL = 1e-10

PAULI_LETTERS = "IXYZ"
_PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _n_qubits_for_dim(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True)
class DensityMatrix:
    """Unit-trace Hermitian operator on an M-qubit register.

    The matrix need not be positive; ``physical`` reports whether the smallest
    eigenvalue is above ``-TOL``. Tomograms before rephysicalization are
    routinely aphysical.
    """

    data: np.ndarray
    physical: bool = field(init=False)

    def __post_init__(self):
        rho = np.array(self.data, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        _n_qubits_for_dim(rho.shape[0])
        if not np.all(np.isfinite(rho)):
            raise ValueError("density matrix has non-finite entries")
        herm_err = np.max(np.abs(rho - rho.conj().T))
        if herm_err > TOL:
            raise ValueError(f"density matrix is not Hermitian (max deviation {herm_err:.3g})")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > TOL:
            raise ValueError(f"density matrix trace is {tr!r}, expected 1")
        rho = 0.5 * (rho + rho.conj().T)
        rho.setflags(write=False)
        object.__setattr__(self, "data", rho)
        min_eig = np.linalg.eigvalsh(rho)[0]
        object.__setattr__(self, "physical", bool(min_eig >= -TOL))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def n_qubits(self) -> int:
        return _n_qubits_for_dim(self.dim)

    def eigvalsh(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.data)

    @classmethod
    def from_statevector(cls, psi: Statevector | np.ndarray) -> DensityMatrix:
        vec = psi.amplitudes if isinstance(psi, Statevector) else np.asarray(psi, dtype=complex)
        return cls(np.outer(vec, vec.conj()))

    @classmethod
    def basis_state(cls, bits: str) -> DensityMatrix:
        return cls.from_statevector(Statevector.basis_state(bits))

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> DensityMatrix:
        d = 2**n_qubits
        return cls(np.eye(d) / d)


def as_density_matrix(rho) -> DensityMatrix:
    if isinstance(rho, DensityMatrix):
        return rho
    if isinstance(rho, Statevector):
        return DensityMatrix.from_statevector(rho)
    return DensityMatrix(rho)


@dataclass(frozen=True)
class Statevector:
    amplitudes: np.ndarray

    def __post_init__(self):
        psi = np.array(self.amplitudes, dtype=complex).reshape(-1)
        _n_qubits_for_dim(psi.size)
        norm = np.linalg.norm(psi)
        if abs(norm - 1.0) > TOL:
            raise ValueError(f"statevector norm is {norm!r}, expected 1")
        psi.setflags(write=False)
        object.__setattr__(self, "amplitudes", psi)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def n_qubits(self) -> int:
        return _n_qubits_for_dim(self.dim)

    @classmethod
    def basis_state(cls, bits: str) -> Statevector:
        if not bits or set(bits) - {"0", "1"}:
            raise ValueError(f"invalid bitstring {bits!r}")
        psi = np.zeros(2 ** len(bits), dtype=complex)
        psi[int(bits, 2)] = 1.0
        return cls(psi)


@dataclass(frozen=True)
class PauliString:
    letters: str

    def __post_init__(self):
        letters = str(self.letters).upper()
        if not letters or set(letters) - set(PAULI_LETTERS):
            raise ValueError(f"invalid Pauli string {self.letters!r}")
        object.__setattr__(self, "letters", letters)

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return self.letters

    @property
    def support(self) -> tuple[int, ...]:
        """Register positions carrying a non-identity letter."""
        return tuple(i for i, c in enumerate(self.letters) if c != "I")

    def is_identity_free(self) -> bool:
        return "I" not in self.letters

    def matrix(self) -> np.ndarray:
        return pauli_matrix(self.letters)


def as_pauli(p) -> PauliString:
    return p if isinstance(p, PauliString) else PauliString(p)


@functools.lru_cache(maxsize=4096)
def _pauli_matrix_cached(letters: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for c in letters:
        out = np.kron(out, _PAULI_1Q[c])
    out.setflags(write=False)
    return out


def pauli_matrix(p) -> np.ndarray:
    return _pauli_matrix_cached(str(as_pauli(p)))


def all_pauli_strings(n_qubits: int, letters: str = PAULI_LETTERS) -> list[PauliString]:
    return [PauliString("".join(t)) for t in itertools.product(letters, repeat=n_qubits)]


@functools.lru_cache(maxsize=8)
def pauli_basis_stack(n_qubits: int) -> np.ndarray:
    """All 4^M Pauli matrices, in ``all_pauli_strings`` order, shape (4^M, d, d)."""
    stack = np.stack([pauli_matrix(p) for p in all_pauli_strings(n_qubits)])
    stack.setflags(write=False)
    return stack


def von_neumann_entropy(rho) -> float:
    """Entropy in bits, ``-sum(l * log2(l))`` over the spectrum.

    Eigenvalues in ``[-TOL, 0)`` are treated as floating-point dust and
    clamped to zero; anything more negative raises ``ValueError``.
    """
    rho = as_density_matrix(rho)
    evals = rho.eigvalsh()
    if evals[0] < -TOL:
        raise ValueError(f"entropy of aphysical state (min eigenvalue {evals[0]:.3g})")
    evals = evals[evals > 0]
    return float(max(0.0, -np.sum(evals * np.log2(evals))))


def _check_qubit_indices(indices: Sequence[int], n_qubits: int) -> tuple[int, ...]:
    idx = tuple(int(i) for i in indices)
    if len(set(idx)) != len(idx):
        raise ValueError(f"duplicate qubit indices in {idx}")
    for i in idx:
        if not 0 <= i < n_qubits:
            raise ValueError(f"qubit index {i} outside register of {n_qubits} qubits")
    return idx


def partial_trace(rho, keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on ``keep``, in the order given by ``keep``."""
    rho = as_density_matrix(rho)
    n = rho.n_qubits
    keep = _check_qubit_indices(keep, n)
    traced = [i for i in range(n) if i not in keep]
    dk, dt = 2 ** len(keep), 2 ** len(traced)
    tensor = rho.data.reshape([2] * (2 * n))
    perm = list(keep) + traced + [n + i for i in keep] + [n + i for i in traced]
    block = tensor.transpose(perm).reshape(dk, dt, dk, dt)
    return DensityMatrix(np.einsum("ajbj->ab", block))


def permute_qubits(rho, order: Sequence[int]) -> DensityMatrix:
    """Reorder register positions: new position r holds old qubit ``order[r]``."""
    rho = as_density_matrix(rho)
    n = rho.n_qubits
    order = _check_qubit_indices(order, n)
    if len(order) != n:
        raise ValueError("permutation must cover the whole register")
    tensor = rho.data.reshape([2] * (2 * n))
    perm = list(order) + [n + i for i in order]
    return DensityMatrix(tensor.transpose(perm).reshape(rho.dim, rho.dim))


def tensor_product(*states) -> DensityMatrix:
    out = np.ones((1, 1), dtype=complex)
    for s in states:
        out = np.kron(out, as_density_matrix(s).data)
    return DensityMatrix(out)


def pauli_expectation(rho, p) -> float:
    rho = as_density_matrix(rho)
    p = as_pauli(p)
    if 2 ** len(p) != rho.dim:
        raise ValueError(f"Pauli string of length {len(p)} does not act on a {rho.n_qubits}-qubit state")
    val = np.einsum("ij,ji->", rho.data, pauli_matrix(p))
    return float(val.real)


def all_pauli_expectations(rho) -> dict[PauliString, float]:
    rho = as_density_matrix(rho)
    stack = pauli_basis_stack(rho.n_qubits)
    vals = np.einsum("ij,kji->k", rho.data, stack).real
    return dict(zip(all_pauli_strings(rho.n_qubits), vals.tolist()))


def fidelity_pure(a: Statevector, b: Statevector) -> float:
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def trace_distance(a, b) -> float:
    diff = as_density_matrix(a).data - as_density_matrix(b).data
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


# --- idle dynamics -----------------------------------------------------------

TROTTER_TOL = 1e-7
_DENSE_STEP_MAX_DIM = 2**11


def _z_values(n_qubits: int) -> np.ndarray:
    """z[x, i] = +1 if bit i of basis index x is 0, else -1."""
    idx = np.arange(2**n_qubits)
    bits = (idx[:, None] >> (n_qubits - 1 - np.arange(n_qubits))[None, :]) & 1
    return 1 - 2 * bits


def _matchings(edges: Sequence[tuple[int, int]]) -> list[list[int]]:
    """Greedy edge colouring; edges within one group share no qubit and commute."""
    groups: list[list[int]] = []
    used: list[set[int]] = []
    for k, (i, j) in enumerate(edges):
        for g, qs in zip(groups, used):
            if i not in qs and j not in qs:
                g.append(k)
                qs.update((i, j))
                break
        else:
            groups.append([k])
            used.append({i, j})
    return groups


class _IdlePropagator:
    """Second-order (Strang) splitting of the idle Hamiltonian.

    The diagonal part (onsite and ZZ terms) is exponentiated exactly; exchange
    terms are grouped into commuting matchings.
    """

    def __init__(self, hamiltonian: HamiltonianSpec):
        graph = hamiltonian.graph
        n = graph.n_qubits
        edges = list(graph.edges)
        omega = _real_params(hamiltonian.onsite_freqs, n, "onsite_freqs")
        jvals = _real_params(hamiltonian.exchange_J, len(edges), "exchange_J")
        zeta = hamiltonian.zz_crosstalk
        zeta = np.zeros(len(edges)) if zeta is None else _real_params(zeta, len(edges), "zz_crosstalk")

        z = _z_values(n)
        diag = z @ (omega / 2.0)
        for (i, j), zz in zip(edges, zeta):
            diag = diag + zz * z[:, i] * z[:, j]
        self.n_qubits = n
        self.dim = 2**n
        self.diag = diag
        # the uniform part of the onsite field commutes with every term
        centred = diag - z.sum(axis=1) * (omega.mean() / 2.0 if n else 0.0)
        self.diag_norm = float(np.max(np.abs(centred))) if n else 0.0

        idx = np.arange(self.dim)
        self.pairs = []
        for (i, j), jv in zip(edges, jvals):
            if jv == 0.0:
                continue
            bi, bj = 1 << (n - 1 - i), 1 << (n - 1 - j)
            a = idx[((idx & bi) == 0) & ((idx & bj) != 0)]
            self.pairs.append((a, a ^ bi ^ bj, float(jv), (i, j)))
        self.groups = _matchings([p[3] for p in self.pairs])
        self.exchange_norm = sum(max(abs(self.pairs[k][2]) for k in g) for g in self.groups)

    def n_steps(self, t: float, tol: float = TROTTER_TOL) -> int:
        if not self.pairs or t == 0.0:
            return 1
        lam = self.diag_norm + self.exchange_norm
        # Strang error bound: n steps of size dt cost at most t * dt^2 * lam^3 / 2
        return max(1, int(np.ceil(np.sqrt(abs(t) ** 3 * lam**3 / (2.0 * tol)))))

    def _apply_exchange(self, psi: np.ndarray, group: list[int], tau: float) -> np.ndarray:
        for k in group:
            a, b, jv, _ = self.pairs[k]
            c, s = np.cos(jv * tau), np.sin(jv * tau)
            pa, pb = psi[a].copy(), psi[b].copy()
            psi[a] = c * pa - 1j * s * pb
            psi[b] = c * pb - 1j * s * pa
        return psi

    def step(self, psi: np.ndarray, dt: float) -> np.ndarray:
        half_diag = np.exp(-0.5j * dt * self.diag)
        shape = (-1,) + (1,) * (psi.ndim - 1)
        psi = psi * half_diag.reshape(shape)
        order = list(range(len(self.groups)))
        for g in order[:-1]:
            psi = self._apply_exchange(psi, self.groups[g], dt / 2)
        if order:
            psi = self._apply_exchange(psi, self.groups[order[-1]], dt)
        for g in reversed(order[:-1]):
            psi = self._apply_exchange(psi, self.groups[g], dt / 2)
        return psi * half_diag.reshape(shape)

    def unitary(self, t: float, tol: float = TROTTER_TOL) -> np.ndarray:
        n = self.n_steps(t, tol)
        u_step = self.step(np.eye(self.dim, dtype=complex), t / n)
        return np.linalg.matrix_power(u_step, n)

    def evolve(self, psi: np.ndarray, t: float, tol: float = TROTTER_TOL) -> np.ndarray:
        if not self.pairs:
            return psi * np.exp(-1j * t * self.diag)
        if self.dim <= _DENSE_STEP_MAX_DIM:
            return self.unitary(t, tol) @ psi
        n = self.n_steps(t, tol)
        out = psi.astype(complex, copy=True)
        for _ in range(n):
            out = self.step(out, t / n)
        return out


def _real_params(values, size: int, name: str) -> np.ndarray:
    arr = np.asarray(values)
    if np.iscomplexobj(arr):
        if np.any(np.abs(arr.imag) > 0):
            raise ValueError(f"{name} must be real for a Hermitian Hamiltonian")
        arr = arr.real
    arr = arr.astype(float).reshape(-1)
    if arr.size != size:
        raise ValueError(f"{name} has {arr.size} entries, expected {size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def hamiltonian_matrix(hamiltonian: HamiltonianSpec) -> np.ndarray:
    """Dense matrix of the idle Hamiltonian (for small registers and tests)."""
    graph = hamiltonian.graph
    n = graph.n_qubits
    edges = list(graph.edges)
    omega = _real_params(hamiltonian.onsite_freqs, n, "onsite_freqs")
    jvals = _real_params(hamiltonian.exchange_J, len(edges), "exchange_J")
    zeta = hamiltonian.zz_crosstalk
    zeta = np.zeros(len(edges)) if zeta is None else _real_params(zeta, len(edges), "zz_crosstalk")

    def op(letters: dict[int, str]) -> np.ndarray:
        return pauli_matrix("".join(letters.get(q, "I") for q in range(n)))

    h = np.zeros((2**n, 2**n), dtype=complex)
    for q in range(n):
        h += omega[q] / 2 * op({q: "Z"})
    for (i, j), jv, zz in zip(edges, jvals, zeta):
        h += jv / 2 * (op({i: "X", j: "X"}) + op({i: "Y", j: "Y"}))
        h += zz * op({i: "Z", j: "Z"})
    return h


def evolve_statevector(psi, hamiltonian: HamiltonianSpec, t: float, tol: float = TROTTER_TOL) -> Statevector:
    """Evolve ``psi`` under the idle Hamiltonian for time ``t`` (seconds).

    Uses second-order Trotter splitting with the step count chosen from a
    commutator-free error bound so that the unitary error stays below ``tol``.
    """
    vec = psi.amplitudes if isinstance(psi, Statevector) else np.asarray(psi, dtype=complex)
    prop = _IdlePropagator(hamiltonian)
    if vec.size != prop.dim:
        raise ValueError(f"state of dimension {vec.size} does not match {prop.n_qubits}-qubit Hamiltonian")
    out = prop.evolve(np.array(vec, dtype=complex), float(t), tol)
    return Statevector(out / np.linalg.norm(out))


def idle_unitary(hamiltonian: HamiltonianSpec, t: float, tol: float = TROTTER_TOL) -> np.ndarray:
    """Dense Trotterized propagator; reused when several inputs share one Hamiltonian."""
    return _IdlePropagator(hamiltonian).unitary(float(t), tol)


def reduced_state(state, keep: Sequence[int]) -> DensityMatrix:
    """Reduced density matrix on ``keep`` without forming the full projector of a pure state."""
    if isinstance(state, Statevector):
        n = state.n_qubits
        keep = _check_qubit_indices(keep, n)
        rest = [q for q in range(n) if q not in keep]
        amp = state.amplitudes.reshape([2] * n).transpose(list(keep) + rest).reshape(2 ** len(keep), -1)
        return DensityMatrix(amp @ amp.conj().T)
    rho = as_density_matrix(state)
    if tuple(keep) == tuple(range(rho.n_qubits)):
        return rho
    return partial_trace(rho, keep)
