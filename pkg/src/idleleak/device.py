"""Device model: coupling geometry, idle Hamiltonian, SPAM and shot sampling."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from idleleak.qstate import DensityMatrix, PauliString, Statevector, as_pauli

FALCON27_EDGES = (
    (0, 1), (1, 2), (1, 4), (2, 3), (3, 5), (4, 7), (5, 8), (6, 7), (7, 10),
    (8, 9), (8, 11), (10, 12), (11, 14), (12, 13), (12, 15), (13, 14), (14, 16),
    (15, 18), (16, 19), (17, 18), (18, 21), (19, 20), (19, 22), (21, 23),
    (22, 25), (23, 24), (24, 25), (25, 26),
)  # fmt: skip


@dataclass(frozen=True)
class CouplingGraph:
    """Undirected qubit connectivity. Edges are stored as sorted (i, j) with i < j."""

    n_qubits: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        n = int(self.n_qubits)
        if n < 0:
            raise ValueError("n_qubits must be non-negative")
        canon = set()
        for e in self.edges:
            i, j = (int(v) for v in e)
            if i == j:
                raise ValueError(f"self-loop on qubit {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge {(i, j)} outside {n}-qubit graph")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "n_qubits", n)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    def neighbors(self, q: int) -> tuple[int, ...]:
        out = [j if i == q else i for i, j in self.edges if q in (i, j)]
        return tuple(sorted(out))

    def degree(self, q: int) -> int:
        return len(self.neighbors(q))

    def degrees(self) -> list[int]:
        deg = [0] * self.n_qubits
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def distances_from(self, source: int) -> dict[int, int]:
        if not 0 <= source < self.n_qubits:
            raise ValueError(f"qubit {source} not in graph")
        adj: dict[int, list[int]] = {q: [] for q in range(self.n_qubits)}
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        dist = {source: 0}
        queue = deque([source])
        while queue:
            q = queue.popleft()
            for nb in adj[q]:
                if nb not in dist:
                    dist[nb] = dist[q] + 1
                    queue.append(nb)
        return dist


def falcon27_coupling_map() -> CouplingGraph:
    """27-qubit heavy-hex lattice of the Falcon processor family."""
    return CouplingGraph(27, FALCON27_EDGES)


def coordination_targets(graph: CouplingGraph, n_c: int) -> set[int]:
    if n_c < 0:
        raise ValueError("coordination number must be non-negative")
    return {q for q, d in enumerate(graph.degrees()) if d == n_c}


def extract_neighborhood(
    graph: CouplingGraph, center: int, radius: int | None
) -> tuple[CouplingGraph, dict[int, int]]:
    """Induced subgraph of nodes within ``radius`` hops of ``center``.

    Returns the subgraph and the old->new relabeling. ``center`` maps to 0;
    remaining nodes are ordered by (distance, original index). ``radius=None``
    returns the connected component of ``center``.
    """
    dist = graph.distances_from(center)
    if radius is not None:
        dist = {q: d for q, d in dist.items() if d <= radius}
    order = sorted(dist, key=lambda q: (dist[q], q))
    relabel = {old: new for new, old in enumerate(order)}
    edges = [(relabel[i], relabel[j]) for i, j in graph.edges if i in relabel and j in relabel]
    return CouplingGraph(len(order), edges), relabel


@dataclass(frozen=True)
class HamiltonianSpec:
    """Parameters of the idle Hamiltonian (all rad/s).

    H = sum_i (w_i/2) Z_i + sum_<ij> (J_ij/2)(X_i X_j + Y_i Y_j) + sum_<ij> zeta_ij Z_i Z_j

    Per-edge arrays follow ``graph.edges`` order.
    """

    graph: CouplingGraph
    onsite_freqs: np.ndarray
    exchange_J: np.ndarray
    zz_crosstalk: np.ndarray | None = None

    def __post_init__(self):
        n, m = self.graph.n_qubits, len(self.graph.edges)
        for name, size in (("onsite_freqs", n), ("exchange_J", m), ("zz_crosstalk", m)):
            val = getattr(self, name)
            if val is None:
                continue
            arr = np.asarray(val, dtype=float).reshape(-1)
            if arr.size != size:
                raise ValueError(f"{name} has {arr.size} entries, expected {size}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def restrict(self, relabel: Mapping[int, int]) -> HamiltonianSpec:
        """Hamiltonian on the induced subgraph given by an old->new relabeling."""
        n = len(relabel)
        edge_index = {e: k for k, e in enumerate(self.graph.edges)}
        sub_edges = []
        for (i, j), k in edge_index.items():
            if i in relabel and j in relabel:
                a, b = relabel[i], relabel[j]
                sub_edges.append(((min(a, b), max(a, b)), k))
        sub_edges.sort()
        graph = CouplingGraph(n, [e for e, _ in sub_edges])
        omega = np.zeros(n)
        for old, new in relabel.items():
            omega[new] = self.onsite_freqs[old]
        ks = [k for _, k in sub_edges]
        zeta = None if self.zz_crosstalk is None else self.zz_crosstalk[ks]
        return HamiltonianSpec(graph, omega, self.exchange_J[ks], zeta)

    def with_onsite(self, onsite_freqs) -> HamiltonianSpec:
        return HamiltonianSpec(self.graph, onsite_freqs, self.exchange_J, self.zz_crosstalk)


@dataclass(frozen=True)
class SpamModel:
    """Independent bit-flip errors at preparation and readout.

    Each probability is either a scalar shared by every qubit or a per-qubit
    sequence indexed by register position.
    """

    p_prep: float | tuple[float, ...] = 0.0
    p_readout: float | tuple[float, ...] = 0.0

    def __post_init__(self):
        for name in ("p_prep", "p_readout"):
            val = getattr(self, name)
            arr = np.asarray(val, dtype=float)
            if np.any(~np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
                raise ValueError(f"{name} must lie in [0, 1], got {val!r}")
            object.__setattr__(self, name, float(arr) if arr.ndim == 0 else tuple(arr.tolist()))

    def prep_probs(self, n: int) -> np.ndarray:
        return _broadcast(self.p_prep, n, "p_prep")

    def readout_probs(self, n: int) -> np.ndarray:
        return _broadcast(self.p_readout, n, "p_readout")


NO_SPAM = SpamModel()


def _broadcast(val, n: int, name: str) -> np.ndarray:
    arr = np.asarray(val, dtype=float)
    if arr.ndim == 0:
        return np.full(n, float(arr))
    if arr.size != n:
        raise ValueError(f"{name} has {arr.size} entries, register has {n} qubits")
    return arr


@dataclass(frozen=True)
class ShotDictionary:
    """Bitstring counts from ``n_shots`` measurements in one identity-free basis."""

    basis: PauliString
    counts: Mapping[str, int] = field(default_factory=dict)
    n_shots: int | None = None

    def __post_init__(self):
        basis = as_pauli(self.basis)
        if not basis.is_identity_free():
            raise ValueError(f"measured basis {basis} contains an identity")
        counts = {}
        for bits, c in sorted(self.counts.items()):
            if len(bits) != len(basis) or set(bits) - {"0", "1"}:
                raise ValueError(f"bitstring {bits!r} does not match basis {basis}")
            if int(c) != c or c < 0:
                raise ValueError(f"count for {bits!r} must be a non-negative integer")
            if c:
                counts[bits] = int(c)
        total = sum(counts.values())
        n_shots = total if self.n_shots is None else int(self.n_shots)
        if n_shots != total:
            raise ValueError(f"counts sum to {total}, n_shots is {n_shots}")
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "n_shots", n_shots)

    @classmethod
    def from_shots(cls, basis, shots: Iterable[str]) -> ShotDictionary:
        counts: dict[str, int] = {}
        for s in shots:
            counts[s] = counts.get(s, 0) + 1
        return cls(as_pauli(basis), counts)

    def to_json(self) -> dict:
        return {"basis": str(self.basis), "counts": dict(self.counts)}


def prepare_state(pattern: str, spam: SpamModel, rng: np.random.Generator) -> Statevector:
    """Computational-basis product state, each bit flipped with probability p_prep."""
    bits = np.array([int(b) for b in pattern], dtype=int)
    flips = rng.random(bits.size) < spam.prep_probs(bits.size)
    bits ^= flips.astype(int)
    return Statevector.basis_state("".join(map(str, bits)))


_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_SDG = np.array([[1, 0], [0, -1j]], dtype=complex)
BASIS_ROTATIONS = {"X": _H, "Y": _H @ _SDG, "Z": np.eye(2, dtype=complex)}


def basis_probabilities(state, basis, qubits: Sequence[int] | None = None) -> np.ndarray:
    """Born distribution over bitstrings after rotating ``qubits`` into ``basis``.

    Index k of the result is the integer value of the bitstring whose
    character r is the outcome on ``qubits[r]``.
    """
    basis = as_pauli(basis)
    if not basis.is_identity_free():
        raise ValueError(f"measured basis {basis} contains an identity")
    if isinstance(state, Statevector):
        n = state.n_qubits
        qubits = tuple(range(n)) if qubits is None else tuple(qubits)
        _check_measured(basis, qubits, n)
        psi = state.amplitudes.reshape([2] * n)
        for q, letter in zip(qubits, basis.letters):
            psi = np.moveaxis(np.tensordot(BASIS_ROTATIONS[letter], psi, axes=([1], [q])), 0, q)
        probs = np.abs(psi) ** 2
        rest = tuple(q for q in range(n) if q not in qubits)
        probs = probs.sum(axis=rest) if rest else probs
        # axes left in increasing qubit order; bring them into measurement order
        remaining = sorted(qubits)
        probs = np.transpose(probs, [remaining.index(q) for q in qubits]).reshape(-1)
    else:
        rho = state if isinstance(state, DensityMatrix) else DensityMatrix(state)
        n = rho.n_qubits
        qubits = tuple(range(n)) if qubits is None else tuple(qubits)
        _check_measured(basis, qubits, n)
        if qubits != tuple(range(n)):
            from idleleak.qstate import partial_trace

            rho = partial_trace(rho, qubits)
        u = np.ones((1, 1), dtype=complex)
        for letter in basis.letters:
            u = np.kron(u, BASIS_ROTATIONS[letter])
        probs = np.einsum("ij,jk,ik->i", u, rho.data, u.conj()).real
    probs = np.clip(probs, 0.0, None)
    return probs / probs.sum()


def _check_measured(basis: PauliString, qubits: tuple[int, ...], n: int) -> None:
    if len(qubits) != len(basis):
        raise ValueError(f"basis {basis} does not match {len(qubits)} measured qubits")
    if len(set(qubits)) != len(qubits) or any(not 0 <= q < n for q in qubits):
        raise ValueError(f"invalid measured qubits {qubits} for {n}-qubit state")


def apply_readout_flips(probs: np.ndarray, p_flip: np.ndarray) -> np.ndarray:
    """Distribution of outcomes after independent per-bit flips."""
    m = len(p_flip)
    out = np.asarray(probs, dtype=float).reshape([2] * m)
    for r, p in enumerate(p_flip):
        if p:
            out = (1 - p) * out + p * np.flip(out, axis=r)
    return out.reshape(-1)


def sample_shots(
    state,
    basis,
    n_shots: int,
    spam: SpamModel,
    rng: np.random.Generator,
    qubits: Sequence[int] | None = None,
) -> ShotDictionary:
    """Measure ``n_shots`` times in ``basis`` and return the count dictionary.

    Bit value b corresponds to eigenvalue (-1)**b. Readout flips are drawn
    independently per bit; sampling from the flip-convolved Born distribution
    is equivalent in law to flipping each sampled bit.
    """
    basis = as_pauli(basis)
    if n_shots < 0:
        raise ValueError("n_shots must be non-negative")
    probs = basis_probabilities(state, basis, qubits)
    m = len(basis)
    probs = apply_readout_flips(probs, spam.readout_probs(m))
    counts = rng.multinomial(int(n_shots), probs / probs.sum())
    fmt = f"0{m}b"
    return ShotDictionary(
        basis, {format(k, fmt): int(c) for k, c in enumerate(counts) if c}, int(n_shots)
    )


def uniform_hamiltonian(graph: CouplingGraph, omega: float = 0.0, J: float = 0.0, zeta: float = 0.0) -> HamiltonianSpec:
    m = len(graph.edges)
    return HamiltonianSpec(graph, np.full(graph.n_qubits, omega), np.full(m, J), np.full(m, zeta))


def random_hamiltonian(
    graph: CouplingGraph,
    rng: np.random.Generator,
    omega_range: tuple[float, float] = (0.0, 0.0),
    J_range: tuple[float, float] = (0.0, 0.0),
    zeta_range: tuple[float, float] = (0.0, 0.0),
) -> HamiltonianSpec:
    """Static device parameters drawn uniformly from the given intervals (rad/s)."""
    n, m = graph.n_qubits, len(graph.edges)
    return HamiltonianSpec(
        graph,
        rng.uniform(*omega_range, size=n),
        rng.uniform(*J_range, size=m),
        rng.uniform(*zeta_range, size=m),
    )
