"""Pauli state tomography from shot dictionaries, with 2-norm rephysicalization."""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from idleleak.device import NO_SPAM, ShotDictionary, SpamModel, apply_readout_flips, basis_probabilities, sample_shots
from idleleak.qstate import (
    DensityMatrix,
    PauliString,
    all_pauli_strings,
    as_pauli,
    pauli_basis_stack,
    reduced_state,
)

DEFAULT_MAX_QUBITS = 4


@dataclass(frozen=True)
class TomographyPlan:
    register: tuple[int, ...]
    bases: tuple[PauliString, ...]

    @classmethod
    def for_register(cls, register: Sequence[int]) -> TomographyPlan:
        register = tuple(int(q) for q in register)
        return cls(register, tuple(all_pauli_strings(len(register), "XYZ")))


@dataclass(frozen=True)
class Tomogram:
    raw: DensityMatrix
    rephysicalized: DensityMatrix
    eigen_shift_record: tuple[tuple[float, float], ...]
    dictionaries: tuple[ShotDictionary, ...] = field(default=(), repr=False)


def _consistent(basis: PauliString, target: PauliString) -> bool:
    return all(t == "I" or t == b for b, t in zip(basis.letters, target.letters))


def marginalize(dicts: Sequence[ShotDictionary], target_string) -> ShotDictionary:
    """Pool every dictionary consistent with ``target_string``, dropping identity positions."""
    target = as_pauli(target_string)
    m = len(target)
    if not target.support:
        raise ValueError("the all-identity string has no measured marginal")
    if any(len(d.basis) != m for d in dicts):
        raise ValueError(f"dictionaries do not all act on a {m}-qubit register")
    keep = target.support
    free = [r for r in range(m) if r not in keep]
    needed = {
        "".join(target.letters[r] if r in keep else fill[free.index(r)] for r in range(m))
        for fill in itertools.product("XYZ", repeat=len(free))
    }
    present = {str(d.basis) for d in dicts}
    missing = sorted(needed - present)
    if missing:
        raise ValueError(f"missing bases for marginal {target}: {missing}")
    counts: dict[str, int] = {}
    n_shots = 0
    for d in dicts:
        if not _consistent(d.basis, target):
            continue
        n_shots += d.n_shots
        for bits, c in d.counts.items():
            key = "".join(bits[r] for r in keep)
            counts[key] = counts.get(key, 0) + c
    marginal_basis = "".join(target.letters[r] for r in keep)
    return ShotDictionary(marginal_basis, counts, n_shots)


def expectation_fraction(d: ShotDictionary) -> Fraction:
    """Exact rational expectation of the parity observable."""
    if d.n_shots <= 0:
        raise ValueError("expectation of an empty dictionary")
    num = sum(c if bits.count("1") % 2 == 0 else -c for bits, c in d.counts.items())
    return Fraction(num, d.n_shots)


def expectation_from_dictionary(d: ShotDictionary) -> float:
    return float(expectation_fraction(d))


def assemble_density_matrix(expectations: Mapping, n_qubits: int) -> DensityMatrix:
    """rho = 2^-M sum_b <P_b> P_b over all 4^M Pauli strings."""
    exp = {str(as_pauli(k)): float(v) for k, v in expectations.items()}
    strings = all_pauli_strings(n_qubits)
    missing = [str(p) for p in strings if str(p) not in exp]
    if missing:
        raise ValueError(f"missing expectations for {missing[:5]}{'...' if len(missing) > 5 else ''}")
    ident = "I" * n_qubits
    if abs(exp[ident] - 1.0) > 1e-12:
        raise ValueError(f"identity expectation is {exp[ident]}, must be 1")
    vals = np.array([exp[str(p)] for p in strings])
    rho = np.einsum("k,kij->ij", vals, pauli_basis_stack(n_qubits)) / 2**n_qubits
    return DensityMatrix(rho)


def project_onto_simplex(v) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1} by sort-and-threshold.

    The result is ``max(v + c, 0)`` with one shift ``c`` chosen at the pivot
    of the descending order statistics.
    """
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    j = np.arange(1, v.size + 1)
    pivot = np.nonzero(u - (css - 1.0) / j > 0)[0][-1]
    shift = (1.0 - css[pivot]) / (pivot + 1)
    return np.maximum(v + shift, 0.0)


def ml_rephysicalize(mu) -> Tomogram:
    """Closest physical state to ``mu`` in Frobenius norm.

    The minimizer shares the eigenvectors of ``mu``, so only the spectrum is
    projected onto the probability simplex.
    """
    mu = mu if isinstance(mu, DensityMatrix) else DensityMatrix(mu)
    evals, evecs = np.linalg.eigh(mu.data)
    new = project_onto_simplex(evals)
    rho = (evecs * new) @ evecs.conj().T
    record = tuple((float(a), float(b)) for a, b in zip(evals, new))
    return Tomogram(raw=mu, rephysicalized=DensityMatrix(rho), eigen_shift_record=record)


@functools.lru_cache(maxsize=8)
def _marginal_tables(n_qubits: int):
    """Index tables mapping each Pauli string to its consistent bases and parity mask."""
    bases = all_pauli_strings(n_qubits, "XYZ")
    strings = all_pauli_strings(n_qubits)
    base_idx = {str(b): k for k, b in enumerate(bases)}
    consistent = []
    masks = []
    for s in strings:
        keep = s.support
        free = [r for r in range(n_qubits) if r not in keep]
        ks = []
        for fill in itertools.product("XYZ", repeat=len(free)):
            letters = list(s.letters)
            for r, c in zip(free, fill):
                letters[r] = c
            ks.append(base_idx["".join(letters)])
        consistent.append(np.array(sorted(ks)))
        masks.append(sum(1 << (n_qubits - 1 - r) for r in keep))
    x = np.arange(2**n_qubits)
    parity = np.array([[(-1) ** bin(x_ & m).count("1") for x_ in x] for m in range(2**n_qubits)])
    return bases, strings, consistent, np.array(masks), parity


def expectations_from_table(table: np.ndarray) -> dict[PauliString, float]:
    """All 4^M expectations from a (3^M, 2^M) table of per-basis counts or probabilities.

    Integer counts are pooled exactly (numerators and denominators stay
    integers until one final division). Probability tables pool bases with
    equal weight.
    """
    n_bases, dim = table.shape
    n = dim.bit_length() - 1
    bases, strings, consistent, masks, parity = _marginal_tables(n)
    if n_bases != len(bases):
        raise ValueError(f"expected {len(bases)} bases, got {n_bases}")
    if np.issubdtype(table.dtype, np.integer):
        signed = table.astype(np.int64) @ parity.T.astype(np.int64)  # (bases, masks)
        totals = table.sum(axis=1).astype(np.int64)
        out = {}
        for s, ks, mask in zip(strings, consistent, masks):
            out[s] = int(signed[ks, mask].sum()) / int(totals[ks].sum())
        return out
    signed = table @ parity.T
    return {s: float(signed[ks, mask].mean()) for s, ks, mask in zip(strings, consistent, masks)}


def count_table(dicts: Sequence[ShotDictionary]) -> np.ndarray:
    """Stack dictionaries into the (3^M, 2^M) integer table in canonical basis order."""
    if not dicts:
        raise ValueError("no dictionaries")
    m = len(dicts[0].basis)
    bases = all_pauli_strings(m, "XYZ")
    index = {str(b): k for k, b in enumerate(bases)}
    table = np.zeros((len(bases), 2**m), dtype=np.int64)
    seen = set()
    for d in dicts:
        key = str(d.basis)
        if len(key) != m:
            raise ValueError("dictionaries do not share one register size")
        if key in seen:
            raise ValueError(f"basis {key} appears twice")
        seen.add(key)
        for bits, c in d.counts.items():
            table[index[key], int(bits, 2)] += c
    missing = [str(b) for b in bases if str(b) not in seen]
    if missing:
        raise ValueError(f"missing bases: {missing[:5]}{'...' if len(missing) > 5 else ''}")
    return table


def tomogram_from_dictionaries(dicts: Sequence[ShotDictionary]) -> Tomogram:
    table = count_table(dicts)
    n = table.shape[1].bit_length() - 1
    mu = assemble_density_matrix(expectations_from_table(table), n)
    tomo = ml_rephysicalize(mu)
    return Tomogram(tomo.raw, tomo.rephysicalized, tomo.eigen_shift_record, tuple(dicts))


def tomograph(
    register: Sequence[int],
    state,
    n_shots: int | None,
    spam: SpamModel = NO_SPAM,
    rng: np.random.Generator | None = None,
    max_qubits: int = DEFAULT_MAX_QUBITS,
) -> Tomogram:
    """Full Pauli tomography of ``register`` (positions of ``state``).

    Every one of the 3^M bases receives ``n_shots`` shots. ``n_shots=None``
    substitutes exact Born probabilities for sampled counts (readout flips
    still apply, as a channel on the distribution).
    """
    plan = TomographyPlan.for_register(register)
    m = len(plan.register)
    if not 1 <= m <= max_qubits:
        raise ValueError(f"register of {m} qubits exceeds tomography cap {max_qubits}")
    state = reduced_state(state, plan.register)
    if n_shots is None:
        flips = spam.readout_probs(m)
        table = np.stack(
            [apply_readout_flips(basis_probabilities(state, b), flips) for b in plan.bases]
        )
        return ml_rephysicalize(assemble_density_matrix(expectations_from_table(table), m))
    if rng is None:
        raise ValueError("sampled tomography needs a random generator")
    children = rng.spawn(len(plan.bases))
    dicts = [
        sample_shots(state, b, n_shots, spam, child) for b, child in zip(plan.bases, children)
    ]
    return tomogram_from_dictionaries(dicts)
