"""Idle-leakage protocol: Holevo quantities, delta-chi and sample orchestration."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from idleleak.device import (
    NO_SPAM,
    CouplingGraph,
    HamiltonianSpec,
    SpamModel,
    coordination_targets,
    extract_neighborhood,
    prepare_state,
)
from idleleak.qstate import (
    DensityMatrix,
    Statevector,
    as_density_matrix,
    idle_unitary,
    partial_trace,
    permute_qubits,
    reduced_state,
    tensor_product,
    von_neumann_entropy,
)
from idleleak.tomography import DEFAULT_MAX_QUBITS, Tomogram, tomograph


@dataclass(frozen=True)
class Alphabet:
    """Messages (p_k, rho_k) sent through the device."""

    entries: tuple[tuple[float, DensityMatrix], ...]

    def __post_init__(self):
        entries = tuple((float(p), as_density_matrix(r)) for p, r in self.entries)
        if not entries:
            raise ValueError("empty alphabet")
        probs = np.array([p for p, _ in entries])
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError(f"alphabet probabilities {probs.tolist()} are not a distribution")
        if len({r.dim for _, r in entries}) != 1:
            raise ValueError("alphabet states have different dimensions")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def equiprobable(cls, states: Sequence) -> Alphabet:
        return cls(tuple((1.0 / len(states), s) for s in states))


def holevo(alphabet: Alphabet) -> float:
    """chi = S(sum_k p_k rho_k) - sum_k p_k S(rho_k), in bits."""
    for _, rho in alphabet.entries:
        if not rho.physical:
            raise ValueError("Holevo quantity of an aphysical message state")
    avg = sum(p * rho.data for p, rho in alphabet.entries)
    avg = avg / np.trace(avg).real
    chi = von_neumann_entropy(avg) - sum(p * von_neumann_entropy(rho) for p, rho in alphabet.entries)
    return float(max(chi, 0.0))


def delta_chi(rho0_SQ, rho1_SQ, target_position: int = 0) -> tuple[float, float, float]:
    """Return (chi_S, chi_SQ, chi_SQ - chi_S) for the binary equiprobable alphabet."""
    rho0, rho1 = as_density_matrix(rho0_SQ), as_density_matrix(rho1_SQ)
    if rho0.dim != rho1.dim:
        raise ValueError("conditional states have different dimensions")
    if not 0 <= target_position < rho0.n_qubits:
        raise ValueError(f"target position {target_position} outside register")
    chi_sq = holevo(Alphabet.equiprobable([rho0, rho1]))
    chi_s = holevo(
        Alphabet.equiprobable([partial_trace(rho0, [target_position]), partial_trace(rho1, [target_position])])
    )
    return chi_s, chi_sq, chi_sq - chi_s


class SetKind(str, enum.Enum):
    PLAQUETTE = "P"
    RANDOM = "R"

    @classmethod
    def parse(cls, value) -> SetKind:
        if isinstance(value, cls):
            return value
        text = str(value).strip()
        for kind in cls:
            if text.upper() in (kind.value, kind.name):
                return kind
        raise ValueError(f"unknown complementary-set kind {value!r}")


@dataclass(frozen=True)
class ComplementarySet:
    kind: SetKind
    members: tuple[int, ...]
    target: int


def select_complementary(
    graph: CouplingGraph, target: int, kind, size: int, rng: np.random.Generator
) -> ComplementarySet:
    """Plaquette of nearest neighbours, or ``size`` random non-neighbours."""
    kind = SetKind.parse(kind)
    neighbors = graph.neighbors(target)
    if kind is SetKind.PLAQUETTE:
        if size != len(neighbors):
            raise ValueError(f"plaquette of qubit {target} has {len(neighbors)} members, requested {size}")
        return ComplementarySet(kind, tuple(neighbors), target)
    excluded = set(neighbors) | {target}
    eligible = [q for q in range(graph.n_qubits) if q not in excluded]
    if size > len(eligible):
        raise ValueError(f"only {len(eligible)} non-neighbour qubits available, requested {size}")
    picks = rng.choice(len(eligible), size=size, replace=False)
    return ComplementarySet(kind, tuple(sorted(eligible[i] for i in picks)), target)


@dataclass(frozen=True)
class DeviceModel:
    """One device instance: a label and its static idle Hamiltonian on the full graph."""

    label: str
    hamiltonian: HamiltonianSpec


@dataclass(frozen=True)
class LeakageSample:
    device_label: str
    target: int
    set: ComplementarySet
    n_shots: int | None
    delta_chi: float
    chi_S: float
    chi_SQ: float
    wait_time: float
    seed: int
    sample_index: int = 0
    tomograms: tuple[Tomogram, ...] = field(default=(), repr=False, compare=False)


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one protocol realization needs besides its seed.

    ``n_shots=None`` selects exact mode: Born probabilities replace sampled
    counts. ``target=None`` draws the target among qubits of degree
    ``coordination``; the device is drawn uniformly from ``devices``.
    """

    graph: CouplingGraph
    devices: tuple[DeviceModel, ...]
    kind: SetKind = SetKind.PLAQUETTE
    n_shots: int | None = 4000
    spam: SpamModel = NO_SPAM
    wait_time: float = 800e-9
    radius: int = 2
    max_sim_qubits: int = 14
    coordination: int = 3
    set_size: int | None = None
    target: int | None = None
    omega_disorder: float = 0.0
    env_pattern: str | None = None
    max_register: int = DEFAULT_MAX_QUBITS

    def __post_init__(self):
        object.__setattr__(self, "kind", SetKind.parse(self.kind))
        object.__setattr__(self, "devices", tuple(self.devices))
        if not self.devices:
            raise ValueError("at least one device model is required")
        for dev in self.devices:
            if dev.hamiltonian.graph != self.graph:
                raise ValueError(f"device {dev.label!r} Hamiltonian is not defined on the configured graph")
        if self.n_shots is not None and self.n_shots <= 0:
            raise ValueError("n_shots must be positive (or None for exact mode)")
        if self.radius < 1:
            raise ValueError("neighborhood radius must be at least 1")
        if self.env_pattern is not None and (
            len(self.env_pattern) != self.graph.n_qubits or set(self.env_pattern) - {"0", "1"}
        ):
            raise ValueError("env_pattern must be a bitstring over every graph qubit")
        if self.wait_time < 0 or self.omega_disorder < 0:
            raise ValueError("wait_time and omega_disorder must be non-negative")
        if self.target is not None and self.graph.degree(self.target) != self.coordination:
            raise ValueError(f"target {self.target} does not have coordination {self.coordination}")
        if not coordination_targets(self.graph, self.coordination):
            raise ValueError(f"no qubit has coordination {self.coordination}")
        if 1 + self.complementary_size > self.max_register:
            raise ValueError(f"register of {1 + self.complementary_size} qubits exceeds cap {self.max_register}")

    @property
    def complementary_size(self) -> int:
        return self.coordination if self.set_size is None else self.set_size

    @property
    def exact(self) -> bool:
        return self.n_shots is None


def simulation_region(graph: CouplingGraph, target: int, radius: int, max_qubits: int) -> dict[int, int]:
    """Old->new labels of the simulated neighborhood, shrinking the radius to fit ``max_qubits``."""
    r = radius
    while True:
        _, relabel = extract_neighborhood(graph, target, r)
        if len(relabel) <= max_qubits or r <= 1:
            break
        r -= 1
    if len(relabel) > max_qubits:
        raise ValueError(f"radius-1 neighborhood of {target} has {len(relabel)} qubits, cap is {max_qubits}")
    return relabel


def conditional_register_states(config: ProtocolConfig, device: DeviceModel, qset: ComplementarySet,
                                rng: np.random.Generator) -> list[DensityMatrix]:
    """States of the register (target first, then members) after idling, for target bits 0 and 1.

    Complementary qubits outside the simulated neighborhood are prepared
    independently and never interact with the target.
    """
    graph = config.graph
    target = qset.target
    register = (target,) + qset.members
    relabel = simulation_region(graph, target, config.radius, config.max_sim_qubits)
    inv = {new: old for old, new in relabel.items()}
    ham = device.hamiltonian.restrict(relabel)
    n_sim = len(relabel)
    disorder = rng.uniform(-config.omega_disorder, config.omega_disorder, size=n_sim)
    ham = ham.with_onsite(np.asarray(ham.onsite_freqs) + disorder)
    unitary = idle_unitary(ham, config.wait_time)

    env = config.env_pattern or "0" * graph.n_qubits
    inside = [q for q in register if q in relabel]
    outside = [q for q in register if q not in relabel]
    states = []
    for bit in (0, 1):
        pattern = "".join(str(bit) if inv[k] == target else env[inv[k]] for k in range(n_sim))
        psi = prepare_state(pattern, config.spam, rng)
        psi_t = Statevector(unitary @ psi.amplitudes)
        parts = [reduced_state(psi_t, [relabel[q] for q in inside])]
        if outside:
            ext = prepare_state("".join(env[q] for q in outside), config.spam, rng)
            parts.append(DensityMatrix.from_statevector(ext))
        joint = tensor_product(*parts) if len(parts) > 1 else parts[0]
        order = inside + outside
        states.append(permute_qubits(joint, [order.index(q) for q in register]))
    return states


def run_leakage_sample(config: ProtocolConfig, seed: int, sample_index: int = 0,
                       keep_tomograms: bool = False) -> LeakageSample:
    """One realization: prepare, idle, tomograph for both target bits, compute delta-chi."""
    rng = np.random.default_rng(seed)
    device = config.devices[int(rng.integers(len(config.devices)))]
    if config.target is None:
        candidates = sorted(coordination_targets(config.graph, config.coordination))
        target = candidates[int(rng.integers(len(candidates)))]
    else:
        target = config.target
    qset = select_complementary(config.graph, target, config.kind, config.complementary_size, rng)
    states = conditional_register_states(config, device, qset, rng)
    m = 1 + len(qset.members)
    tomos = [tomograph(range(m), s, config.n_shots, config.spam, rng, config.max_register) for s in states]
    chi_s, chi_sq, delta = delta_chi(tomos[0].rephysicalized, tomos[1].rephysicalized, 0)
    return LeakageSample(
        device_label=device.label,
        target=target,
        set=qset,
        n_shots=config.n_shots,
        delta_chi=delta,
        chi_S=chi_s,
        chi_SQ=chi_sq,
        wait_time=config.wait_time,
        seed=int(seed),
        sample_index=sample_index,
        tomograms=tuple(tomos) if keep_tomograms else (),
    )


def sample_seed(master_seed: int, index: int) -> int:
    """Deterministic 63-bit seed for sample ``index`` of a campaign."""
    state = np.random.SeedSequence([int(master_seed), int(index)]).generate_state(2, np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))


@dataclass(frozen=True)
class Stratum:
    kind: SetKind
    n_shots: int | None
    count: int

    def __post_init__(self):
        object.__setattr__(self, "kind", SetKind.parse(self.kind))
        if self.count < 0:
            raise ValueError("stratum sample count must be non-negative")


REFERENCE_STRATA = (
    Stratum(SetKind.PLAQUETTE, 4000, 609), Stratum(SetKind.RANDOM, 4000, 600),
    Stratum(SetKind.PLAQUETTE, 8000, 507), Stratum(SetKind.RANDOM, 8000, 480),
    Stratum(SetKind.PLAQUETTE, 16000, 324), Stratum(SetKind.RANDOM, 16000, 288),
    Stratum(SetKind.PLAQUETTE, 32000, 252), Stratum(SetKind.RANDOM, 32000, 204),
    Stratum(SetKind.PLAQUETTE, 64000, 157), Stratum(SetKind.RANDOM, 64000, 157),
)  # fmt: skip


@dataclass(frozen=True)
class CampaignConfig:
    """A protocol template plus the number of samples per (kind, N_S) stratum."""

    protocol: ProtocolConfig
    strata: tuple[Stratum, ...] = REFERENCE_STRATA

    def plan(self, master_seed: int) -> list[tuple[int, ProtocolConfig, int]]:
        """(sample_index, per-sample config, seed) for every sample, in execution order."""
        out = []
        index = 0
        for st in self.strata:
            cfg = replace(self.protocol, kind=st.kind, n_shots=st.n_shots)
            for _ in range(st.count):
                out.append((index, cfg, sample_seed(master_seed, index)))
                index += 1
        return out


def run_campaign(config: CampaignConfig, master_seed: int, progress=None,
                 keep_tomograms: bool = False) -> list[LeakageSample]:
    """Run every planned sample; target and device are randomized inside each sample."""
    plan = config.plan(master_seed)
    samples = []
    for k, (index, cfg, seed) in enumerate(plan):
        samples.append(run_leakage_sample(cfg, seed, index, keep_tomograms))
        if progress is not None:
            progress(k + 1, len(plan))
    return samples
