"""Experiment configuration: strict JSON loading and conversion to campaign objects."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from idleleak.device import CouplingGraph, SpamModel, falcon27_coupling_map, random_hamiltonian
from idleleak.protocol import REFERENCE_STRATA, CampaignConfig, DeviceModel, ProtocolConfig, SetKind, Stratum
from idleleak.stats import BAD_QUBIT_THRESHOLD, DEFAULT_K

TWO_PI = 2 * math.pi

FALCON_DEVICES = (
    {"label": "ibm_algiers", "seed": 0},
    {"label": "ibm_cairo", "seed": 1},
    {"label": "ibm_hanoi", "seed": 2},
    {"label": "ibmq_kolkata", "seed": 3},
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HamiltonianConfig:
    """Uniform parameter intervals in rad/s. Static per device except ``omega_disorder``."""

    omega_range: tuple[float, float] = (-TWO_PI * 0.5e6, TWO_PI * 0.5e6)
    omega_disorder: float = TWO_PI * 50e3
    J_range: tuple[float, float] = (0.0, TWO_PI * 5e3)
    zeta_range: tuple[float, float] = (0.0, TWO_PI * 50e3)


@dataclass(frozen=True)
class ExperimentConfig:
    master_seed: int
    graph: str | dict = "falcon27"
    devices: tuple[dict, ...] = FALCON_DEVICES
    hamiltonian: HamiltonianConfig = field(default_factory=HamiltonianConfig)
    spam: dict = field(default_factory=lambda: {"p_prep": 0.0, "p_readout": 0.0})
    wait_time_ns: float = 800.0
    neighborhood_radius: int = 2
    max_sim_qubits: int = 14
    coordination: int = 3
    env_pattern: str | None = None
    exact_mode: bool = False
    shot_grid: tuple[int, ...] = (4000, 8000, 16000, 32000, 64000)
    samples_per_stratum: dict = field(
        default_factory=lambda: {
            k.value: {str(s.n_shots): s.count for s in REFERENCE_STRATA if s.kind is k} for k in SetKind
        }
    )
    target: int | None = None
    filter_K: float = DEFAULT_K
    bad_qubit_threshold: float = BAD_QUBIT_THRESHOLD
    n_boot: int = 1000
    histogram_bins: int = 40
    welch_tail: str = "normal"
    store_raw: bool = True

    def __post_init__(self):
        if isinstance(self.master_seed, bool) or not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError("master_seed must be a non-negative integer")
        if not self.shot_grid or any(int(n) != n or n <= 0 for n in self.shot_grid):
            raise ConfigError("shot_grid must be a non-empty list of positive integers")
        if len(set(self.shot_grid)) != len(self.shot_grid):
            raise ConfigError("shot_grid has duplicate entries")
        for kind, table in self.samples_per_stratum.items():
            try:
                SetKind.parse(kind)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            for n, count in table.items():
                if int(n) not in self.shot_grid:
                    raise ConfigError(f"samples_per_stratum lists N_S={n} which is not in shot_grid")
                if int(count) != count or count < 0:
                    raise ConfigError(f"sample count for {kind}/{n} must be a non-negative integer")
        if self.filter_K <= 0:
            raise ConfigError("filter_K must be positive")
        if self.n_boot < 100:
            raise ConfigError("n_boot must be at least 100")
        if self.histogram_bins <= 0:
            raise ConfigError("histogram_bins must be positive")
        if self.welch_tail not in ("normal", "t"):
            raise ConfigError("welch_tail must be 'normal' or 't'")
        if self.wait_time_ns < 0:
            raise ConfigError("wait_time_ns must be non-negative")
        labels = [d.get("label") for d in self.devices]
        if not labels or len(set(labels)) != len(labels):
            raise ConfigError("devices need unique labels")

    @classmethod
    def from_dict(cls, raw: dict) -> ExperimentConfig:
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "master_seed" not in raw:
            raise ConfigError("master_seed is required")
        kw = dict(raw)
        if "hamiltonian" in kw:
            ham = kw["hamiltonian"]
            hknown = set(HamiltonianConfig.__dataclass_fields__)
            bad = sorted(set(ham) - hknown)
            if bad:
                raise ConfigError(f"unknown hamiltonian keys: {bad}")
            ham = {k: tuple(v) if isinstance(v, list) else v for k, v in ham.items()}
            kw["hamiltonian"] = HamiltonianConfig(**ham)
        if "spam" in kw:
            bad = sorted(set(kw["spam"]) - {"p_prep", "p_readout"})
            if bad:
                raise ConfigError(f"unknown spam keys: {bad}")
        for key in ("devices", "shot_grid"):
            if key in kw:
                kw[key] = tuple(kw[key])
        for dev in kw.get("devices", ()):
            if not isinstance(dev, dict) or set(dev) != {"label", "seed"}:
                raise ConfigError("each device entry needs exactly 'label' and 'seed'")
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        text = Path(path).read_text()
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["hamiltonian"] = {k: list(v) if isinstance(v, tuple) else v for k, v in out["hamiltonian"].items()}
        out["devices"] = [dict(d) for d in self.devices]
        out["shot_grid"] = list(self.shot_grid)
        return out

    def build_graph(self) -> CouplingGraph:
        if self.graph == "falcon27":
            return falcon27_coupling_map()
        if isinstance(self.graph, dict) and set(self.graph) == {"n_qubits", "edges"}:
            try:
                return CouplingGraph(int(self.graph["n_qubits"]), [tuple(e) for e in self.graph["edges"]])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid graph: {exc}") from None
        raise ConfigError("graph must be 'falcon27' or {'n_qubits': int, 'edges': [[i, j], ...]}")

    def build_devices(self, graph: CouplingGraph) -> tuple[DeviceModel, ...]:
        h = self.hamiltonian
        out = []
        for dev in self.devices:
            rng = np.random.default_rng(int(dev["seed"]))
            ham = random_hamiltonian(graph, rng, tuple(h.omega_range), tuple(h.J_range), tuple(h.zeta_range))
            out.append(DeviceModel(str(dev["label"]), ham))
        return tuple(out)

    def strata(self) -> tuple[Stratum, ...]:
        out = []
        for n in self.shot_grid:
            for kind in SetKind:
                table = {}
                for key, t in self.samples_per_stratum.items():
                    if SetKind.parse(key) is kind:
                        table = t
                count = int(table.get(str(n), table.get(n, 0)))
                out.append(Stratum(kind, None if self.exact_mode else int(n), count))
        return tuple(out)

    def campaign(self) -> CampaignConfig:
        graph = self.build_graph()
        try:
            protocol = ProtocolConfig(
                graph=graph,
                devices=self.build_devices(graph),
                spam=SpamModel(**self.spam),
                wait_time=self.wait_time_ns * 1e-9,
                radius=self.neighborhood_radius,
                max_sim_qubits=self.max_sim_qubits,
                coordination=self.coordination,
                target=self.target,
                omega_disorder=self.hamiltonian.omega_disorder,
                env_pattern=self.env_pattern,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return CampaignConfig(protocol, self.strata())
