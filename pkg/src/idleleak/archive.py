"""On-disk formats: samples.csv, shot-dictionary JSON and atomic archive writes."""

from __future__ import annotations

import csv
import gzip
import io
import json
import os
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from idleleak.device import ShotDictionary
from idleleak.protocol import LeakageSample

SAMPLE_COLUMNS = (
    "sample_index", "device_label", "target", "kind", "members", "n_shots",
    "wait_time_ns", "chi_S", "chi_SQ", "delta_chi", "seed",
)  # fmt: skip


@dataclass(frozen=True)
class SampleRow:
    """One samples.csv row. ``n_shots == 0`` marks an exact-probability sample."""

    sample_index: int
    device_label: str
    target: int
    kind: str
    members: tuple[int, ...]
    n_shots: int
    wait_time_ns: float
    chi_S: float
    chi_SQ: float
    delta_chi: float
    seed: int

    @classmethod
    def from_sample(cls, s: LeakageSample) -> SampleRow:
        return cls(
            sample_index=s.sample_index,
            device_label=s.device_label,
            target=s.target,
            kind=s.set.kind.value,
            members=tuple(s.set.members),
            n_shots=0 if s.n_shots is None else int(s.n_shots),
            wait_time_ns=round(s.wait_time * 1e9, 6),
            chi_S=s.chi_S,
            chi_SQ=s.chi_SQ,
            delta_chi=s.delta_chi,
            seed=s.seed,
        )

    def to_csv(self) -> list[str]:
        return [
            str(self.sample_index), self.device_label, str(self.target), self.kind,
            ";".join(map(str, self.members)), str(self.n_shots), _fmt(self.wait_time_ns),
            _fmt(self.chi_S), _fmt(self.chi_SQ), _fmt(self.delta_chi), str(self.seed),
        ]  # fmt: skip

    @classmethod
    def from_csv(cls, rec: dict) -> SampleRow:
        return cls(
            sample_index=int(rec["sample_index"]),
            device_label=rec["device_label"],
            target=int(rec["target"]),
            kind=rec["kind"],
            members=tuple(int(m) for m in rec["members"].split(";") if m != ""),
            n_shots=int(rec["n_shots"]),
            wait_time_ns=float(rec["wait_time_ns"]),
            chi_S=float(rec["chi_S"]),
            chi_SQ=float(rec["chi_SQ"]),
            delta_chi=float(rec["delta_chi"]),
            seed=int(rec["seed"]),
        )


def _fmt(x: float) -> str:
    return repr(float(x))


def write_samples_csv(path: Path, rows: Iterable[SampleRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAMPLE_COLUMNS)
        for r in rows:
            w.writerow(r.to_csv())


def read_samples_csv(path: Path) -> list[SampleRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != SAMPLE_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return [SampleRow.from_csv(rec) for rec in reader]


def tomography_document(register: Sequence[int], n_shots: int, dicts: Sequence[ShotDictionary], **meta) -> dict:
    doc = {"register": [int(q) for q in register], "n_shots": int(n_shots)}
    doc.update(meta)
    doc["dictionaries"] = [d.to_json() for d in dicts]
    return doc


def parse_tomography_document(doc: dict) -> tuple[list[int], int, list[ShotDictionary]]:
    """Validate one tomography-run document; raises ``ValueError`` with a readable reason."""
    if not isinstance(doc, dict):
        raise ValueError("document is not a JSON object")
    for key in ("register", "n_shots", "dictionaries"):
        if key not in doc:
            raise ValueError(f"missing key {key!r}")
    register = doc["register"]
    if not isinstance(register, list) or not all(isinstance(q, int) for q in register) or not register:
        raise ValueError("'register' must be a non-empty list of integers")
    n_shots = doc["n_shots"]
    if not isinstance(n_shots, int) or n_shots <= 0:
        raise ValueError("'n_shots' must be a positive integer")
    entries = doc["dictionaries"]
    if not isinstance(entries, list) or not entries:
        raise ValueError("'dictionaries' must be a non-empty list")
    dicts = []
    for k, entry in enumerate(entries):
        if not isinstance(entry, dict) or set(entry) != {"basis", "counts"}:
            raise ValueError(f"dictionary {k} must have exactly 'basis' and 'counts'")
        d = ShotDictionary(entry["basis"], entry["counts"])
        if len(d.basis) != len(register):
            raise ValueError(f"dictionary {k} basis {d.basis} does not match register length {len(register)}")
        if d.n_shots != n_shots:
            raise ValueError(f"dictionary {k} holds {d.n_shots} shots, document says {n_shots}")
        dicts.append(d)
    return register, n_shots, dicts


def write_json(path: Path, obj, compress: bool = False) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if compress:
        buf = io.BytesIO()
        with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
            gz.write(text.encode())
        Path(path).write_bytes(buf.getvalue())
    else:
        Path(path).write_text(text)


def read_json(path: Path):
    path = Path(path)
    if path.suffix == ".gz":
        return json.loads(gzip.decompress(path.read_bytes()).decode())
    return json.loads(path.read_text())


@contextmanager
def atomic_directory(target: Path, overwrite: bool = False):
    """Yield a temporary directory that replaces ``target`` only if the block succeeds."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    if target.exists() and not overwrite:
        raise FileExistsError(f"{target} already exists")
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if target.exists():
        old = target.with_name(f".{target.name}.old")
        shutil.rmtree(old, ignore_errors=True)
        os.replace(target, old)
        os.replace(tmp, target)
        shutil.rmtree(old, ignore_errors=True)
    else:
        os.replace(tmp, target)
