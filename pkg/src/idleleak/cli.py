"""Command-line entry point: ``idleleak run|analyze|ingest|report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from idleleak import __version__
from idleleak.analysis import FIT_COLUMNS, analyze_rows
from idleleak.archive import (
    SampleRow,
    atomic_directory,
    parse_tomography_document,
    read_json,
    read_samples_csv,
    tomography_document,
    write_json,
    write_samples_csv,
)
from idleleak.config import ConfigError, ExperimentConfig
from idleleak.protocol import LeakageSample, delta_chi, run_leakage_sample
from idleleak.qstate import all_pauli_strings
from idleleak.tomography import expectation_fraction, marginalize, tomogram_from_dictionaries

log = logging.getLogger("idleleak")

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3


def _run_one(args) -> LeakageSample:
    index, cfg, seed, keep = args
    return run_leakage_sample(cfg, seed, index, keep)


def run_archive(config: ExperimentConfig, out: Path, jobs: int = 1, overwrite: bool = False,
                config_text: str | None = None) -> Path:
    """Execute the campaign and write the archive atomically."""
    campaign = config.campaign()
    plan = campaign.plan(config.master_seed)
    log.info("running %d samples", len(plan))
    tasks = [(i, cfg, seed, config.store_raw) for i, cfg, seed in plan]
    t0 = time.time()
    samples: list[LeakageSample] = []
    step = max(1, len(tasks) // 20)
    if jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for k, s in enumerate(pool.map(_run_one, tasks, chunksize=8)):
                samples.append(s)
                if (k + 1) % step == 0:
                    log.info("  %d/%d samples", k + 1, len(tasks))
    else:
        for k, t in enumerate(tasks):
            samples.append(_run_one(t))
            if (k + 1) % step == 0:
                log.info("  %d/%d samples", k + 1, len(tasks))
    samples.sort(key=lambda s: s.sample_index)

    with atomic_directory(out, overwrite=overwrite) as tmp:
        write_samples_csv(tmp / "samples.csv", [SampleRow.from_sample(s) for s in samples])
        (tmp / "config.json").write_text(config_text if config_text is not None else
                                         json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
        if config.store_raw:
            raw = tmp / "raw"
            raw.mkdir()
            for s in samples:
                if s.n_shots is None:
                    continue
                register = [s.target, *s.set.members]
                for bit, tomo in enumerate(s.tomograms):
                    doc = tomography_document(
                        register, s.n_shots, tomo.dictionaries,
                        sample_id=s.sample_index, prepared_bit=bit, kind=s.set.kind.value,
                        device_label=s.device_label, wait_time_ns=round(s.wait_time * 1e9, 6),
                    )  # fmt: skip
                    write_json(raw / f"sample_{s.sample_index:06d}_{bit}.json.gz", doc, compress=True)
        write_json(tmp / "meta.json", {
            "created_unix": time.time(), "runtime_s": time.time() - t0, "version": __version__,
            "python": platform.python_version(), "numpy": np.__version__,
        })  # fmt: skip
    return out


def analyze_archive(archive: Path, K: float | None = None) -> dict:
    archive = Path(archive)
    rows = read_samples_csv(archive / "samples.csv")
    cfg_path = archive / "config.json"
    cfg = ExperimentConfig.load(cfg_path) if cfg_path.exists() else None
    kw = {}
    if cfg is not None:
        kw = dict(K=cfg.filter_K, bad_qubit_threshold=cfg.bad_qubit_threshold, n_boot=cfg.n_boot,
                  seed=cfg.master_seed, histogram_bins=cfg.histogram_bins, welch_tail=cfg.welch_tail)
    if K is not None:
        kw["K"] = K
    report, hists, fits = analyze_rows(rows, **kw)
    for entry in report["strata"]:
        if "error" in entry:
            log.warning("stratum %s/%s: %s", entry["kind"], entry["n_shots"], entry["error"])
    hdir = archive / "histograms"
    hdir.mkdir(exist_ok=True)
    for stem, bins in hists.items():
        with open(hdir / f"{stem}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lower", "count"])
            for lo, c in bins:
                w.writerow([repr(float(lo)), c])
    with open(archive / "fits.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIT_COLUMNS)
        for kind, f in fits.items():
            w.writerow([kind, repr(f.eta), repr(f.eta_stderr), repr(f.eta_shots), repr(f.eta_shots_stderr), f.n_boot])
    write_json(archive / "report.json", report)
    return report


def _computable_marginals(dicts) -> list[dict]:
    """Every Pauli expectation whose consistent bases are all present, as exact fractions."""
    m = len(dicts[0].basis)
    out = []
    for p in all_pauli_strings(m):
        if not p.support:
            continue
        try:
            d = marginalize(dicts, p)
        except ValueError:
            continue
        frac = expectation_fraction(d)
        out.append({
            "pauli": str(p), "expectation": f"{frac.numerator}/{frac.denominator}", "value": float(frac),
            "probabilities": {k: str(Fraction(v, d.n_shots)) for k, v in sorted(d.counts.items())},
        })  # fmt: skip
    return out


def ingest_directory(counts_dir: Path, out: Path, overwrite: bool = False) -> dict:
    """Tomography and delta-chi for externally produced shot dictionaries.

    Files are paired into samples by their ``sample_id`` key (or a
    ``<stem>_0`` / ``<stem>_1`` naming) together with ``prepared_bit``.
    """
    counts_dir = Path(counts_dir)
    if not counts_dir.is_dir():
        raise FileNotFoundError(f"{counts_dir} is not a directory")
    files = sorted(p for p in counts_dir.iterdir() if p.name.endswith((".json", ".json.gz")))
    manifest = {"ingested": [], "errors": [], "unpaired": []}
    verification = []
    runs: dict[str, dict[int, tuple]] = {}
    for path in files:
        try:
            doc = read_json(path)
            register, n_shots, dicts = parse_tomography_document(doc)
        except (ValueError, OSError) as exc:
            manifest["errors"].append({"file": path.name, "error": str(exc)})
            continue
        manifest["ingested"].append(path.name)
        verification.append({"file": path.name, "register": register, "n_shots": n_shots,
                             "marginals": _computable_marginals(dicts)})
        stem = path.name.split(".json")[0]
        sample_id = str(doc.get("sample_id", stem.rsplit("_", 1)[0]))
        bit = doc.get("prepared_bit")
        if bit is None and stem.rsplit("_", 1)[-1] in ("0", "1") and "_" in stem:
            bit = int(stem.rsplit("_", 1)[-1])
        if bit in (0, 1):
            runs.setdefault(sample_id, {})[int(bit)] = (path.name, doc, register, n_shots, dicts)
        else:
            manifest["unpaired"].append(path.name)

    rows = []
    for index, (sample_id, pair) in enumerate(sorted(runs.items())):
        if set(pair) != {0, 1}:
            manifest["unpaired"].extend(v[0] for v in pair.values())
            continue
        (_, doc0, reg0, n0, d0), (_, doc1, reg1, n1, d1) = pair[0], pair[1]
        try:
            if reg0 != reg1 or n0 != n1:
                raise ValueError("paired runs differ in register or shot count")
            t0, t1 = tomogram_from_dictionaries(d0), tomogram_from_dictionaries(d1)
        except ValueError as exc:
            manifest["errors"].append({"sample": sample_id, "error": str(exc)})
            continue
        chi_s, chi_sq, delta = delta_chi(t0.rephysicalized, t1.rephysicalized, 0)
        rows.append(SampleRow(
            sample_index=int(doc0.get("sample_id", index)) if str(doc0.get("sample_id", "")).isdigit() else index,
            device_label=str(doc0.get("device_label", "external")), target=reg0[0],
            kind=str(doc0.get("kind", "P")), members=tuple(reg0[1:]), n_shots=n0,
            wait_time_ns=float(doc0.get("wait_time_ns", 0.0)), chi_S=chi_s, chi_SQ=chi_sq,
            delta_chi=delta, seed=0,
        ))  # fmt: skip
    if not files:
        log.warning("no shot-dictionary files in %s", counts_dir)
    with atomic_directory(out, overwrite=overwrite) as tmp:
        write_samples_csv(tmp / "samples.csv", sorted(rows, key=lambda r: r.sample_index))
        write_json(tmp / "manifest.json", manifest)
        write_json(tmp / "verification.json", verification)
    for err in manifest["errors"]:
        log.error("rejected %s", err)
    return manifest


def format_report(report: dict) -> str:
    lines = [f"samples: {report['n_samples']}   K = {report['thresholds']['filter_K']}"]
    lines.append(f"{'kind':>4} {'N_S':>7} {'n':>5} {'kept':>5} {'bad':>4} {'mean':>10} {'sem':>10}")
    for e in report["strata"]:
        if "error" in e:
            lines.append(f"{e['kind']:>4} {e['n_shots']:>7} {e['n_samples']:>5}  ({e['error']})")
            continue
        sem = e["sem"] if e["sem"] is not None else float("nan")
        lines.append(f"{e['kind']:>4} {e['n_shots']:>7} {e['n_samples']:>5} {e['n_kept']:>5} "
                     f"{e['n_bad_qubit']:>4} {e['mean']:>10.5f} {sem:>10.5f}")
    for w in report["welch"]:
        if "error" in w:
            lines.append(f"Welch N_S={w['n_shots']}: {w['error']}")
        else:
            lines.append(f"Welch N_S={w['n_shots']}: z = {w['statistic']:.4f}, df = {w['df']:.1f}, "
                         f"p = {w['p_value']:.4g}")
    for kind, f in report["fits"].items():
        if "error" in f:
            lines.append(f"fit {kind}: {f['error']}")
        else:
            lines.append(f"fit {kind}: eta = {f['eta']:.5f} +/- {f['eta_stderr']:.5f}, "
                         f"eta_shots = {f['eta_shots']:.4f} +/- {f['eta_shots_stderr']:.4f}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idleleak", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="simulate a campaign and write a results archive")
    r.add_argument("config", type=Path)
    r.add_argument("--out", type=Path, default=None, help="archive directory (default runs/<config stem>)")
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--force", action="store_true", help="replace an existing archive")
    a = sub.add_parser("analyze", help="filter, test and fit an archive")
    a.add_argument("archive", type=Path)
    a.add_argument("--filter-k", type=float, default=None)
    i = sub.add_parser("ingest", help="tomograph external shot-dictionary JSON files")
    i.add_argument("counts_dir", type=Path)
    i.add_argument("--out", type=Path, default=None)
    i.add_argument("--force", action="store_true")
    rep = sub.add_parser("report", help="print the analysis summary of an archive")
    rep.add_argument("archive", type=Path)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "run":
            text = args.config.read_text()
            config = ExperimentConfig.load(args.config)
            config.campaign()
            out = args.out or Path("runs") / args.config.stem
            run_archive(config, out, jobs=args.jobs, overwrite=args.force, config_text=text)
            log.info("archive written to %s", out)
        elif args.command == "analyze":
            report = analyze_archive(args.archive, args.filter_k)
            log.info(format_report(report))
        elif args.command == "ingest":
            out = args.out or args.counts_dir.with_name(args.counts_dir.name + "_archive")
            manifest = ingest_directory(args.counts_dir, out, overwrite=args.force)
            log.info("ingested %d files (%d errors) into %s", len(manifest["ingested"]),
                     len(manifest["errors"]), out)
        elif args.command == "report":
            path = args.archive / "report.json"
            report = read_json(path) if path.exists() else analyze_archive(args.archive)
            print(format_report(report))
    except ConfigError as exc:
        log.error("invalid config: %s", exc)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
