import csv
import gzip
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from idleleak.archive import SAMPLE_COLUMNS, SampleRow, read_json, read_samples_csv, write_samples_csv
from idleleak.cli import main
from idleleak.config import ConfigError, ExperimentConfig

from conftest import WORKED_EXAMPLE_SHOTS

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return path


@pytest.fixture
def small_config(tmp_path):
    return _write(tmp_path / "small.json", {
        "master_seed": 3,
        "shot_grid": [1000, 4000],
        "samples_per_stratum": {"P": {"1000": 5, "4000": 5}, "R": {"1000": 5, "4000": 5}},
        "spam": {"p_prep": 0.01, "p_readout": 0.01},
        "n_boot": 200,
    })


def test_minimal_config_one_row(tmp_path):
    out = tmp_path / "arch"
    assert main(["run", str(CONFIGS / "minimal.json"), "--out", str(out)]) == 0
    rows = read_samples_csv(out / "samples.csv")
    assert len(rows) == 1 and rows[0].n_shots == 0 and rows[0].kind == "P"
    assert (out / "meta.json").exists() and not (out / "raw").exists()


def test_run_columns_raw_and_rerun_identical(tmp_path, small_config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(small_config), "--out", str(a)]) == 0
    assert main(["run", str(small_config), "--out", str(b), "--jobs", "2"]) == 0
    with open(a / "samples.csv") as fh:
        assert tuple(next(csv.reader(fh))) == SAMPLE_COLUMNS
    assert (a / "samples.csv").read_bytes() == (b / "samples.csv").read_bytes()
    raw = sorted((a / "raw").iterdir())
    assert len(raw) == 40
    doc = json.loads(gzip.decompress(raw[0].read_bytes()))
    assert len(doc["dictionaries"]) == 81 and doc["prepared_bit"] == 0
    assert main(["analyze", str(a)]) == 0
    assert main(["analyze", str(b)]) == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()


def test_existing_archive_needs_force(tmp_path, small_config):
    out = tmp_path / "arch"
    assert main(["run", str(small_config), "--out", str(out)]) == 0
    assert main(["run", str(small_config), "--out", str(out)]) == 3
    assert main(["run", str(small_config), "--out", str(out), "--force"]) == 0
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_every_row_reproduces_from_its_seed(tmp_path, small_config):
    from idleleak.protocol import run_leakage_sample

    out = tmp_path / "arch"
    main(["run", str(small_config), "--out", str(out)])
    cfg = ExperimentConfig.load(small_config)
    plan = cfg.campaign().plan(cfg.master_seed)
    for row in read_samples_csv(out / "samples.csv")[::3]:
        index, pcfg, seed = plan[row.sample_index]
        assert seed == row.seed
        again = SampleRow.from_sample(run_leakage_sample(pcfg, seed, index))
        assert again.to_csv() == row.to_csv()


def test_config_errors(tmp_path):
    bad = _write(tmp_path / "bad.json", {"master_seed": 1, "shot_grd": [4000]})
    assert main(["run", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["run", str(_write(tmp_path / "noseed.json", {})), "--out", str(tmp_path / "y")]) == 2
    (tmp_path / "broken.json").write_text("{not json")
    assert main(["run", str(tmp_path / "broken.json"), "--out", str(tmp_path / "z")]) == 2
    assert main(["run", str(tmp_path / "missing.json")]) == 3
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"master_seed": 1, "shot_grid": [4000], "samples_per_stratum": {"P": {"8000": 1}}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"master_seed": 1, "hamiltonian": {"J": 1}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"master_seed": 1, "shot_grid": [0]})


def test_reference_config_plan():
    cfg = ExperimentConfig.load(CONFIGS / "reference.json")
    plan = cfg.campaign().plan(cfg.master_seed)
    assert len(plan) == 3578
    assert cfg.filter_K == 4.0 and cfg.shot_grid == (4000, 8000, 16000, 32000, 64000)


def test_config_round_trip():
    cfg = ExperimentConfig.load(CONFIGS / "smoke.json")
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


# --- analyze ---------------------------------------------------------------


def _synthetic_archive(path, p_shift, seed=0, n=300):
    rng = np.random.default_rng(seed)
    rows = []
    index = 0
    for n_shots in (4000, 8000, 16000, 32000, 64000):
        for kind, eta in (("P", p_shift), ("R", 0.0)):
            vals = eta + 0.4 / np.sqrt(n_shots) + rng.normal(0, 0.01, n)
            vals[:3] += 0.3  # a few bad-qubit outliers
            for v in vals:
                rows.append(SampleRow(index, "dev", 12, kind, (10, 13, 15), n_shots, 800.0,
                                      0.9, 0.9 + v, v, index))  # fmt: skip
                index += 1
    path.mkdir()
    write_samples_csv(path / "samples.csv", rows)
    return path


def test_analyze_planted_leakage(tmp_path):
    arch = _synthetic_archive(tmp_path / "planted", p_shift=0.004)
    assert main(["analyze", str(arch)]) == 0
    report = read_json(arch / "report.json")
    assert report["thresholds"]["filter_K"] == 4.0
    assert all(w["p_value"] < 0.01 for w in report["welch"])
    assert report["fits"]["P"]["eta"] > 2 * report["fits"]["P"]["eta_stderr"]
    assert abs(report["fits"]["R"]["eta"]) < 3 * report["fits"]["R"]["eta_stderr"]
    assert all(e["n_outliers"] == 3 and e["n_bad_qubit"] == 3 for e in report["strata"])
    with open(arch / "fits.csv") as fh:
        assert next(csv.reader(fh)) == ["kind", "eta", "eta_stderr", "eta_shots", "eta_shots_stderr", "n_boot"]
    with open(arch / "histograms" / "P_4000.csv") as fh:
        body = list(csv.reader(fh))
    assert body[0] == ["bin_lower", "count"] and sum(int(c) for _, c in body[1:]) == 300


def test_analyze_null_p_values_are_uniformish(tmp_path):
    ps = []
    for seed in range(20):
        arch = _synthetic_archive(tmp_path / f"null{seed}", p_shift=0.0, seed=seed, n=100)
        assert main(["analyze", str(arch), "--filter-k", "4"]) == 0
        ps += [w["p_value"] for w in read_json(arch / "report.json")["welch"]]
    assert 0.35 < np.mean(ps) < 0.65


def test_analyze_small_stratum_reported(tmp_path):
    arch = tmp_path / "tiny"
    arch.mkdir()
    rows = [SampleRow(i, "d", 1, "P", (0, 2, 4), 4000, 800.0, 0.9, 0.91, 0.01 * i, i) for i in range(3)]
    write_samples_csv(arch / "samples.csv", rows)
    assert main(["analyze", str(arch), "--filter-k", "2.5"]) == 0
    report = read_json(arch / "report.json")
    assert "error" in report["strata"][0] and report["thresholds"]["filter_K"] == 2.5
    assert main(["report", str(arch)]) == 0


def test_analyze_missing_archive(tmp_path):
    assert main(["analyze", str(tmp_path / "nope")]) == 3


# --- ingest ----------------------------------------------------------------


def _worked_example_doc():
    return {
        "register": [0, 1, 2],
        "n_shots": 10,
        "dictionaries": [
            {"basis": b, "counts": {k: s.split().count(k) for k in set(s.split())}}
            for b, s in WORKED_EXAMPLE_SHOTS.items()
        ],
    }


def test_ingest_worked_example_verification(tmp_path):
    src = tmp_path / "counts"
    src.mkdir()
    _write(src / "worked.json", _worked_example_doc())
    out = tmp_path / "out"
    assert main(["ingest", str(src), "--out", str(out)]) == 0
    ver = read_json(out / "verification.json")
    xiy = next(m for m in ver[0]["marginals"] if m["pauli"] == "XIY")
    assert xiy["expectation"] == "1/3"
    assert xiy["probabilities"] == {"01": "7/30", "10": "1/10", "11": "2/3"}
    assert read_json(out / "manifest.json")["unpaired"] == ["worked.json"]


def test_ingest_empty_directory_warns(tmp_path, caplog):
    src = tmp_path / "empty"
    src.mkdir()
    out = tmp_path / "out"
    assert main(["ingest", str(src), "--out", str(out)]) == 0
    assert "no shot-dictionary files" in caplog.text
    assert read_samples_csv(out / "samples.csv") == []


def test_ingest_simulated_raw_reproduces_delta_chi(tmp_path, small_config):
    arch = tmp_path / "arch"
    main(["run", str(small_config), "--out", str(arch)])
    src = tmp_path / "raw"
    shutil.copytree(arch / "raw", src)
    (src / "garbage.json").write_text('{"register": [0], "n_shots": 5, "dictionaries": []}')
    (src / "notjson.json").write_text("[[[")
    out = tmp_path / "ingested"
    assert main(["ingest", str(src), "--out", str(out)]) == 0
    manifest = read_json(out / "manifest.json")
    assert sorted(e["file"] for e in manifest["errors"]) == ["garbage.json", "notjson.json"]
    assert len(manifest["ingested"]) == 40
    sim = {r.sample_index: r for r in read_samples_csv(arch / "samples.csv")}
    got = read_samples_csv(out / "samples.csv")
    assert len(got) == 20
    for r in got:
        s = sim[r.sample_index]
        assert (r.delta_chi, r.chi_S, r.chi_SQ) == (s.delta_chi, s.chi_S, s.chi_SQ)
        assert (r.target, r.members, r.kind, r.n_shots) == (s.target, s.members, s.kind, s.n_shots)
