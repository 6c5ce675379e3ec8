"""Archive analysis: per-stratum filtering, P-vs-R Welch tests and the shot-noise fit."""

from __future__ import annotations

import math
from dataclasses import asdict
from typing import Sequence

import numpy as np

from idleleak.archive import SampleRow
from idleleak.stats import (
    BAD_QUBIT_THRESHOLD,
    DEFAULT_K,
    FitResult,
    bootstrap_fit,
    box_filter,
    histogram,
    mean_and_sem,
    welch_one_tailed,
    weighted_r2,
)

FIT_COLUMNS = ("kind", "eta", "eta_stderr", "eta_shots", "eta_shots_stderr", "n_boot")


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def strata_of(rows: Sequence[SampleRow]) -> dict[tuple[str, int], list[float]]:
    out: dict[tuple[str, int], list[float]] = {}
    for r in sorted(rows, key=lambda r: r.sample_index):
        out.setdefault((r.kind, r.n_shots), []).append(r.delta_chi)
    return dict(sorted(out.items(), key=lambda kv: (kv[0][1], kv[0][0])))


def analyze_rows(
    rows: Sequence[SampleRow],
    K: float = DEFAULT_K,
    bad_qubit_threshold: float = BAD_QUBIT_THRESHOLD,
    n_boot: int = 1000,
    seed: int = 0,
    histogram_bins: int = 40,
    welch_tail: str = "normal",
):
    """Return ``(report, histograms, fits)`` computed from sample rows alone.

    ``histograms`` maps a file stem to ``(lower_edge, count)`` pairs and
    ``fits`` maps a kind to its ``FitResult``.
    """
    report = {
        "thresholds": {
            "filter_K": K,
            "bad_qubit_threshold": bad_qubit_threshold,
            "n_boot": n_boot,
            "bootstrap_seed": seed,
            "welch_tail": welch_tail,
            "quartile_rule": "linear interpolation at (n-1)q",
        },
        "n_samples": len(rows),
        "strata": [],
        "welch": [],
        "fits": {},
    }
    hists: dict[str, list[tuple[float, int]]] = {}
    kept_by: dict[tuple[str, int], list[float]] = {}
    for (kind, n_shots), values in strata_of(rows).items():
        entry = {"kind": kind, "n_shots": n_shots, "n_samples": len(values)}
        entry["n_bad_qubit"] = sum(v >= bad_qubit_threshold for v in values)
        hists[f"{kind}_{n_shots}"] = histogram(values, bin_count=histogram_bins)
        try:
            kept, outliers, spec = box_filter(values, K)
        except ValueError as exc:
            entry["error"] = str(exc)
            report["strata"].append(entry)
            continue
        mean, sem = mean_and_sem(kept)
        entry.update(
            n_kept=len(kept),
            n_outliers=len(outliers),
            fence={"q1": spec.q1, "q3": spec.q3, "iqr": spec.iqr, "lower": spec.lower, "upper": spec.upper},
            mean=mean,
            sem=_clean(sem),
        )
        kept_by[(kind, n_shots)] = kept
        report["strata"].append(entry)

    for n_shots in sorted({n for _, n in kept_by}):
        p, r = kept_by.get(("P", n_shots)), kept_by.get(("R", n_shots))
        if p is None or r is None:
            continue
        try:
            w = welch_one_tailed(p, r, tail=welch_tail)
        except ValueError as exc:
            report["welch"].append({"n_shots": n_shots, "error": str(exc)})
            continue
        report["welch"].append({"n_shots": n_shots, **asdict(w)})

    fits: dict[str, FitResult] = {}
    for k_index, kind in enumerate(("P", "R")):
        points = []
        for entry in report["strata"]:
            if entry["kind"] == kind and entry["n_shots"] > 0 and entry.get("sem"):
                points.append((entry["n_shots"], entry["mean"], entry["sem"]))
        if len({p[0] for p in points}) < 2:
            report["fits"][kind] = {"error": "fewer than two shot counts with usable statistics"}
            continue
        fit = bootstrap_fit(points, n_boot, np.random.default_rng([seed, k_index]))
        fits[kind] = fit
        report["fits"][kind] = {**asdict(fit), "weighted_r2": weighted_r2(points, fit.eta, fit.eta_shots)}
    return report, hists, fits
