"""Outlier filtering, Welch test, shot-noise ansatz fit and bootstrap."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats as sps

DEFAULT_K = 4.0
BAD_QUBIT_THRESHOLD = 0.12


@dataclass(frozen=True)
class FilterSpec:
    K: float
    q1: float
    q3: float
    iqr: float

    @property
    def lower(self) -> float:
        return self.q1 - self.K * self.iqr

    @property
    def upper(self) -> float:
        return self.q3 + self.K * self.iqr

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def quartiles(samples: Sequence[float]) -> tuple[float, float]:
    """First and third quartiles, linear interpolation at (n-1)q."""
    q1, q3 = np.quantile(np.asarray(samples, dtype=float), [0.25, 0.75], method="linear")
    return float(q1), float(q3)


def box_filter(samples: Sequence[float], K: float = DEFAULT_K, spec: FilterSpec | None = None):
    """Split samples by the fence [Q1 - K*IQR, Q3 + K*IQR].

    Returns ``(kept, outliers, spec)``. Passing a frozen ``spec`` reuses its
    fence instead of recomputing quartiles.
    """
    x = [float(v) for v in samples]
    if spec is None:
        if K <= 0:
            raise ValueError("K must be positive")
        if len(x) < 4:
            raise ValueError(f"box filter needs at least 4 samples, got {len(x)}")
        q1, q3 = quartiles(x)
        spec = FilterSpec(float(K), q1, q3, q3 - q1)
    kept = [v for v in x if spec.contains(v)]
    outliers = [v for v in x if not spec.contains(v)]
    return kept, outliers, spec


@dataclass(frozen=True)
class WelchResult:
    statistic: float
    df: float
    p_value: float
    tail: str = "normal"


def welch_one_tailed(a: Sequence[float], b: Sequence[float], tail: str = "normal") -> WelchResult:
    """Welch statistic for H1: mean(a) > mean(b).

    ``tail="normal"`` takes the p-value from the standard normal (the
    statistic is reported as a z-value); ``tail="t"`` uses Student's t with
    the Welch-Satterthwaite degrees of freedom.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two samples")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0:
        raise ValueError("both groups have zero variance")
    stat = (a.mean() - b.mean()) / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    if tail == "normal":
        p = sps.norm.sf(stat)
    elif tail == "t":
        p = sps.t.sf(stat, df)
    else:
        raise ValueError(f"unknown tail convention {tail!r}")
    return WelchResult(float(stat), float(df), float(p), tail)


@dataclass(frozen=True)
class FitResult:
    eta: float
    eta_shots: float
    eta_stderr: float
    eta_shots_stderr: float
    n_boot: int


def _points_array(points) -> np.ndarray:
    arr = np.asarray([(float(n), float(m), float(s)) for n, m, s in points], dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("fit needs at least two points")
    if np.any(arr[:, 0] <= 0):
        raise ValueError("shot counts must be positive")
    if len(np.unique(arr[:, 0])) < 2:
        raise ValueError("fit needs at least two distinct shot counts")
    return arr


def _wls(x: np.ndarray, y: np.ndarray, w: np.ndarray):
    """Closed-form weighted least squares for y = a + b*x.

    Uses weighted-centred sums to avoid cancellation in the normal-equation
    determinant. For a single fit the sums are correctly rounded (fsum), so
    the result does not depend on point order. ``y`` may carry leading batch
    axes; the fit runs along the last one.
    """
    fsum = math.fsum
    sw = fsum(w)
    xbar = fsum(w * x) / sw
    dx = x - xbar
    sxx = fsum(w * dx * dx)
    if not sxx > 1e-14 * fsum(w * x * x) or not np.isfinite(sxx):
        raise ValueError("rank-deficient fit")
    if np.ndim(y) == 1:
        b = fsum(w * dx * y) / sxx
        return float(fsum(w * y) / sw - b * xbar), float(b)
    b = (w * dx * y).sum(axis=-1) / sxx
    return (w * y).sum(axis=-1) / sw - b * xbar, b


def fit_shot_ansatz(points) -> tuple[float, float]:
    """Fit mean = eta + eta_shots / sqrt(N_S), weights 1/stderr^2.

    ``points`` are ``(n_shots, mean, stderr)`` triples. Returns
    ``(eta, eta_shots)``.
    """
    arr = _points_array(points)
    if np.any(arr[:, 2] <= 0):
        raise ValueError("standard errors must be positive")
    return _wls(1.0 / np.sqrt(arr[:, 0]), arr[:, 1], 1.0 / arr[:, 2] ** 2)


def weighted_r2(points, eta: float | None = None, eta_shots: float | None = None) -> float:
    """Weighted coefficient of determination of the shot-noise ansatz."""
    arr = _points_array(points)
    if eta is None or eta_shots is None:
        eta, eta_shots = fit_shot_ansatz(points)
    w = 1.0 / arr[:, 2] ** 2
    y = arr[:, 1]
    pred = eta + eta_shots / np.sqrt(arr[:, 0])
    ybar = (w * y).sum() / w.sum()
    ss_tot = (w * (y - ybar) ** 2).sum()
    return float(1.0 - (w * (y - pred) ** 2).sum() / ss_tot)


def bootstrap_fit(points, n_boot: int, rng: np.random.Generator) -> FitResult:
    """Fit plus standard errors from parametric resampling of each mean."""
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    arr = _points_array(points)
    if np.any(arr[:, 2] < 0):
        raise ValueError("standard errors must be non-negative")
    # zero stderr points get a vanishing (equal) weight floor so the fit stays defined
    se = arr[:, 2]
    floor = se[se > 0].min() * 1e-6 if np.any(se > 0) else 1.0
    w = 1.0 / np.maximum(se, floor) ** 2
    x = 1.0 / np.sqrt(arr[:, 0])
    eta, eta_shots = _wls(x, arr[:, 1], w)
    draws = rng.normal(arr[:, 1], se, size=(n_boot, arr.shape[0]))
    rep_eta, rep_shots = _wls(x, draws, w)
    return FitResult(
        eta=eta,
        eta_shots=eta_shots,
        eta_stderr=float(rep_eta.std(ddof=1)),
        eta_shots_stderr=float(rep_shots.std(ddof=1)),
        n_boot=int(n_boot),
    )


def mean_and_sem(samples: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("no samples")
    sem = x.std(ddof=1) / math.sqrt(x.size) if x.size > 1 else float("nan")
    return float(x.mean()), float(sem)


def histogram(
    samples: Sequence[float],
    bin_width: float | None = None,
    bin_count: int | None = None,
    origin: float | None = None,
) -> list[tuple[float, int]]:
    """Left-closed bins covering the data; returns ``(lower_edge, count)`` pairs.

    With ``bin_width``, edges sit on ``origin + k*bin_width`` (origin defaults
    to 0). With ``bin_count``, the data range is split evenly and the maximum
    falls in the last bin.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("histogram of no samples")
    if (bin_width is None) == (bin_count is None):
        raise ValueError("give exactly one of bin_width or bin_count")
    if bin_count is not None:
        if bin_count <= 0:
            raise ValueError("bin_count must be positive")
        lo, hi = float(x.min()), float(x.max())
        width = (hi - lo) / bin_count if hi > lo else 1.0
        idx = np.minimum(np.floor((x - lo) / width).astype(int), bin_count - 1)
        counts = np.bincount(idx, minlength=bin_count)
        return [(lo + k * width, int(c)) for k, c in enumerate(counts)]
    if not bin_width > 0:
        raise ValueError("bin width must be positive")
    origin = 0.0 if origin is None else float(origin)
    # round before flooring so values sitting on an edge are not lost to float dust
    idx = np.floor(np.round((x - origin) / bin_width, 9)).astype(int)
    first, last = idx.min(), idx.max()
    counts = np.bincount(idx - first, minlength=last - first + 1)
    return [(origin + (first + k) * bin_width, int(c)) for k, c in enumerate(counts)]
