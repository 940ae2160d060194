"""Estimator diagnostics: bootstrap variation, correlation between
resamples, correlation matrices between measures, and runtime profiling."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as _scipy_stats

from .estimate import estimate_exact, score_samples, simulate_batch
from .measures import Measure
from .rng import substream

# Per-stimulus means below this magnitude make the coefficient of variation
# meaningless; they are flagged and excluded from aggregates.
NEAR_ZERO_MEAN = 1e-9


def bootstrap_scores(scores: Sequence[float], b: int, seed: int,
                     warping=None) -> np.ndarray:
    """B bootstrap resamples of the per-sample scores, one warped mean each.

    Each resample draws N indices uniformly with replacement; warping is
    applied after averaging, mirroring how estimates are formed.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n = scores.shape[0]
    if n < 1 or b < 1:
        raise ValueError("bootstrap needs N >= 1 scores and B >= 1 resamples")
    rng = substream(seed, "bootstrap", n, b)
    idx = rng.integers(0, n, size=(b, n))
    means = scores[idx].mean(axis=1)
    if warping is not None and warping.kind != "identity":
        means = np.array([warping(m) for m in means])
    return means


def coefficient_of_variation(values: Sequence[float]) -> float:
    """Sample standard deviation over mean; NaN when the mean is near zero."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    if abs(mean) < NEAR_ZERO_MEAN:
        return math.nan
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return sd / mean


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; NaN flags zero variance."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("pearson needs two equal-length vectors of length >= 3")
    xc = x - x.mean()
    yc = y - y.mean()
    # One sqrt of the product keeps perfectly (anti)correlated integer-like
    # inputs, e.g. mirrored rank vectors, at exactly +-1.
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    if denom == 0.0:
        return math.nan
    return float(np.clip(float(xc @ yc) / denom, -1.0, 1.0))


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Rank correlation with average ranks for ties."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("spearman needs two equal-length vectors of length >= 3")
    return pearson(_scipy_stats.rankdata(x), _scipy_stats.rankdata(y))


@dataclass
class ResampleCorrelation:
    """Summary of the Pearson correlations over all resample-column pairs."""

    mean: float
    ci_low: float
    ci_high: float
    n_pairs: int
    n_excluded_columns: int


def resample_correlation(matrix: np.ndarray) -> ResampleCorrelation:
    """Pearson r for every unordered pair of resample columns.

    ``matrix`` is stimuli x resamples. Computed in one pass over
    standardized columns; zero-variance columns are excluded and counted.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] < 3 or matrix.shape[1] < 2:
        raise ValueError("resample correlation needs M >= 3 stimuli and B >= 2 resamples")
    means = matrix.mean(axis=0, keepdims=True)
    centered = matrix - means
    norms = np.linalg.norm(centered, axis=0)
    # Centering a constant column leaves rounding residue, so the
    # zero-variance test needs a scale-relative floor.
    keep = norms > 1e-12 * (1.0 + np.abs(means[0]))
    n_excluded = int((~keep).sum())
    z = centered[:, keep] / norms[keep]
    b = z.shape[1]
    if b < 2:
        raise ValueError("fewer than two resample columns with variance")
    corr = z.T @ z
    iu = np.triu_indices(b, k=1)
    values = np.clip(corr[iu], -1.0, 1.0)
    lo, hi = np.percentile(values, [2.5, 97.5])
    return ResampleCorrelation(float(values.mean()), float(lo), float(hi),
                               int(values.size), n_excluded)


@dataclass
class StimulusVariation:
    item_id: str
    mean: float
    sd: float
    cv: float


@dataclass
class BootstrapReport:
    """Per-stimulus bootstrap variation plus the aggregate coefficient of
    variation with a 95% confidence interval for its mean."""

    per_stimulus: List[StimulusVariation]
    mean_cv: float
    cv_ci_low: float
    cv_ci_high: float
    b: int
    n: int
    max_len: int
    seed: int
    n_excluded: int = 0


def bootstrap_report(resampled: Dict[str, np.ndarray], b: int, n: int,
                     max_len: int, seed: int) -> BootstrapReport:
    """Aggregate per-stimulus resample vectors into a report.

    Stimuli whose resample mean is within NEAR_ZERO_MEAN of zero are
    excluded from the aggregate and counted.
    """
    rows: List[StimulusVariation] = []
    cvs: List[float] = []
    n_excluded = 0
    for item_id, values in resampled.items():
        mu = float(np.mean(values))
        sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        cv = coefficient_of_variation(values)
        rows.append(StimulusVariation(item_id, mu, sd, cv))
        if math.isnan(cv):
            n_excluded += 1
        else:
            cvs.append(cv)
    if cvs:
        arr = np.asarray(cvs)
        mean_cv = float(arr.mean())
        half = 1.96 * float(arr.std(ddof=1)) / math.sqrt(len(cvs)) if len(cvs) > 1 else 0.0
        ci = (mean_cv - half, mean_cv + half)
    else:
        mean_cv, ci = math.nan, (math.nan, math.nan)
    return BootstrapReport(rows, mean_cv, ci[0], ci[1], b, n, max_len, seed,
                           n_excluded)


@dataclass
class RuntimeRow:
    measure: str
    mode: str
    n: Optional[int]
    max_len: Optional[int]
    seconds_per_stimulus: float


def profile_runtime(backend, stimuli: Sequence[Tuple[str, tuple, tuple]],
                    measures: Sequence[Measure], n_grid: Sequence[int],
                    l_grid: Sequence[int], seed: int, rep=None) -> List[RuntimeRow]:
    """Wall-clock seconds per stimulus for every (measure, N, L) cell.

    ``stimuli`` is a sequence of (item_id, context_tokens, target_tokens).
    Closed-form measures additionally get an exact-path baseline row.
    """
    rows: List[RuntimeRow] = []
    count = max(len(stimuli), 1)
    for measure in measures:
        for max_len in l_grid:
            for n in n_grid:
                start = time.perf_counter()
                for _, c, w in stimuli:
                    batch = simulate_batch(backend, c, n, max_len, seed)
                    score_samples(measure, batch, w, c, backend, rep, max_len,
                                  measure.warping.epsilon)
                rows.append(RuntimeRow(measure.name, "mc", n, max_len,
                                       (time.perf_counter() - start) / count))
        if measure.closed_form:
            start = time.perf_counter()
            for _, c, w in stimuli:
                estimate_exact(measure, w, c, backend, rep)
            rows.append(RuntimeRow(measure.name, "exact", None, None,
                                   (time.perf_counter() - start) / count))
    return rows


@dataclass
class CorrelationMatrix:
    """Symmetric correlation matrix over named estimate series."""

    names: List[str]
    values: np.ndarray
    method: str

    def __post_init__(self):
        if self.method not in ("pearson", "spearman"):
            raise ValueError(f"unknown correlation method {self.method!r}")

    def entry(self, a: str, b: str) -> float:
        return float(self.values[self.names.index(a), self.names.index(b)])


def correlation_matrix(series: Dict[str, Sequence[float]], method: str) -> CorrelationMatrix:
    """Pairwise correlations between aligned estimate series."""
    names = list(series)
    corr = pearson if method == "pearson" else spearman
    k = len(names)
    values = np.eye(k)
    for i in range(k):
        for j in range(i + 1, k):
            r = corr(series[names[i]], series[names[j]])
            values[i, j] = values[j, i] = r
    return CorrelationMatrix(names, values, method)
