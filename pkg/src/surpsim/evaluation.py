"""Predictive-power harness.

Ingests stimulus datasets and frequency tables, builds design matrices with
optional spillover lags, fits ordinary least squares, and scores the
out-of-sample gain in R-squared from adding (or substituting) a target
predictor, with significance from a paired permutation test.
"""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats as _scipy_stats

from .errors import DataError

MEASUREMENT_COLUMNS = (
    "cloze_p", "cloze_entropy", "rating", "ELAN", "LAN", "N400", "EPNP",
    "P600", "PNP", "rt_first_fixation", "rt_first_pass", "rt_right_bounded",
    "rt_self_paced",
)
READING_TIME_COLUMNS = tuple(c for c in MEASUREMENT_COLUMNS if c.startswith("rt_"))
BASELINE_PREDICTORS = ("target_length", "log_frequency", "context_length")

DATASET_KEY_COLUMNS = ("item_id", "sentence_id", "word_index", "context", "target")

# Out-of-vocabulary words fall back to this many occurrences per million.
OOV_FREQUENCY_FLOOR = 0.1


@dataclass
class Stimulus:
    """One context-target pair with its word metadata and measurements."""

    item_id: str
    sentence_id: str
    word_index: int
    context: str
    target: str
    target_length: int = 0
    context_length: int = 0
    frequency: float = OOV_FREQUENCY_FLOOR
    measurements: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        self.target_length = len(self.target)
        self.context_length = len(self.context.split())
        if len(self.target.split()) != 1:
            raise DataError(
                f"stimulus {self.item_id}: target {self.target!r} is not a single word")

    @property
    def log_frequency(self) -> float:
        return math.log(self.frequency + 1.0)


def load_frequencies(path) -> Dict[str, float]:
    """word<TAB>count-per-million rows."""
    table: Dict[str, float] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected word<TAB>count_per_million")
            try:
                table[parts[0]] = float(parts[1])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric frequency") from None
    if not table:
        raise DataError(f"frequency file {path} is empty")
    return table


def lookup_frequency(word: str, table: Optional[Dict[str, float]],
                     floor: float = OOV_FREQUENCY_FLOOR) -> float:
    if table is None:
        return floor
    value = table.get(word)
    if value is None:
        value = table.get(word.lower())
    return floor if value is None else value


def load_dataset(path, frequency_path=None,
                 oov_floor: float = OOV_FREQUENCY_FLOOR) -> List[Stimulus]:
    """Parse the stimulus TSV; empty measurement cells stay absent.

    Columns: item_id, sentence_id, word_index, context, target, then any
    subset of the measurement columns.
    """
    freq_table = load_frequencies(frequency_path) if frequency_path else None
    stimuli: List[Stimulus] = []
    seen_ids = set()
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        missing = [c for c in DATASET_KEY_COLUMNS if c not in header]
        if missing:
            raise DataError(f"{path}: missing required columns {missing}")
        unknown = [c for c in header
                   if c not in DATASET_KEY_COLUMNS and c not in MEASUREMENT_COLUMNS]
        if unknown:
            raise DataError(f"{path}: unknown columns {unknown}")
        col = {name: i for i, name in enumerate(header)}
        for lineno, raw in enumerate(fh, start=2):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} columns, got {len(parts)}")
            try:
                word_index = int(parts[col["word_index"]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer word_index") from None
            measurements = {}
            for name in MEASUREMENT_COLUMNS:
                if name in col and parts[col[name]] != "":
                    try:
                        measurements[name] = float(parts[col[name]])
                    except ValueError:
                        raise DataError(
                            f"{path}:{lineno}: non-numeric {name} cell") from None
            item_id = parts[col["item_id"]]
            if item_id in seen_ids:
                raise DataError(f"{path}:{lineno}: duplicate item_id {item_id!r}")
            seen_ids.add(item_id)
            target = parts[col["target"]]
            stim = Stimulus(
                item_id=item_id,
                sentence_id=parts[col["sentence_id"]],
                word_index=word_index,
                context=parts[col["context"]],
                target=target,
                frequency=lookup_frequency(target, freq_table, oov_floor),
                measurements=measurements,
            )
            stimuli.append(stim)
    if not stimuli:
        raise DataError(f"dataset {path} contains no stimuli")
    return stimuli


def laplace_cloze(counts: Dict[str, int], target: str,
                  alpha: float = 1.0) -> Tuple[float, float]:
    """Additively smoothed response proportions from a cloze count table.

    The support is the set of observed responses plus the target. Returns
    the smoothed target probability and the entropy of the smoothed
    distribution in nats.
    """
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if not counts:
        raise ValueError("cloze counts are empty")
    support = dict(counts)
    support.setdefault(target, 0)
    total = sum(support.values()) + alpha * len(support)
    probs = {w: (k + alpha) / total for w, k in support.items()}
    entropy = -sum(p * math.log(p) for p in probs.values() if p > 0)
    return probs[target], entropy


@dataclass
class RegressionSpec:
    """A baseline-vs-target regressor comparison.

    ``target`` lists predictors added to the baseline (the usual, nested
    case). ``target_full`` instead gives the complete target column list for
    substitution comparisons, where a baseline predictor is swapped out.
    """

    response: str
    baseline: Tuple[str, ...] = BASELINE_PREDICTORS
    target: Tuple[str, ...] = ()
    target_full: Optional[Tuple[str, ...]] = None
    spillover_lags: int = 0
    folds: int = 10
    seeds: int = 100
    grouped_by_sentence: bool = False

    def __post_init__(self):
        self.baseline = tuple(self.baseline)
        self.target = tuple(self.target)
        if self.target_full is not None:
            self.target_full = tuple(self.target_full)
        if self.spillover_lags < 0:
            raise ValueError("spillover_lags must be >= 0")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")
        if self.target and self.target_full is not None:
            raise ValueError("give either added target predictors or a full list, not both")
        if self.target_full is None:
            # Nested comparison: the baseline must be a subset of the target
            # regressor's predictors, which holds by construction here.
            overlap = set(self.baseline) & set(self.target)
            if overlap:
                warnings.warn(f"target predictors {sorted(overlap)} duplicate the baseline")

    def target_columns(self) -> Tuple[str, ...]:
        if self.target_full is not None:
            return self.target_full
        return self.baseline + self.target


def spillover_lags_for(response: str) -> int:
    """Two lagged copies for reading times, none otherwise."""
    return 2 if response in READING_TIME_COLUMNS else 0


@dataclass
class DesignResult:
    """Aligned design matrices for the baseline and target regressors."""

    x_base: np.ndarray
    x_target: np.ndarray
    y: np.ndarray
    item_ids: List[str]
    n_dropped_missing: int
    n_dropped_spillover: int


_STIMULUS_FIELDS = ("target_length", "log_frequency", "context_length")


def _predictor_value(name: str, stim: Stimulus,
                     estimates: Dict[str, Dict[str, float]]) -> Optional[float]:
    if name in _STIMULUS_FIELDS:
        return float(getattr(stim, name))
    series = estimates.get(name)
    if series is not None:
        return series.get(stim.item_id)
    if name in stim.measurements:
        return stim.measurements[name]
    return None


def build_design(spec: RegressionSpec, stimuli: Sequence[Stimulus],
                 estimates: Dict[str, Dict[str, float]]) -> DesignResult:
    """Assemble intercept + predictors (+ lagged copies) for both regressors.

    With ``spillover_lags`` = k, every predictor also enters as its value at
    the k preceding words of the same sentence; rows whose preceding words
    are absent from the dataset are dropped and counted, as are rows with
    any missing cell.
    """
    base_cols = spec.baseline
    target_cols = spec.target_columns()
    all_cols = list(dict.fromkeys(base_cols + target_cols))
    by_position = {(s.sentence_id, s.word_index): s for s in stimuli}

    rows_base: List[List[float]] = []
    rows_target: List[List[float]] = []
    ys: List[float] = []
    ids: List[str] = []
    dropped_missing = 0
    dropped_spillover = 0
    for stim in stimuli:
        y = stim.measurements.get(spec.response)
        if y is None:
            dropped_missing += 1
            continue
        lag_stims = [stim]
        ok = True
        for lag in range(1, spec.spillover_lags + 1):
            prev = by_position.get((stim.sentence_id, stim.word_index - lag))
            if prev is None:
                ok = False
                break
            lag_stims.append(prev)
        if not ok:
            dropped_spillover += 1
            continue
        values: Dict[Tuple[str, int], float] = {}
        for lag, s in enumerate(lag_stims):
            for name in all_cols:
                v = _predictor_value(name, s, estimates)
                if v is None or not math.isfinite(v):
                    ok = False
                    break
                values[(name, lag)] = v
            if not ok:
                break
        if not ok:
            dropped_missing += 1
            continue
        row_b = [1.0] + [values[(n, lag)] for lag in range(spec.spillover_lags + 1)
                         for n in base_cols]
        row_t = [1.0] + [values[(n, lag)] for lag in range(spec.spillover_lags + 1)
                         for n in target_cols]
        rows_base.append(row_b)
        rows_target.append(row_t)
        ys.append(y)
        ids.append(stim.item_id)
    if not rows_base:
        raise DataError(
            f"no usable rows for response {spec.response!r} after filtering")
    return DesignResult(np.asarray(rows_base), np.asarray(rows_target),
                        np.asarray(ys), ids, dropped_missing, dropped_spillover)


def ols_fit(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Least-squares coefficients; least-norm fallback under rank deficiency."""
    coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        warnings.warn(f"rank-deficient design ({rank} < {x.shape[1]}); "
                      "using the least-norm solution")
    return coef


def r2_out_of_sample(coef: np.ndarray, x_test: np.ndarray,
                     y_test: np.ndarray) -> float:
    """1 - SS_res / SS_tot with SS_tot taken about the test-fold mean."""
    if y_test.size == 0:
        raise ValueError("empty test fold")
    resid = y_test - x_test @ coef
    ss_res = float(resid @ resid)
    centered = y_test - y_test.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        return 0.0
    return 1.0 - ss_res / ss_tot


def fold_of(item_id: str, seed: int, folds: int) -> int:
    """Deterministic fold from (seed, item_id) alone."""
    digest = hashlib.blake2b(f"{seed}|{item_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % folds


def permutation_test(baseline_r2: Sequence[float], target_r2: Sequence[float],
                     resamples: int = 10_000, seed: int = 0) -> float:
    """Paired sign-flip test of H0: target R2 <= baseline R2 (one-sided).

    The statistic is the difference of sample means; the p-value is the
    proportion of resampled statistics at least as large as the observed
    one, never below 1 / (resamples + 1).
    """
    baseline_r2 = np.asarray(baseline_r2, dtype=np.float64)
    target_r2 = np.asarray(target_r2, dtype=np.float64)
    if baseline_r2.shape != target_r2.shape or baseline_r2.size < 2:
        raise ValueError("permutation test needs >= 2 paired values")

    def statistic(x, y, axis):
        return np.mean(x, axis=axis) - np.mean(y, axis=axis)

    result = _scipy_stats.permutation_test(
        (target_r2, baseline_r2), statistic, permutation_type="samples",
        n_resamples=resamples, alternative="greater", vectorized=True,
        rng=np.random.default_rng(seed))
    return float(result.pvalue)


@dataclass
class EvalReport:
    """Distribution of the out-of-sample R2 gain across folds and seeds."""

    response: str
    label: str
    delta_samples: np.ndarray
    mean: float
    ci_low: float
    ci_high: float
    p_value: float
    n_rows: int
    n_dropped_missing: int
    n_dropped_spillover: int
    baseline_r2_mean: float
    target_r2_mean: float
    folds: int
    seeds: int

    def to_json(self) -> dict:
        return {
            "kind": "eval",
            "response": self.response,
            "label": self.label,
            "mean_delta_r2": self.mean,
            "ci95": [self.ci_low, self.ci_high],
            "p_value": self.p_value,
            "n_rows": self.n_rows,
            "n_dropped_missing": self.n_dropped_missing,
            "n_dropped_spillover": self.n_dropped_spillover,
            "baseline_r2_mean": self.baseline_r2_mean,
            "target_r2_mean": self.target_r2_mean,
            "folds": self.folds,
            "seeds": self.seeds,
            "delta_r2_samples": [float(v) for v in self.delta_samples],
        }


def delta_r2_cv(spec: RegressionSpec, stimuli: Sequence[Stimulus],
                estimates: Dict[str, Dict[str, float]], *, label: str = "",
                permutation_resamples: int = 10_000,
                permutation_seed: int = 0) -> EvalReport:
    """K-fold cross-validation repeated over seeds.

    Per (seed, fold): fit both regressors on the training split, evaluate
    both on the held-out fold, and record the R2 difference. Fold
    assignment depends only on (seed, item id), so results are independent
    of scheduling.
    """
    design = build_design(spec, stimuli, estimates)
    n = design.y.shape[0]
    group_ids = design.item_ids
    if spec.grouped_by_sentence:
        by_id = {s.item_id: s.sentence_id for s in stimuli}
        group_ids = [by_id[i] for i in design.item_ids]
    base_scores: List[float] = []
    target_scores: List[float] = []
    for seed in range(spec.seeds):
        folds = np.fromiter((fold_of(g, seed, spec.folds) for g in group_ids),
                            dtype=np.int64, count=n)
        for k in range(spec.folds):
            test = folds == k
            train = ~test
            n_test = int(test.sum())
            n_train = int(train.sum())
            if n_test == 0 or n_train < design.x_target.shape[1]:
                raise DataError(
                    f"degenerate fold {k} under seed {seed}: "
                    f"{n_train} train rows, {n_test} test rows")
            coef_b = ols_fit(design.x_base[train], design.y[train])
            coef_t = ols_fit(design.x_target[train], design.y[train])
            base_scores.append(r2_out_of_sample(coef_b, design.x_base[test],
                                                design.y[test]))
            target_scores.append(r2_out_of_sample(coef_t, design.x_target[test],
                                                  design.y[test]))
    base_arr = np.asarray(base_scores)
    target_arr = np.asarray(target_scores)
    delta = target_arr - base_arr
    lo, hi = np.percentile(delta, [2.5, 97.5])
    p = permutation_test(base_arr, target_arr, resamples=permutation_resamples,
                         seed=permutation_seed)
    return EvalReport(
        response=spec.response,
        label=label or ("+".join(spec.target) if spec.target else "target"),
        delta_samples=delta,
        mean=float(delta.mean()),
        ci_low=float(lo),
        ci_high=float(hi),
        p_value=p,
        n_rows=n,
        n_dropped_missing=design.n_dropped_missing,
        n_dropped_spillover=design.n_dropped_spillover,
        baseline_r2_mean=float(base_arr.mean()),
        target_r2_mean=float(target_arr.mean()),
        folds=spec.folds,
        seeds=spec.seeds,
    )


def write_eval_report(report: EvalReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=1, sort_keys=True)
        fh.write("\n")
