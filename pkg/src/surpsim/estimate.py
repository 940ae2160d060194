"""Per-stimulus estimation: shared sample batches, the sampling path, the
closed-form path, multi-token aggregation, and the on-disk estimates cache.

Sample streams are keyed by (seed, context, N, L), never by the target, so
one batch serves every measure evaluated on the same context and
target-independent measures are bit-identical across targets.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .backends import (Backend, log_prefix_probability, prefix_probability,
                       sample, string_probability)
from .embeddings import cosine_distance
from .errors import DataError, UnsupportedModeError
from .measures import (ENTROPY, EXPECTED_INFO_VALUE, INDICATOR, INFO_VALUE,
                       NEXT_SYM_INFO_VALUE, NEXT_SYM_PROBABILITY,
                       NEXT_SYM_SURPRISAL, PMI, SEMANTIC_UPDATE,
                       SIMILARITY_ADJUSTED, Measure)
from .rng import context_key, substream
from .tokens import Tokens, is_prefix

MODE_EXACT = "exact"
MODE_MC = "mc"

# Largest outcome count for which the quadratic first-symbol distance sum is
# attempted on the closed-form path.
MAX_EXACT_OUTCOMES = 4096


@dataclass(frozen=True)
class EstimateRequest:
    measure: str
    item_id: str
    n: int
    max_len: int
    seed: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("sample size must be >= 1")
        if self.max_len < 0:
            raise ValueError("max sample length must be >= 0")


@dataclass(frozen=True)
class Estimate:
    """One computed value; sampling parameters are None on the exact path."""

    value: float
    mode: str
    n: Optional[int] = None
    max_len: Optional[int] = None
    seed: Optional[int] = None
    wall_time: float = 0.0


def simulate_batch(backend: Backend, c: Sequence[str], n: int, max_len: int,
                   seed: int) -> List[Tokens]:
    """N ancestral samples from a stream keyed by (seed, context, n, max_len).

    Two calls with equal arguments return identical batches; backends with
    server-side sampling are delegated to with a seed derived from the same
    key.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    c = tuple(c)
    if hasattr(backend, "sample_batch"):
        from .remote import derive_server_seed
        return backend.sample_batch(c, n, max_len, derive_server_seed(seed, c, n, max_len))
    rng = substream(seed, "batch", context_key(c), n, max_len)
    return [sample(backend, c, max_len, rng) for _ in range(n)]


def _normalized_rows(rep, strings: Sequence[Tokens]) -> np.ndarray:
    cache: Dict[Tokens, np.ndarray] = {}
    rows = np.empty((len(strings), rep.represent(()).shape[0]))
    for i, v in enumerate(strings):
        key = tuple(v)
        vec = cache.get(key)
        if vec is None:
            raw = rep.represent(key)
            norm = float(np.linalg.norm(raw))
            if norm == 0.0:
                raise ValueError(f"zero-norm representation for {key!r}")
            vec = raw / norm
            cache[key] = vec
        rows[i] = vec
    return rows


def score_samples(measure: Measure, batch: Sequence[Tokens], w: Sequence[str],
                  c: Sequence[str], backend: Backend, rep=None,
                  max_len: Optional[int] = None,
                  epsilon: float = 1e-4) -> np.ndarray:
    """Per-continuation scores for a whole batch.

    Semantically one `measures.score` call per element; sequence- and
    distribution-level rules are evaluated with shared work per batch.
    """
    w = tuple(w)
    c = tuple(c)
    n = len(batch)
    kind = measure.scoring_kind
    out = np.empty(n)

    if kind == INDICATOR:
        for i, v in enumerate(batch):
            out[i] = 1.0 if is_prefix(w, v) else 0.0
        return out

    if kind == PMI:
        if not w:
            raise ValueError("pmi needs a non-empty target")
        pc = prefix_probability(backend, c, ())
        for i, v in enumerate(batch):
            out[i] = pc if is_prefix((w[0],), v) else 0.0
        return out

    if kind in (NEXT_SYM_SURPRISAL, NEXT_SYM_PROBABILITY):
        dist = backend.next_distribution(c)
        # Native smoothing keeps p > 0; a remote zero is floored at epsilon.
        probs = {o: (float(p) if p > 0 else epsilon)
                 for o, p in zip(dist.outcomes, dist.probs)}
        for i, v in enumerate(batch):
            p = probs[v[0]] if v else probs[dist.eos]
            out[i] = -math.log(p) if kind == NEXT_SYM_SURPRISAL else p
        return out

    if kind == NEXT_SYM_INFO_VALUE:
        if rep is None:
            raise ValueError("next-symbol information value needs a representation provider")
        dist = backend.next_distribution(c)
        firsts = [() if o == dist.eos else (o,) for o in dist.outcomes]
        unit = _normalized_rows(rep, firsts)
        pooled = dist.probs @ unit
        inner = {f: max(1.0 - float(np.dot(row, pooled)), 0.0)
                 for f, row in zip(firsts, unit)}
        for i, v in enumerate(batch):
            out[i] = inner[tuple(v[:1])]
        return out

    if kind == ENTROPY:
        cache: Dict[Tokens, float] = {}
        for i, v in enumerate(batch):
            v = tuple(v)
            val = cache.get(v)
            if val is None:
                truncated = max_len is not None and len(v) == max_len
                p = (prefix_probability(backend, v, c) if truncated
                     else string_probability(backend, v, c))
                if p <= 0.0:
                    raise ValueError(f"zero probability for continuation {v!r}")
                val = -math.log(p)
                cache[v] = val
            out[i] = val
        return out

    if kind == EXPECTED_INFO_VALUE:
        if rep is None:
            raise ValueError("expected information value needs a representation provider")
        if n < 2:
            raise ValueError("expected information value needs at least two samples")
        unit = _normalized_rows(rep, [tuple(v) for v in batch])
        total = unit.sum(axis=0)
        # Mean cosine distance to the other samples: sum_j d(i, j) over j != i
        # collapses to n - row_i . total because each row is unit length.
        out = (n - unit @ total) / (n - 1)
        return np.maximum(out, 0.0)

    if kind in (INFO_VALUE, SIMILARITY_ADJUSTED):
        if rep is None:
            raise ValueError(f"{measure.name} needs a representation provider")
        rw = rep.represent(w)
        cache: Dict[Tokens, float] = {}
        for i, v in enumerate(batch):
            v = tuple(v)
            val = cache.get(v)
            if val is None:
                d = cosine_distance(rep.represent(v), rw)
                val = d if kind == INFO_VALUE else min(max(1.0 - d / 2.0, 0.0), 1.0)
                cache[v] = val
            out[i] = val
        return out

    if kind == SEMANTIC_UPDATE:
        if rep is None:
            raise ValueError("semantic update needs a representation provider")
        if not c:
            raise ValueError("semantic update needs a non-empty context")
        if not w:
            raise ValueError("semantic update needs a non-empty target")
        update = float(np.abs(rep.activations(w[0]) - rep.activations(c[-1])).sum())
        for i, v in enumerate(batch):
            out[i] = update if is_prefix((w[0],), v) else 0.0
        return out

    raise ValueError(f"unknown scoring kind {kind!r}")


def estimate_mc(measure: Measure, w: Sequence[str], c: Sequence[str],
                backend: Backend, rep=None, *, n: int, max_len: int, seed: int,
                batch: Optional[Sequence[Tokens]] = None) -> Estimate:
    """Sampling path: average the scores of N continuations, then warp.

    Bit-reproducible given (seed, n, max_len, backend, measure); passing a
    precomputed ``batch`` (from `simulate_batch` with the same key) skips
    re-sampling.
    """
    start = time.perf_counter()
    if batch is None:
        batch = simulate_batch(backend, c, n, max_len, seed)
    scores = score_samples(measure, batch, w, c, backend, rep, max_len,
                           measure.warping.epsilon)
    value = measure.warping(float(np.mean(scores)))
    return Estimate(value, MODE_MC, n=n, max_len=max_len, seed=seed,
                    wall_time=time.perf_counter() - start)


def estimate_exact(measure: Measure, w: Sequence[str], c: Sequence[str],
                   backend: Backend, rep=None, *,
                   max_outcomes: int = MAX_EXACT_OUTCOMES) -> Estimate:
    """Closed-form path.

    Covers the indicator measures (no epsilon in the log), the next-symbol
    expectations, pmi, and, for alphabets of at most ``max_outcomes``
    outcomes with a representation provider, the next-symbol distance
    expectation.
    """
    w = tuple(w)
    c = tuple(c)
    kind = measure.scoring_kind
    start = time.perf_counter()

    if kind == INDICATOR:
        if measure.warping.kind == "neglog":
            value = -log_prefix_probability(backend, w, c)
        else:
            value = prefix_probability(backend, w, c)
    elif kind == NEXT_SYM_SURPRISAL:
        value = backend.next_distribution(c).entropy()
    elif kind == NEXT_SYM_PROBABILITY:
        dist = backend.next_distribution(c)
        value = float(np.dot(dist.probs, dist.probs))
    elif kind == PMI:
        if not w:
            raise ValueError("pmi needs a non-empty target")
        pc = prefix_probability(backend, c, ())
        p1 = backend.next_distribution(c).prob(w[0])
        if pc * p1 <= 0.0:
            raise DataError("pmi is undefined at zero probability")
        value = math.log(pc * p1)
    elif kind == NEXT_SYM_INFO_VALUE and rep is not None:
        dist = backend.next_distribution(c)
        if len(dist.outcomes) > max_outcomes:
            raise UnsupportedModeError(
                f"{measure.name}: {len(dist.outcomes)} outcomes exceed the "
                f"closed-form bound of {max_outcomes}")
        firsts = [() if o == dist.eos else (o,) for o in dist.outcomes]
        unit = _normalized_rows(rep, firsts)
        pooled = dist.probs @ unit
        value = max(1.0 - float(np.dot(pooled, pooled)), 0.0)
    else:
        raise UnsupportedModeError(f"{measure.name} has no closed form")
    return Estimate(value, MODE_EXACT, wall_time=time.perf_counter() - start)


def aggregate_word(measure: Measure, token_estimates: Sequence[float]) -> float:
    """Combine per-token estimates into a word-level estimate."""
    values = list(token_estimates)
    if not values:
        raise ValueError("cannot aggregate an empty estimate sequence")
    if measure.aggregation == "product":
        return float(math.prod(values))
    return float(sum(values))


# -- estimates cache --------------------------------------------------------

CACHE_COLUMNS = ("item_id", "measure", "mode", "N", "L", "seed", "value",
                 "wall_time_s")

CacheKey = Tuple[str, str, str, str, str, str]


def cache_key(item_id: str, measure: str, mode: str, n: Optional[int],
              max_len: Optional[int], seed: Optional[int]) -> CacheKey:
    fmt = lambda x: "" if x is None else str(x)
    return (str(item_id), measure, mode, fmt(n), fmt(max_len), fmt(seed))


def cache_row(item_id: str, measure: str, est: Estimate) -> Dict[str, str]:
    return {
        "item_id": str(item_id),
        "measure": measure,
        "mode": est.mode,
        "N": "" if est.n is None else str(est.n),
        "L": "" if est.max_len is None else str(est.max_len),
        "seed": "" if est.seed is None else str(est.seed),
        "value": format(est.value, ".17g"),
        "wall_time_s": format(est.wall_time, ".6g"),
    }


def read_cache(path) -> Dict[CacheKey, Dict[str, str]]:
    """Load an estimates cache TSV; returns {} for a missing file."""
    rows: Dict[CacheKey, Dict[str, str]] = {}
    if not os.path.exists(path):
        return rows
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if tuple(header) != CACHE_COLUMNS:
            raise DataError(f"{path}: unexpected cache header {header}")
        for lineno, raw in enumerate(fh, start=2):
            parts = raw.rstrip("\n").split("\t")
            if len(parts) != len(CACHE_COLUMNS):
                raise DataError(f"{path}:{lineno}: expected {len(CACHE_COLUMNS)} columns")
            row = dict(zip(CACHE_COLUMNS, parts))
            rows[tuple(parts[:6])] = row
    return rows


def append_cache(path, rows: Sequence[Dict[str, str]]) -> None:
    """Append rows, writing the header first if the file is new."""
    new_file = not os.path.exists(path)
    with open(path, "a", encoding="utf-8") as fh:
        if new_file:
            fh.write("\t".join(CACHE_COLUMNS) + "\n")
        for row in rows:
            fh.write("\t".join(row[c] for c in CACHE_COLUMNS) + "\n")


def cache_digest(path) -> str:
    """SHA-256 over the cache contents minus the wall-time column.

    Wall times vary run to run; everything else must be bit-identical for
    equal manifests.
    """
    h = hashlib.sha256()
    for key, row in sorted(read_cache(path).items()):
        h.update("\t".join(key).encode("utf-8"))
        h.update(b"=")
        h.update(row["value"].encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()
