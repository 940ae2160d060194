"""Language-model backends over token alphabets.

A backend exposes one capability: the conditional next-symbol distribution
given a context. Everything else (prefix and whole-string probabilities,
ancestral sampling, exhaustive enumeration) is derived here from that
single primitive, so every backend gets the derived operations for free.

Backends are immutable after construction and safe for concurrent
read-only use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Protocol, Sequence

import numpy as np

from .errors import DataError
from .tokens import DEFAULT_EOS, Alphabet, Tokens

_SUM_TOL = 1e-9


class NextSymbolDistribution:
    """Probabilities over the alphabet symbols plus the end-of-string outcome.

    ``outcomes`` lists the alphabet symbols with the end marker last;
    ``probs`` is the aligned probability vector. The vector must be
    non-negative and sum to one within 1e-9.
    """

    __slots__ = ("outcomes", "probs", "eos", "_index", "_cum")

    def __init__(self, outcomes: Sequence[str], probs, eos: str, validate: bool = True):
        self.outcomes = tuple(outcomes)
        self.probs = np.asarray(probs, dtype=np.float64)
        self.eos = eos
        self._index = {o: i for i, o in enumerate(self.outcomes)}
        self._cum = None
        if validate:
            self._validate()

    def _validate(self) -> None:
        if len(self.outcomes) != self.probs.shape[0]:
            raise ValueError("outcomes and probabilities differ in length")
        if len(self._index) != len(self.outcomes):
            raise ValueError("duplicate outcome")
        if self.eos not in self._index:
            raise ValueError("eos outcome missing from the distribution")
        if not np.all(np.isfinite(self.probs)):
            raise ValueError("non-finite probability")
        if np.any(self.probs < 0):
            raise ValueError("negative probability")
        total = float(self.probs.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_dict(cls, probs: Dict[str, float], eos: str) -> "NextSymbolDistribution":
        outcomes = [o for o in probs if o != eos] + [eos]
        return cls(outcomes, [probs[o] for o in outcomes], eos)

    def prob(self, outcome: str) -> float:
        try:
            return float(self.probs[self._index[outcome]])
        except KeyError:
            raise DataError(f"token {outcome!r} is not an outcome of this model") from None

    @property
    def eos_prob(self) -> float:
        return float(self.probs[self._index[self.eos]])

    def as_dict(self) -> Dict[str, float]:
        return {o: float(p) for o, p in zip(self.outcomes, self.probs)}

    def entropy(self) -> float:
        """Shannon entropy over all outcomes in nats (0 log 0 = 0)."""
        p = self.probs[self.probs > 0]
        return float(-(p * np.log(p)).sum())

    def sample_outcome(self, rng: np.random.Generator) -> str:
        if self._cum is None:
            self._cum = np.cumsum(self.probs)
        i = int(np.searchsorted(self._cum, rng.random(), side="right"))
        return self.outcomes[min(i, len(self.outcomes) - 1)]


class Backend(Protocol):
    alphabet: Alphabet

    def next_distribution(self, context: Tokens) -> NextSymbolDistribution: ...


class MemorylessBackend:
    """Backend with the same next-symbol distribution in every context.

    Exactly solvable, which makes it the reference fixture for the sampling
    and estimation machinery.
    """

    def __init__(self, symbol_probs: Dict[str, float], eos_prob: float, eos: str = DEFAULT_EOS):
        self.alphabet = Alphabet(symbol_probs.keys(), eos=eos)
        probs = dict(symbol_probs)
        probs[eos] = eos_prob
        self._dist = NextSymbolDistribution.from_dict(probs, eos)

    def next_distribution(self, context: Tokens) -> NextSymbolDistribution:
        return self._dist


class NGramBackend:
    """Additively smoothed n-gram model, immutable after training.

    Conditions on the last ``order - 1`` tokens of the context (fewer at the
    start of a line). With a positive pseudocount every outcome has strictly
    positive probability, so log scores are always finite.
    """

    def __init__(self, order: int, pseudocount: float, alphabet: Alphabet,
                 counts: Dict[Tokens, np.ndarray]):
        self.order = order
        self.pseudocount = pseudocount
        self.alphabet = alphabet
        self._counts = counts
        self._n_outcomes = len(alphabet) + 1
        self._zero = np.zeros(self._n_outcomes)
        self._cache: Dict[Tokens, NextSymbolDistribution] = {}
        self._outcomes = alphabet.symbols + (alphabet.eos,)
        for arr in counts.values():
            arr.setflags(write=False)

    def _window(self, context: Tokens) -> Tokens:
        if self.order == 1:
            return ()
        return tuple(context[-(self.order - 1):])

    def next_distribution(self, context: Tokens) -> NextSymbolDistribution:
        window = self._window(context)
        dist = self._cache.get(window)
        if dist is None:
            counts = self._counts.get(window, self._zero)
            alpha = self.pseudocount
            probs = (counts + alpha) / (counts.sum() + alpha * self._n_outcomes)
            dist = NextSymbolDistribution(self._outcomes, probs, self.alphabet.eos)
            self._cache[window] = dist
        return dist


def train_ngram(corpus: Iterable[Sequence[str]], order: int, pseudocount: float,
                alphabet: Optional[Alphabet] = None, eos: str = DEFAULT_EOS) -> NGramBackend:
    """Count-based training with additive smoothing.

    Each corpus line contributes one event per token plus a final
    end-of-string event; windows shorter than ``order - 1`` occur at line
    starts only. Conditional probabilities are
    (count + pseudocount) / (window total + pseudocount * (|alphabet| + 1)).
    """
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    if pseudocount <= 0:
        raise ValueError(f"pseudocount must be > 0, got {pseudocount}")
    lines = [tuple(line) for line in corpus]
    if not lines:
        raise ValueError("corpus is empty")
    if alphabet is None:
        seen = []
        known = set()
        for line in lines:
            for tok in line:
                if tok not in known:
                    known.add(tok)
                    seen.append(tok)
        if not seen:
            raise ValueError("corpus contains no tokens")
        alphabet = Alphabet(seen, eos=eos)
    n_outcomes = len(alphabet) + 1
    eos_index = n_outcomes - 1
    counts: Dict[Tokens, np.ndarray] = {}
    k = order - 1
    for line in lines:
        alphabet.validate(line)
        for i in range(len(line) + 1):
            window = line[max(0, i - k):i] if k > 0 else ()
            idx = alphabet.index(line[i]) if i < len(line) else eos_index
            row = counts.get(window)
            if row is None:
                row = np.zeros(n_outcomes)
                counts[window] = row
            row[idx] += 1.0
    return NGramBackend(order, pseudocount, alphabet, counts)


def load_corpus(path) -> List[Tokens]:
    """One whitespace-tokenized sentence per line; blank lines ignored."""
    lines = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            toks = tuple(raw.split())
            if toks:
                lines.append(toks)
    if not lines:
        raise DataError(f"corpus file {path} contains no sentences")
    return lines


def next_distribution(backend: Backend, context: Sequence[str]) -> NextSymbolDistribution:
    return backend.next_distribution(tuple(context))


def prefix_probability(backend: Backend, w: Sequence[str], context: Sequence[str] = ()) -> float:
    """Probability that a string drawn after ``context`` starts with ``w``."""
    ctx = tuple(context)
    p = 1.0
    for tok in w:
        p *= backend.next_distribution(ctx).prob(tok)
        ctx = ctx + (tok,)
    return p


def log_prefix_probability(backend: Backend, w: Sequence[str], context: Sequence[str] = ()) -> float:
    """Sum of conditional log probabilities along ``w`` (nats)."""
    ctx = tuple(context)
    total = 0.0
    for tok in w:
        p = backend.next_distribution(ctx).prob(tok)
        if p <= 0.0:
            raise DataError(f"zero conditional probability for token {tok!r}")
        total += math.log(p)
        ctx = ctx + (tok,)
    return total


def string_probability(backend: Backend, v: Sequence[str], context: Sequence[str] = ()) -> float:
    """Probability that the drawn string is identically ``v``."""
    v = tuple(v)
    return prefix_probability(backend, v, context) * backend.next_distribution(
        tuple(context) + v).eos_prob


def sample(backend: Backend, context: Sequence[str], max_len: int,
           rng: np.random.Generator) -> Tokens:
    """One ancestral draw: symbols until the end outcome or ``max_len`` tokens.

    The returned string never contains the end marker; hitting ``max_len``
    truncates without drawing further.
    """
    if max_len < 0:
        raise ValueError(f"max_len must be >= 0, got {max_len}")
    ctx = tuple(context)
    out: List[str] = []
    eos = backend.next_distribution(ctx).eos
    for _ in range(max_len):
        outcome = backend.next_distribution(ctx + tuple(out)).sample_outcome(rng)
        if outcome == eos:
            break
        out.append(outcome)
    return tuple(out)


@dataclass
class EnumeratedDistribution:
    """Exact string probabilities up to a length bound, plus total mass."""

    probs: Dict[Tokens, float]
    mass: float


def enumerate_distribution(backend: Backend, context: Sequence[str], max_len: int,
                           max_entries: int = 10_000_000) -> EnumeratedDistribution:
    """Exact string probability for every string of length <= max_len.

    Brute-force oracle: walks the full |alphabet|-ary prefix tree. Guarded
    by ``max_entries`` on the number of strings enumerated.
    """
    k = len(backend.alphabet)
    entries = sum(k ** length for length in range(max_len + 1))
    if entries > max_entries:
        raise ValueError(
            f"enumeration of {entries} strings exceeds the guard of {max_entries}")
    ctx = tuple(context)
    probs: Dict[Tokens, float] = {}

    stack = [((), 1.0)]
    while stack:
        prefix, pp = stack.pop()
        dist = backend.next_distribution(ctx + prefix)
        probs[prefix] = pp * dist.eos_prob
        if len(prefix) < max_len:
            for symbol in backend.alphabet.symbols:
                stack.append((prefix + (symbol,), pp * dist.prob(symbol)))
    return EnumeratedDistribution(probs, mass=float(sum(probs.values())))
