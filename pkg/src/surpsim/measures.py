"""The measure catalog.

A measure pairs a warping of the expected score with a per-continuation
scoring rule. Responsive rules depend on the observed target; anticipatory
rules are functions of the context alone, so their value is identical for
any target. Catalog names are the stable identifiers used by the CLI and
the estimates cache:

  surprisal, probability, information_value, exp_next_surprisal,
  exp_next_probability, exp_next_info_value, entropy, exp_info_value,
  pmi, sim_adjusted_surprisal, semantic_update
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from .backends import Backend, prefix_probability, string_probability
from .embeddings import cosine_distance
from .tokens import Tokens, is_prefix

DEFAULT_EPSILON = 1e-4

IDENTITY = "identity"
NEGLOG = "neglog"
LOG = "log"
_WARPING_KINDS = (IDENTITY, NEGLOG, LOG)


@dataclass(frozen=True)
class Warping:
    """Transformation of the expected score.

    ``neglog`` and ``log`` add a small constant before the logarithm so the
    result stays finite when the expected score is zero.
    """

    kind: str = IDENTITY
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.kind not in _WARPING_KINDS:
            raise ValueError(f"unknown warping kind {self.kind!r}")
        if self.epsilon <= 0:
            raise ValueError("warping epsilon must be > 0")

    def __call__(self, x: float) -> float:
        if self.kind == IDENTITY:
            return float(x)
        if self.kind == NEGLOG:
            return -math.log(x + self.epsilon)
        return math.log(x + self.epsilon)


INDICATOR = "indicator"
INFO_VALUE = "info_value"
NEXT_SYM_SURPRISAL = "next_sym_surprisal"
NEXT_SYM_PROBABILITY = "next_sym_probability"
NEXT_SYM_INFO_VALUE = "next_sym_info_value"
ENTROPY = "entropy"
EXPECTED_INFO_VALUE = "expected_info_value"
PMI = "pmi"
SIMILARITY_ADJUSTED = "similarity_adjusted"
SEMANTIC_UPDATE = "semantic_update"

SCORING_KINDS = (
    INDICATOR, INFO_VALUE, NEXT_SYM_SURPRISAL, NEXT_SYM_PROBABILITY,
    NEXT_SYM_INFO_VALUE, ENTROPY, EXPECTED_INFO_VALUE, PMI,
    SIMILARITY_ADJUSTED, SEMANTIC_UPDATE,
)

# Scoring rules that ignore the target entirely.
ANTICIPATORY_KINDS = frozenset({
    NEXT_SYM_SURPRISAL, NEXT_SYM_PROBABILITY, NEXT_SYM_INFO_VALUE,
    ENTROPY, EXPECTED_INFO_VALUE,
})

# Scoring rules whose expectation is available in closed form from a backend
# exposing full next-symbol distributions.
CLOSED_FORM_KINDS = frozenset({
    INDICATOR, NEXT_SYM_SURPRISAL, NEXT_SYM_PROBABILITY, PMI,
})

_REP_KINDS = frozenset({
    INFO_VALUE, NEXT_SYM_INFO_VALUE, EXPECTED_INFO_VALUE,
    SIMILARITY_ADJUSTED, SEMANTIC_UPDATE,
})


@dataclass(frozen=True)
class Measure:
    name: str
    warping: Warping
    scoring_kind: str

    def __post_init__(self):
        if self.scoring_kind not in SCORING_KINDS:
            raise ValueError(f"unknown scoring kind {self.scoring_kind!r}")

    @property
    def anticipatory(self) -> bool:
        return self.scoring_kind in ANTICIPATORY_KINDS

    @property
    def closed_form(self) -> bool:
        return self.scoring_kind in CLOSED_FORM_KINDS

    @property
    def needs_rep(self) -> bool:
        return self.scoring_kind in _REP_KINDS

    @property
    def aggregation(self) -> str:
        """How token-level estimates combine into a word-level one.

        Raw probabilities multiply along the chain rule; log-domain and
        distance-like scores add.
        """
        if self.anticipatory:
            raise ValueError(f"{self.name} is anticipatory and does not aggregate")
        if self.scoring_kind == INDICATOR and self.warping.kind == IDENTITY:
            return "product"
        return "sum"


def is_anticipatory(measure: Measure) -> bool:
    return measure.anticipatory


def catalog(epsilon: float = DEFAULT_EPSILON) -> Dict[str, Measure]:
    """All built-in measures, keyed by their stable names."""
    neglog = Warping(NEGLOG, epsilon)
    log = Warping(LOG, epsilon)
    ident = Warping(IDENTITY, epsilon)
    measures = [
        Measure("surprisal", neglog, INDICATOR),
        Measure("probability", ident, INDICATOR),
        Measure("information_value", ident, INFO_VALUE),
        Measure("exp_next_surprisal", ident, NEXT_SYM_SURPRISAL),
        Measure("exp_next_probability", ident, NEXT_SYM_PROBABILITY),
        Measure("exp_next_info_value", ident, NEXT_SYM_INFO_VALUE),
        Measure("entropy", ident, ENTROPY),
        Measure("exp_info_value", ident, EXPECTED_INFO_VALUE),
        Measure("pmi", log, PMI),
        Measure("sim_adjusted_surprisal", neglog, SIMILARITY_ADJUSTED),
        Measure("semantic_update", ident, SEMANTIC_UPDATE),
    ]
    return {m.name: m for m in measures}


def get_measure(name: str, epsilon: float = DEFAULT_EPSILON) -> Measure:
    measures = catalog(epsilon)
    try:
        return measures[name]
    except KeyError:
        known = ", ".join(measures)
        raise ValueError(f"unknown measure {name!r}; known measures: {known}") from None


@dataclass
class ScoreContext:
    """Everything a scoring rule may need beyond the continuation and target.

    ``inner_batch``/``inner_index`` carry the sample batch for nested
    expectations; ``max_len`` tells sequence-level scores whether a
    continuation of exactly that length was truncated rather than ended.
    """

    backend: Backend
    c: Tokens = ()
    rep: Optional[object] = None
    inner_batch: Optional[Sequence[Tokens]] = None
    inner_index: Optional[int] = None
    max_len: Optional[int] = None
    epsilon: float = DEFAULT_EPSILON
    extras: dict = field(default_factory=dict)


def score_indicator(v: Tokens, w: Tokens) -> int:
    """1 iff the target is a token-level prefix of the continuation."""
    return 1 if is_prefix(w, v) else 0


def score_info_value(v: Tokens, w: Tokens, rep) -> float:
    """Representational distance between continuation and target."""
    return cosine_distance(rep.represent(tuple(v)), rep.represent(tuple(w)))


def _first_symbol_prob(v: Tokens, ctx: ScoreContext) -> float:
    dist = ctx.backend.next_distribution(tuple(ctx.c))
    p = dist.prob(v[0]) if v else dist.eos_prob
    # Native smoothing keeps p > 0; a remote zero is floored at epsilon.
    return p if p > 0.0 else ctx.epsilon


def score_next_symbol_surprisal(v: Tokens, ctx: ScoreContext) -> float:
    """Negative log probability of the continuation's first outcome."""
    return -math.log(_first_symbol_prob(v, ctx))


def score_next_symbol_probability(v: Tokens, ctx: ScoreContext) -> float:
    return _first_symbol_prob(v, ctx)


def score_next_symbol_info_value(v: Tokens, ctx: ScoreContext) -> float:
    """Exact inner expectation of first-symbol distance over all outcomes.

    The end-of-string outcome participates through the dedicated eos
    representation (``represent(())``).
    """
    if ctx.rep is None:
        raise ValueError("next-symbol information value needs a representation provider")
    dist = ctx.backend.next_distribution(tuple(ctx.c))
    ev = ctx.rep.represent(tuple(v[:1]))
    total = 0.0
    for outcome, p in zip(dist.outcomes, dist.probs):
        first = (outcome,) if outcome != dist.eos else ()
        total += float(p) * cosine_distance(ev, ctx.rep.represent(first))
    return total


def score_entropy(v: Tokens, ctx: ScoreContext) -> float:
    """Negative log probability of the continuation itself.

    A continuation of exactly ``max_len`` tokens was truncated, so it is
    scored by its prefix probability (no end-of-string factor).
    """
    v = tuple(v)
    truncated = ctx.max_len is not None and len(v) == ctx.max_len
    p = (prefix_probability(ctx.backend, v, ctx.c) if truncated
         else string_probability(ctx.backend, v, ctx.c))
    if p <= 0.0:
        raise ValueError(f"zero probability for continuation {v!r}")
    return -math.log(p)


def score_expected_info_value(v: Tokens, ctx: ScoreContext) -> float:
    """Mean representational distance to the other sampled continuations.

    When the continuation is itself an element of the batch, its own index
    is excluded (ordered pairs i != j), which keeps the batch mean an
    unbiased estimate of the distance between two independent draws.
    """
    if ctx.rep is None:
        raise ValueError("expected information value needs a representation provider")
    batch = ctx.inner_batch
    if not batch:
        raise ValueError("expected information value needs a non-empty inner batch")
    rv = ctx.rep.represent(tuple(v))
    total = 0.0
    count = 0
    for j, other in enumerate(batch):
        if ctx.inner_index is not None and j == ctx.inner_index:
            continue
        total += cosine_distance(rv, ctx.rep.represent(tuple(other)))
        count += 1
    if count == 0:
        raise ValueError("expected information value needs at least one other sample")
    return total / count


def score_pmi(v: Tokens, w: Tokens, ctx: ScoreContext) -> float:
    """Context prefix probability gated by a first-token prefix check."""
    if not w:
        raise ValueError("pmi needs a non-empty target")
    pc = prefix_probability(ctx.backend, tuple(ctx.c), ())
    return pc if is_prefix((w[0],), v) else 0.0


def score_similarity_adjusted(v: Tokens, w: Tokens, rep) -> float:
    """Similarity in [0, 1]: affine image of cosine distance, z = 1 - d/2."""
    z = 1.0 - score_info_value(v, w, rep) / 2.0
    return min(max(z, 0.0), 1.0)


def score_semantic_update(v: Tokens, w: Tokens, c: Tokens, rep) -> float:
    """L1 change between sigmoid activations of the target's first token and
    the context's last token, gated by the first-token prefix check."""
    if not c:
        raise ValueError("semantic update needs a non-empty context")
    if not w:
        raise ValueError("semantic update needs a non-empty target")
    if not is_prefix((w[0],), v):
        return 0.0
    delta = rep.activations(w[0]) - rep.activations(c[-1])
    return float(np.abs(delta).sum())


def score(measure: Measure, v: Tokens, w: Tokens, ctx: ScoreContext) -> float:
    """Single-continuation score under any catalog measure."""
    kind = measure.scoring_kind
    if kind == INDICATOR:
        return float(score_indicator(v, w))
    if kind == INFO_VALUE:
        return score_info_value(v, w, ctx.rep)
    if kind == NEXT_SYM_SURPRISAL:
        return score_next_symbol_surprisal(v, ctx)
    if kind == NEXT_SYM_PROBABILITY:
        return score_next_symbol_probability(v, ctx)
    if kind == NEXT_SYM_INFO_VALUE:
        return score_next_symbol_info_value(v, ctx)
    if kind == ENTROPY:
        return score_entropy(v, ctx)
    if kind == EXPECTED_INFO_VALUE:
        return score_expected_info_value(v, ctx)
    if kind == PMI:
        return score_pmi(v, w, ctx)
    if kind == SIMILARITY_ADJUSTED:
        return score_similarity_adjusted(v, w, ctx.rep)
    return score_semantic_update(v, w, tuple(ctx.c), ctx.rep)
