"""Synthetic test workspace.

Generates everything the pipeline consumes: a corpus from a planted Markov
chain, a trained n-gram backend, a stimulus table with synthetic
measurements, a frequency table, and a random embedding table. The chain
mixes near-deterministic and noisy states, so target predictability spans
the whole range from almost-certain to vanishingly rare; that spread is
what makes correlation and variance diagnostics informative.

``surpsim-testbed --out DIR`` writes a ready-to-run workspace with a config.
"""

from __future__ import annotations

import argparse
import math
import os
from typing import Dict, List, Optional, Sequence

import numpy as np

from .backends import MemorylessBackend, NGramBackend, train_ngram
from .embeddings import EmbeddingTable
from .estimate import estimate_exact
from .evaluation import MEASUREMENT_COLUMNS, Stimulus, laplace_cloze
from .measures import get_measure
from .rng import substream
from .tokens import DEFAULT_EOS, Tokens

VOCAB = (
    "the", "a", "one", "cat", "dog", "bird", "fox", "sees", "chases",
    "eats", "finds", "quickly", "today",
)

# The chain has two nearly isolated regions: states 0..5 cycle almost
# deterministically, states 6..12 are close to uniform within their block.
# Contexts therefore split into persistently low- and high-entropy regimes,
# which spreads every sequence-level quantity across stimuli.
_DET_STATES = 6
_DET_RATE = 0.97
_NOISY_RATE = 0.12
_SURPRISE_RATE = 0.02
_STOP_RATE = 0.10
_MIN_LEN = 3
_MAX_LEN = 12


def toy_backend(eos: str = DEFAULT_EOS) -> MemorylessBackend:
    """The two-symbol memoryless fixture: p(a)=0.5, p(b)=0.3, p(end)=0.2."""
    return MemorylessBackend({"a": 0.5, "b": 0.3}, eos_prob=0.2, eos=eos)


def orthonormal_table(symbols: Sequence[str], eos: str = DEFAULT_EOS) -> EmbeddingTable:
    """Identity-basis embeddings: one axis per symbol plus one for eos."""
    dim = len(symbols) + 1
    eye = np.eye(dim)
    vectors = {s: eye[i] for i, s in enumerate(symbols)}
    return EmbeddingTable(vectors, eos_vector=eye[dim - 1])


def _next_state(state: int, rng) -> int:
    k = len(VOCAB)
    if rng.random() < _SURPRISE_RATE:
        return int(rng.integers(0, k))
    if state < _DET_STATES:
        if rng.random() < _DET_RATE:
            return (state + 1) % _DET_STATES
        return int(rng.integers(0, _DET_STATES))
    if rng.random() < _NOISY_RATE:
        return _DET_STATES + (state - _DET_STATES + 1) % (k - _DET_STATES)
    return _DET_STATES + int(rng.integers(0, k - _DET_STATES))


def make_corpus(n_sentences: int = 2000, seed: int = 0) -> List[Tokens]:
    """Sentences from the planted two-region Markov chain."""
    rng = substream(seed, "testbed-corpus")
    sentences: List[Tokens] = []
    for _ in range(n_sentences):
        state = int(rng.integers(0, len(VOCAB)))
        words = [VOCAB[state]]
        while len(words) < _MAX_LEN:
            if len(words) >= _MIN_LEN and rng.random() < _STOP_RATE:
                break
            state = _next_state(state, rng)
            words.append(VOCAB[state])
        sentences.append(tuple(words))
    return sentences


def make_backend(corpus: Optional[Sequence[Tokens]] = None, order: int = 3,
                 pseudocount: float = 0.005, seed: int = 0) -> NGramBackend:
    if corpus is None:
        corpus = make_corpus(seed=seed)
    return train_ngram(corpus, order=order, pseudocount=pseudocount)


def make_embeddings(dim: int = 16, seed: int = 0) -> EmbeddingTable:
    """Random unit embeddings mirroring the chain's two regions.

    Deterministic-region words form a tight cluster; noisy-region words are
    spread almost independently. Representational distances then track the
    chain structure instead of concentrating near 1.
    """
    rng = substream(seed, "testbed-embeddings")
    basis = np.linalg.qr(rng.standard_normal((dim, 2)))[0].T
    vectors = {}
    for i, word in enumerate(VOCAB):
        if i < _DET_STATES:
            v = basis[0] + 0.15 * rng.standard_normal(dim)
        else:
            v = basis[1] + 0.85 * rng.standard_normal(dim)
        vectors[word] = v / np.linalg.norm(v)
    # The end-of-string vector sits between the clusters so that empty
    # continuations do not dominate within-batch distance variance.
    eos = (basis[0] + basis[1]) / np.sqrt(2.0) + 0.2 * rng.standard_normal(dim)
    return EmbeddingTable(vectors, eos_vector=eos / np.linalg.norm(eos))


def _sample_sentence(backend: NGramBackend, rng) -> Tokens:
    out: List[str] = []
    eos = backend.alphabet.eos
    for _ in range(_MAX_LEN):
        outcome = backend.next_distribution(tuple(out)).sample_outcome(rng)
        if outcome == eos:
            break
        out.append(outcome)
    return tuple(out)


def _pick_target(backend: NGramBackend, context: Tokens, kind: int) -> str:
    """Bimodal target choice: the most likely next symbol or the least.

    Keeping target predictability away from the middle ground makes
    bootstrap and correlation diagnostics sharp at moderate sample sizes.
    """
    dist = backend.next_distribution(context)
    symbols = backend.alphabet.symbols
    probs = [dist.prob(s) for s in symbols]
    if kind == 0:
        return symbols[int(np.argmax(probs))]
    return symbols[int(np.argmin(probs))]


def make_stimuli(backend: NGramBackend, n_stimuli: int = 300, seed: int = 0,
                 min_context: int = 2, measurements: bool = True,
                 cloze_participants: int = 40,
                 table: Optional[EmbeddingTable] = None) -> List[Stimulus]:
    """Stimuli at consecutive positions of backend-sampled sentences.

    Contexts come from sampled sentences; targets alternate between the
    model's most likely and least likely next symbol, spanning the full
    predictability range. Synthetic measurements are noisy functions of the
    exact measures (plus simulated cloze counts), giving the regression
    harness real signal.
    """
    rng = substream(seed, "testbed-stimuli")
    if table is None:
        table = make_embeddings(seed=seed)
    surprisal = get_measure("surprisal")
    exp_next = get_measure("exp_next_surprisal")
    info_val = get_measure("information_value")

    stimuli: List[Stimulus] = []
    sentence_idx = 0
    while len(stimuli) < n_stimuli:
        sentence = _sample_sentence(backend, rng)
        if len(sentence) <= min_context:
            continue
        sentence_idx += 1
        sid = f"s{sentence_idx:05d}"
        prev_surprisals: List[float] = []
        for wi in range(min_context, len(sentence)):
            if len(stimuli) >= n_stimuli:
                break
            context_tokens = sentence[:wi]
            target = _pick_target(backend, context_tokens, len(stimuli) % 2)
            item_id = f"it{len(stimuli):06d}"
            s_val = estimate_exact(surprisal, (target,), context_tokens, backend).value
            h_val = estimate_exact(exp_next, (target,), context_tokens, backend).value
            meas: Dict[str, float] = {}
            if measurements:
                from .estimate import estimate_mc
                d_val = estimate_mc(info_val, (target,), context_tokens, backend,
                                    table, n=32, max_len=5, seed=seed).value
                noise = rng.standard_normal(9)
                counts: Dict[str, int] = {}
                dist = backend.next_distribution(context_tokens)
                for _ in range(cloze_participants):
                    guess = dist.sample_outcome(rng)
                    if guess != backend.alphabet.eos:
                        counts[guess] = counts.get(guess, 0) + 1
                if counts:
                    cloze_p, cloze_h = laplace_cloze(counts, target, alpha=1.0)
                    meas["cloze_p"] = cloze_p
                    meas["cloze_entropy"] = cloze_h
                meas["rating"] = float(np.clip(5.2 - 0.55 * s_val + 0.35 * noise[0], 1.0, 5.0))
                meas["N400"] = -0.9 * d_val - 0.15 * s_val + 0.25 * noise[1]
                meas["ELAN"] = 0.5 * h_val + 0.3 * noise[2]
                meas["LAN"] = -0.4 * d_val + 0.3 * noise[3]
                meas["EPNP"] = 0.3 * s_val + 0.3 * noise[4]
                meas["P600"] = 0.35 * s_val + 0.3 * noise[5]
                meas["PNP"] = 0.3 * math.exp(-s_val) + 0.25 * noise[6]
                rt = 310.0 + 24.0 * s_val + 9.0 * sum(prev_surprisals[-2:]) + 12.0 * noise[7]
                meas["rt_self_paced"] = rt
                meas["rt_first_fixation"] = 190.0 + 14.0 * s_val + 8.0 * noise[8]
            stimuli.append(Stimulus(
                item_id=item_id,
                sentence_id=sid,
                word_index=wi,
                context=" ".join(context_tokens),
                target=target,
                measurements=meas,
            ))
            prev_surprisals.append(s_val)
    return stimuli


def corpus_frequencies(corpus: Sequence[Tokens]) -> Dict[str, float]:
    counts: Dict[str, int] = {}
    total = 0
    for line in corpus:
        for tok in line:
            counts[tok] = counts.get(tok, 0) + 1
            total += 1
    return {w: 1e6 * c / total for w, c in counts.items()}


def attach_frequencies(stimuli: Sequence[Stimulus], freqs: Dict[str, float],
                       floor: float = 0.1) -> None:
    for s in stimuli:
        s.frequency = freqs.get(s.target, floor)


# -- workspace files ---------------------------------------------------------

def write_corpus(corpus: Sequence[Tokens], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in corpus:
            fh.write(" ".join(line) + "\n")


def write_frequencies(freqs: Dict[str, float], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for word in sorted(freqs):
            fh.write(f"{word}\t{freqs[word]:.6g}\n")


def write_embeddings(table: EmbeddingTable, path, eos: str = DEFAULT_EOS) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#dim {table.dim}\n")
        for token in table.tokens():
            row = " ".join(format(x, ".9g") for x in table.vector(token))
            fh.write(f"{token}\t{row}\n")
        row = " ".join(format(x, ".9g") for x in table.eos_vector)
        fh.write(f"{eos}\t{row}\n")


def write_stimuli(stimuli: Sequence[Stimulus], path) -> None:
    header = ("item_id", "sentence_id", "word_index", "context", "target",
              *MEASUREMENT_COLUMNS)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for s in stimuli:
            cells = [s.item_id, s.sentence_id, str(s.word_index), s.context, s.target]
            for name in MEASUREMENT_COLUMNS:
                value = s.measurements.get(name)
                cells.append("" if value is None else format(value, ".6g"))
            fh.write("\t".join(cells) + "\n")


_CONFIG_TEMPLATE = """\
backend:
  kind: native
  corpus: corpus.txt
  order: {order}
  pseudocount: {pseudocount}
dataset: stimuli.tsv
frequencies: frequencies.tsv
embeddings: embeddings.tsv
output_dir: out
n_samples: {n_samples}
max_len: {max_len}
seed: {seed}
epsilon: 1.0e-4
modes: both
variance:
  resamples: 200
  n_grid: [4, 16, 64, 256]
  l_grid: [{max_len}]
evaluation:
  responses: [rating, N400, rt_self_paced]
  folds: 10
  cv_seeds: 20
  permutation_resamples: 2000
"""


def write_workspace(outdir, n_sentences: int = 2000, n_stimuli: int = 300,
                    seed: int = 0, order: int = 3, pseudocount: float = 0.005,
                    n_samples: int = 512, max_len: int = 5) -> Dict[str, str]:
    """Write corpus, stimuli, frequencies, embeddings, and a config."""
    os.makedirs(outdir, exist_ok=True)
    corpus = make_corpus(n_sentences, seed=seed)
    backend = make_backend(corpus, order=order, pseudocount=pseudocount)
    table = make_embeddings(seed=seed)
    stimuli = make_stimuli(backend, n_stimuli, seed=seed, table=table)
    freqs = corpus_frequencies(corpus)
    attach_frequencies(stimuli, freqs)
    paths = {
        "corpus": os.path.join(outdir, "corpus.txt"),
        "stimuli": os.path.join(outdir, "stimuli.tsv"),
        "frequencies": os.path.join(outdir, "frequencies.tsv"),
        "embeddings": os.path.join(outdir, "embeddings.tsv"),
        "config": os.path.join(outdir, "config.yaml"),
    }
    write_corpus(corpus, paths["corpus"])
    write_stimuli(stimuli, paths["stimuli"])
    write_frequencies(freqs, paths["frequencies"])
    write_embeddings(table, paths["embeddings"])
    with open(paths["config"], "w", encoding="utf-8") as fh:
        fh.write(_CONFIG_TEMPLATE.format(order=order, pseudocount=pseudocount,
                                         n_samples=n_samples, max_len=max_len,
                                         seed=seed))
    return paths


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Generate a synthetic workspace for the surpsim pipeline.")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--sentences", type=int, default=2000)
    parser.add_argument("--stimuli", type=int, default=300)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--order", type=int, default=3)
    args = parser.parse_args(argv)
    paths = write_workspace(args.out, n_sentences=args.sentences,
                            n_stimuli=args.stimuli, seed=args.seed,
                            order=args.order)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
