import math

import numpy as np
import pytest

from surpsim.backends import (MemorylessBackend, NextSymbolDistribution,
                              enumerate_distribution, next_distribution,
                              prefix_probability, sample, string_probability,
                              train_ngram)
from surpsim.rng import substream
from surpsim.tokens import Alphabet

from oracles import truncated_law


class TestNextSymbolDistribution:
    def test_validates_sum(self):
        with pytest.raises(ValueError, match="sum"):
            NextSymbolDistribution(("a", "</s>"), [0.6, 0.5], "</s>")

    def test_validates_negative(self):
        with pytest.raises(ValueError, match="negative"):
            NextSymbolDistribution(("a", "</s>"), [-0.1, 1.1], "</s>")

    def test_entropy_uniform(self):
        d = NextSymbolDistribution(("a", "b", "c", "</s>"), [0.25] * 4, "</s>")
        assert d.entropy() == pytest.approx(math.log(4), abs=1e-12)


class TestTrainNgram:
    def test_unigram_with_explicit_alphabet(self):
        # One "a" token and one end event; |alphabet| + 1 = 3 outcomes.
        backend = train_ngram([("a",)], order=1, pseudocount=1.0,
                              alphabet=Alphabet(("a", "b")))
        d = backend.next_distribution(())
        assert d.prob("a") == pytest.approx(0.4, abs=1e-12)
        assert d.prob("b") == pytest.approx(0.2, abs=1e-12)
        assert d.eos_prob == pytest.approx(0.4, abs=1e-12)
        # Unigram ignores the context entirely.
        assert next_distribution(backend, ("b", "a")).prob("a") == pytest.approx(0.4)

    def test_small_pseudocount_limit(self):
        backend = train_ngram([("a", "a")] * 50, order=2, pseudocount=1e-9)
        assert backend.next_distribution(()).prob("a") == pytest.approx(1.0, abs=1e-6)

    def test_bigram_window(self):
        backend = train_ngram([("a", "b")], order=2, pseudocount=1.0)
        assert backend.next_distribution(("a",)).prob("b") == pytest.approx(0.5)

    def test_errors(self):
        with pytest.raises(ValueError, match="empty"):
            train_ngram([], order=1, pseudocount=1.0)
        with pytest.raises(ValueError, match="order"):
            train_ngram([("a",)], order=0, pseudocount=1.0)
        with pytest.raises(ValueError, match="pseudocount"):
            train_ngram([("a",)], order=1, pseudocount=0.0)

    def test_positive_mass_everywhere(self):
        backend = train_ngram([("a", "b", "a")], order=3, pseudocount=0.5,
                              alphabet=Alphabet(("a", "b", "c")))
        for ctx in [(), ("a",), ("c", "c"), ("b", "a")]:
            d = backend.next_distribution(ctx)
            assert np.all(d.probs > 0)
            assert d.probs.sum() == pytest.approx(1.0, abs=1e-9)


class TestPrefixAndStringProbability:
    def test_toy_values(self, toy):
        assert prefix_probability(toy, ("a",)) == pytest.approx(0.5, abs=1e-12)
        assert prefix_probability(toy, ("a", "b")) == pytest.approx(0.15, abs=1e-12)
        assert prefix_probability(toy, ()) == 1.0
        assert string_probability(toy, ("a",)) == pytest.approx(0.10, abs=1e-12)
        assert string_probability(toy, ()) == pytest.approx(0.2, abs=1e-12)

    def test_log_exp_round_trip(self, toy, rng):
        for _ in range(50):
            n = int(rng.integers(0, 8))
            w = tuple(rng.choice(["a", "b"], size=n))
            p = prefix_probability(toy, w)
            assert math.exp(-(-math.log(p))) == pytest.approx(p, rel=1e-12)

    def test_antitone_under_extension(self, toy, testbed_backend, rng):
        for backend, symbols in ((toy, ("a", "b")),
                                 (testbed_backend, testbed_backend.alphabet.symbols)):
            for _ in range(30):
                n = int(rng.integers(0, 4))
                w = tuple(rng.choice(symbols, size=n))
                base = prefix_probability(backend, w)
                for u in symbols:
                    assert prefix_probability(backend, w + (u,)) <= base + 1e-15

    def test_string_mass_monotone_in_length(self, toy):
        masses = [enumerate_distribution(toy, (), L).mass for L in range(6)]
        assert all(m <= 1.0 + 1e-12 for m in masses)
        assert all(b >= a - 1e-15 for a, b in zip(masses, masses[1:]))


class TestSample:
    def test_immediate_stop(self):
        backend = MemorylessBackend({"a": 0.0}, eos_prob=1.0)
        assert sample(backend, (), 5, substream(0)) == ()

    def test_truncation(self):
        backend = MemorylessBackend({"a": 1.0}, eos_prob=0.0)
        assert sample(backend, (), 3, substream(0)) == ("a", "a", "a")

    def test_first_symbol_frequency(self, toy):
        stream = substream(123, "freq")
        n = 10 ** 5
        hits = sum(1 for _ in range(n)
                   if (s := sample(toy, (), 3, stream)) and s[0] == "a")
        # 3-sigma binomial band around 0.5.
        sigma = math.sqrt(0.25 / n)
        assert abs(hits / n - 0.5) < 3 * sigma

    def test_empirical_empty_rate(self, toy):
        stream = substream(7, "eps")
        n = 10 ** 4
        empties = sum(1 for _ in range(n) if sample(toy, (), 10, stream) == ())
        assert abs(empties / n - 0.2) < 0.015

    def test_purity_across_calls(self, testbed_backend):
        ctx = ("the", "cat")
        d1 = testbed_backend.next_distribution(ctx)
        d2 = testbed_backend.next_distribution(ctx)
        assert np.array_equal(d1.probs, d2.probs)


class TestEnumerateDistribution:
    def test_toy_mass(self, toy):
        enum = enumerate_distribution(toy, (), 2)
        assert len(enum.probs) == 7
        assert enum.mass == pytest.approx(0.488, abs=1e-12)

    def test_max_len_zero(self, toy):
        enum = enumerate_distribution(toy, (), 0)
        assert enum.probs == {(): pytest.approx(0.2)}

    def test_deterministic_lm(self):
        backend = MemorylessBackend({"a": 1.0}, eos_prob=0.0)
        # Never stops, so no finite string carries mass; flip it around:
        stopper = train_ngram([("a",)], order=1, pseudocount=1e-9)
        enum = enumerate_distribution(stopper, (), 3)
        assert enum.probs[("a",)] == pytest.approx(0.25, abs=1e-3)

    def test_guard(self, toy):
        with pytest.raises(ValueError, match="guard"):
            enumerate_distribution(toy, (), 40)

    def test_agrees_with_truncated_law(self, toy):
        # Strings strictly shorter than the bound carry identical mass in
        # the enumeration and in the truncated sampling law.
        enum = enumerate_distribution(toy, (), 4)
        law = truncated_law(toy, (), 4)
        for v, p in enum.probs.items():
            if len(v) < 4:
                assert law[v] == pytest.approx(p, rel=1e-12)
        assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)
