"""Model wrapper: loading, next-token log probabilities, seeded sampling,
tokenization helpers, and input-layer embeddings.

Wire tokens are the tokenizer's native token strings (for byte-level BPE
these encode whitespace as a marker character), which round-trip losslessly
between strings and ids. All log probabilities are natural logs computed in
float32, identically on the logprobs and sampling paths.
"""

from __future__ import annotations

import hashlib
import threading
from typing import Dict, List, Sequence, Tuple

import numpy as np
import torch
from transformers import AutoModelForCausalLM, AutoTokenizer


class UnknownTokenError(KeyError):
    def __init__(self, token: str):
        super().__init__(token)
        self.token = token


def _continuation_seed(seed: int, index: int) -> int:
    # Stable per-continuation stream: batching must never change outputs.
    digest = hashlib.blake2b(f"{seed}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1


class LanguageModel:
    """A causal LM with a lock-serialized forward pass."""

    def __init__(self, model_source: str, device: str = "cpu"):
        self.model_source = model_source
        self.device = torch.device(device)
        self.tokenizer = AutoTokenizer.from_pretrained(model_source)
        self.model = AutoModelForCausalLM.from_pretrained(model_source)
        self.model.to(self.device)
        self.model.eval()
        if self.tokenizer.eos_token_id is None:
            raise ValueError("the tokenizer must define an end-of-text token")
        self.eos_id = int(self.tokenizer.eos_token_id)
        self.vocab_size = int(self.model.get_input_embeddings().weight.shape[0])
        tokens = self.tokenizer.convert_ids_to_tokens(list(range(self.vocab_size)))
        self.id_to_token: List[str] = [t if t is not None else f"<unused:{i}>"
                                       for i, t in enumerate(tokens)]
        self.token_to_id: Dict[str, int] = {}
        ambiguous = set()
        for i, tok in enumerate(self.id_to_token):
            if tok in self.token_to_id:
                ambiguous.add(tok)
            else:
                self.token_to_id[tok] = i
        self._ambiguous = ambiguous
        self.symbols = [self.id_to_token[i] for i in range(self.vocab_size)
                        if i != self.eos_id]
        self._symbol_ids = np.array([i for i in range(self.vocab_size)
                                     if i != self.eos_id])
        self._lock = threading.Lock()

    # -- tokens ---------------------------------------------------------

    def encode_tokens(self, tokens: Sequence[str]) -> List[int]:
        ids = []
        for tok in tokens:
            if tok in self._ambiguous or tok not in self.token_to_id:
                raise UnknownTokenError(tok)
            ids.append(self.token_to_id[tok])
        return ids

    def tokenize_text(self, text: str) -> List[str]:
        ids = self.tokenizer.encode(text, add_special_tokens=False)
        return [self.id_to_token[i] for i in ids]

    def tokenize_word(self, word: str, context: str) -> List[str]:
        """Tokenize a word as it appears after the given context.

        Mid-sentence words carry their separating whitespace, so the ids
        are the ones the model would actually see there.
        """
        if context and not context.endswith(" "):
            return self.tokenize_text(" " + word)
        return self.tokenize_text(word)

    # -- probabilities ----------------------------------------------------

    def _next_logprobs_tensor(self, context_ids: List[int]) -> torch.Tensor:
        ids = torch.tensor([[self.eos_id] + context_ids], dtype=torch.long,
                           device=self.device)
        with self._lock, torch.inference_mode():
            logits = self.model(ids).logits[0, -1]
        return torch.log_softmax(logits.float(), dim=-1)

    def next_logprobs(self, context_tokens: Sequence[str]) -> np.ndarray:
        """Natural-log next-token distribution over the full vocabulary.

        The context is anchored with the end-of-text token, matching the
        model's document-initial conditioning.
        """
        ids = self.encode_tokens(context_tokens)
        return self._next_logprobs_tensor(ids).cpu().numpy()

    def split_logprobs(self, context_tokens: Sequence[str]) -> Tuple[List[float], float]:
        """(per-symbol logprobs aligned with .symbols, eos logprob)."""
        values = self.next_logprobs(context_tokens)
        return values[self._symbol_ids].tolist(), float(values[self.eos_id])

    # -- sampling --------------------------------------------------------

    def sample(self, context_tokens: Sequence[str], n: int, max_tokens: int,
               seed: int, temperature: float = 1.0
               ) -> Tuple[List[List[str]], List[List[float]]]:
        """n seeded ancestral continuations, each at most max_tokens long.

        Per-continuation generators are derived from (seed, index), so
        results do not depend on request batching. The reported per-token
        logprobs come from the untempered distribution, the same values
        the logprobs endpoint returns.
        """
        context_ids = self.encode_tokens(context_tokens)
        continuations: List[List[str]] = []
        logprobs: List[List[float]] = []
        for i in range(n):
            gen = torch.Generator(device="cpu")
            gen.manual_seed(_continuation_seed(seed, i))
            ids = list(context_ids)
            tokens: List[str] = []
            steps: List[float] = []
            for _ in range(max_tokens):
                logprob = self._next_logprobs_tensor(ids)
                if temperature == 1.0:
                    probs = torch.exp(logprob)
                else:
                    probs = torch.softmax(logprob / temperature, dim=-1)
                pick = int(torch.multinomial(probs.cpu(), 1, generator=gen).item())
                if pick == self.eos_id:
                    break
                tokens.append(self.id_to_token[pick])
                steps.append(float(logprob[pick]))
                ids.append(pick)
            continuations.append(tokens)
            logprobs.append(steps)
        return continuations, logprobs

    # -- embeddings --------------------------------------------------------

    def embed_tokens(self, tokens: Sequence[str]) -> np.ndarray:
        """Mean-pooled input-layer (layer 0) embedding of the token sequence.

        The empty sequence maps to the end-of-text embedding. Positional
        embeddings are not included.
        """
        weight = self.model.get_input_embeddings().weight
        if not tokens:
            with torch.inference_mode():
                return weight[self.eos_id].float().cpu().numpy()
        ids = self.encode_tokens(tokens)
        with torch.inference_mode():
            return weight[torch.tensor(ids)].float().mean(dim=0).cpu().numpy()

    def embed_item(self, item: str) -> np.ndarray:
        """Embed one wire item: space-joined wire tokens, '' for end-of-text."""
        return self.embed_tokens(item.split(" ") if item else [])

    def info(self) -> dict:
        return {"model_name": self.model_source, "vocab_size": self.vocab_size,
                "eos_id": self.eos_id}
