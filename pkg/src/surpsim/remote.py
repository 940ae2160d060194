"""Client for a remote language-model server speaking the JSON wire protocol.

Endpoints:
  GET  /v1/info                                -> {model_name, vocab_size, eos_id}
  POST /v1/logprobs {context: [tokens]}        -> {symbols, logprobs, eos_logprob}
  POST /v1/sample   {context, n, max_tokens, seed} -> {continuations: [[tokens]...]}
  POST /v1/embed    {items: [string]}          -> {vectors: [[real]...]}

Log probabilities are natural logs and must be finite. Embedding items are
space-joined wire token strings; the empty item requests the end-of-string
embedding. Transport failures (unreachable host, non-2xx status, unparseable
body) raise TransportError; payloads that parse but violate the contract
raise ProtocolError.
"""

from __future__ import annotations

import threading
from typing import Dict, List, Optional, Sequence

import numpy as np
import requests

from .backends import NextSymbolDistribution
from .errors import ProtocolError, TransportError
from .rng import digest64
from .tokens import Alphabet, Tokens

_EOS_CANDIDATES = ("</s>", "<|eos|>", "<end-of-string>")
_NORM_TOL = 1e-4
_RETRIES = 2


class RemoteBackend:
    """Bounded-concurrency HTTP client presenting the backend interface.

    Responses are validated before use; next-symbol probabilities are
    renormalized from the protocol tolerance (1e-4) to exact unit mass.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, max_in_flight: int = 4):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.max_in_flight = max_in_flight
        self._session = requests.Session()
        self._gate = threading.BoundedSemaphore(max_in_flight)
        self._info: Optional[dict] = None
        self._eos: Optional[str] = None
        self._alphabet: Optional[Alphabet] = None

    # -- transport ---------------------------------------------------------

    def _request(self, method: str, path: str, payload: Optional[dict] = None) -> dict:
        url = f"{self.endpoint}{path}"
        last_exc: Optional[Exception] = None
        for _ in range(_RETRIES + 1):
            try:
                with self._gate:
                    if method == "GET":
                        resp = self._session.get(url, timeout=self.timeout)
                    else:
                        resp = self._session.post(url, json=payload, timeout=self.timeout)
                if resp.status_code != 200:
                    raise TransportError(
                        f"{method} {path} returned HTTP {resp.status_code}: {resp.text[:200]}")
                try:
                    body = resp.json()
                except ValueError as exc:
                    raise TransportError(f"{method} {path} returned unparseable JSON") from exc
                if not isinstance(body, dict):
                    raise ProtocolError(f"{method} {path} returned a non-object body")
                return body
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
        raise TransportError(f"{method} {path} unreachable: {last_exc}") from last_exc

    # -- protocol ----------------------------------------------------------

    def info(self) -> dict:
        if self._info is None:
            body = self._request("GET", "/v1/info")
            for key in ("model_name", "vocab_size", "eos_id"):
                if key not in body:
                    raise ProtocolError(f"/v1/info is missing {key!r}")
            self._info = body
        return self._info

    def _eos_marker(self, symbols: Sequence[str]) -> str:
        if self._eos is None:
            taken = set(symbols)
            for candidate in _EOS_CANDIDATES:
                if candidate not in taken:
                    self._eos = candidate
                    break
            else:
                raise ProtocolError("cannot pick an end-of-string marker outside the vocabulary")
        return self._eos

    def next_distribution(self, context: Tokens) -> NextSymbolDistribution:
        body = self._request("POST", "/v1/logprobs", {"context": list(context)})
        symbols = body.get("symbols")
        logprobs = body.get("logprobs")
        eos_logprob = body.get("eos_logprob")
        if (not isinstance(symbols, list) or not isinstance(logprobs, list)
                or not isinstance(eos_logprob, (int, float))):
            raise ProtocolError("/v1/logprobs payload has wrong field types")
        if len(symbols) != len(logprobs):
            raise ProtocolError("/v1/logprobs symbols and logprobs differ in length")
        values = np.asarray(logprobs + [eos_logprob], dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ProtocolError("/v1/logprobs contains non-finite values")
        probs = np.exp(values)
        total = float(probs.sum())
        if abs(total - 1.0) > _NORM_TOL:
            raise ProtocolError(f"/v1/logprobs probabilities sum to {total!r}")
        probs /= total
        eos = self._eos_marker(symbols)
        if self._alphabet is None:
            self._alphabet = Alphabet(symbols, eos=eos)
        return NextSymbolDistribution(list(symbols) + [eos], probs, eos)

    @property
    def alphabet(self) -> Alphabet:
        if self._alphabet is None:
            self.next_distribution(())
        return self._alphabet

    def sample_batch(self, context: Tokens, n: int, max_tokens: int, seed: int) -> List[Tokens]:
        body = self._request("POST", "/v1/sample", {
            "context": list(context), "n": n, "max_tokens": max_tokens, "seed": seed,
        })
        conts = body.get("continuations")
        if not isinstance(conts, list) or len(conts) != n:
            raise ProtocolError("/v1/sample did not return n continuations")
        out: List[Tokens] = []
        for cont in conts:
            if not isinstance(cont, list) or any(not isinstance(t, str) for t in cont):
                raise ProtocolError("/v1/sample continuation is not a list of tokens")
            if len(cont) > max_tokens:
                raise ProtocolError("/v1/sample continuation exceeds max_tokens")
            out.append(tuple(cont))
        return out

    def embed(self, items: Sequence[str]) -> np.ndarray:
        body = self._request("POST", "/v1/embed", {"items": list(items)})
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(items):
            raise ProtocolError("/v1/embed did not return one vector per item")
        arr = np.asarray(vectors, dtype=np.float64)
        if arr.ndim != 2:
            raise ProtocolError("/v1/embed vectors are ragged")
        if not np.all(np.isfinite(arr)):
            raise ProtocolError("/v1/embed vectors contain non-finite values")
        return arr

    def tokenize(self, text: str) -> Tokens:
        body = self._request("POST", "/v1/tokenize", {"text": text})
        tokens = body.get("tokens")
        if not isinstance(tokens, list) or any(not isinstance(t, str) for t in tokens):
            raise ProtocolError("/v1/tokenize did not return a token list")
        return tuple(tokens)

    def tokenize_word(self, word: str, context: str) -> Tokens:
        body = self._request("POST", "/v1/tokenize_word", {"word": word, "context": context})
        tokens = body.get("tokens")
        if not isinstance(tokens, list) or any(not isinstance(t, str) for t in tokens):
            raise ProtocolError("/v1/tokenize_word did not return a token list")
        return tuple(tokens)

    def identity(self) -> Dict[str, object]:
        info = self.info()
        return {"kind": "remote", "endpoint": self.endpoint,
                "model_name": info["model_name"], "vocab_size": info["vocab_size"]}


def derive_server_seed(seed: int, context: Tokens, n: int, max_tokens: int) -> int:
    """Stable non-negative 63-bit seed for server-side batch sampling."""
    return digest64(seed, tuple(context), n, max_tokens) >> 1
