"""In-process mock of the LM wire protocol for client tests.

Serves a small memoryless word model over stdlib http.server. Sampling is
seeded server-side; embeddings are deterministic hash vectors. A handful of
fault switches let tests exercise validation paths.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

VOCAB = ("the", "cat", "sat", "mat")
PROBS = {"the": 0.35, "cat": 0.25, "sat": 0.2, "mat": 0.15}
EOS_PROB = 0.05
DIM = 8


def hash_vector(text: str) -> list:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=DIM * 2).digest()
    vals = [int.from_bytes(digest[2 * i:2 * i + 2], "big") / 65535.0 - 0.5
            for i in range(DIM)]
    norm = math.sqrt(sum(v * v for v in vals)) or 1.0
    return [v / norm for v in vals]


class MockState:
    def __init__(self):
        self.bad_normalization = False
        self.non_finite = False
        self.requests = []


class _Handler(BaseHTTPRequestHandler):
    state: MockState = None

    def log_message(self, *args):
        pass

    def _send(self, code: int, payload: dict):
        body = json.dumps(payload).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        self.state.requests.append(("GET", self.path))
        if self.path == "/v1/info":
            self._send(200, {"model_name": "mock", "vocab_size": len(VOCAB),
                             "eos_id": len(VOCAB)})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        self.state.requests.append(("POST", self.path))
        length = int(self.headers.get("Content-Length", 0))
        try:
            payload = json.loads(self.rfile.read(length))
        except json.JSONDecodeError:
            self._send(400, {"error": "bad json"})
            return
        if self.path == "/v1/logprobs":
            logprobs = [math.log(PROBS[w]) for w in VOCAB]
            eos_lp = math.log(EOS_PROB)
            if self.state.bad_normalization:
                logprobs = [lp + 0.05 for lp in logprobs]
            if self.state.non_finite:
                eos_lp = float("-inf")
                self._send(200, {"symbols": list(VOCAB),
                                 "logprobs": logprobs,
                                 "eos_logprob": None})
                return
            self._send(200, {"symbols": list(VOCAB), "logprobs": logprobs,
                             "eos_logprob": eos_lp})
        elif self.path == "/v1/sample":
            seed = int(payload["seed"])
            n = int(payload["n"])
            max_tokens = int(payload["max_tokens"])
            rng = np.random.default_rng(seed)
            outcomes = list(VOCAB) + [None]
            weights = [PROBS[w] for w in VOCAB] + [EOS_PROB]
            continuations, logprobs = [], []
            for _ in range(n):
                toks, lps = [], []
                for _ in range(max_tokens):
                    pick = outcomes[rng.choice(len(outcomes), p=weights)]
                    if pick is None:
                        break
                    toks.append(pick)
                    lps.append(math.log(PROBS[pick]))
                continuations.append(toks)
                logprobs.append(lps)
            self._send(200, {"continuations": continuations, "logprobs": logprobs})
        elif self.path == "/v1/embed":
            items = payload["items"]
            self._send(200, {"vectors": [hash_vector(item) for item in items]})
        elif self.path == "/v1/tokenize":
            self._send(200, {"tokens": payload["text"].split()})
        elif self.path == "/v1/tokenize_word":
            self._send(200, {"tokens": [payload["word"]]})
        else:
            self._send(404, {"error": "not found"})


class MockBridge:
    """Context manager running the mock server on an ephemeral port."""

    def __init__(self):
        self.state = MockState()
        handler = type("Handler", (_Handler,), {"state": self.state})
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.url = f"http://127.0.0.1:{self.server.server_port}"
        self._thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    def __enter__(self):
        self._thread.start()
        return self

    def __exit__(self, *exc):
        self.server.shutdown()
        self.server.server_close()
        return False
