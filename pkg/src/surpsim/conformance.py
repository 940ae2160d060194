"""Conformance checks for servers implementing the LM wire protocol.

Runs against any base URL. Covers required /v1/info fields, log-probability
normalization, seeded sampling determinism, consistency between sampled
tokens and re-queried log probabilities, and golden-file replay
(record/replay with byte comparison of canonicalized JSON bodies).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import requests

from .errors import TransportError

PASS = "pass"
FAIL = "fail"
SKIP = "skip"


@dataclass
class CheckResult:
    name: str
    status: str
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == PASS


def _call(url: str, method: str, path: str, payload: Optional[dict] = None,
          timeout: float = 60.0) -> dict:
    full = url.rstrip("/") + path
    try:
        if method == "GET":
            resp = requests.get(full, timeout=timeout)
        else:
            resp = requests.post(full, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"{method} {path}: {exc}") from exc
    if resp.status_code != 200:
        raise TransportError(f"{method} {path}: HTTP {resp.status_code}")
    return resp.json()


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=True).encode("ascii")


def check_info(url: str) -> CheckResult:
    body = _call(url, "GET", "/v1/info")
    missing = [k for k in ("model_name", "vocab_size", "eos_id") if k not in body]
    if missing:
        return CheckResult("info-fields", FAIL, f"missing {missing}")
    if not isinstance(body["vocab_size"], int) or body["vocab_size"] < 1:
        return CheckResult("info-fields", FAIL, "vocab_size is not a positive integer")
    return CheckResult("info-fields", PASS)


def check_logprob_normalization(url: str, contexts: Sequence[Sequence[str]],
                                tol: float = 1e-4) -> CheckResult:
    worst = 0.0
    for context in contexts:
        body = _call(url, "POST", "/v1/logprobs", {"context": list(context)})
        values = body["logprobs"] + [body["eos_logprob"]]
        if any(not math.isfinite(v) for v in values):
            return CheckResult("logprob-normalization", FAIL, "non-finite logprob")
        total = sum(math.exp(v) for v in values)
        worst = max(worst, abs(total - 1.0))
    if worst > tol:
        return CheckResult("logprob-normalization", FAIL,
                           f"|sum - 1| = {worst:.3g} > {tol}")
    return CheckResult("logprob-normalization", PASS, f"worst |sum - 1| = {worst:.3g}")


def check_sample_determinism(url: str, context: Sequence[str], n: int = 4,
                             max_tokens: int = 8, seed: int = 1234) -> CheckResult:
    payload = {"context": list(context), "n": n, "max_tokens": max_tokens, "seed": seed}
    first = _call(url, "POST", "/v1/sample", payload)
    second = _call(url, "POST", "/v1/sample", payload)
    if first["continuations"] != second["continuations"]:
        return CheckResult("sample-determinism", FAIL, "same seed, different continuations")
    other = _call(url, "POST", "/v1/sample", {**payload, "seed": seed + 1})
    detail = "" if other["continuations"] != first["continuations"] else \
        "note: seed+1 reproduced the same continuations"
    return CheckResult("sample-determinism", PASS, detail)


def check_sampled_logprob_consistency(url: str, context: Sequence[str],
                                      max_tokens: int = 6, seed: int = 7,
                                      tol: float = 1e-4) -> CheckResult:
    """Re-query each sampled token's logprob step by step and compare with
    the values reported at sampling time (skipped if the server does not
    report them)."""
    body = _call(url, "POST", "/v1/sample",
                 {"context": list(context), "n": 1, "max_tokens": max_tokens,
                  "seed": seed})
    reported = body.get("logprobs")
    if reported is None:
        return CheckResult("sampled-logprob-consistency", SKIP,
                           "server does not report sampling-time logprobs")
    continuation = body["continuations"][0]
    steps = reported[0]
    if len(steps) != len(continuation):
        return CheckResult("sampled-logprob-consistency", FAIL,
                           "logprob count does not match token count")
    ctx = list(context)
    worst = 0.0
    for token, reported_lp in zip(continuation, steps):
        resp = _call(url, "POST", "/v1/logprobs", {"context": ctx})
        try:
            idx = resp["symbols"].index(token)
        except ValueError:
            return CheckResult("sampled-logprob-consistency", FAIL,
                               f"sampled token {token!r} missing from symbols")
        worst = max(worst, abs(resp["logprobs"][idx] - reported_lp))
        ctx.append(token)
    if worst > tol:
        return CheckResult("sampled-logprob-consistency", FAIL,
                           f"max |delta| = {worst:.3g} > {tol}")
    return CheckResult("sampled-logprob-consistency", PASS,
                       f"max |delta| = {worst:.3g}")


def default_requests(contexts: Sequence[Sequence[str]]) -> List[dict]:
    """The request set recorded into golden files."""
    requests_list: List[dict] = [{"method": "GET", "path": "/v1/info"}]
    for context in contexts:
        requests_list.append({"method": "POST", "path": "/v1/logprobs",
                              "body": {"context": list(context)}})
        requests_list.append({"method": "POST", "path": "/v1/sample",
                              "body": {"context": list(context), "n": 2,
                                       "max_tokens": 4, "seed": 99}})
    requests_list.append({"method": "POST", "path": "/v1/embed",
                          "body": {"items": [""]}})
    return requests_list


def record_golden(url: str, requests_list: Sequence[dict], path) -> None:
    """Record request/response pairs for later replay."""
    records = []
    for req in requests_list:
        body = _call(url, req["method"], req["path"], req.get("body"))
        records.append({"request": req, "response": body})
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"kind": "golden", "records": records}, fh, indent=1, sort_keys=True)
        fh.write("\n")


def replay_golden(url: str, path) -> CheckResult:
    """Replay recorded requests; responses must byte-match after JSON
    canonicalization."""
    with open(path, encoding="utf-8") as fh:
        golden = json.load(fh)
    for i, record in enumerate(golden["records"]):
        req = record["request"]
        body = _call(url, req["method"], req["path"], req.get("body"))
        if canonical_json(body) != canonical_json(record["response"]):
            return CheckResult("golden-replay", FAIL,
                               f"record {i} ({req['method']} {req['path']}) differs")
    return CheckResult("golden-replay", PASS, f"{len(golden['records'])} records matched")


def run_conformance(url: str, contexts: Sequence[Sequence[str]],
                    golden_path=None) -> List[CheckResult]:
    results = [
        check_info(url),
        check_logprob_normalization(url, contexts),
        check_sample_determinism(url, contexts[0] if contexts else ()),
        check_sampled_logprob_consistency(url, contexts[0] if contexts else ()),
    ]
    if golden_path is not None:
        results.append(replay_golden(url, golden_path))
    return results
