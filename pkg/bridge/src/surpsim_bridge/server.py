"""HTTP surface.

  GET  /v1/info                                    -> {model_name, vocab_size, eos_id}
  POST /v1/logprobs  {context}                     -> {symbols, logprobs, eos_logprob}
  POST /v1/sample    {context, n, max_tokens, seed[, temperature]}
                                                   -> {continuations, logprobs}
  POST /v1/embed     {items}                       -> {vectors}
  POST /v1/tokenize  {text}                        -> {tokens}
  POST /v1/tokenize_word {word, context}           -> {tokens}

Status codes: 400 malformed JSON, 422 schema violations or unknown tokens,
503 while the model is loading. /v1/embed items are space-joined wire
tokens; the empty item returns the end-of-text embedding.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import threading

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .lm import LanguageModel, UnknownTokenError


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


async def _parse_body(request: Request):
    raw = await request.body()
    try:
        body = json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError):
        return None
    return body if isinstance(body, dict) else None


def _token_list(value) -> bool:
    return isinstance(value, list) and all(isinstance(t, str) for t in value)


def create_app(model_source: str, device: str = "cpu",
               loader=LanguageModel) -> FastAPI:
    """Build the application; the model loads in a background thread and
    endpoints answer 503 until it is ready."""

    @contextlib.asynccontextmanager
    async def lifespan(app: FastAPI):
        def load():
            try:
                app.state.lm = loader(model_source, device)
            except Exception as exc:  # surfaced as 503 with the reason
                app.state.load_error = repr(exc)
        thread = threading.Thread(target=load, daemon=True)
        thread.start()
        app.state.load_thread = thread
        yield

    app = FastAPI(lifespan=lifespan)
    app.state.lm = None
    app.state.load_error = None

    def ready():
        if app.state.lm is not None:
            return None
        if app.state.load_error:
            return _error(503, f"model failed to load: {app.state.load_error}")
        return _error(503, "model loading")

    @app.get("/v1/info")
    async def info():
        not_ready = ready()
        if not_ready:
            return not_ready
        return app.state.lm.info()

    @app.post("/v1/logprobs")
    async def logprobs(request: Request):
        not_ready = ready()
        if not_ready:
            return not_ready
        body = await _parse_body(request)
        if body is None:
            return _error(400, "malformed JSON body")
        context = body.get("context")
        if not _token_list(context):
            return _error(422, "context must be a list of token strings")
        lm = app.state.lm
        try:
            symbol_logprobs, eos_logprob = lm.split_logprobs(context)
        except UnknownTokenError as exc:
            return _error(422, f"unknown token {exc.token!r}")
        return {"symbols": lm.symbols, "logprobs": symbol_logprobs,
                "eos_logprob": eos_logprob}

    @app.post("/v1/sample")
    async def sample(request: Request):
        not_ready = ready()
        if not_ready:
            return not_ready
        body = await _parse_body(request)
        if body is None:
            return _error(400, "malformed JSON body")
        context = body.get("context")
        n = body.get("n")
        max_tokens = body.get("max_tokens")
        seed = body.get("seed")
        temperature = body.get("temperature", 1.0)
        if not _token_list(context):
            return _error(422, "context must be a list of token strings")
        if not isinstance(n, int) or n < 1:
            return _error(422, "n must be a positive integer")
        if not isinstance(max_tokens, int) or max_tokens < 0:
            return _error(422, "max_tokens must be a non-negative integer")
        if not isinstance(seed, int):
            return _error(422, "seed must be an integer")
        if not isinstance(temperature, (int, float)) or temperature <= 0:
            return _error(422, "temperature must be positive")
        try:
            continuations, logprobs = app.state.lm.sample(
                context, n, max_tokens, seed, float(temperature))
        except UnknownTokenError as exc:
            return _error(422, f"unknown token {exc.token!r}")
        return {"continuations": continuations, "logprobs": logprobs}

    @app.post("/v1/embed")
    async def embed(request: Request):
        not_ready = ready()
        if not_ready:
            return not_ready
        body = await _parse_body(request)
        if body is None:
            return _error(400, "malformed JSON body")
        items = body.get("items")
        if not isinstance(items, list) or not all(isinstance(i, str) for i in items):
            return _error(422, "items must be a list of strings")
        try:
            vectors = [app.state.lm.embed_item(item).tolist() for item in items]
        except UnknownTokenError as exc:
            return _error(422, f"unknown token {exc.token!r}")
        return {"vectors": vectors}

    @app.post("/v1/tokenize")
    async def tokenize(request: Request):
        not_ready = ready()
        if not_ready:
            return not_ready
        body = await _parse_body(request)
        if body is None:
            return _error(400, "malformed JSON body")
        text = body.get("text")
        if not isinstance(text, str):
            return _error(422, "text must be a string")
        return {"tokens": app.state.lm.tokenize_text(text)}

    @app.post("/v1/tokenize_word")
    async def tokenize_word(request: Request):
        not_ready = ready()
        if not_ready:
            return not_ready
        body = await _parse_body(request)
        if body is None:
            return _error(400, "malformed JSON body")
        word = body.get("word")
        context = body.get("context", "")
        if not isinstance(word, str) or not isinstance(context, str):
            return _error(422, "word and context must be strings")
        return {"tokens": app.state.lm.tokenize_word(word, context)}

    return app


def serve(model_name: str, host: str = "127.0.0.1", port: int = 8400,
          device: str = "cpu") -> None:
    """Run the bridge until interrupted."""
    import uvicorn
    uvicorn.run(create_app(model_name, device), host=host, port=port,
                log_level="warning")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Serve a causal LM over the "
                                                 "bridge protocol.")
    parser.add_argument("--model", required=True,
                        help="model name or local checkpoint directory")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8400)
    parser.add_argument("--device", default="cpu")
    args = parser.parse_args(argv)
    serve(args.model, args.host, args.port, args.device)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
