import math
import time


class TestInfo:
    def test_fields_match_model(self, client, lm):
        body = client.get("/v1/info").json()
        assert body["vocab_size"] == lm.vocab_size
        assert body["eos_id"] == lm.eos_id
        assert isinstance(body["model_name"], str)


class TestLogprobs:
    def test_normalization_over_full_vocab(self, client):
        resp = client.post("/v1/logprobs", json={"context": []})
        assert resp.status_code == 200
        body = resp.json()
        total = sum(math.exp(v) for v in body["logprobs"])
        total += math.exp(body["eos_logprob"])
        assert abs(total - 1.0) < 1e-4
        assert len(body["symbols"]) == len(body["logprobs"])
        assert all(math.isfinite(v) for v in body["logprobs"])

    def test_unknown_token_422(self, client):
        resp = client.post("/v1/logprobs",
                           json={"context": ["<no-such-token>"]})
        assert resp.status_code == 422
        assert "unknown token" in resp.json()["error"]

    def test_malformed_json_400(self, client):
        resp = client.post("/v1/logprobs", content=b"{not json",
                           headers={"Content-Type": "application/json"})
        assert resp.status_code == 400

    def test_wrong_schema_422(self, client):
        resp = client.post("/v1/logprobs", json={"context": "a string"})
        assert resp.status_code == 422


class TestSample:
    def test_seeded_determinism(self, client, lm):
        payload = {"context": lm.tokenize_text("the cat"), "n": 3,
                   "max_tokens": 5, "seed": 77}
        a = client.post("/v1/sample", json=payload).json()
        b = client.post("/v1/sample", json=payload).json()
        assert a["continuations"] == b["continuations"]

    def test_temperature_field_accepted(self, client):
        resp = client.post("/v1/sample", json={
            "context": [], "n": 1, "max_tokens": 3, "seed": 1,
            "temperature": 0.7})
        assert resp.status_code == 200

    def test_validation(self, client):
        resp = client.post("/v1/sample", json={"context": [], "n": 0,
                                               "max_tokens": 3, "seed": 1})
        assert resp.status_code == 422


class TestEmbed:
    def test_uniform_vector_lengths(self, client, lm):
        items = ["", " ".join(lm.tokenize_text("the cat")),
                 " ".join(lm.tokenize_text("a dog"))]
        resp = client.post("/v1/embed", json={"items": items})
        assert resp.status_code == 200
        vectors = resp.json()["vectors"]
        assert len(vectors) == 3
        assert len({len(v) for v in vectors}) == 1

    def test_empty_item_is_eos_embedding(self, client, lm):
        vec = client.post("/v1/embed", json={"items": [""]}).json()["vectors"][0]
        import numpy as np
        weight = lm.model.get_input_embeddings().weight
        np.testing.assert_allclose(vec, weight[lm.eos_id].detach().numpy(),
                                   atol=1e-6)


class TestTokenizeEndpoints:
    def test_tokenize_round_trip(self, client, lm):
        text = "the cat sat"
        tokens = client.post("/v1/tokenize", json={"text": text}).json()["tokens"]
        assert lm.tokenizer.decode(lm.encode_tokens(tokens)) == text

    def test_tokenize_word_mid_sentence(self, client, lm):
        tokens = client.post("/v1/tokenize_word",
                             json={"word": "cat", "context": "the big"}
                             ).json()["tokens"]
        assert lm.tokenizer.decode(lm.encode_tokens(tokens)) == " cat"


class TestLoadingState:
    def test_503_while_loading(self, tiny_model_dir):
        from fastapi.testclient import TestClient
        from surpsim_bridge.server import create_app

        class SlowLoader:
            def __init__(self, source, device):
                time.sleep(3.0)
                raise RuntimeError("never finishes in this test")

        app = create_app(tiny_model_dir, loader=SlowLoader)
        with TestClient(app) as slow_client:
            resp = slow_client.get("/v1/info")
            assert resp.status_code == 503
            assert "loading" in resp.json()["error"]
