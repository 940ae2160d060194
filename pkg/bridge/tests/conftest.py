import socket
import threading
import time

import pytest
import torch

TRAIN_TEXT = [
    "the cat sat on the mat",
    "a dog chases the bird today",
    "one fox finds the cat quickly",
    "the bird eats and sleeps now",
    "a cat sees one dog by the door",
] * 8


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly initialized causal LM with a byte-level BPE
    tokenizer, saved to disk so the server loads it like any checkpoint."""
    from tokenizers import Tokenizer, decoders, models, pre_tokenizers, trainers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    outdir = tmp_path_factory.mktemp("tiny-model")
    tok = Tokenizer(models.BPE(unk_token=None))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False)
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=320, special_tokens=["<|endoftext|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet())
    tok.train_from_iterator(TRAIN_TEXT, trainer)
    tok.save(str(outdir / "tokenizer.json"))
    hf_tok = PreTrainedTokenizerFast(tokenizer_file=str(outdir / "tokenizer.json"),
                                     eos_token="<|endoftext|>")
    config = GPT2Config(vocab_size=hf_tok.vocab_size, n_embd=32, n_layer=2,
                        n_head=2, n_positions=128,
                        bos_token_id=hf_tok.eos_token_id,
                        eos_token_id=hf_tok.eos_token_id)
    torch.manual_seed(7)
    model = GPT2LMHeadModel(config).eval()
    hf_tok.save_pretrained(outdir)
    model.save_pretrained(outdir)
    return str(outdir)


@pytest.fixture(scope="session")
def lm(tiny_model_dir):
    from surpsim_bridge.lm import LanguageModel
    return LanguageModel(tiny_model_dir)


@pytest.fixture(scope="session")
def client(tiny_model_dir):
    from fastapi.testclient import TestClient
    from surpsim_bridge.server import create_app

    with TestClient(create_app(tiny_model_dir)) as test_client:
        deadline = time.time() + 120
        while time.time() < deadline:
            if test_client.get("/v1/info").status_code == 200:
                break
            time.sleep(0.1)
        else:
            pytest.fail("model did not load in time")
        yield test_client


@pytest.fixture(scope="session")
def live_server(tiny_model_dir):
    """A real uvicorn server on an ephemeral port for URL-based clients."""
    import uvicorn
    from surpsim_bridge.server import create_app

    with socket.socket() as probe:
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
    config = uvicorn.Config(create_app(tiny_model_dir), host="127.0.0.1",
                            port=port, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    import requests
    url = f"http://127.0.0.1:{port}"
    deadline = time.time() + 120
    while time.time() < deadline:
        try:
            if requests.get(f"{url}/v1/info", timeout=1).status_code == 200:
                break
        except requests.RequestException:
            pass
        time.sleep(0.1)
    else:
        pytest.fail("live server did not come up")
    yield url
    server.should_exit = True
    thread.join(timeout=10)
