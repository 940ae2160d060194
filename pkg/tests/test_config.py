import json

import pytest

from surpsim.config import (config_digest, load_config, load_manifest,
                            write_manifest)
from surpsim.errors import ConfigError


@pytest.fixture()
def workspace(tmp_path):
    (tmp_path / "corpus.txt").write_text("a b\nb a\n")
    (tmp_path / "stimuli.tsv").write_text(
        "item_id\tsentence_id\tword_index\tcontext\ttarget\tN400\n"
        "i1\ts1\t1\ta\tb\t0.5\n")
    return tmp_path


def write_config(tmp_path, text):
    path = tmp_path / "config.yaml"
    path.write_text(text)
    return path


MINIMAL = """\
backend:
  kind: native
  corpus: corpus.txt
"""


class TestLoadConfig:
    def test_minimal_defaults(self, workspace):
        cfg = load_config(write_config(workspace, MINIMAL))
        assert cfg.n_samples == 512
        assert cfg.max_len == 5
        assert cfg.epsilon == pytest.approx(1e-4)
        assert cfg.backend.order == 3
        assert len(cfg.measures) == 11

    def test_zero_samples_rejected(self, workspace):
        text = MINIMAL + "n_samples: 0\n"
        with pytest.raises(ConfigError, match="n_samples"):
            load_config(write_config(workspace, text))

    def test_unknown_key_named(self, workspace):
        text = MINIMAL + "warp_mode: fancy\n"
        with pytest.raises(ConfigError, match="warp_mode"):
            load_config(write_config(workspace, text))

    def test_nested_unknown_key_has_path(self, workspace):
        text = MINIMAL + "variance:\n  bootstrap_reps: 10\n"
        with pytest.raises(ConfigError, match="variance.bootstrap_reps"):
            load_config(write_config(workspace, text))

    def test_missing_corpus_path(self, workspace):
        text = "backend:\n  kind: native\n  corpus: nowhere.txt\n"
        with pytest.raises(ConfigError, match="nowhere.txt"):
            load_config(write_config(workspace, text))

    def test_unknown_measure(self, workspace):
        text = MINIMAL + "measures: [surprisal, magic]\n"
        with pytest.raises(ConfigError, match="magic"):
            load_config(write_config(workspace, text))

    def test_remote_backend(self, workspace):
        text = "backend:\n  kind: remote\n  url: http://localhost:9999\n"
        cfg = load_config(write_config(workspace, text))
        assert cfg.backend.url == "http://localhost:9999"
        assert cfg.backend.max_in_flight == 4


class TestManifest:
    def test_config_hash_stability(self, workspace):
        path = write_config(workspace, MINIMAL)
        a, b = load_config(path), load_config(path)
        assert config_digest(a) == config_digest(b)

    def test_seed_only_changes_full_hash(self, workspace):
        base = load_config(write_config(workspace, MINIMAL))
        reseeded = load_config(write_config(workspace, MINIMAL + "seed: 9\n"))
        assert config_digest(base) != config_digest(reseeded)
        assert config_digest(base, include_seed=False) == config_digest(
            reseeded, include_seed=False)

    def test_round_trip(self, workspace):
        cfg = load_config(write_config(workspace, MINIMAL))
        path = workspace / "out" / "manifest.json"
        written = write_manifest(cfg, path, backend_identity={"kind": "native"},
                                 stages={"estimate": 1.25}, outputs={"cache": "x.tsv"})
        loaded = load_manifest(path)
        assert loaded == json.loads(json.dumps(written))
        assert loaded["config_hash"] == config_digest(cfg)

    def test_manifest_missing_keys(self, workspace, tmp_path):
        bad = tmp_path / "m.json"
        bad.write_text("{}")
        with pytest.raises(ConfigError, match="missing keys"):
            load_manifest(bad)
