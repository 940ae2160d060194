"""Run configuration and reproducibility manifests.

The config is a single YAML document whose defaults reproduce the main
experiment settings (N = 512 samples, maximum length 5, epsilon = 1e-4).
Unknown keys are rejected so typos cannot silently change a run.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import yaml

from .errors import ConfigError
from .measures import DEFAULT_EPSILON

MAX_SAMPLES = 2 ** 20
MAX_LEN_BOUND = 1024

DEFAULT_MEASURES = (
    "surprisal", "probability", "information_value", "exp_next_surprisal",
    "exp_next_probability", "exp_next_info_value", "entropy",
    "exp_info_value", "pmi", "sim_adjusted_surprisal", "semantic_update",
)
DEFAULT_N_GRID = (4, 8, 16, 32, 64, 128, 256, 512)
DEFAULT_L_GRID = (5, 10, 15)


@dataclass
class NativeBackendConfig:
    corpus: str
    order: int = 3
    pseudocount: float = 0.1


@dataclass
class RemoteBackendConfig:
    url: str
    timeout: float = 30.0
    max_in_flight: int = 4


@dataclass
class VarianceConfig:
    resamples: int = 1000
    n_grid: Tuple[int, ...] = DEFAULT_N_GRID
    l_grid: Tuple[int, ...] = DEFAULT_L_GRID


@dataclass
class EvalConfig:
    responses: Tuple[str, ...] = ()
    folds: int = 10
    cv_seeds: int = 100
    permutation_resamples: int = 10_000
    grouped_by_sentence: bool = False


@dataclass
class RunConfig:
    backend: object
    dataset: Optional[str] = None
    frequencies: Optional[str] = None
    embeddings: Optional[str] = None
    output_dir: str = "out"
    measures: Tuple[str, ...] = DEFAULT_MEASURES
    n_samples: int = 512
    max_len: int = 5
    seed: int = 0
    epsilon: float = DEFAULT_EPSILON
    modes: str = "auto"
    jobs: int = 1
    variance: VarianceConfig = field(default_factory=VarianceConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["backend"] = {"kind": "native" if isinstance(self.backend, NativeBackendConfig)
                          else "remote", **asdict(self.backend)}
        return out


def _require_keys(section: dict, allowed: Sequence[str], prefix: str) -> None:
    for key in section:
        if key not in allowed:
            where = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"unknown config key {where!r}")


def _positive(value, name, kind=float):
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number") from None
    if value <= 0:
        raise ConfigError(f"{name} must be > 0")
    return value


def _int_in(value, name, lo, hi):
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{name} must be an integer")
    if not lo <= value <= hi:
        raise ConfigError(f"{name} must be in [{lo}, {hi}], got {value}")
    return value


def _check_path(path, name, base_dir):
    if path is None:
        return None
    resolved = path if os.path.isabs(path) else os.path.join(base_dir, path)
    if not os.path.exists(resolved):
        raise ConfigError(f"{name} path does not exist: {resolved}")
    return resolved


def _parse_backend(raw, base_dir):
    if not isinstance(raw, dict):
        raise ConfigError("backend must be a mapping")
    kind = raw.get("kind")
    if kind == "native":
        _require_keys(raw, ("kind", "corpus", "order", "pseudocount"), "backend")
        if "corpus" not in raw:
            raise ConfigError("backend.corpus is required for the native backend")
        corpus = _check_path(raw["corpus"], "backend.corpus", base_dir)
        order = _int_in(raw.get("order", 3), "backend.order", 1, 16)
        pseudocount = _positive(raw.get("pseudocount", 0.1), "backend.pseudocount")
        return NativeBackendConfig(corpus, order, pseudocount)
    if kind == "remote":
        _require_keys(raw, ("kind", "url", "timeout", "max_in_flight"), "backend")
        if "url" not in raw:
            raise ConfigError("backend.url is required for the remote backend")
        timeout = _positive(raw.get("timeout", 30.0), "backend.timeout")
        max_in_flight = _int_in(raw.get("max_in_flight", 4), "backend.max_in_flight", 1, 256)
        return RemoteBackendConfig(str(raw["url"]), timeout, max_in_flight)
    raise ConfigError(f"backend.kind must be 'native' or 'remote', got {kind!r}")


_TOP_KEYS = ("backend", "dataset", "frequencies", "embeddings", "output_dir",
             "measures", "n_samples", "max_len", "seed", "epsilon", "modes",
             "jobs", "variance", "evaluation")


def load_config(path) -> RunConfig:
    """Parse and validate a YAML run configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a mapping")
    _require_keys(raw, _TOP_KEYS, "")
    if "backend" not in raw:
        raise ConfigError("config needs a backend section")
    base_dir = os.path.dirname(os.path.abspath(path))
    backend = _parse_backend(raw["backend"], base_dir)

    measures = tuple(raw.get("measures", DEFAULT_MEASURES))
    if not measures:
        raise ConfigError("measures must be non-empty")
    from .measures import catalog
    known = catalog()
    for m in measures:
        if m not in known:
            raise ConfigError(f"unknown measure {m!r} in config")

    n_samples = _int_in(raw.get("n_samples", 512), "n_samples", 1, MAX_SAMPLES)
    max_len = _int_in(raw.get("max_len", 5), "max_len", 0, MAX_LEN_BOUND)
    seed = _int_in(raw.get("seed", 0), "seed", 0, 2 ** 64 - 1)
    epsilon = _positive(raw.get("epsilon", DEFAULT_EPSILON), "epsilon")
    modes = raw.get("modes", "auto")
    if modes not in ("auto", "both"):
        raise ConfigError(f"modes must be 'auto' or 'both', got {modes!r}")
    jobs = _int_in(raw.get("jobs", 1), "jobs", 1, 256)

    var_raw = raw.get("variance", {}) or {}
    _require_keys(var_raw, ("resamples", "n_grid", "l_grid"), "variance")
    variance = VarianceConfig(
        resamples=_int_in(var_raw.get("resamples", 1000), "variance.resamples", 1, 10 ** 6),
        n_grid=tuple(_int_in(v, "variance.n_grid entry", 1, MAX_SAMPLES)
                     for v in var_raw.get("n_grid", DEFAULT_N_GRID)),
        l_grid=tuple(_int_in(v, "variance.l_grid entry", 0, MAX_LEN_BOUND)
                     for v in var_raw.get("l_grid", DEFAULT_L_GRID)),
    )

    eval_raw = raw.get("evaluation", {}) or {}
    _require_keys(eval_raw, ("responses", "folds", "cv_seeds",
                             "permutation_resamples", "grouped_by_sentence"),
                  "evaluation")
    evaluation = EvalConfig(
        responses=tuple(eval_raw.get("responses", ())),
        folds=_int_in(eval_raw.get("folds", 10), "evaluation.folds", 2, 100),
        cv_seeds=_int_in(eval_raw.get("cv_seeds", 100), "evaluation.cv_seeds", 1, 10 ** 4),
        permutation_resamples=_int_in(eval_raw.get("permutation_resamples", 10_000),
                                      "evaluation.permutation_resamples", 1, 10 ** 6),
        grouped_by_sentence=bool(eval_raw.get("grouped_by_sentence", False)),
    )

    embeddings = raw.get("embeddings")
    if embeddings is not None and embeddings != "remote":
        embeddings = _check_path(embeddings, "embeddings", base_dir)

    return RunConfig(
        backend=backend,
        dataset=_check_path(raw.get("dataset"), "dataset", base_dir),
        frequencies=_check_path(raw.get("frequencies"), "frequencies", base_dir),
        embeddings=embeddings,
        output_dir=raw.get("output_dir", "out") if os.path.isabs(raw.get("output_dir", "out"))
        else os.path.join(base_dir, raw.get("output_dir", "out")),
        measures=measures,
        n_samples=n_samples,
        max_len=max_len,
        seed=seed,
        epsilon=epsilon,
        modes=modes,
        jobs=jobs,
        variance=variance,
        evaluation=evaluation,
    )


def config_digest(config: RunConfig, include_seed: bool = True) -> str:
    data = config.to_dict()
    if not include_seed:
        data.pop("seed", None)
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


MANIFEST_KEYS = ("config", "config_hash", "config_hash_except_seed", "seed",
                 "backend_identity", "stages", "outputs")


def write_manifest(config: RunConfig, path, *, backend_identity: Dict[str, object],
                   stages: Dict[str, float], outputs: Dict[str, str]) -> dict:
    """Record everything needed to audit and reproduce a run."""
    manifest = {
        "config": config.to_dict(),
        "config_hash": config_digest(config),
        "config_hash_except_seed": config_digest(config, include_seed=False),
        "seed": config.seed,
        "backend_identity": backend_identity,
        "stages": {k: round(v, 6) for k, v in stages.items()},
        "outputs": outputs,
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise ConfigError(f"manifest {path} is missing keys {missing}")
    return manifest


class StageTimer:
    """Collects named wall-time spans for the manifest."""

    def __init__(self):
        self.stages: Dict[str, float] = {}
        self._start: Optional[float] = None
        self._name: Optional[str] = None

    def start(self, name: str) -> None:
        self._name = name
        self._start = time.perf_counter()

    def stop(self) -> None:
        if self._name is not None and self._start is not None:
            self.stages[self._name] = self.stages.get(self._name, 0.0) + (
                time.perf_counter() - self._start)
        self._name = None
        self._start = None
