"""Engine configuration: config.json with REVKIT_ environment overrides.

Configuration is a nested dict merged from three layers: built-in defaults,
the workspace config.json, then environment variables. An override named
``REVKIT_<SECTION>_<FIELD>`` replaces ``config[section][field]`` (e.g.
``REVKIT_EMBEDDING_ENDPOINT``); values parse as JSON when possible, else as
strings. The API bearer token is only ever read from ``REVKIT_API_TOKEN``.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

from ..classifier import TrainConfig
from ..errors import ValidationError
from ..optimizer import OptimizationConfig
from ..providers import (
    EmbeddedScorer,
    FallbackEmbedder,
    HttpEmbeddingProvider,
    HttpLLMClient,
    HttpScorerClient,
    ScriptedLLMClient,
)
from ..synthgen import GenerationConfig

ENV_PREFIX = "REVKIT_"
TOKEN_ENV = "REVKIT_API_TOKEN"

DEFAULT_CONFIG: dict = {
    "embedding": {
        "kind": "fallback",  # fallback | http
        "endpoint": "",
        "model": "",
        "dim": 256,
    },
    "llm": {
        "kind": "scripted",  # scripted | http
        "endpoint": "",
        "model": "",
        "script_path": "",
        "cycle": True,
    },
    "scorer": {
        "kind": "embedded",  # embedded | http
        "endpoint": "",
    },
    "retrieval": {
        "top_k": 10,
        "rerank_keep": 5,
        "dependency_threshold": 0.5,
    },
    "generation": {
        "n_demonstrations": 3,
        "temperature": 0.8,
        "top_p": 0.9,
        "top_k_sampling": 50,
        "max_new_tokens": 8192,
        "seed": 0,
    },
    "optimization": {
        "n_demonstrations": 5,
        "best_of_n": 4,
        "temperature": 0.8,
        "top_p": 0.9,
        "top_k_sampling": 50,
        "max_new_tokens": 8192,
        "include_related_clauses": True,
        "seed": 0,
    },
    "classifier": {
        "K": 8,
        "learning_rate": 0.1,
        "epochs": 500,
        "l2_lambda": 1e-3,
        "seed": 0,
        "val_fraction": 0.1,
    },
    "service": {
        "ambiguity_band": 0.15,
        "retrain_min_decisions": 5,
    },
}


def load_config(path: str | Path | None = None, env: dict | None = None) -> dict:
    """Merge defaults, the optional config file, and REVKIT_ env overrides."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None and Path(path).exists():
        try:
            file_config = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {path} is not valid JSON: {exc}") from exc
        _deep_merge(config, file_config)
    _apply_env_overrides(config, env if env is not None else dict(os.environ))
    return config


def _deep_merge(base: dict, update: dict) -> None:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value


def _apply_env_overrides(config: dict, env: dict) -> None:
    for name, raw in env.items():
        if not name.startswith(ENV_PREFIX) or name == TOKEN_ENV:
            continue
        parts = name[len(ENV_PREFIX):].lower().split("_", 1)
        if len(parts) != 2 or parts[0] not in config:
            continue
        section, field = parts
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        config[section][field] = value


def api_token(env: dict | None = None) -> str | None:
    return (env if env is not None else os.environ).get(TOKEN_ENV) or None


def build_embedder(config: dict):
    section = config["embedding"]
    if section["kind"] == "fallback":
        return FallbackEmbedder(dim=int(section.get("dim", 256)))
    if section["kind"] == "http":
        if not section.get("endpoint"):
            raise ValidationError("embedding.endpoint required for http embedder")
        return HttpEmbeddingProvider(
            endpoint=section["endpoint"],
            model=section.get("model", ""),
            api_key=os.environ.get("REVKIT_EMBEDDING_API_KEY"),
        )
    raise ValidationError(f"unknown embedding kind {section['kind']!r}")


def build_llm(config: dict):
    section = config["llm"]
    if section["kind"] == "scripted":
        script = section.get("script_path")
        if script:
            return ScriptedLLMClient.from_file(script, cycle=bool(section.get("cycle", True)))
        return ScriptedLLMClient([], cycle=False)
    if section["kind"] == "http":
        if not section.get("endpoint"):
            raise ValidationError("llm.endpoint required for http LLM")
        return HttpLLMClient(
            endpoint=section["endpoint"],
            model=section.get("model", ""),
            api_key=os.environ.get("REVKIT_LLM_API_KEY"),
        )
    raise ValidationError(f"unknown llm kind {section['kind']!r}")


def build_scorer(config: dict):
    section = config["scorer"]
    if section["kind"] == "embedded":
        return EmbeddedScorer()
    if section["kind"] == "http":
        if not section.get("endpoint"):
            raise ValidationError("scorer.endpoint required for http scorer")
        return HttpScorerClient(
            endpoint=section["endpoint"],
            api_key=os.environ.get("REVKIT_SCORER_API_KEY"),
        )
    raise ValidationError(f"unknown scorer kind {section['kind']!r}")


def generation_config(config: dict) -> GenerationConfig:
    return GenerationConfig(**config["generation"])


def optimization_config(config: dict, **overrides) -> OptimizationConfig:
    merged = {**config["optimization"], **overrides}
    return OptimizationConfig(**merged)


def train_config(config: dict, **overrides) -> TrainConfig:
    merged = {**config["classifier"], **overrides}
    return TrainConfig(**merged)
