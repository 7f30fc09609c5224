"""Run configuration: schema validation, seed derivation, and atomic file IO.

A run is driven by one JSON config file. The schema is validated before any
work starts and unknown keys are rejected. Every command writes its fully
resolved config next to its outputs so artifacts are reproducible from disk.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

from .errors import ConfigError, SchemaError


def derive_seed(global_seed: int, label: str) -> int:
    """Stable per-component seed derived from the single global seed."""
    digest = hashlib.sha256(f"{global_seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:16]


def atomic_write_text(path: str | Path, content: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: str | Path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=1) + "\n")


# Schema: {key: (type or nested schema, default)}. A default of REQUIRED
# marks the key mandatory; None means "absent unless given".
REQUIRED = object()

_DATASET_SCHEMA = {
    "train_size": (int, 600),
    "validation_size": (int, 200),
    "test_size": (int, 200),
    "vocab_size": (int, 88),
    "keywords_per_class": (int, 24),
    "min_tokens": (int, 5),
    "max_tokens": (int, 15),
    "class_keywords": (list, None),
}

_MODEL_SCHEMA = {
    "embed_dim": (int, 32),
    "num_classes": (int, 2),
    "learning_rate": (float, 0.05),
    "epochs": (int, 30),
    "batch_size": (int, 8),
}

_ATTACK_SCHEMA = {
    "max_tokens_attacked": (int, 5),
    "candidates_per_position": (int, 10),
    "query_budget": (int, 2000),
    "cosine_threshold": (float, 0.9363),
    "max_char_edits_per_token": (int, 2),
}

_ABSTAIN_SCHEMA = {
    "mix_ratio": (float, 1.0),
    "epochs": (int, 30),
    "learning_rate": (float, 0.05),
    "cold_start": (bool, False),
    "generation_attack": (str, "char"),
}

_EXPLICIT_SCHEMA = {
    "embed_dim": (int, 128),
    "ngram_orders": (list, [1, 2, 3]),
    "pairs": (int, 3000),
    "epochs": (int, 150),
    "learning_rate": (float, 0.5),
    "identity_weight": (float, 0.01),
    "accept_low": (float, 0.7),
    "accept_high": (float, 1.0),
    "wordlist": (str, None),
}

_CAMPAIGN_SCHEMA = {
    "split": (str, "test"),
    "workers": (int, 1),
}

RUN_SCHEMA = {
    "seed": (int, 0),
    "out_dir": (str, REQUIRED),
    "dataset": (_DATASET_SCHEMA, {}),
    "model": (_MODEL_SCHEMA, {}),
    "attacks": (
        {
            "baseline_word": (_ATTACK_SCHEMA, {}),
            "constrained_word": (_ATTACK_SCHEMA, {}),
            "char": (_ATTACK_SCHEMA, {}),
        },
        {},
    ),
    "defenses": (
        {
            "abstain": (_ABSTAIN_SCHEMA, {}),
            "explicit": (_EXPLICIT_SCHEMA, {}),
        },
        {},
    ),
    "campaign": (_CAMPAIGN_SCHEMA, {}),
}


def _validate(section: dict, schema: dict, where: str) -> dict:
    if not isinstance(section, dict):
        raise SchemaError(f"{where}: expected an object, got {type(section).__name__}")
    unknown = set(section) - set(schema)
    if unknown:
        raise SchemaError(f"{where}: unknown keys {sorted(unknown)}")
    out = {}
    for key, (kind, default) in schema.items():
        if isinstance(kind, dict):
            out[key] = _validate(section.get(key, {}), kind, f"{where}.{key}")
            continue
        if key not in section:
            if default is REQUIRED:
                raise SchemaError(f"{where}: missing required key {key!r}")
            if default is not None:
                out[key] = default
            continue
        value = section[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, kind) or (kind is int and isinstance(value, bool)):
            raise SchemaError(f"{where}.{key}: expected {kind.__name__}, got {type(value).__name__}")
        out[key] = value
    return out


def resolve_config(raw: dict) -> dict:
    """Validate a raw config dict and fill in defaults."""
    return _validate(raw, RUN_SCHEMA, "config")


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return resolve_config(raw)


def write_resolved_config(config: dict, out_dir: str | Path) -> str:
    """Persist the resolved config and return its hash."""
    digest = config_hash(config)
    atomic_write_json(Path(out_dir) / "resolved_config.json", {"config": config, "hash": digest})
    return digest


def require_file(path: str | Path, what: str) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def validate_positive(config: dict) -> None:
    """Range checks that the type schema cannot express."""
    ds = config["dataset"]
    for key in ("train_size", "validation_size", "test_size", "vocab_size", "keywords_per_class"):
        if ds[key] < 1:
            raise ConfigError(f"dataset.{key} must be >= 1")
    if not 1 <= ds["min_tokens"] <= ds["max_tokens"]:
        raise ConfigError("dataset.min_tokens must be in [1, max_tokens]")
    for name, attack in config["attacks"].items():
        for key in ("max_tokens_attacked", "candidates_per_position", "query_budget", "max_char_edits_per_token"):
            if attack[key] < 1:
                raise ConfigError(f"attacks.{name}.{key} must be >= 1")
        if not 0 < attack["cosine_threshold"] <= 1:
            raise ConfigError(f"attacks.{name}.cosine_threshold must be in (0, 1]")
    explicit = config["defenses"]["explicit"]
    if not 0 < explicit["accept_low"] < explicit["accept_high"] <= 1.0:
        raise ConfigError("defenses.explicit thresholds must satisfy 0 < accept_low < accept_high <= 1")
    if config["campaign"]["workers"] < 1:
        raise ConfigError("campaign.workers must be >= 1")
