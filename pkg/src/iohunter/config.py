"""Run configuration, canonical serialization, and content fingerprints.

The config file is an INI document with one section per pipeline stage;
command-line flags override file values. Every command derives a
fingerprint from the canonical JSON of its resolved options plus the
sha256 of each input artifact, so cache hits key on content, never on
timestamps.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from .errors import InputError

SPARSITY_FRACTIONS = (0.001, 0.01, 0.05, 0.10, 0.25, 0.50, 1.0)


@dataclass
class RunConfig:
    """Every tunable of the pipeline, grouped by stage."""

    # [data]
    traces: str = ""
    labels: str = ""
    name: str = "dataset"
    format: str = "jsonl"
    allow_unlabeled: bool = False
    # [simnet]
    tau: float = 0.0
    tau_text: float = 0.7
    top_percentile: float = 0.0  # 0 keeps every edge above tau
    include_text_layer: bool = True
    # [features]
    d_c: int = 64
    d_g: int = 32
    bucket_scheme: str = "log2"
    # [model]
    conv: str = "sage"
    d: int = 128
    dropout: float = 0.2
    ablation: str = "full"
    # [train]
    lrs: tuple[float, ...] = (1e-2, 1e-3)
    patiences: tuple[int, ...] = (20, 25, 30)
    max_epochs: int = 1000
    seeds: int = 5
    fractions: tuple[float, ...] = SPARSITY_FRACTIONS
    finetune_fraction: float = 0.001
    # [synth]
    preset: str = "benchmark"
    n_nodes: int = 0  # 0 keeps the preset's native size
    # [run]
    seed: int = 0
    out: str = "runs"


_SECTIONS = {
    "data": ("traces", "labels", "name", "format", "allow_unlabeled"),
    "simnet": ("tau", "tau_text", "top_percentile", "include_text_layer"),
    "features": ("d_c", "d_g", "bucket_scheme"),
    "model": ("conv", "d", "dropout", "ablation"),
    "train": ("lrs", "patiences", "max_epochs", "seeds", "fractions", "finetune_fraction"),
    "synth": ("preset", "n_nodes"),
    "run": ("seed", "out"),
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name: str, raw: str) -> Any:
    kind = _FIELD_TYPES[name]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise InputError(f"config {name}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind.startswith("tuple[float"):
        return tuple(float(x) for x in raw.split(",") if x.strip())
    if kind.startswith("tuple[int"):
        return tuple(int(x) for x in raw.split(",") if x.strip())
    return raw


def load_config(path: Optional[str | Path] = None) -> RunConfig:
    """Defaults, optionally overlaid with an INI file."""
    config = RunConfig()
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise InputError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    try:
        parser.read_string(path.read_text(encoding="utf-8"))
    except configparser.Error as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc
    for section in parser.sections():
        if section not in _SECTIONS:
            raise InputError(f"{path}: unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTIONS[section]:
                raise InputError(f"{path}: unknown key {key!r} in section [{section}]")
            setattr(config, key, _parse_value(key, raw))
    return config


def apply_overrides(config: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Flag overrides win over file values; None means 'not given'."""
    for key, value in overrides.items():
        if value is None:
            continue
        if not hasattr(config, key):
            raise InputError(f"unknown config field {key!r}")
        setattr(config, key, value)
    return config


def canonical_dict(config: RunConfig) -> dict[str, dict[str, Any]]:
    out: dict[str, dict[str, Any]] = {}
    for section, keys in _SECTIONS.items():
        out[section] = {k: _jsonable(getattr(config, k)) for k in keys}
    return out


def _jsonable(value: Any) -> Any:
    if isinstance(value, tuple):
        return list(value)
    return value


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fingerprint(command: str, options: dict[str, Any], input_hashes: dict[str, str]) -> str:
    """Hex digest identifying one command invocation by content."""
    material = canonical_json(
        {"command": command, "options": options, "inputs": dict(sorted(input_hashes.items()))}
    )
    return hashlib.sha256(material.encode("utf-8")).hexdigest()
