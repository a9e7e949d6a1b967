"""Experiment configuration: an INI file with typed, validated sections.

Every key has a default, so an empty file describes the desk-scale toy
experiment. Seeds left unset are derived from ``[experiment] seed`` and a
stage name, which keeps every run a pure function of the file.

Example::

    [experiment]
    seed = 0

    [dataset]
    source = synthetic
    per_class = 1024
    separation = 0.25

    [shadows]
    count = 16
    training_mode = mse
"""

from __future__ import annotations

import configparser
import copy
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError

# section -> key -> (type, default)
SCHEMA = {
    "experiment": {
        "seed": (int, 0),
        "workers": (int, 1),
    },
    "dataset": {
        "source": (str, "synthetic"),
        "num_classes": (int, 2),
        "feature_dim": (int, 16),
        "per_class": (int, 1024),
        "spread": (float, 1.0),
        "separation": (float, 0.25),
        "seed": (int, None),
        "path": (str, ""),
        "idx_images": (str, ""),
        "idx_labels": (str, ""),
        "limit": (int, None),
    },
    "shift": {
        "enabled": (bool, False),
        "shift": (float, 1.0),
        "per_class": (int, None),
        "sample_seed": (int, None),
    },
    "split": {
        "target": (int, 512),
        "eval": (int, 128),
        "seed": (int, None),
        "nonmembers_in_pool": (bool, False),
    },
    "target": {
        "hidden": ("ints", (32,)),
        "activation": (str, "relu"),
        "init_seed": (int, None),
        "steps": (int, 2000),
        "batch_size": (int, 64),
        "learning_rate": (float, 0.1),
        "momentum": (float, 0.9),
        "weight_decay": (float, 5e-4),
        "shuffle_seed": (int, None),
        "oracle_mode": (str, "logits"),
    },
    "shadows": {
        "hidden": ("ints", (32,)),
        "activation": (str, "relu"),
        "count": (int, 16),
        "subset_size": (int, None),
        "training_mode": (str, "mse"),
        "seed": (int, None),
        "steps": (int, 2000),
        "batch_size": (int, 64),
        "learning_rate": (float, 0.1),
        "momentum": (float, 0.9),
        "weight_decay": (float, 5e-4),
    },
    "distill": {
        "alpha": (float, 1.0),
        "temperature": (float, 1.0),
        "steps": (int, None),
        "batch_size": (int, None),
        "kl_learning_rate": (float, 0.1),
        "mse_learning_rate": (float, 0.01),
        "momentum": (float, 0.9),
        "weight_decay": (float, 5e-4),
    },
    "attack": {
        "num_queries": (int, 10),
        "aug_seed": (int, None),
        "aug_sigma": (float, 0.05),
        "var_floor": (float, 1e-6),
        "fpr_grid": ("floats", (1e-4, 1e-3, 1e-2)),
    },
    "report": {
        "mismatch_hidden": ("ints", (64, 64)),
        "mismatch_activation": (str, "tanh"),
    },
}

MODES = ("plain", "kl", "mse")

_SEED_KEYS = {
    ("dataset", "seed"): "dataset",
    ("shift", "sample_seed"): "shift",
    ("split", "seed"): "split",
    ("target", "init_seed"): "target-init",
    ("target", "shuffle_seed"): "target-shuffle",
    ("shadows", "seed"): "shadows",
    ("attack", "aug_seed"): "augment",
}


def derive_seed(base, *tags):
    """Deterministic 32-bit seed from a base seed and string/int tags."""
    words = [int(base)]
    for t in tags:
        if isinstance(t, str):
            words.append(int.from_bytes(hashlib.sha256(t.encode()).digest()[:4], "little"))
        else:
            words.append(int(t))
    return int(np.random.SeedSequence(words).generate_state(1)[0])


def _parse(kind, raw, where):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return tuple(int(v) for v in raw.replace(",", " ").split())
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(",", " ").split())
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def default_config():
    return {sec: {k: copy.deepcopy(v[1]) for k, v in keys.items()} for sec, keys in SCHEMA.items()}


def load_config(path=None, text=None, seed=None, mode=None):
    """Read an INI file (or string) into a resolved, validated dict.

    ``seed`` replaces ``[experiment] seed`` before derived seeds are filled in;
    ``mode`` replaces ``[shadows] training_mode``.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        parser.read(path)
    elif text is not None:
        parser.read_string(text)
    cfg = default_config()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            cfg[section][key] = _parse(SCHEMA[section][key][0], raw, f"[{section}] {key}")
    if seed is not None:
        cfg["experiment"]["seed"] = int(seed)
    if mode is not None:
        cfg["shadows"]["training_mode"] = mode
    return resolve(cfg)


def resolve(cfg):
    """Fill derived seeds and defaults, then validate. Returns a new dict."""
    cfg = copy.deepcopy(cfg)
    base = cfg["experiment"]["seed"]
    for (sec, key), tag in _SEED_KEYS.items():
        if cfg[sec][key] is None:
            cfg[sec][key] = derive_seed(base, tag)
    if cfg["shadows"]["subset_size"] is None:
        cfg["shadows"]["subset_size"] = cfg["split"]["target"]
    if cfg["distill"]["steps"] is None:
        cfg["distill"]["steps"] = cfg["shadows"]["steps"]
    if cfg["distill"]["batch_size"] is None:
        cfg["distill"]["batch_size"] = cfg["shadows"]["batch_size"]
    if cfg["shift"]["per_class"] is None:
        cfg["shift"]["per_class"] = cfg["dataset"]["per_class"]
    validate(cfg)
    return cfg


def with_overrides(cfg, mode=None, **sections):
    """Copy of a resolved ``cfg`` with ``sections={"distill": {"alpha": 0.5}}``
    style overrides applied and re-validated."""
    raw = copy.deepcopy(cfg)
    if mode is not None:
        raw["shadows"]["training_mode"] = mode
    for sec, values in sections.items():
        raw[sec].update(values)
    return resolve(raw)


def validate(cfg):
    d = cfg["dataset"]
    if d["source"] not in ("synthetic", "jsonl", "idx"):
        raise ConfigError("[dataset] source must be synthetic, jsonl or idx")
    if d["source"] == "jsonl" and not d["path"]:
        raise ConfigError("[dataset] path is required for source = jsonl")
    if d["source"] == "idx" and not (d["idx_images"] and d["idx_labels"]):
        raise ConfigError("[dataset] idx_images and idx_labels are required for source = idx")
    if d["source"] == "synthetic":
        if d["num_classes"] < 2 or d["feature_dim"] < 1 or d["per_class"] < 1:
            raise ConfigError("[dataset] needs num_classes >= 2, feature_dim >= 1, per_class >= 1")
        if not d["spread"] > 0 or not d["separation"] > 0:
            raise ConfigError("[dataset] spread and separation must be positive")
        total = d["num_classes"] * d["per_class"]
        s = cfg["split"]
        reserved = s["target"] + (0 if s["nonmembers_in_pool"] else s["eval"])
        if s["target"] + s["eval"] > total or reserved >= total:
            raise ConfigError(f"[split] target={s['target']} eval={s['eval']} do not fit a dataset of {total}")
    s = cfg["split"]
    if s["target"] < 1 or s["eval"] < 1 or s["eval"] > s["target"]:
        raise ConfigError("[split] needs 1 <= eval <= target")
    for sec in ("target", "shadows"):
        t = cfg[sec]
        if t["activation"] not in ("relu", "tanh"):
            raise ConfigError(f"[{sec}] activation must be relu or tanh")
        if any(h < 1 for h in t["hidden"]):
            raise ConfigError(f"[{sec}] hidden widths must be positive")
        if t["steps"] < 0 or t["batch_size"] < 1 or not t["learning_rate"] > 0:
            raise ConfigError(f"[{sec}] needs steps >= 0, batch_size >= 1, learning_rate > 0")
        if not 0 <= t["momentum"] < 1 or t["weight_decay"] < 0:
            raise ConfigError(f"[{sec}] momentum must be in [0, 1) and weight_decay >= 0")
    if cfg["target"]["oracle_mode"] not in ("logits", "probabilities"):
        raise ConfigError("[target] oracle_mode must be logits or probabilities")
    sh = cfg["shadows"]
    if sh["count"] < 1:
        raise ConfigError("[shadows] count must be at least 1")
    if sh["subset_size"] < 1:
        raise ConfigError("[shadows] subset_size must be positive")
    if sh["training_mode"] not in MODES:
        raise ConfigError(f"[shadows] training_mode must be one of {MODES}")
    di = cfg["distill"]
    if not 0 <= di["alpha"] <= 1 or not di["temperature"] > 0:
        raise ConfigError("[distill] needs alpha in [0, 1] and temperature > 0")
    if di["steps"] < 0 or di["batch_size"] < 1:
        raise ConfigError("[distill] needs steps >= 0 and batch_size >= 1")
    if not di["kl_learning_rate"] > 0 or not di["mse_learning_rate"] > 0:
        raise ConfigError("[distill] learning rates must be positive")
    a = cfg["attack"]
    if a["num_queries"] < 1 or not a["var_floor"] > 0 or a["aug_sigma"] < 0:
        raise ConfigError("[attack] needs num_queries >= 1, var_floor > 0, aug_sigma >= 0")
    if any(not 0 <= f <= 1 for f in a["fpr_grid"]):
        raise ConfigError("[attack] fpr_grid values must lie in [0, 1]")
    if cfg["experiment"]["workers"] < 1:
        raise ConfigError("[experiment] workers must be at least 1")


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, default=list).encode()
    return hashlib.sha256(blob).hexdigest()


def dump_config(cfg):
    """Render a resolved config back to INI text that :func:`load_config` reads
    back to the same dict."""
    lines = []
    for sec, keys in cfg.items():
        lines.append(f"[{sec}]")
        for k, v in keys.items():
            if v is None:  # unset optional key; reloads as its default
                continue
            if isinstance(v, (tuple, list)):
                v = ", ".join(repr(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{k} = {v}")
        lines.append("")
    return "\n".join(lines)
