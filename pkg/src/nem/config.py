"""Experiment configuration: one JSON file plus flat --key value overrides.

The library dataclasses default to the reference hyperparameters (wide
encoder, delta=2000, batch 160). The CLI profile below instead defaults to a
desk-scale setup that trains in seconds per run while preserving every
mechanism; any field can be overridden from the config file or the command
line. All randomness derives from the single ``seed`` entry.
"""

import copy
import json

from .channel import NoiseChannel
from .datagen import CorpusSpec, default_catalog
from .labels import RelationCatalog
from .seeding import derive_seed_sequence
from .training import TrainConfig


class ConfigError(ValueError):
    """Unusable experiment configuration."""


DEFAULTS: dict = {
    "seed": 7,
    "paths": {
        "train_dataset": "data/train.jsonl",
        "test_dataset": "data/test.jsonl",
        "stats": "data/stats.json",
        "checkpoint": "out/model.ckpt",
        "trace": "out/trace.jsonl",
        "report_dir": "out/report",
        "predictions": "out/predictions.jsonl",
    },
    "corpus": {
        "n_real_relations": 10,
        "catalog": None,  # explicit {"names": [...], "na": i} wins over n_real_relations
        "vocab_size": 500,
        "train_bags": 2000,
        "test_bags": 500,
        "sentences_per_bag": [1, 5],
        "clean_sentence_fraction": 0.7,
        "labels_per_bag": {"1": 0.7, "2": 0.3},
        "trigger_length": [1, 2],
        "regime": "NSNL",
        "corruption": {"flip": 0.1},
        "na_fraction": 0.25,
        "max_len": 30,
    },
    "encoder": {
        "word_dim": 16,
        "pos_dim": 4,
        "win": 3,
        "n_kernels": 32,
        "max_len": 30,
        "dropout": 0.5,
    },
    "train": {
        "selector": "attention",
        "delta": 150,
        "em_iters": 8,
        "batch_size": 64,
        "adadelta_rho": 0.95,
        "adadelta_eps": 1e-6,
        "learning_rate": 1.0,
        "phi_update": "fixed",
        "e_step_probs": "eval",
        "convergence_tol": 1e-4,
        "record_timing": False,
        "channel": {
            "na": {"phi0": 0.1, "phi1": 0.1},
            "other": {"phi0": 0.1, "phi1": 0.1},
        },
    },
    "eval": {"threshold": 0.5},
    "sweep": {
        "pf_list": [0.02, 0.04, 0.06, 0.08, 0.1],
        "n_seeds": 1,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path=None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        cfg = _deep_merge(cfg, user)
    if "seed" not in cfg or cfg["seed"] is None:
        raise ConfigError("config must define a seed")
    return cfg


def parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, pairs: list[tuple[str, str]]) -> dict:
    """Apply flat ``--dotted.key value`` overrides onto the config tree."""
    for key, raw in pairs:
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = parse_override_value(raw)
    return cfg


def catalog_from_config(cfg: dict) -> RelationCatalog:
    corpus = cfg["corpus"]
    if corpus.get("catalog"):
        return RelationCatalog.from_json(corpus["catalog"])
    return default_catalog(int(corpus["n_real_relations"]))


def derived_seed(root_seed: int, tag: str) -> int:
    """Stable 63-bit integer seed for a named sub-experiment."""
    state = derive_seed_sequence(root_seed, tag).generate_state(2, dtype="uint64")
    return int(state[0] >> 1)


def corpus_spec_from_config(cfg: dict, n_bags: int, seed: int) -> CorpusSpec:
    corpus = cfg["corpus"]
    try:
        return CorpusSpec(
            catalog=catalog_from_config(cfg),
            vocab_size=int(corpus["vocab_size"]),
            n_bags=int(n_bags),
            sentences_per_bag=tuple(corpus["sentences_per_bag"]),
            clean_sentence_fraction=float(corpus["clean_sentence_fraction"]),
            labels_per_bag={int(k): float(v) for k, v in corpus["labels_per_bag"].items()},
            trigger_length=tuple(corpus["trigger_length"]),
            regime=str(corpus["regime"]),
            corruption=corpus.get("corruption"),
            na_fraction=float(corpus["na_fraction"]),
            max_len=int(corpus["max_len"]),
            seed=int(seed),
        )
    except KeyError as exc:
        raise ConfigError(f"corpus config missing field {exc}") from exc


def channel_from_config(cfg: dict, catalog: RelationCatalog) -> NoiseChannel:
    spec = cfg["train"].get("channel")
    if spec is None:
        raise ConfigError("train.channel is required for nem mode")
    try:
        return NoiseChannel.from_config(spec, catalog.na_index, len(catalog))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"bad channel config: {exc}") from exc


def train_config_from_config(cfg: dict, catalog: RelationCatalog) -> TrainConfig:
    t = cfg["train"]
    try:
        return TrainConfig(
            selector=str(t["selector"]),
            delta=int(t["delta"]),
            em_iters=int(t["em_iters"]),
            batch_size=int(t["batch_size"]),
            adadelta_rho=float(t["adadelta_rho"]),
            adadelta_eps=float(t["adadelta_eps"]),
            learning_rate=float(t["learning_rate"]),
            seed=int(cfg["seed"]),
            channel=channel_from_config(cfg, catalog),
            phi_update=str(t["phi_update"]),
            e_step_probs=str(t["e_step_probs"]),
            convergence_tol=float(t["convergence_tol"]),
            record_timing=bool(t["record_timing"]),
            encoder=dict(cfg["encoder"]),
        )
    except KeyError as exc:
        raise ConfigError(f"train config missing field {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
