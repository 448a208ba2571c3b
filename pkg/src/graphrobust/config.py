"""Experiment configuration: strict JSON schema with dot-path overrides.

Unknown keys are rejected everywhere so config typos fail fast.  The config
hash (first 16 hex chars of the sha256 of the canonical JSON, excluding the
output directory) is stamped into every output file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

from .data import CsbmParams
from .errors import ConfigError, DataError
from .models import ModelSpec
from .training import AttackSpec, TrainConfig

_DATASET_KEYS = {
    "csbm": {"kind", "n", "dim", "sigma", "distance", "p_in", "q_out"},
    "karate": {"kind"},
    "files": {"kind", "edges", "features", "labels", "n_classes"},
}


def _check_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


@dataclass
class DatasetSpec:
    kind: str = "csbm"
    n: int = 1000
    dim: int = 21
    sigma: float = 1.0
    distance: float = 1.5
    p_in: float = 0.0015
    q_out: float = 0.0063
    edges: Optional[str] = None
    features: Optional[str] = None
    labels: Optional[str] = None
    n_classes: Optional[int] = None

    @classmethod
    def from_dict(cls, section: dict) -> "DatasetSpec":
        kind = section.get("kind", "csbm")
        if kind not in _DATASET_KEYS:
            raise ConfigError(f"unknown dataset kind {kind!r}")
        _check_keys(section, _DATASET_KEYS[kind], f"dataset ({kind})")
        if kind == "files":
            for key in ("edges", "features", "labels"):
                if key not in section:
                    raise ConfigError(f"dataset kind 'files' needs {key!r}")
        return cls(**section)

    def csbm_params(self, seed: int) -> CsbmParams:
        return CsbmParams(n=self.n, dim=self.dim, sigma=self.sigma,
                          distance=self.distance, p_in=self.p_in,
                          q_out=self.q_out, seed=seed)


_SPLIT_KEYS = {"per_class_train", "per_class_val", "test_fraction", "inductive"}
_MODEL_KEYS = {"basis", "hidden", "layers", "order", "alpha", "dropout",
               "edge_dropout", "chebyshev_literal_weights"}
_TRAIN_KEYS = {"max_epochs", "warmup_epochs", "patience", "lr", "weight_decay",
               "loss", "self_training", "attack"}
_ATTACK_KEYS = {"kind", "epsilon", "local_rule", "inner_epochs", "block_size",
                "lr_base", "lr_multiplier"}
_EVAL_KEYS = {"kind", "epsilon", "local_rule"}
_EVAL_CFG_KEYS = {"block_size", "epochs", "finetune_epochs", "lr_base",
                  "lr_multiplier", "sample_tries"}
_TOP_KEYS = {"dataset", "split", "model", "training", "eval_attacks",
             "eval_attack_config", "seeds", "out"}


@dataclass
class SplitSpec:
    per_class_train: int = 20
    per_class_val: int = 20
    test_fraction: float = 0.1
    inductive: bool = True

    @classmethod
    def from_dict(cls, section: dict) -> "SplitSpec":
        _check_keys(section, _SPLIT_KEYS, "split")
        return cls(**section)


def _model_spec_from_dict(section: dict) -> ModelSpec:
    _check_keys(section, _MODEL_KEYS, "model")
    return ModelSpec(
        basis=section.get("basis", "monomial"),
        hidden=int(section.get("hidden", 16)),
        n_layers=int(section.get("layers", 2)),
        order=int(section.get("order", 10)),
        alpha=float(section.get("alpha", 0.1)),
        dropout=float(section.get("dropout", 0.0)),
        edge_dropout=float(section.get("edge_dropout", 0.0)),
        chebyshev_literal=bool(section.get("chebyshev_literal_weights", False)),
    )


def _attack_spec_from_dict(section: dict) -> AttackSpec:
    _check_keys(section, _ATTACK_KEYS, "training.attack")
    return AttackSpec(
        kind=section.get("kind", "lrbcd"),
        epsilon=float(section.get("epsilon", 0.1)),
        local_rule=section.get("local_rule", "half_degree"),
        inner_epochs=int(section.get("inner_epochs", 20)),
        block_size=int(section.get("block_size", 4_000)),
        lr_base=float(section.get("lr_base", 100.0)),
        lr_multiplier=(float(section["lr_multiplier"])
                       if "lr_multiplier" in section else None),
    )


def _train_config_from_dict(section: dict, seed: int) -> TrainConfig:
    _check_keys(section, _TRAIN_KEYS, "training")
    attack = section.get("attack")
    return TrainConfig(
        max_epochs=int(section.get("max_epochs", 300)),
        warmup_epochs=int(section.get("warmup_epochs", 10)),
        patience=int(section.get("patience", 50)),
        lr=float(section.get("lr", 1e-2)),
        weight_decay=float(section.get("weight_decay", 1e-3)),
        loss=section.get("loss", "cross_entropy"),
        self_training=bool(section.get("self_training", False)),
        attack=_attack_spec_from_dict(attack) if attack else None,
        seed=seed,
    )


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    split: SplitSpec
    model: ModelSpec
    training_section: dict
    eval_attacks: list  # [(kind, epsilon, local_rule)]
    eval_attack_config: dict
    seeds: list
    out: str
    raw: dict = field(repr=False, default_factory=dict)

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        _check_keys(payload, _TOP_KEYS, "top level")
        seeds = payload.get("seeds", [0])
        if not isinstance(seeds, list) or not seeds:
            raise ConfigError("seeds must be a non-empty list")
        attacks = []
        for i, row in enumerate(payload.get("eval_attacks", [])):
            _check_keys(row, _EVAL_KEYS, f"eval_attacks[{i}]")
            eps = float(row.get("epsilon", 0.1))
            if eps < 0:
                raise ConfigError(f"eval_attacks[{i}]: epsilon must be >= 0")
            attacks.append((row.get("kind", "prbcd"), eps, row.get("local_rule", "unlimited")))
        eval_cfg = payload.get("eval_attack_config", {})
        _check_keys(eval_cfg, _EVAL_CFG_KEYS, "eval_attack_config")
        return cls(
            dataset=DatasetSpec.from_dict(payload.get("dataset", {"kind": "csbm"})),
            split=SplitSpec.from_dict(payload.get("split", {})),
            model=_model_spec_from_dict(payload.get("model", {})),
            training_section=payload.get("training", {}),
            eval_attacks=attacks,
            eval_attack_config=eval_cfg,
            seeds=[int(s) for s in seeds],
            out=payload.get("out", "runs/experiment"),
            raw=payload,
        )

    def train_config(self, seed: int) -> TrainConfig:
        return _train_config_from_dict(self.training_section, seed)

    def config_hash(self) -> str:
        payload = {k: v for k, v in self.raw.items() if k != "out"}
        canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed config {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(payload)


def apply_override(payload: dict, dotted: str) -> None:
    """Apply a 'a.b.c=value' override in place; values parse as JSON when
    possible, else strings."""
    if "=" not in dotted:
        raise ConfigError(f"override {dotted!r} must look like key.path=value")
    path, raw_value = dotted.split("=", 1)
    try:
        value = json.loads(raw_value)
    except json.JSONDecodeError:
        value = raw_value
    keys = path.split(".")
    node = payload
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            node[key] = {}
        node = node[key]
    node[keys[-1]] = value
