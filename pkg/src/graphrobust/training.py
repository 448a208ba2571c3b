"""Training loops: standard, self-training, adversarial; plus the
clean-graph memorization wrapper that is perfectly robust in the
transductive setting.

Adversarial training alternates one attack per epoch with one optimizer
step on the perturbed graph.  Early stopping measures the training loss on
the validation nodes of an attacked validation view (same attack kind and
budget rule as training); the first `warmup_epochs` epochs train on the
clean graph and are excluded from early-stopping bookkeeping.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .attacks import AttackConfig, compute_budgets, run_attack
from .data import Split, training_view, validation_view
from .errors import ConfigError, DataError, NumericError
from .graph import Graph, RelaxedPerturbation
from .models import (
    LOSS_FNS,
    AdamState,
    DiffusionModel,
    ModelSpec,
    backward_params,
    forward,
    init_params,
    sgd_adam_step,
)
from .rng import child_seed, labeled_rng


@dataclass
class AttackSpec:
    """Which attack the adversarial loop runs each epoch.

    lr_multiplier None resolves to 20 for lrbcd (compensates the short inner
    schedule and keeps the relaxed solution sparse) and 1 otherwise.
    """

    kind: str = "lrbcd"
    epsilon: float = 0.1
    local_rule: str = "half_degree"
    inner_epochs: int = 20
    block_size: int = 4_000
    lr_base: float = 100.0
    lr_multiplier: Optional[float] = None

    def config(self, seed: int) -> AttackConfig:
        mult = self.lr_multiplier
        if mult is None:
            mult = 20.0 if self.kind == "lrbcd" else 1.0
        return AttackConfig(
            block_size=self.block_size,
            epochs=self.inner_epochs,
            finetune_epochs=0,
            lr_base=self.lr_base,
            lr_multiplier=mult,
            seed=seed,
        )


@dataclass
class TrainConfig:
    max_epochs: int = 300
    warmup_epochs: int = 10
    patience: int = 50
    lr: float = 1e-2
    weight_decay: float = 1e-3
    loss: str = "cross_entropy"
    self_training: bool = False
    attack: Optional[AttackSpec] = None
    seed: int = 0

    def __post_init__(self):
        if self.warmup_epochs > self.max_epochs:
            raise ConfigError("warmup_epochs must not exceed max_epochs")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.loss not in LOSS_FNS:
            raise ConfigError(f"unknown loss {self.loss!r}")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metric: float
    attacked: int


@dataclass
class History:
    records: list = field(default_factory=list)
    best_epoch: int = -1
    attack_calls: int = 0

    def append(self, rec: EpochRecord):
        self.records.append(rec)


def save_history(history: History, path, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_metric", "attacked"])
        for rec in history.records:
            writer.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_metric), rec.attacked])


def _predictions(model, graph: Graph) -> np.ndarray:
    return forward(model, graph, None, "eval").logits.argmax(axis=1)


def accuracy(model, graph: Graph, idx: np.ndarray, labels: Optional[np.ndarray] = None) -> float:
    labels = graph.labels if labels is None else labels
    pred = predict(model, graph)
    return float((pred[idx] == labels[idx]).mean())


def predict(model, graph: Graph) -> np.ndarray:
    """Argmax labels; works for DiffusionModel and MemorizedModel alike."""
    if isinstance(model, MemorizedModel):
        return predict_memorized(model, graph)
    return _predictions(model, graph)


def _loop(
    model: DiffusionModel,
    train_graph: Graph,
    train_idx: np.ndarray,
    train_labels: np.ndarray,
    val_graph: Graph,
    val_idx: np.ndarray,
    val_labels: np.ndarray,
    config: TrainConfig,
    attack_train=None,
    attack_val=None,
) -> tuple[DiffusionModel, History]:
    """Shared epoch loop.  attack_train/attack_val, when set, are callables
    (model, epoch) -> flips crafting a fresh perturbation per epoch."""
    loss_fn = LOSS_FNS[config.loss]
    state = AdamState.for_model(model)
    dropout_rng = labeled_rng(config.seed, "dropout")
    history = History()
    best_metric, best_model, best_epoch = np.inf, model.copy(), -1

    for epoch in range(1, config.max_epochs + 1):
        attacked = 0
        pert = None
        if attack_train is not None and epoch > config.warmup_epochs:
            flips = attack_train(model, epoch)
            history.attack_calls += 1
            attacked = 1
            if len(flips):
                pert = RelaxedPerturbation(
                    flips[:, 0], flips[:, 1], np.ones(len(flips)), train_graph.n
                )
        fwd = forward(model, train_graph, pert, "train", dropout_rng)
        loss = loss_fn(fwd, train_labels, train_idx)
        if not np.isfinite(loss.value):
            raise NumericError(f"training loss diverged at epoch {epoch}")
        grads = backward_params(loss)
        model = sgd_adam_step(model, grads, state, config.lr, config.weight_decay)

        val_pert = None
        if attack_val is not None and epoch > config.warmup_epochs:
            vflips = attack_val(model, epoch)
            if len(vflips):
                val_pert = RelaxedPerturbation(
                    vflips[:, 0], vflips[:, 1], np.ones(len(vflips)), val_graph.n
                )
        vfwd = forward(model, val_graph, val_pert, "eval")
        val_metric = loss_fn(vfwd, val_labels, val_idx).value
        history.append(EpochRecord(epoch, loss.value, val_metric, attacked))

        if epoch > config.warmup_epochs:
            if val_metric < best_metric:
                best_metric, best_model, best_epoch = val_metric, model.copy(), epoch
            elif epoch - best_epoch >= config.patience and best_epoch > 0:
                break

    if best_epoch < 0:  # never got past warmup bookkeeping
        best_model, best_epoch = model, config.max_epochs
    history.best_epoch = best_epoch
    return best_model, history


def train_standard(
    model: DiffusionModel | ModelSpec,
    graph: Graph,
    split: Split,
    config: TrainConfig,
    extra_labels: Optional[np.ndarray] = None,
    extra_train_idx: Optional[np.ndarray] = None,
) -> tuple[DiffusionModel, History]:
    """Minimize the configured loss on the labeled training nodes; early-stop
    on clean validation loss; return the best-validation parameters."""
    model = _materialize(model, graph, config.seed)
    tg, tmap = training_view(graph, split)
    vg, vmap = validation_view(graph, split)
    t_idx, t_labels = _view_labels(graph, split, tmap, extra_labels, extra_train_idx)
    v_idx = _indices_in_view(vmap, split.val)
    return _loop(model, tg, t_idx, t_labels, vg, v_idx, graph.labels[vmap], config)


def _materialize(model, graph: Graph, seed: int) -> DiffusionModel:
    if isinstance(model, ModelSpec):
        return init_params(model, graph.n_features, graph.n_classes, seed)
    return model.copy()


def _indices_in_view(view_map: np.ndarray, original_idx: np.ndarray) -> np.ndarray:
    lookup = {int(o): i for i, o in enumerate(view_map.tolist())}
    out = [lookup[int(i)] for i in original_idx.tolist() if int(i) in lookup]
    if len(out) != len(original_idx):
        raise DataError("split indices missing from the graph view")
    return np.array(out, dtype=np.int64)


def _view_labels(graph, split, view_map, extra_labels, extra_train_idx):
    """Training indices and label vector inside the view; extra_* optionally
    add pseudo-labeled nodes (original indexing)."""
    labels = graph.labels[view_map].copy()
    t_idx = _indices_in_view(view_map, split.train_labeled)
    if extra_labels is not None and extra_train_idx is not None and len(extra_train_idx):
        e_idx = _indices_in_view(view_map, extra_train_idx)
        labels[e_idx] = extra_labels
        t_idx = np.sort(np.concatenate([t_idx, e_idx]))
    return t_idx, labels


def _plain_config(config: TrainConfig, seed: int) -> TrainConfig:
    return TrainConfig(
        max_epochs=config.max_epochs, warmup_epochs=config.warmup_epochs,
        patience=config.patience, lr=config.lr, weight_decay=config.weight_decay,
        loss=config.loss, seed=seed,
    )


def self_train(
    spec: ModelSpec,
    graph: Graph,
    split: Split,
    config: TrainConfig,
) -> tuple[np.ndarray, DiffusionModel, History]:
    """Two-stage pseudo-labeling: stage 1 fits the labeled nodes, predicts
    labels for every unlabeled training-view node from the clean graph, and
    stage 2 trains a fresh model on true + pseudo labels.

    Returns (pseudo_labels aligned with split.train_unlabeled, model, history).
    """
    pseudo, _, _ = self_train_stage1_labels(spec, graph, split, config)
    final, history = train_standard(
        spec, graph, split,
        _plain_config(config, child_seed(config.seed, "self-train-stage2")),
        extra_labels=pseudo, extra_train_idx=split.train_unlabeled,
    )
    return pseudo, final, history


def train_adversarial(
    spec: ModelSpec | DiffusionModel,
    graph: Graph,
    split: Split,
    config: TrainConfig,
) -> tuple[DiffusionModel, History]:
    """Alternating adversarial training: warm-up clean epochs, then one fresh
    attack + one parameter update per epoch; validation is attacked with the
    same attack for early stopping.  With self_training, stage-1 pseudo
    labels join the training (and attack) targets."""
    if config.attack is None:
        raise ConfigError("train_adversarial needs config.attack")
    aspec = config.attack

    pseudo, pseudo_idx = None, None
    if config.self_training:
        pseudo, _, _ = self_train_stage1_labels(spec, graph, split, config)
        pseudo_idx = split.train_unlabeled

    model = _materialize(spec, graph, config.seed)
    tg, tmap = training_view(graph, split)
    vg, vmap = validation_view(graph, split)
    t_idx, t_labels = _view_labels(graph, split, tmap, pseudo, pseudo_idx)
    v_idx = _indices_in_view(vmap, split.val)
    v_labels = graph.labels[vmap]

    train_budget = compute_budgets(tg, t_idx, aspec.epsilon, aspec.local_rule)
    val_budget = compute_budgets(vg, v_idx, aspec.epsilon, aspec.local_rule)
    if train_budget.global_delta > 0 and aspec.block_size < train_budget.global_delta:
        raise ConfigError("attack block size below the training budget")

    def attack_train(current, epoch):
        cfg = aspec.config(child_seed(config.seed, "attack-train", epoch))
        return run_attack(aspec.kind, current, tg, t_idx, train_budget, cfg, labels=t_labels)

    def attack_val(current, epoch):
        cfg = aspec.config(child_seed(config.seed, "attack-val", epoch))
        return run_attack(aspec.kind, current, vg, v_idx, val_budget, cfg, labels=v_labels)

    return _loop(
        model, tg, t_idx, t_labels, vg, v_idx, v_labels, config,
        attack_train=attack_train, attack_val=attack_val,
    )


def self_train_stage1_labels(spec, graph, split, config):
    """Stage-1 pseudo labels only (clean graph, standard training)."""
    first, hist = train_standard(spec, graph, split, _plain_config(config, config.seed))
    tg, tmap = training_view(graph, split)
    preds = _predictions(first, tg)
    pseudo = preds[_indices_in_view(tmap, split.train_unlabeled)]
    return pseudo, first, hist


# ---------------------------------------------------------------------------
# Memorization wrapper: replays clean-graph predictions, ignoring any input
# graph over the same node set -> perfect robustness, transductively.
# ---------------------------------------------------------------------------

@dataclass
class MemorizedModel:
    inner: DiffusionModel
    cached_labels: np.ndarray
    n: int

    @property
    def n_classes(self) -> int:
        return self.inner.n_classes

    def forward(self, graph: Graph, perturbation=None, mode: str = "eval", rng=None):
        """Constant logits (one-hot of the cached labels); graph-independent,
        so every edge gradient is exactly zero."""
        from .autodiff import Tape
        from .models import ForwardResult

        if graph.n != self.n:
            raise DataError(
                f"memorized wrapper covers {self.n} nodes, got a graph with {graph.n}"
            )
        tape = Tape()
        pert_node = tape.leaf(perturbation.values) if perturbation is not None else None
        logits = np.zeros((self.n, self.n_classes))
        logits[np.arange(self.n), self.cached_labels] = 1.0
        node = tape.leaf(logits)
        return ForwardResult(
            logits=node.value, tape=tape, logits_node=node,
            weight_nodes=[], bias_nodes=[], gamma_node=None,
            pert_node=pert_node, model=self.inner,
        )


def memorize(model: DiffusionModel, clean_graph: Graph) -> MemorizedModel:
    return MemorizedModel(
        inner=model,
        cached_labels=_predictions(model, clean_graph),
        n=clean_graph.n,
    )


def predict_memorized(wrapper: MemorizedModel, graph: Graph) -> np.ndarray:
    if graph.n != wrapper.n:
        raise DataError(
            f"memorized wrapper covers {wrapper.n} nodes, got a graph with {graph.n}"
        )
    return wrapper.cached_labels.copy()
