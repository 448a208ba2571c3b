"""Differentiable node classifiers built on top of the tape.

All architectures share one container: an MLP plus a propagation recipe.

* ``monomial``  — MLP then sum_k gamma_k * B^k * H with self-loop
  normalization and learnable gamma (GPRGNN-style).
* ``chebyshev`` — MLP then Chebyshev recurrence on the negated
  normalization; gamma holds the filter values at the K+1 Chebyshev
  nodes and is mapped to basis weights by a fixed interpolation matrix
  (ChebNetII-style).  ``chebyshev_literal_weights`` instead applies the
  separable 2/(K-1) weighting (kept for fidelity experiments; see tests).
* ``appnp``     — monomial with gamma frozen to the Personalized PageRank
  coefficients alpha*(1-alpha)^k, last term (1-alpha)^K.
* ``gcn``       — two stacked propagate-transform layers with self-loop
  normalization; gamma unused.
* ``none``      — plain MLP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Tape
from .errors import ConfigError, DataError
from .graph import Graph, OperatorKind, RelaxedPerturbation, build_structure
from .rng import labeled_rng

BASIS_KINDS = ("monomial", "chebyshev", "appnp", "gcn", "none")


def operator_kind_for(basis: str) -> Optional[OperatorKind]:
    if basis in ("monomial", "appnp", "gcn"):
        return OperatorKind.SYM_LOOPS
    if basis == "chebyshev":
        return OperatorKind.NEG_SYM
    return None


def appnp_gamma(order: int, alpha: float) -> np.ndarray:
    g = alpha * (1.0 - alpha) ** np.arange(order + 1)
    g[order] = (1.0 - alpha) ** order
    return g


def chebyshev_nodes(order: int) -> np.ndarray:
    j = np.arange(order + 1)
    return np.cos((j + 0.5) / (order + 1) * np.pi)


def chebyshev_interp_matrix(order: int) -> np.ndarray:
    """C[k, j] = (2 - (k==0)) / (K+1) * T_k(x_j), so weights = C @ gamma."""
    x = chebyshev_nodes(order)
    mat = np.polynomial.chebyshev.chebvander(x, order).T  # [k, j] = T_k(x_j)
    mat *= 2.0 / (order + 1)
    mat[0] *= 0.5
    return mat


def chebyshev_literal_weights(order: int) -> np.ndarray:
    """Separable per-degree weights w_k = 2/(K-1) * sum_j T_k(x_j)."""
    if order < 2:
        raise ConfigError("literal chebyshev weighting needs order >= 2")
    x = chebyshev_nodes(order)
    return 2.0 / (order - 1) * np.polynomial.chebyshev.chebvander(x, order).sum(axis=0)


@dataclass
class ModelSpec:
    """Architecture hyperparameters; init_params turns this into a model."""

    basis: str = "monomial"
    hidden: int = 16
    n_layers: int = 2
    order: int = 10
    alpha: float = 0.1
    dropout: float = 0.0
    edge_dropout: float = 0.0
    chebyshev_literal: bool = False

    def __post_init__(self):
        if self.basis not in BASIS_KINDS:
            raise ConfigError(f"unknown basis {self.basis!r}, expected one of {BASIS_KINDS}")
        if self.n_layers < 1:
            raise ConfigError("need at least one layer")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.edge_dropout < 1.0:
            raise ConfigError("dropout rates must lie in [0, 1)")


@dataclass
class DiffusionModel:
    basis: str
    order: int
    gamma: np.ndarray
    layers: list  # [(W, b), ...] float64
    alpha: float = 0.1
    dropout: float = 0.0
    edge_dropout: float = 0.0
    chebyshev_literal: bool = False
    seed: int = 0

    def copy(self) -> "DiffusionModel":
        return DiffusionModel(
            basis=self.basis, order=self.order, gamma=self.gamma.copy(),
            layers=[(w.copy(), b.copy()) for w, b in self.layers],
            alpha=self.alpha, dropout=self.dropout, edge_dropout=self.edge_dropout,
            chebyshev_literal=self.chebyshev_literal, seed=self.seed,
        )

    @property
    def gamma_trainable(self) -> bool:
        return self.basis in ("monomial", "chebyshev")

    @property
    def n_classes(self) -> int:
        return self.layers[-1][0].shape[1]

    def forward(self, graph, perturbation=None, mode="eval", rng=None):
        return forward(self, graph, perturbation, mode, rng)


def init_params(spec: ModelSpec, n_features: int, n_classes: int, seed: int) -> DiffusionModel:
    """Glorot-uniform MLP weights, zero biases, random diffusion coefficients."""
    rng = labeled_rng(seed, "init")
    dims = [n_features] + [spec.hidden] * (spec.n_layers - 1) + [n_classes]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), np.zeros(fan_out)))
    if spec.basis == "appnp":
        gamma = appnp_gamma(spec.order, spec.alpha)
    elif spec.basis in ("monomial", "chebyshev"):
        gamma = rng.normal(0.0, 1.0 / np.sqrt(spec.order + 1), size=spec.order + 1)
    else:
        gamma = np.zeros(spec.order + 1)
        gamma[0] = 1.0
    return DiffusionModel(
        basis=spec.basis, order=spec.order, gamma=gamma, layers=layers,
        alpha=spec.alpha, dropout=spec.dropout, edge_dropout=spec.edge_dropout,
        chebyshev_literal=spec.chebyshev_literal, seed=seed,
    )


@dataclass
class ForwardResult:
    """Logits plus the tape and the leaves needed for the backward passes."""

    logits: np.ndarray
    tape: Tape
    logits_node: Node
    weight_nodes: list
    bias_nodes: list
    gamma_node: Optional[Node]
    pert_node: Optional[Node]
    model: DiffusionModel


def _dropout_mask(rng, shape, rate):
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _mlp(x_node, model, weight_nodes, bias_nodes, mode, rng):
    h = x_node
    last = len(weight_nodes) - 1
    for i, (wn, bn) in enumerate(zip(weight_nodes, bias_nodes)):
        h = ad.add_bias(ad.matmul(h, wn), bn)
        if i < last:
            h = ad.relu(h)
            if mode == "train" and model.dropout > 0.0:
                h = ad.scale_const(h, _dropout_mask(rng, h.value.shape, model.dropout))
    return h


def forward(
    model: DiffusionModel,
    graph: Graph,
    perturbation: Optional[RelaxedPerturbation] = None,
    mode: str = "eval",
    rng: Optional[np.random.Generator] = None,
) -> ForwardResult:
    """Run the model; dropout only in train mode (requires rng)."""
    if mode not in ("train", "eval"):
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "train" and (model.dropout > 0 or model.edge_dropout > 0) and rng is None:
        raise ConfigError("train-mode forward with dropout needs an rng")
    if graph.n_features != model.layers[0][0].shape[0]:
        raise DataError(
            f"feature dim {graph.n_features} does not match "
            f"first layer fan-in {model.layers[0][0].shape[0]}"
        )

    tape = Tape()
    weight_nodes = [tape.leaf(w) for w, _ in model.layers]
    bias_nodes = [tape.leaf(b) for _, b in model.layers]
    x_node = tape.leaf(graph.features)
    pert_node = tape.leaf(perturbation.values) if perturbation is not None else None
    gamma_node = tape.leaf(model.gamma) if model.gamma_trainable else None

    kind = operator_kind_for(model.basis)
    structure = build_structure(graph, kind, perturbation) if kind is not None else None

    def operator_values():
        b_vals = ad.normalize_edges(structure, pert_node, tape)
        if mode == "train" and model.edge_dropout > 0.0:
            # symmetric pair mask so the propagation stays symmetric
            n_diag = structure.n if structure.kind is OperatorKind.SYM_LOOPS else 0
            pairs = (len(structure.rows) - n_diag) // 2
            keep = rng.random(pairs) >= model.edge_dropout
            mask = np.concatenate(
                [keep, keep, np.ones(n_diag, dtype=bool)]
            ) / (1.0 - model.edge_dropout)
            b_vals = ad.scale_const(b_vals, mask)
        return b_vals

    if model.basis == "gcn":
        b_vals = operator_values()
        h = x_node
        last = len(weight_nodes) - 1
        for i, (wn, bn) in enumerate(zip(weight_nodes, bias_nodes)):
            h = ad.add_bias(ad.propagate(structure, b_vals, ad.matmul(h, wn)), bn)
            if i < last:
                h = ad.relu(h)
                if mode == "train" and model.dropout > 0.0:
                    h = ad.scale_const(h, _dropout_mask(rng, h.value.shape, model.dropout))
        logits_node = h
    elif model.basis == "none":
        logits_node = _mlp(x_node, model, weight_nodes, bias_nodes, mode, rng)
    else:
        h = _mlp(x_node, model, weight_nodes, bias_nodes, mode, rng)
        is_e0 = (
            model.basis == "monomial"
            and model.gamma[0] == 1.0
            and not np.any(model.gamma[1:])
        )
        if is_e0:
            # gamma = e_0: bit-identical to the MLP, no propagation executed
            logits_node = h
        elif model.basis in ("monomial", "appnp"):
            b_vals = operator_values()
            terms = [h]
            for _ in range(model.order):
                terms.append(ad.propagate(structure, b_vals, terms[-1]))
            coeffs = gamma_node if gamma_node is not None else tape.leaf(model.gamma)
            logits_node = ad.weighted_sum(coeffs, terms)
        else:  # chebyshev
            b_vals = operator_values()
            terms = [h]
            if model.order >= 1:
                terms.append(ad.propagate(structure, b_vals, terms[-1]))
            for _ in range(2, model.order + 1):
                twice = ad.scale_const(ad.propagate(structure, b_vals, terms[-1]), 2.0)
                prev = ad.scale_const(terms[-2], -1.0)
                terms.append(ad.add(twice, prev))
            if model.chebyshev_literal:
                w = chebyshev_literal_weights(model.order)
                coeffs = ad.scale_const(gamma_node, w)
            else:
                coeffs = ad.linear_map_const(gamma_node, chebyshev_interp_matrix(model.order))
            logits_node = ad.weighted_sum(coeffs, terms)

    return ForwardResult(
        logits=logits_node.value, tape=tape, logits_node=logits_node,
        weight_nodes=weight_nodes, bias_nodes=bias_nodes,
        gamma_node=gamma_node, pert_node=pert_node, model=model,
    )


@dataclass
class LossResult:
    value: float
    node: Node
    forward: ForwardResult


def loss_cross_entropy(fwd: ForwardResult, labels: np.ndarray, idx: np.ndarray) -> LossResult:
    node = ad.softmax_cross_entropy(fwd.logits_node, labels, idx)
    return LossResult(float(node.value), node, fwd)


def loss_tanh_margin(fwd: ForwardResult, labels: np.ndarray, idx: np.ndarray) -> LossResult:
    node = ad.tanh_margin(fwd.logits_node, labels, idx)
    return LossResult(float(node.value), node, fwd)


LOSS_FNS = {"cross_entropy": loss_cross_entropy, "tanh_margin": loss_tanh_margin}


@dataclass
class ParamGrads:
    layers: list  # [(gW, gb), ...]
    gamma: Optional[np.ndarray]


def backward_params(loss: LossResult) -> ParamGrads:
    """Gradients w.r.t. MLP weights/biases and (when learnable) gamma."""
    fwd = loss.forward
    wrt = list(fwd.weight_nodes) + list(fwd.bias_nodes)
    if fwd.gamma_node is not None:
        wrt.append(fwd.gamma_node)
    grads = fwd.tape.gradients(loss.node, wrt)
    k = len(fwd.weight_nodes)
    layer_grads = list(zip(grads[:k], grads[k:2 * k]))
    gamma_grad = grads[-1] if fwd.gamma_node is not None else None
    return ParamGrads(layers=layer_grads, gamma=gamma_grad)


def backward_edges(loss: LossResult) -> np.ndarray:
    """d loss / d p for every registered perturbation slot."""
    fwd = loss.forward
    if fwd.pert_node is None:
        raise DataError("forward was called without a perturbation")
    return fwd.tape.gradients(loss.node, [fwd.pert_node])[0]


# ---------------------------------------------------------------------------
# Adam with bias correction; weight decay (L2 into the gradient) applies to
# MLP weights and gamma but never to biases.
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m_layers: list
    v_layers: list
    m_gamma: np.ndarray
    v_gamma: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model: DiffusionModel) -> "AdamState":
        return cls(
            m_layers=[(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers],
            v_layers=[(np.zeros_like(w), np.zeros_like(b)) for w, b in model.layers],
            m_gamma=np.zeros_like(model.gamma),
            v_gamma=np.zeros_like(model.gamma),
        )


def _adam_update(p, g, m, v, state, lr):
    m[...] = state.beta1 * m + (1 - state.beta1) * g
    v[...] = state.beta2 * v + (1 - state.beta2) * g * g
    mhat = m / (1 - state.beta1**state.t)
    vhat = v / (1 - state.beta2**state.t)
    return p - lr * mhat / (np.sqrt(vhat) + state.eps)


def sgd_adam_step(
    model: DiffusionModel,
    grads: ParamGrads,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> DiffusionModel:
    """One Adam step; returns an updated copy of the model."""
    state.t += 1
    new = model.copy()
    for i, ((w, b), (gw, gb)) in enumerate(zip(model.layers, grads.layers)):
        mw, mb = state.m_layers[i]
        vw, vb = state.v_layers[i]
        new.layers[i] = (
            _adam_update(w, gw + weight_decay * w, mw, vw, state, lr),
            _adam_update(b, gb, mb, vb, state, lr),
        )
    if model.gamma_trainable and grads.gamma is not None:
        new.gamma = _adam_update(
            model.gamma, grads.gamma + weight_decay * model.gamma,
            state.m_gamma, state.v_gamma, state, lr,
        )
    return new


# ---------------------------------------------------------------------------
# Checkpoints: JSON with shortest-repr floats, so float64 round-trips
# bit-exactly.
# ---------------------------------------------------------------------------

def save_checkpoint(model: DiffusionModel, path, meta: Optional[dict] = None) -> None:
    payload = {
        "basis": model.basis,
        "K": model.order,
        "gamma": model.gamma.tolist(),
        "layers": [{"w": w.tolist(), "b": b.tolist()} for w, b in model.layers],
        "seed": model.seed,
        "alpha": model.alpha,
        "dropout": model.dropout,
        "edge_dropout": model.edge_dropout,
        "chebyshev_literal": model.chebyshev_literal,
    }
    if meta:
        payload["_meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_checkpoint(path) -> DiffusionModel:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"checkpoint not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed checkpoint {path}: {exc}") from exc
    try:
        return DiffusionModel(
            basis=payload["basis"],
            order=int(payload["K"]),
            gamma=np.asarray(payload["gamma"], dtype=np.float64),
            layers=[
                (np.asarray(l["w"], dtype=np.float64), np.asarray(l["b"], dtype=np.float64))
                for l in payload["layers"]
            ],
            alpha=float(payload.get("alpha", 0.1)),
            dropout=float(payload.get("dropout", 0.0)),
            edge_dropout=float(payload.get("edge_dropout", 0.0)),
            chebyshev_literal=bool(payload.get("chebyshev_literal", False)),
            seed=int(payload.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"checkpoint {path} is missing fields: {exc}") from exc
