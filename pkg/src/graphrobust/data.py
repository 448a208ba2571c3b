"""Synthetic datasets and train/val/test splits.

The contextual block-model generator draws binary labels uniformly, Gaussian
features N((2y-1)*mu, sigma^2 I) with every coordinate of mu equal to
distance*sigma/(2*sqrt(dim)), and connects same-class pairs with probability
p_in, cross-class pairs with q_out.  The largest connected component is
always extracted before any split is made.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DataError
from .graph import Graph
from .rng import labeled_rng


@dataclass
class CsbmParams:
    n: int
    dim: int = 21
    sigma: float = 1.0
    distance: float = 1.5       # class-mean separation in feature-noise units
    p_in: float = 0.0015
    q_out: float = 0.0063
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise DataError("need at least two nodes")
        if self.dim < 1:
            raise DataError("feature dimension must be >= 1")
        if self.sigma <= 0:
            raise DataError("sigma must be positive")
        if not (0.0 <= self.p_in <= 1.0 and 0.0 <= self.q_out <= 1.0):
            raise DataError("edge probabilities must lie in [0, 1]")


def _unrank_triangular(idx: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Map linear indices over {(i,j): i<j<n} to pairs, lexicographic order."""
    idx = idx.astype(np.int64)
    # float solve for the row, then integer fixup of boundary cases
    i = np.floor(n - 0.5 - np.sqrt((n - 0.5) ** 2 - 2.0 * idx)).astype(np.int64)
    i = np.clip(i, 0, n - 2)
    starts = i * (2 * n - i - 1) // 2
    while True:
        too_low = starts > idx
        if not too_low.any():
            break
        i[too_low] -= 1
        starts = i * (2 * n - i - 1) // 2
    while True:
        nxt = (i + 1) * (2 * n - i - 2) // 2
        too_high = idx >= nxt
        if not too_high.any():
            break
        i[too_high] += 1
        starts = i * (2 * n - i - 1) // 2
    j = idx - starts + i + 1
    return i, j


def _sample_distinct(rng: np.random.Generator, total: int, count: int) -> np.ndarray:
    """Uniform sample of `count` distinct ints from range(total)."""
    if count >= total:
        return np.arange(total, dtype=np.int64)
    if total <= 1 << 22:
        return rng.choice(total, size=count, replace=False).astype(np.int64)
    picked = np.unique(rng.integers(0, total, size=int(count * 1.05) + 16))
    while picked.size < count:
        extra = rng.integers(0, total, size=count)
        picked = np.unique(np.concatenate([picked, extra]))
    return rng.permutation(picked)[:count].astype(np.int64)


def _sample_pair_block(rng, total_pairs: int, prob: float) -> np.ndarray:
    """Indices of present pairs, each included independently with prob."""
    if total_pairs == 0 or prob == 0.0:
        return np.zeros(0, dtype=np.int64)
    m = rng.binomial(total_pairs, prob)
    return np.sort(_sample_distinct(rng, total_pairs, int(m)))


def sample_csbm(params: CsbmParams) -> Graph:
    """Draw a contextual block-model graph and keep its largest component."""
    rng = labeled_rng(params.seed, "dataset")
    n = params.n
    labels = rng.integers(0, 2, size=n)
    mu = params.distance * params.sigma / (2.0 * np.sqrt(params.dim))
    features = rng.normal(0.0, params.sigma, size=(n, params.dim))
    features += (2.0 * labels[:, None] - 1.0) * mu

    idx0 = np.flatnonzero(labels == 0)
    idx1 = np.flatnonzero(labels == 1)
    edges = []
    for cls in (idx0, idx1):
        k = len(cls)
        pair_idx = _sample_pair_block(rng, k * (k - 1) // 2, params.p_in)
        if pair_idx.size:
            i, j = _unrank_triangular(pair_idx, k)
            edges.append(np.stack([cls[i], cls[j]], axis=1))
    n0, n1 = len(idx0), len(idx1)
    pair_idx = _sample_pair_block(rng, n0 * n1, params.q_out)
    if pair_idx.size:
        i, j = pair_idx // n1, pair_idx % n1
        u, v = idx0[i], idx1[j]
        edges.append(np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1))

    if not edges:
        raise DataError("generated graph has no edges; cannot extract a component")
    edge_arr = np.concatenate(edges, axis=0)
    order = np.lexsort((edge_arr[:, 1], edge_arr[:, 0]))
    edge_arr = edge_arr[order]

    graph = Graph(n, edge_arr, features, labels, 2)
    return largest_component(graph)


def largest_component(graph: Graph) -> Graph:
    if graph.n_edges == 0:
        raise DataError("graph has no edges; cannot extract a component")
    adj = sp.csr_matrix(
        (np.ones(graph.n_edges), (graph.edges[:, 0], graph.edges[:, 1])),
        shape=(graph.n, graph.n),
    )
    n_comp, comp = connected_components(adj, directed=False)
    if n_comp == 1:
        return graph
    sizes = np.bincount(comp)
    keep = np.flatnonzero(comp == sizes.argmax())
    sub, _ = induced_subgraph(graph, keep)
    return sub


def induced_subgraph(graph: Graph, nodes: np.ndarray) -> tuple[Graph, np.ndarray]:
    """Subgraph on `nodes` (sorted); returns (subgraph, view->original map)."""
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    remap = np.full(graph.n, -1, dtype=np.int64)
    remap[nodes] = np.arange(len(nodes))
    if graph.n_edges:
        keep = (remap[graph.edges[:, 0]] >= 0) & (remap[graph.edges[:, 1]] >= 0)
        edges = remap[graph.edges[keep]]
    else:
        edges = np.zeros((0, 2), dtype=np.int64)
    sub = Graph(len(nodes), edges, graph.features[nodes], graph.labels[nodes], graph.n_classes)
    return sub, nodes


# ---------------------------------------------------------------------------
# Zachary's karate club: 34 nodes, 78 edges, two factions.  Features are the
# identity so diffusion is the only information source.
# ---------------------------------------------------------------------------

_KARATE_EDGES = [
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (0, 7), (0, 8), (0, 10),
    (0, 11), (0, 12), (0, 13), (0, 17), (0, 19), (0, 21), (0, 31), (1, 2),
    (1, 3), (1, 7), (1, 13), (1, 17), (1, 19), (1, 21), (1, 30), (2, 3),
    (2, 7), (2, 8), (2, 9), (2, 13), (2, 27), (2, 28), (2, 32), (3, 7),
    (3, 12), (3, 13), (4, 6), (4, 10), (5, 6), (5, 10), (5, 16), (6, 16),
    (8, 30), (8, 32), (8, 33), (9, 33), (13, 33), (14, 32), (14, 33),
    (15, 32), (15, 33), (18, 32), (18, 33), (19, 33), (20, 32), (20, 33),
    (22, 32), (22, 33), (23, 25), (23, 27), (23, 29), (23, 32), (23, 33),
    (24, 25), (24, 27), (24, 31), (25, 31), (26, 29), (26, 33), (27, 33),
    (28, 31), (28, 33), (29, 32), (29, 33), (30, 32), (30, 33), (31, 32),
    (31, 33), (32, 33),
]

_KARATE_LABELS = [
    0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 1, 1,
    1, 1, 1, 1, 1, 1, 1, 1, 1, 1,
]


def karate_club() -> Graph:
    """The standard 34-node club graph with 2-community labels."""
    n = 34
    return Graph(
        n,
        np.array(_KARATE_EDGES, dtype=np.int64),
        np.eye(n),
        np.array(_KARATE_LABELS, dtype=np.int64),
        2,
    )


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

@dataclass
class Split:
    train_labeled: np.ndarray
    train_unlabeled: np.ndarray
    val: np.ndarray
    test: np.ndarray
    inductive: bool

    def __post_init__(self):
        for name in ("train_labeled", "train_unlabeled", "val", "test"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.int64))
        sets = [set(self.train_labeled), set(self.train_unlabeled), set(self.val), set(self.test)]
        total = sum(len(s) for s in sets)
        if len(set().union(*sets)) != total:
            raise DataError("split index sets must be pairwise disjoint")

    @property
    def train_all(self) -> np.ndarray:
        return np.sort(np.concatenate([self.train_labeled, self.train_unlabeled]))


def make_split(
    graph: Graph,
    per_class_train: int,
    per_class_val: int,
    test_fraction: float,
    inductive: bool,
    seed: int,
) -> Split:
    """Per-class labeled train/val, stratified test, remainder unlabeled."""
    rng = labeled_rng(seed, "split")
    train, val, test = [], [], []
    classes = range(graph.n_classes)
    for k in classes:
        members = np.flatnonzero(graph.labels == k)
        n_test_k = int(np.rint(test_fraction * len(members)))
        need = per_class_train + per_class_val + n_test_k
        if len(members) < need:
            raise DataError(
                f"class {k} has {len(members)} nodes, needs {need} "
                f"({per_class_train} train + {per_class_val} val + {n_test_k} test)"
            )
        perm = rng.permutation(members)
        train.append(perm[:per_class_train])
        val.append(perm[per_class_train:per_class_train + per_class_val])
        test.append(perm[per_class_train + per_class_val:need])
    taken = np.concatenate(train + val + test)
    unlabeled = np.setdiff1d(np.arange(graph.n), taken)
    return Split(
        train_labeled=np.sort(np.concatenate(train)),
        train_unlabeled=unlabeled,
        val=np.sort(np.concatenate(val)),
        test=np.sort(np.concatenate(test)),
        inductive=inductive,
    )


def training_view(graph: Graph, split: Split) -> tuple[Graph, np.ndarray]:
    """Graph the training loop sees. Identity for transductive splits."""
    if not split.inductive:
        return graph, np.arange(graph.n, dtype=np.int64)
    return induced_subgraph(graph, split.train_all)


def validation_view(graph: Graph, split: Split) -> tuple[Graph, np.ndarray]:
    """Training view with validation nodes (and their edges) re-added."""
    if not split.inductive:
        return graph, np.arange(graph.n, dtype=np.int64)
    return induced_subgraph(graph, np.concatenate([split.train_all, split.val]))


def save_split(split: Split, path) -> None:
    payload = {
        "train_labeled": split.train_labeled.tolist(),
        "train_unlabeled": split.train_unlabeled.tolist(),
        "val": split.val.tolist(),
        "test": split.test.tolist(),
        "inductive": split.inductive,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_split(path) -> Split:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"split file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed split file {path}: {exc}") from exc
    try:
        return Split(
            train_labeled=payload["train_labeled"],
            train_unlabeled=payload["train_unlabeled"],
            val=payload["val"],
            test=payload["test"],
            inductive=bool(payload["inductive"]),
        )
    except KeyError as exc:
        raise DataError(f"split file {path} is missing key {exc}") from exc
