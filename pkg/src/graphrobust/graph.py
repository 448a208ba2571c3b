"""Sparse undirected graphs, symmetric normalization, and relaxed edge flips.

An edge flip is relaxed to a weight p in [0, 1] on an upper-triangular slot
(u, v): the perturbed adjacency is A_uv + (1 - 2 A_uv) * p, i.e. p
continuously interpolates between keeping and flipping the slot.  All
normalization recomputes degrees from the perturbed weights so that
gradients through the normalization are exact.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DataError

UNKNOWN_LABEL = -1


class OperatorKind(enum.Enum):
    """Symmetric normalizations of the (perturbed) adjacency."""

    SYM = "sym"                  # D^-1/2 A D^-1/2
    SYM_LOOPS = "sym_loops"      # with self-loops: (D+I)^-1/2 (A+I) (D+I)^-1/2
    NEG_SYM = "neg_sym"          # -D^-1/2 A D^-1/2 (spectrum in [-1, 1])


@dataclass
class Graph:
    """Undirected graph with node features and (possibly partial) labels.

    edges is an (m, 2) int array with u < v per row, sorted lexicographically
    and duplicate-free.  labels uses -1 for unknown.  Instances are treated
    as immutable after construction.
    """

    n: int
    edges: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.n < 0:
            raise DataError("node count must be non-negative")
        m = self.edges.shape[0]
        if m:
            u, v = self.edges[:, 0], self.edges[:, 1]
            if not (np.all(u < v) and np.all(u >= 0) and np.all(v < self.n)):
                raise DataError("edges must satisfy 0 <= u < v < n")
            keys = u * self.n + v
            if np.any(np.diff(keys) <= 0):
                order = np.argsort(keys, kind="stable")
                if np.any(np.diff(keys[order]) == 0):
                    raise DataError("duplicate edges")
                self.edges = self.edges[order]
        if self.features.ndim != 2 or self.features.shape[0] != self.n:
            raise DataError(
                f"feature matrix has {self.features.shape[0] if self.features.ndim == 2 else '?'} "
                f"rows, expected {self.n}"
            )
        if self.labels.shape != (self.n,):
            raise DataError(f"label vector has length {self.labels.shape}, expected {self.n}")
        known = self.labels[self.labels != UNKNOWN_LABEL]
        if known.size and (known.min() < 0 or known.max() >= self.n_classes):
            raise DataError("labels must lie in {0..n_classes-1} or be -1 (unknown)")

    @property
    def n_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.features.shape[1])

    def degree_vector(self) -> np.ndarray:
        return degrees(self)

    def has_edge_array(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Vectorized membership test for upper-triangular slots (u < v)."""
        keys = self.edges[:, 0] * self.n + self.edges[:, 1]
        query = np.asarray(u, dtype=np.int64) * self.n + np.asarray(v, dtype=np.int64)
        pos = np.searchsorted(keys, query)
        pos = np.minimum(pos, max(len(keys) - 1, 0))
        if len(keys) == 0:
            return np.zeros(query.shape, dtype=bool)
        return keys[pos] == query


@dataclass
class RelaxedPerturbation:
    """Relaxed edge flips: upper-triangular slots with weights in [0, 1]."""

    u: np.ndarray
    v: np.ndarray
    values: np.ndarray
    n: int

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.int64)
        self.v = np.asarray(self.v, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if not (self.u.shape == self.v.shape == self.values.shape):
            raise DataError("perturbation arrays must have equal length")
        if self.u.size:
            if not (np.all(self.u < self.v) and np.all(self.u >= 0) and np.all(self.v < self.n)):
                raise DataError("perturbation slots must satisfy 0 <= u < v < n")
            keys = self.u * self.n + self.v
            if np.unique(keys).size != keys.size:
                raise DataError("duplicate perturbation slots")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise DataError("perturbation values must lie in [0, 1]")

    @property
    def n_slots(self) -> int:
        return int(self.u.size)

    @classmethod
    def empty(cls, n: int) -> "RelaxedPerturbation":
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), np.zeros(0), n)

    @classmethod
    def from_slots(cls, slots: np.ndarray, values: np.ndarray, n: int) -> "RelaxedPerturbation":
        slots = np.asarray(slots, dtype=np.int64).reshape(-1, 2)
        return cls(slots[:, 0], slots[:, 1], values, n)


@dataclass
class PropagationStructure:
    """Static index arrays for one (graph, kind, slot set) combination.

    The symmetric support enumerates every off-diagonal entry of the
    perturbed adjacency in both orientations, plus the diagonal for the
    self-loop kind.  Slot s maps to support positions slot_fwd[s] (u, v) and
    slot_bwd[s] (v, u) with flip factor 1 - 2 A_uv.
    """

    n: int
    kind: OperatorKind
    rows: np.ndarray
    cols: np.ndarray
    base_vals: np.ndarray      # adjacency weights before perturbation (loops included)
    slot_fwd: np.ndarray
    slot_bwd: np.ndarray
    flip: np.ndarray
    sign: float

    def adjacency_values(self, pert_values: np.ndarray | None) -> np.ndarray:
        vals = self.base_vals.copy()
        if pert_values is not None and pert_values.size:
            vals[self.slot_fwd] += self.flip * pert_values
            vals[self.slot_bwd] += self.flip * pert_values
        return vals

    def degrees_of(self, adj_vals: np.ndarray) -> np.ndarray:
        deg = np.zeros(self.n)
        np.add.at(deg, self.rows, adj_vals)
        return deg

    def normalized_values(self, adj_vals: np.ndarray):
        """Return (b_vals, degrees, inv_sqrt_deg); zero rows stay zero.

        Entry (i, j) is adj_ij / sqrt(deg_i * deg_j) computed with a single
        square root so that exactly representable cases stay exact.
        """
        deg = self.degrees_of(adj_vals)
        r = np.zeros(self.n)
        pos = deg > 0.0
        r[pos] = 1.0 / np.sqrt(deg[pos])
        prod = deg[self.rows] * deg[self.cols]
        b_vals = np.zeros_like(adj_vals)
        ok = prod > 0.0
        b_vals[ok] = self.sign * adj_vals[ok] / np.sqrt(prod[ok])
        return b_vals, deg, r

    def csr(self, b_vals: np.ndarray) -> sp.csr_matrix:
        mat = sp.csr_matrix((b_vals, (self.rows, self.cols)), shape=(self.n, self.n))
        return mat


def build_structure(
    graph: Graph,
    kind: OperatorKind,
    perturbation: RelaxedPerturbation | None = None,
) -> PropagationStructure:
    n = graph.n
    eu, ev = graph.edges[:, 0], graph.edges[:, 1]
    edge_keys = eu * n + ev
    if perturbation is not None and perturbation.n_slots:
        if perturbation.n != n:
            raise DataError("perturbation node count does not match graph")
        is_edge = graph.has_edge_array(perturbation.u, perturbation.v)
        new_u = perturbation.u[~is_edge]
        new_v = perturbation.v[~is_edge]
        pair_u = np.concatenate([eu, new_u])
        pair_v = np.concatenate([ev, new_v])
        base = np.concatenate([np.ones(len(eu)), np.zeros(len(new_u))])
        # position of each slot among the pairs
        slot_pos = np.empty(perturbation.n_slots, dtype=np.int64)
        slot_pos[is_edge] = np.searchsorted(edge_keys, perturbation.u[is_edge] * n + perturbation.v[is_edge])
        slot_pos[~is_edge] = len(eu) + np.arange(len(new_u))
        flip = np.where(is_edge, -1.0, 1.0)
    else:
        pair_u, pair_v, base = eu, ev, np.ones(len(eu))
        slot_pos = np.zeros(0, dtype=np.int64)
        flip = np.zeros(0)

    k = len(pair_u)
    loops = kind is OperatorKind.SYM_LOOPS
    rows = np.concatenate([pair_u, pair_v] + ([np.arange(n)] if loops else []))
    cols = np.concatenate([pair_v, pair_u] + ([np.arange(n)] if loops else []))
    base_vals = np.concatenate([base, base] + ([np.ones(n)] if loops else []))
    sign = -1.0 if kind is OperatorKind.NEG_SYM else 1.0
    return PropagationStructure(
        n=n,
        kind=kind,
        rows=rows.astype(np.int64),
        cols=cols.astype(np.int64),
        base_vals=base_vals,
        slot_fwd=slot_pos,
        slot_bwd=slot_pos + k,
        flip=flip,
        sign=sign,
    )


@dataclass
class NormalizedOperator:
    """Materialized symmetric normalized operator with its degree vector."""

    kind: OperatorKind
    n: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    degrees: np.ndarray

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.rows, self.cols] = self.values
        return out

    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, (self.rows, self.cols)), shape=(self.n, self.n))

    def entry(self, i: int, j: int) -> float:
        mask = (self.rows == i) & (self.cols == j)
        return float(self.values[mask].sum())


def build_normalized(
    graph: Graph,
    kind: OperatorKind,
    perturbation: RelaxedPerturbation | None = None,
) -> NormalizedOperator:
    """Normalize the (optionally perturbed) adjacency.

    The perturbed weight of slot (u, v) is A_uv + (1 - 2 A_uv) * p_uv and
    degrees are recomputed from the continuous weights, so the result is
    continuous in p.  Zero-degree nodes yield zero rows (0/0 := 0), never
    NaN; the self-loop kind is always well defined.
    """
    structure = build_structure(graph, kind, perturbation)
    pvals = perturbation.values if perturbation is not None else None
    adj = structure.adjacency_values(pvals)
    b_vals, deg, _ = structure.normalized_values(adj)
    return NormalizedOperator(
        kind=kind, n=graph.n, rows=structure.rows, cols=structure.cols,
        values=b_vals, degrees=deg,
    )


def degrees(graph: Graph) -> np.ndarray:
    """Number of incident edges per node (int64)."""
    d = np.zeros(graph.n, dtype=np.int64)
    if graph.n_edges:
        np.add.at(d, graph.edges[:, 0], 1)
        np.add.at(d, graph.edges[:, 1], 1)
    return d


def apply_flips(graph: Graph, flips: np.ndarray) -> Graph:
    """Return the graph with the given upper-triangular slots flipped."""
    flips = np.asarray(flips, dtype=np.int64).reshape(-1, 2)
    if flips.size == 0:
        return graph
    if np.any(flips[:, 0] >= flips[:, 1]):
        raise DataError("flips must be upper-triangular slots (u < v)")
    keys = set(map(tuple, graph.edges.tolist()))
    for u, v in flips.tolist():
        t = (u, v)
        if t in keys:
            keys.remove(t)
        else:
            keys.add(t)
    edges = np.array(sorted(keys), dtype=np.int64).reshape(-1, 2)
    return Graph(graph.n, edges, graph.features, graph.labels, graph.n_classes)


# ---------------------------------------------------------------------------
# File formats: edge list ("u v" per line, '#' comments), feature CSV
# (row i = node i), label CSV ("node,label", -1 unknown).  All 0-indexed.
# ---------------------------------------------------------------------------

def save_graph(graph: Graph, edge_path, feature_path, label_path) -> None:
    with open(edge_path, "w", encoding="utf-8") as fh:
        fh.write("# u v (undirected, 0-indexed)\n")
        for u, v in graph.edges.tolist():
            fh.write(f"{u} {v}\n")
    with open(feature_path, "w", encoding="utf-8") as fh:
        for row in graph.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(label_path, "w", encoding="utf-8") as fh:
        for i, y in enumerate(graph.labels.tolist()):
            fh.write(f"{i},{y}\n")


def load_graph(edge_path, feature_path, label_path, n_classes: int | None = None) -> Graph:
    """Load a graph from the three text files; inverse of save_graph."""
    pairs = []
    with open(edge_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise DataError(f"{edge_path}:{lineno}: expected 'u v', got {line.strip()!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise DataError(f"{edge_path}:{lineno}: non-integer endpoint") from exc
            if u == v:
                raise DataError(f"{edge_path}:{lineno}: self-loop {u}")
            pairs.append((min(u, v), max(u, v)))

    rows = []
    with open(feature_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                rows.append([float(x) for x in text.split(",")])
            except ValueError as exc:
                raise DataError(f"{feature_path}:{lineno}: non-numeric feature") from exc
    if rows and any(len(r) != len(rows[0]) for r in rows):
        raise DataError(f"{feature_path}: ragged feature rows")
    features = np.asarray(rows, dtype=np.float64)
    n = features.shape[0]

    labels = np.full(n, UNKNOWN_LABEL, dtype=np.int64)
    with open(label_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split(",")
            if len(parts) != 2:
                raise DataError(f"{label_path}:{lineno}: expected 'node,label'")
            try:
                i, y = int(parts[0]), int(parts[1])
            except ValueError as exc:
                raise DataError(f"{label_path}:{lineno}: non-integer entry") from exc
            if not 0 <= i < n:
                raise DataError(f"{label_path}:{lineno}: node {i} out of range for n={n}")
            labels[i] = y

    if pairs:
        mx = max(v for _, v in pairs)
        if mx >= n:
            raise DataError(f"{edge_path}: node {mx} out of range for n={n}")
    edges = np.array(sorted(set(pairs)), dtype=np.int64).reshape(-1, 2)
    if n_classes is None:
        known = labels[labels != UNKNOWN_LABEL]
        n_classes = int(known.max()) + 1 if known.size else 1
    return Graph(n, edges, features, labels, n_classes)
