"""Minimal reverse-mode tape over float64 numpy arrays.

Primitives cover exactly what the models need: dense matmul, bias add,
relu, constant elementwise scaling (dropout masks), weighted sums,
row gathering, the two classification losses, and the sparse propagation
pair (edge normalization + sparse matmul) whose vector-Jacobian products
carry gradients back to relaxed edge-flip values, including the chain
through the perturbed degrees.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DataError
from .graph import PropagationStructure


class Node:
    __slots__ = ("value", "tape", "index")

    def __init__(self, value: np.ndarray, tape: "Tape", index: int):
        self.value = value
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return np.shape(self.value)


class Tape:
    """Records primitive ops in creation order; backward walks them reversed.

    Creation order is a topological order by construction, so the reverse
    sweep visits each node after all its consumers; gradients accumulate
    additively at fan-out.
    """

    def __init__(self):
        self._nodes: list[Node] = []
        self._parents: list[tuple[int, ...]] = []
        self._vjps: list[Optional[Callable]] = []

    def leaf(self, value) -> Node:
        return self._record(np.asarray(value, dtype=np.float64), (), None)

    def _record(self, value: np.ndarray, parents: tuple[Node, ...], vjp) -> Node:
        node = Node(value, self, len(self._nodes))
        self._nodes.append(node)
        self._parents.append(tuple(p.index for p in parents))
        self._vjps.append(vjp)
        return node

    def gradients(self, root: Node, wrt: Sequence[Node]) -> list[np.ndarray]:
        """Exact reverse-mode gradients of scalar `root` w.r.t. `wrt` nodes."""
        if root.tape is not self:
            raise DataError("root node does not belong to this tape")
        if np.ndim(root.value) != 0 and np.size(root.value) != 1:
            raise DataError("backward requires a scalar root")
        grads: dict[int, np.ndarray] = {root.index: np.ones_like(root.value, dtype=np.float64)}
        for idx in range(root.index, -1, -1):
            g = grads.pop(idx, None)
            if g is None:
                continue
            vjp = self._vjps[idx]
            if vjp is None:
                grads[idx] = g  # keep leaf gradients around
                continue
            parent_grads = vjp(g)
            for pidx, pg in zip(self._parents[idx], parent_grads):
                if pg is None:
                    continue
                if pidx in grads:
                    grads[pidx] = grads[pidx] + pg
                else:
                    grads[pidx] = pg
        out = []
        for node in wrt:
            g = grads.get(node.index)
            out.append(np.zeros_like(node.value) if g is None else g)
        return out


def _same_tape(*nodes: Node) -> Tape:
    tape = nodes[0].tape
    for node in nodes[1:]:
        if node.tape is not tape:
            raise DataError("nodes belong to different tapes")
    return tape


def matmul(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    av, bv = a.value, b.value

    def vjp(g):
        return g @ bv.T, av.T @ g

    return tape._record(av @ bv, (a, b), vjp)


def matmul_const(a: Node, const: np.ndarray) -> Node:
    def vjp(g):
        return (g @ const.T,)

    return a.tape._record(a.value @ const, (a,), vjp)


def const_matmul(const: np.ndarray, b: Node) -> Node:
    def vjp(g):
        return (const.T @ g,)

    return b.tape._record(const @ b.value, (b,), vjp)


def add(a: Node, b: Node) -> Node:
    tape = _same_tape(a, b)
    if a.value.shape != b.value.shape:
        raise DataError("add requires equal shapes")

    def vjp(g):
        return g, g

    return tape._record(a.value + b.value, (a, b), vjp)


def add_bias(x: Node, bias: Node) -> Node:
    tape = _same_tape(x, bias)

    def vjp(g):
        return g, g.sum(axis=0)

    return tape._record(x.value + bias.value[None, :], (x, bias), vjp)


def relu(x: Node) -> Node:
    mask = x.value > 0.0

    def vjp(g):
        return (g * mask,)

    return x.tape._record(x.value * mask, (x,), vjp)


def scale_const(x: Node, factor) -> Node:
    """Elementwise product with a constant array or scalar (dropout masks)."""
    factor = np.asarray(factor, dtype=np.float64)

    def vjp(g):
        return (g * factor,)

    return x.tape._record(x.value * factor, (x,), vjp)


def weighted_sum(coeffs: Node, terms: Sequence[Node]) -> Node:
    """sum_k coeffs[k] * terms[k]; gradients flow to both."""
    tape = _same_tape(coeffs, *terms)
    if coeffs.value.shape != (len(terms),):
        raise DataError("coefficient vector length must match term count")
    values = [t.value for t in terms]
    out = np.zeros_like(values[0])
    for c, v in zip(coeffs.value, values):
        out = out + c * v

    def vjp(g):
        gc = np.array([float(np.sum(g * v)) for v in values])
        return (gc, *[c * g for c in coeffs.value])

    return tape._record(out, (coeffs, *terms), vjp)


def linear_map_const(x: Node, mat: np.ndarray) -> Node:
    """y = mat @ x for a constant matrix over a 1-D node."""

    def vjp(g):
        return (mat.T @ g,)

    return x.tape._record(mat @ x.value, (x,), vjp)


def gather_rows(x: Node, idx: np.ndarray) -> Node:
    idx = np.asarray(idx, dtype=np.int64)

    def vjp(g):
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return (out,)

    return x.tape._record(x.value[idx], (x,), vjp)


def normalize_edges(structure: PropagationStructure, pert: Optional[Node], tape: Tape) -> Node:
    """Normalized operator entries as a function of relaxed flip values.

    Forward: adj = base + flip*p (both orientations), deg = row sums, and
    b = sign * adj / sqrt(deg_row * deg_col) with 0/0 := 0.  The VJP routes
    the gradient through both the direct entries and the degree terms.
    """
    if pert is None:
        adj = structure.adjacency_values(None)
        b_vals, _, _ = structure.normalized_values(adj)
        return tape.leaf(b_vals)

    adj = structure.adjacency_values(pert.value)
    b_vals, deg, r = structure.normalized_values(adj)
    rows, cols, sign = structure.rows, structure.cols, structure.sign
    r_rows, r_cols = r[rows], r[cols]
    ddr = np.zeros_like(deg)
    pos = deg > 0.0
    ddr[pos] = -0.5 * r[pos] ** 3  # d(deg^-1/2)/d(deg)

    def vjp(g):
        grad_adj = sign * g * r_rows * r_cols
        srow = np.zeros_like(deg)
        scol = np.zeros_like(deg)
        common = sign * g * adj
        np.add.at(srow, rows, common * r_cols)
        np.add.at(scol, cols, common * r_rows)
        grad_deg = (srow + scol) * ddr
        grad_adj = grad_adj + grad_deg[rows]
        gp = structure.flip * (grad_adj[structure.slot_fwd] + grad_adj[structure.slot_bwd])
        return (gp,)

    return pert.tape._record(b_vals, (pert,), vjp)


def propagate(structure: PropagationStructure, b_vals: Node, x: Node) -> Node:
    """Sparse matmul B @ X for a symmetric B given by its support values."""
    tape = _same_tape(b_vals, x)
    mat = structure.csr(b_vals.value)
    xv = x.value
    rows, cols = structure.rows, structure.cols

    def vjp(g):
        grad_b = np.einsum("ec,ec->e", g[rows], xv[cols])
        grad_x = mat.T @ g
        return grad_b, grad_x

    return tape._record(mat @ xv, (b_vals, x), vjp)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits: Node, labels: np.ndarray, idx: np.ndarray) -> Node:
    """Mean softmax cross-entropy of logits[idx] against labels[idx]."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise DataError("cross-entropy over an empty index set")
    y = np.asarray(labels, dtype=np.int64)[idx]
    z = logits.value[idx]
    logp = _log_softmax(z)
    value = -logp[np.arange(len(idx)), y].mean()
    softmax = np.exp(logp)

    def vjp(g):
        local = softmax.copy()
        local[np.arange(len(idx)), y] -= 1.0
        local *= float(g) / len(idx)
        out = np.zeros_like(logits.value)
        np.add.at(out, idx, local)
        return (out,)

    return logits.tape._record(np.float64(value), (logits,), vjp)


def tanh_margin(logits: Node, labels: np.ndarray, idx: np.ndarray) -> Node:
    """Mean of tanh(best_other_logit - true_logit); the attacker maximizes it."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        raise DataError("tanh-margin over an empty index set")
    if logits.value.shape[1] < 2:
        raise DataError("tanh-margin requires at least two classes")
    y = np.asarray(labels, dtype=np.int64)[idx]
    z = logits.value[idx]
    rows = np.arange(len(idx))
    masked = z.copy()
    masked[rows, y] = -np.inf
    best_other = masked.argmax(axis=1)  # first maximum on ties
    margin = z[rows, best_other] - z[rows, y]
    t = np.tanh(margin)
    value = t.mean()

    def vjp(g):
        coeff = (1.0 - t**2) * (float(g) / len(idx))
        local = np.zeros_like(z)
        np.add.at(local, (rows, best_other), coeff)
        np.add.at(local, (rows, y), -coeff)
        out = np.zeros_like(logits.value)
        np.add.at(out, idx, local)
        return (out,)

    return logits.tape._record(np.float64(value), (logits,), vjp)
