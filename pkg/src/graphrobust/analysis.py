"""Interpretability views of a trained diffusion and robustness evaluation.

Three read-only views of the learned filter:

* normalized coefficients (sign fixed so the leading entry is positive,
  l1 norm one),
* the dense total diffusion matrix T = sum_k gamma_k B^k,
* the spectral response diag(V^T T V) against the eigenvalues of
  I - D^-1/2 A D^-1/2, computed with a cyclic Jacobi eigensolver.

``evaluate`` runs a ladder of attacks against the test nodes on the full
evaluation view and reports clean vs robust accuracy.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .attacks import AttackConfig, compute_budgets, run_attack
from .data import Split
from .errors import CapacityError, DataError, NumericError
from .graph import Graph, OperatorKind, apply_flips, build_normalized
from .models import DiffusionModel, chebyshev_interp_matrix, chebyshev_literal_weights
from .training import predict

MAX_DENSE_DIFFUSION = 5000
MAX_EIGEN_NODES = 2000


def normalize_gamma(gamma: np.ndarray) -> np.ndarray:
    """Flip the global sign so the first nonzero entry is positive, then
    scale to unit l1 norm."""
    gamma = np.asarray(gamma, dtype=np.float64)
    total = np.abs(gamma).sum()
    if total == 0.0:
        raise DataError("cannot normalize an all-zero coefficient vector")
    first = gamma[np.flatnonzero(gamma)[0]]
    sign = 1.0 if first > 0 else -1.0
    return sign * gamma / total


def _polynomial_weights(model: DiffusionModel) -> tuple[np.ndarray, OperatorKind, bool]:
    """Per-degree weights of the diffusion polynomial and its operator.

    Returns (weights, operator kind, chebyshev_basis) where chebyshev_basis
    says the weights multiply T_k(B) instead of B^k.
    """
    if model.basis in ("monomial", "appnp"):
        return model.gamma.copy(), OperatorKind.SYM_LOOPS, False
    if model.basis == "chebyshev":
        if model.chebyshev_literal:
            w = model.gamma * chebyshev_literal_weights(model.order)
        else:
            w = chebyshev_interp_matrix(model.order) @ model.gamma
        return w, OperatorKind.NEG_SYM, True
    raise DataError(f"model basis {model.basis!r} has no diffusion polynomial")


def total_diffusion(model: DiffusionModel, graph: Graph) -> np.ndarray:
    """Dense end-to-end propagation matrix of the diffusion polynomial."""
    if graph.n > MAX_DENSE_DIFFUSION:
        raise CapacityError(f"total diffusion is dense; n={graph.n} exceeds {MAX_DENSE_DIFFUSION}")
    weights, kind, chebyshev = _polynomial_weights(model)
    base = build_normalized(graph, kind).to_dense()
    out = weights[0] * np.eye(graph.n)
    if chebyshev:
        t_prev, t_cur = np.eye(graph.n), base
        for k in range(1, len(weights)):
            out += weights[k] * t_cur
            t_prev, t_cur = t_cur, 2.0 * base @ t_cur - t_prev
    else:
        power = np.eye(graph.n)
        for k in range(1, len(weights)):
            power = base @ power
            out += weights[k] * power
    return out


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-10, max_sweeps: int = 100):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns (eigenvalues ascending, eigenvectors as columns).  Raises
    NumericError when the off-diagonal norm does not fall below tol within
    max_sweeps sweeps.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, atol=1e-12):
        raise DataError("jacobi_eigh needs a symmetric square matrix")
    v = np.eye(n)
    converged = False
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0)
        if off <= tol:
            converged = True
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # classic 2x2 rotation, numerically stable form
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot_p, rot_q = a[p].copy(), a[q].copy()
                a[p] = c * rot_p - s * rot_q
                a[q] = s * rot_p + c * rot_q
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    if not converged and np.sqrt(np.sum(np.tril(a, -1) ** 2) * 2.0) > tol:
        raise NumericError(f"Jacobi sweep did not converge within {max_sweeps} sweeps")
    eigvals = np.diag(a).copy()
    order = np.argsort(eigvals, kind="stable")
    return eigvals[order], v[:, order]


@dataclass
class SpectralFilter:
    eigenvalues: np.ndarray   # of I - D^-1/2 A D^-1/2, ascending
    response: np.ndarray      # diag(V^T (sum_k gamma_k B_k) V)


def spectral_filter(model: DiffusionModel, graph: Graph) -> SpectralFilter:
    """Filter response against the unshifted normalized Laplacian spectrum.

    The eigenvectors come from I - D^-1/2 A D^-1/2 even when the diffusion
    polynomial itself acts on the self-loop operator.
    """
    if graph.n > MAX_EIGEN_NODES:
        raise CapacityError(f"eigendecomposition guard: n={graph.n} exceeds {MAX_EIGEN_NODES}")
    lap = np.eye(graph.n) - build_normalized(graph, OperatorKind.SYM).to_dense()
    eigvals, vecs = jacobi_eigh(lap)
    diffusion = total_diffusion(model, graph)
    response = np.einsum("ji,jk,ki->i", vecs, diffusion, vecs)
    return SpectralFilter(eigenvalues=eigvals, response=response)


# ---------------------------------------------------------------------------
# Robustness evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalRow:
    attack: str
    epsilon: float
    local_rule: str
    clean_acc: float
    robust_acc: float
    seed: int
    n_flips: int = 0


def evaluate(
    model,
    graph: Graph,
    split: Split,
    attacks: Iterable[tuple[str, float, str]],
    seed: int,
    attack_config: Optional[AttackConfig] = None,
) -> list[EvalRow]:
    """Attack the test nodes on the full evaluation view.

    `attacks` lists (kind, epsilon, local_rule) triples; epsilon 0 rows
    reduce to the clean accuracy.  Works for DiffusionModel and the
    memorization wrapper alike.
    """
    base_cfg = attack_config or AttackConfig()
    labels = graph.labels
    clean_pred = predict(model, graph)
    clean_acc = float((clean_pred[split.test] == labels[split.test]).mean())
    rows = []
    for kind, epsilon, local_rule in attacks:
        budget = compute_budgets(graph, split.test, epsilon, local_rule)
        cfg = AttackConfig(
            block_size=base_cfg.block_size, epochs=base_cfg.epochs,
            finetune_epochs=base_cfg.finetune_epochs, lr_base=base_cfg.lr_base,
            lr_multiplier=base_cfg.lr_multiplier, sample_tries=base_cfg.sample_tries,
            seed=seed,
        )
        flips = run_attack(kind, model, graph, split.test, budget, cfg, labels=labels)
        if len(flips):
            perturbed = apply_flips(graph, flips)
            robust_pred = predict(model, perturbed)
            robust = float((robust_pred[split.test] == labels[split.test]).mean())
        else:
            robust = clean_acc
        rows.append(EvalRow(kind, epsilon, local_rule, clean_acc, robust, seed, len(flips)))
    if not rows:
        rows.append(EvalRow("none", 0.0, "unlimited", clean_acc, clean_acc, seed, 0))
    return rows


def save_eval_report(rows: list[EvalRow], path, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["attack", "epsilon", "local_rule", "clean_acc", "robust_acc", "seed"])
        for r in rows:
            writer.writerow([r.attack, repr(r.epsilon), r.local_rule,
                             repr(r.clean_acc), repr(r.robust_acc), r.seed])


def save_spectrum(filt: SpectralFilter, path, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        writer.writerow(["lambda", "response"])
        for lam, resp in zip(filt.eigenvalues, filt.response):
            writer.writerow([repr(float(lam)), repr(float(resp))])


def save_diffusion(matrix: np.ndarray, path, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow([repr(float(x)) for x in row])
