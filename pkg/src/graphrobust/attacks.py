"""Structure-perturbation attacks under global and per-node flip budgets.

Two projections drive everything:

* ``project_global``    — Euclidean projection onto
  {P in [0,1]^b : sum P <= Delta} via bisection on the shift mu.
* ``project_local_global`` — greedy relaxed-knapsack fill: walk the positive
  entries in descending order and assign
  min(clip(S), remaining global, remaining local at both endpoints),
  decrementing all three remainders, until the global budget is exhausted.

The final discretizations are Bernoulli sampling with rejection (global
budget only) and the unit-weight greedy knapsack (both budget families).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import CapacityError, ConfigError, DataError, GraphRobustError
from .graph import Graph, RelaxedPerturbation, degrees
from .models import LossResult, backward_edges, loss_tanh_margin
from .rng import labeled_rng

UNLIMITED = float(2**62)

try:  # the greedy kernels are JIT-compiled when numba is available
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        return wrap if not (args and callable(args[0])) else args[0]


@dataclass
class Budget:
    """Global flip budget plus optional per-node budgets (float; UNLIMITED ok).

    The attacks use integer budgets, but the relaxed projections accept any
    non-negative global budget.
    """

    global_delta: float
    local_delta: Optional[np.ndarray] = None

    def __post_init__(self):
        self.global_delta = float(self.global_delta)
        if self.global_delta < 0:
            raise ConfigError("global budget must be non-negative")
        if self.local_delta is not None:
            self.local_delta = np.asarray(self.local_delta, dtype=np.float64)
            if self.local_delta.size and self.local_delta.min() < 0:
                raise ConfigError("local budgets must be non-negative")

    def local_or_unlimited(self, n: int) -> np.ndarray:
        if self.local_delta is None:
            return np.full(n, UNLIMITED)
        if self.local_delta.shape != (n,):
            raise ConfigError(f"local budget length {self.local_delta.shape} != n={n}")
        return self.local_delta


LOCAL_RULES = ("half_degree", "quarter_degree", "unlimited")


def compute_budgets(
    graph: Graph,
    targets: np.ndarray,
    epsilon: float,
    local_rule: str = "unlimited",
) -> Budget:
    """Delta = round_half_even(eps * sum of target degrees / 2); local by rule."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ConfigError("target set must be non-empty")
    if epsilon < 0:
        raise ConfigError("epsilon must be non-negative")
    if local_rule not in LOCAL_RULES:
        raise ConfigError(f"unknown local rule {local_rule!r}")
    d = degrees(graph)
    delta = int(np.rint(epsilon * d[targets].sum() / 2.0))
    if local_rule == "half_degree":
        local = (d // 2).astype(np.float64)
    elif local_rule == "quarter_degree":
        local = (d // 4).astype(np.float64)
    else:
        local = None
    return Budget(global_delta=delta, local_delta=local)


# ---------------------------------------------------------------------------
# Projections
# ---------------------------------------------------------------------------

def project_global(values: np.ndarray, delta: float, tol: float = 1e-8) -> np.ndarray:
    """Euclidean projection onto the box [0,1]^b intersected with sum <= delta."""
    values = np.asarray(values, dtype=np.float64)
    if delta <= 0:
        return np.zeros_like(values)
    clipped = np.clip(values, 0.0, 1.0)
    if clipped.sum() <= delta:
        return clipped
    lo, hi = 0.0, float(values.max())
    for _ in range(200):
        mu = 0.5 * (lo + hi)
        s = np.clip(values - mu, 0.0, 1.0).sum()
        if abs(s - delta) <= tol:
            break
        if s > delta:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    return np.clip(values - mu, 0.0, 1.0)


@njit(cache=True)
def _greedy_fill_kernel(order, values, u, v, rem_global, local_rem, out):  # pragma: no cover
    for k in range(order.shape[0]):
        idx = order[k]
        s = values[idx]
        if s <= 0.0:
            break
        p = s
        if p > 1.0:
            p = 1.0
        if rem_global < p:
            p = rem_global
        a = u[idx]
        b = v[idx]
        if local_rem[a] < p:
            p = local_rem[a]
        if local_rem[b] < p:
            p = local_rem[b]
        if p > 0.0:
            out[idx] = p
            rem_global -= p
            local_rem[a] -= p
            local_rem[b] -= p
            if rem_global <= 1e-12:
                break
    return rem_global


def _greedy_fill_python(order, values, u, v, rem_global, local_rem, out):
    for idx in order:
        s = values[idx]
        if s <= 0.0:
            break
        p = min(s, 1.0, rem_global, local_rem[u[idx]], local_rem[v[idx]])
        if p > 0.0:
            out[idx] = p
            rem_global -= p
            local_rem[u[idx]] -= p
            local_rem[v[idx]] -= p
            if rem_global <= 1e-12:
                break
    return rem_global


def project_local_global(
    values: np.ndarray,
    u: np.ndarray,
    v: np.ndarray,
    budget: Budget,
    n: int,
) -> np.ndarray:
    """Greedy solution of the relaxed knapsack with local + global budgets.

    O(b log b) time (sort) and O(b) extra space.  Entries with value <= 0
    stay zero; a partially affordable entry receives the feasible minimum
    and scanning continues until the global budget runs out.
    """
    values = np.asarray(values, dtype=np.float64)
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    out = np.zeros_like(values)
    if budget.global_delta <= 0 or values.size == 0:
        return out
    order = np.argsort(-values, kind="stable")
    local_rem = budget.local_or_unlimited(n).copy()
    fill = _greedy_fill_kernel if _HAVE_NUMBA else _greedy_fill_python
    fill(order, values, u, v, float(budget.global_delta), local_rem, out)
    return out


def _project_local_global_early_stop(values, u, v, budget: Budget, n: int) -> np.ndarray:
    """Pseudo-code-literal variant: all-or-nothing items, stop as soon as the
    next item no longer fits the global budget.  Kept as a reference point;
    the shipped projection dominates it (see acceptance tests)."""
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros_like(values)
    clipped = np.clip(values, 0.0, 1.0)
    rem = float(budget.global_delta)
    local_rem = budget.local_or_unlimited(n).copy()
    for idx in np.argsort(-values, kind="stable"):
        s = clipped[idx]
        if s == 0.0 or rem - s < 0.0:
            break
        cap = min(rem, local_rem[u[idx]], local_rem[v[idx]])
        if cap >= s:
            out[idx] = s
            rem -= s
            local_rem[u[idx]] -= s
            local_rem[v[idx]] -= s
    return out


# ---------------------------------------------------------------------------
# Discretization
# ---------------------------------------------------------------------------

def discretize_sample(
    values: np.ndarray,
    budget: Budget,
    loss_oracle: Callable[[np.ndarray], float],
    tries: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bernoulli rounding with rejection of draws over the global budget.

    Returns a boolean mask over the slots.  Among accepted draws the one
    with the highest oracle loss wins (first maximum on ties); if no draw is
    feasible the top-Delta entries are taken instead.
    """
    values = np.asarray(values, dtype=np.float64)
    binary = (values == 0.0) | (values == 1.0)
    if binary.all():
        return values == 1.0
    best_mask, best_loss = None, -np.inf
    for _ in range(tries):
        draw = rng.random(values.shape) < values
        if draw.sum() > budget.global_delta:
            continue
        loss = loss_oracle(draw)
        if loss > best_loss:
            best_mask, best_loss = draw, loss
    if best_mask is None:
        order = np.argsort(-values, kind="stable")
        take = order[: int(budget.global_delta)]
        best_mask = np.zeros(values.shape, dtype=bool)
        best_mask[take[values[take] > 0.0]] = True
    return best_mask


@njit(cache=True)
def _knapsack_unit_kernel(order, values, u, v, rem, local_rem, out):  # pragma: no cover
    for k in range(order.shape[0]):
        idx = order[k]
        if values[idx] <= 0.0:
            break
        if rem < 1.0:
            break
        a = u[idx]
        b = v[idx]
        if local_rem[a] >= 1.0 and local_rem[b] >= 1.0:
            out[idx] = True
            rem -= 1.0
            local_rem[a] -= 1.0
            local_rem[b] -= 1.0


def _knapsack_unit_python(order, values, u, v, rem, local_rem, out):
    for idx in order:
        if values[idx] <= 0.0 or rem < 1.0:
            break
        if local_rem[u[idx]] >= 1.0 and local_rem[v[idx]] >= 1.0:
            out[idx] = True
            rem -= 1.0
            local_rem[u[idx]] -= 1.0
            local_rem[v[idx]] -= 1.0


def discretize_knapsack(values: np.ndarray, u, v, budget: Budget, n: int) -> np.ndarray:
    """Unit-weight greedy: take whole slots by descending value while both
    budget families allow; binary and feasible by construction."""
    values = np.asarray(values, dtype=np.float64)
    out = np.zeros(values.shape, dtype=bool)
    if budget.global_delta <= 0 or values.size == 0:
        return out
    order = np.argsort(-values, kind="stable")
    local_rem = budget.local_or_unlimited(n).copy()
    kern = _knapsack_unit_kernel if _HAVE_NUMBA else _knapsack_unit_python
    kern(order, values, np.asarray(u, np.int64), np.asarray(v, np.int64),
         float(budget.global_delta), local_rem, out)
    return out


# ---------------------------------------------------------------------------
# Slot indexing over the upper triangle
# ---------------------------------------------------------------------------

def _slot_count(n: int) -> int:
    return n * (n - 1) // 2


def _slots_to_pairs(idx: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    from .data import _unrank_triangular

    return _unrank_triangular(idx, n)


def _pairs_to_slots(u: np.ndarray, v: np.ndarray, n: int) -> np.ndarray:
    u = np.asarray(u, dtype=np.int64)
    v = np.asarray(v, dtype=np.int64)
    return u * (2 * n - u - 1) // 2 + (v - u - 1)


def _sample_slots(rng, n: int, count: int, exclude: Optional[np.ndarray] = None) -> np.ndarray:
    """Uniform distinct upper-triangular slot sample, avoiding `exclude`."""
    from .data import _sample_distinct

    total = _slot_count(n)
    excl = set() if exclude is None else set(exclude.tolist())
    count = min(count, total - len(excl))
    if count <= 0:
        return np.zeros(0, dtype=np.int64)
    picked: list[int] = []
    seen = set(excl)
    while len(picked) < count:
        batch = _sample_distinct(rng, total, min(total, count + len(excl) + 16))
        for s in batch.tolist():
            if s not in seen:
                seen.add(s)
                picked.append(s)
                if len(picked) == count:
                    break
    return np.array(picked, dtype=np.int64)


@dataclass
class BlockState:
    """One sampled coordinate block of the relaxed perturbation matrix."""

    slots: np.ndarray            # linear upper-triangular indices, |slots| <= b
    u: np.ndarray
    v: np.ndarray
    values: np.ndarray
    t: int = 0

    @classmethod
    def sample(cls, rng, n: int, block_size: int) -> "BlockState":
        slots = _sample_slots(rng, n, block_size)
        u, v = _slots_to_pairs(slots, n)
        return cls(slots=slots, u=u, v=v, values=np.zeros(len(slots)), t=0)

    def resample_weakest(self, rng, n: int) -> "BlockState":
        """Refresh at least half the block: all zero-valued slots and, when
        fewer than half are zero, the lowest-valued remainder."""
        b = len(self.slots)
        n_keep = min(int(np.count_nonzero(self.values > 0.0)), b // 2)
        keep_idx = np.argsort(-self.values, kind="stable")[:n_keep]
        kept_slots = self.slots[keep_idx]
        fresh = _sample_slots(rng, n, b - n_keep, exclude=kept_slots)
        slots = np.concatenate([kept_slots, fresh])
        u, v = _slots_to_pairs(slots, n)
        values = np.concatenate([self.values[keep_idx], np.zeros(len(fresh))])
        return BlockState(slots=slots, u=u, v=v, values=values, t=self.t)


# ---------------------------------------------------------------------------
# Attack configuration and the shared block-descent loop
# ---------------------------------------------------------------------------

@dataclass
class AttackConfig:
    block_size: int = 10_000
    epochs: int = 100
    finetune_epochs: int = 25
    lr_base: float = 100.0
    lr_multiplier: float = 1.0
    sample_tries: int = 20
    seed: int = 0

    def scaled_lr(self, delta: float, b_eff: int) -> float:
        return self.lr_base * self.lr_multiplier * delta / np.sqrt(max(b_eff, 1))


def _attack_loss(model, graph: Graph, labels, targets, pert: RelaxedPerturbation) -> LossResult:
    fwd = model.forward(graph, pert, mode="eval")
    return loss_tanh_margin(fwd, labels, targets)


def _binary_loss_oracle(model, graph, labels, targets, u, v):
    def oracle(mask: np.ndarray) -> float:
        if not mask.any():
            pert = RelaxedPerturbation.empty(graph.n)
        else:
            pert = RelaxedPerturbation(u[mask], v[mask], np.ones(int(mask.sum())), graph.n)
        return _attack_loss(model, graph, labels, targets, pert).value

    return oracle


def _flips_from_mask(u, v, mask) -> np.ndarray:
    return np.stack([u[mask], v[mask]], axis=1).astype(np.int64)


def _check_feasible(flips: np.ndarray, budget: Budget, n: int, local: bool) -> None:
    if flips.shape[0] > budget.global_delta:
        raise GraphRobustError("internal error: global budget violated after discretization")
    if local and budget.local_delta is not None and flips.size:
        counts = np.zeros(n)
        np.add.at(counts, flips[:, 0], 1.0)
        np.add.at(counts, flips[:, 1], 1.0)
        if np.any(counts > budget.local_delta + 1e-9):
            raise GraphRobustError("internal error: local budget violated after discretization")


def _block_descent(
    model,
    graph: Graph,
    labels: np.ndarray,
    targets: np.ndarray,
    budget: Budget,
    config: AttackConfig,
    project: Callable[[np.ndarray, BlockState], np.ndarray],
    rng: np.random.Generator,
    finetune: bool,
):
    """Shared randomized block coordinate ascent on the tanh margin."""
    n = graph.n
    block = BlockState.sample(rng, n, config.block_size)
    b_eff = len(block.slots)
    lr = config.scaled_lr(budget.global_delta, b_eff)
    best_loss, best_block = -np.inf, block

    for t in range(1, config.epochs + 1):
        pert = RelaxedPerturbation(block.u, block.v, np.clip(block.values, 0.0, 1.0), n)
        loss = _attack_loss(model, graph, labels, targets, pert)
        grad = backward_edges(loss)
        if loss.value > best_loss:
            best_loss, best_block = loss.value, replace(block, values=block.values.copy())
        raw = block.values + lr * grad
        block = replace(block, values=project(raw, block), t=t)
        if t < config.epochs:
            block = block.resample_weakest(rng, n)

    if finetune and config.finetune_epochs > 0:
        block = best_block
        for t in range(1, config.finetune_epochs + 1):
            pert = RelaxedPerturbation(block.u, block.v, np.clip(block.values, 0.0, 1.0), n)
            loss = _attack_loss(model, graph, labels, targets, pert)
            grad = backward_edges(loss)
            if loss.value > best_loss:
                best_loss, best_block = loss.value, replace(block, values=block.values.copy())
            raw = block.values + (lr / np.sqrt(t + 1)) * grad
            block = replace(block, values=project(raw, block), t=config.epochs + t)
        final = block
    else:
        final = block
    return final, best_block


def attack_prbcd(
    model,
    graph: Graph,
    targets: np.ndarray,
    budget: Budget,
    config: AttackConfig,
    labels: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Randomized block descent with the global projection and Bernoulli
    discretization.  Returns flips as an (k, 2) array of slots, k <= Delta."""
    labels = graph.labels if labels is None else labels
    if budget.global_delta == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if config.block_size < budget.global_delta:
        raise ConfigError(
            f"block size {config.block_size} is smaller than the budget {budget.global_delta}"
        )
    rng = labeled_rng(config.seed, "attack")
    project = lambda raw, block: project_global(raw, budget.global_delta)
    final, _ = _block_descent(model, graph, labels, targets, budget, config, project, rng, True)
    oracle = _binary_loss_oracle(model, graph, labels, targets, final.u, final.v)
    mask = discretize_sample(final.values, budget, oracle, config.sample_tries,
                             labeled_rng(config.seed, "discretize"))
    flips = _flips_from_mask(final.u, final.v, mask)
    _check_feasible(flips, budget, graph.n, local=False)
    return flips


def attack_lrbcd(
    model,
    graph: Graph,
    targets: np.ndarray,
    budget: Budget,
    config: AttackConfig,
    labels: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Block descent with the local+global greedy projection and the
    unit-weight knapsack discretization; both constraint families hold
    exactly on the output."""
    labels = graph.labels if labels is None else labels
    if budget.global_delta == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if budget.local_delta is not None and budget.local_delta.sum() == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if config.block_size < budget.global_delta:
        raise ConfigError(
            f"block size {config.block_size} is smaller than the budget {budget.global_delta}"
        )
    rng = labeled_rng(config.seed, "attack")
    project = lambda raw, block: project_local_global(raw, block.u, block.v, budget, graph.n)
    final, best = _block_descent(model, graph, labels, targets, budget, config, project, rng, False)
    # discretize whichever epoch attacked best (PR-BCD recovers its best
    # state before finetuning; this is the finetune-free analogue)
    candidates = []
    for state in (best, final):
        mask = discretize_knapsack(state.values, state.u, state.v, budget, graph.n)
        flips = _flips_from_mask(state.u, state.v, mask)
        oracle = _binary_loss_oracle(model, graph, labels, targets, state.u, state.v)
        candidates.append((oracle(mask), flips))
    flips = max(candidates, key=lambda c: c[0])[1]
    _check_feasible(flips, budget, graph.n, local=True)
    return flips


MAX_DENSE_NODES = 3000


def attack_pgd(
    model,
    graph: Graph,
    targets: np.ndarray,
    budget: Budget,
    config: AttackConfig,
    labels: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Full-matrix projected gradient ascent (lr 0.1*Delta/sqrt(t))."""
    labels = graph.labels if labels is None else labels
    if budget.global_delta == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if graph.n > MAX_DENSE_NODES:
        raise CapacityError(
            f"PGD holds all n(n-1)/2 slots; n={graph.n} exceeds {MAX_DENSE_NODES}. "
            "Use the block-based attack instead."
        )
    n = graph.n
    slots = np.arange(_slot_count(n), dtype=np.int64)
    u, v = _slots_to_pairs(slots, n)
    values = np.zeros(len(slots))
    for t in range(1, config.epochs + 1):
        pert = RelaxedPerturbation(u, v, np.clip(values, 0.0, 1.0), n)
        loss = _attack_loss(model, graph, labels, targets, pert)
        grad = backward_edges(loss)
        values = project_global(values + (0.1 * budget.global_delta / np.sqrt(t)) * grad,
                                budget.global_delta)
    oracle = _binary_loss_oracle(model, graph, labels, targets, u, v)
    mask = discretize_sample(values, budget, oracle, config.sample_tries,
                             labeled_rng(config.seed, "discretize"))
    flips = _flips_from_mask(u, v, mask)
    _check_feasible(flips, budget, graph.n, local=False)
    return flips


def attack_fgsm_greedy(
    model,
    graph: Graph,
    targets: np.ndarray,
    budget: Budget,
    config: AttackConfig,
    labels: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Delta rounds, each flipping the feasible slot of best first-order gain."""
    labels = graph.labels if labels is None else labels
    if budget.global_delta == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if graph.n > MAX_DENSE_NODES:
        raise CapacityError(
            f"greedy FGSM holds all n(n-1)/2 slots; n={graph.n} exceeds {MAX_DENSE_NODES}"
        )
    n = graph.n
    slots = np.arange(_slot_count(n), dtype=np.int64)
    u, v = _slots_to_pairs(slots, n)
    flipped = np.zeros(len(slots), dtype=bool)
    local_rem = budget.local_or_unlimited(n).copy()
    for _ in range(int(budget.global_delta)):
        pert = RelaxedPerturbation(u, v, flipped.astype(np.float64), n)
        loss = _attack_loss(model, graph, labels, targets, pert)
        gain = backward_edges(loss)
        feasible = ~flipped & (local_rem[u] >= 1.0) & (local_rem[v] >= 1.0)
        if not feasible.any():
            break
        gain = np.where(feasible, gain, -np.inf)
        idx = int(np.argmax(gain))
        flipped[idx] = True
        local_rem[u[idx]] -= 1.0
        local_rem[v[idx]] -= 1.0
    flips = _flips_from_mask(u, v, flipped)
    _check_feasible(flips, budget, graph.n, local=True)
    return flips


def attack_dice(
    graph: Graph,
    targets: np.ndarray,
    budget: Budget,
    labels: np.ndarray,
    seed: int,
) -> np.ndarray:
    """Random baseline: delete internal (same-class) edges, insert external
    (cross-class) non-edges, each with probability 1/2, incident to targets."""
    rng = labeled_rng(seed, "attack")
    targets = np.asarray(targets, dtype=np.int64)
    target_set = set(targets.tolist())
    local_rem = budget.local_or_unlimited(graph.n).copy()

    same = [
        (u, v) for u, v in graph.edges.tolist()
        if labels[u] == labels[v] and (u in target_set or v in target_set)
    ]
    rng.shuffle(same)
    existing = set(map(tuple, graph.edges.tolist()))
    flips: list[tuple[int, int]] = []
    chosen = set()

    def local_ok(u, v):
        return local_rem[u] >= 1.0 and local_rem[v] >= 1.0

    for _ in range(int(budget.global_delta)):
        did = False
        if rng.random() < 0.5:
            while same:
                u, v = same.pop()
                if (u, v) not in chosen and local_ok(u, v):
                    flips.append((u, v))
                    chosen.add((u, v))
                    local_rem[u] -= 1.0
                    local_rem[v] -= 1.0
                    did = True
                    break
        if not did:
            for _ in range(200):  # bounded rejection sampling for an insertion
                t = int(targets[rng.integers(len(targets))])
                o = int(rng.integers(graph.n))
                if o == t or labels[o] == labels[t]:
                    continue
                slot = (min(t, o), max(t, o))
                if slot in existing or slot in chosen or not local_ok(*slot):
                    continue
                flips.append(slot)
                chosen.add(slot)
                local_rem[slot[0]] -= 1.0
                local_rem[slot[1]] -= 1.0
                did = True
                break
        if not did:
            warnings.warn(
                f"perturbation pool exhausted after {len(flips)} of "
                f"{budget.global_delta} flips", stacklevel=2,
            )
            break
    flips_arr = np.array(sorted(flips), dtype=np.int64).reshape(-1, 2)
    _check_feasible(flips_arr, budget, graph.n, local=True)
    return flips_arr


ATTACKS = {
    "prbcd": attack_prbcd,
    "lrbcd": attack_lrbcd,
    "pgd": attack_pgd,
    "fgsm": attack_fgsm_greedy,
    "dice": attack_dice,
}


def run_attack(
    kind: str,
    model,
    graph: Graph,
    targets: np.ndarray,
    budget: Budget,
    config: AttackConfig,
    labels: Optional[np.ndarray] = None,
) -> np.ndarray:
    labels = graph.labels if labels is None else labels
    if kind == "dice":
        return attack_dice(graph, targets, budget, labels, config.seed)
    try:
        fn = ATTACKS[kind]
    except KeyError:
        raise ConfigError(f"unknown attack kind {kind!r}") from None
    return fn(model, graph, targets, budget, config, labels=labels)


# ---------------------------------------------------------------------------
# Perturbation files: JSON list of [u, v, op] with op in {add, del}
# ---------------------------------------------------------------------------

def save_perturbation(graph: Graph, flips: np.ndarray, path, meta: Optional[dict] = None):
    flips = np.asarray(flips, dtype=np.int64).reshape(-1, 2)
    is_edge = graph.has_edge_array(flips[:, 0], flips[:, 1]) if flips.size else np.zeros(0, bool)
    entries = [
        [int(u), int(v), "del" if e else "add"]
        for (u, v), e in zip(flips.tolist(), is_edge.tolist())
    ]
    payload: dict = {"flips": entries}
    if meta:
        payload["_meta"] = meta
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_perturbation(path) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read perturbation file {path}: {exc}") from exc
    entries = payload["flips"] if isinstance(payload, dict) else payload
    return np.array([[int(u), int(v)] for u, v, _ in entries], dtype=np.int64).reshape(-1, 2)
