"""Projection and discretization contracts, checked against independent
oracles: active-set (KKT) enumeration for the Euclidean projection and
scipy.optimize.linprog for the relaxed knapsack."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from graphrobust.attacks import (
    Budget,
    _project_local_global_early_stop,
    compute_budgets,
    discretize_knapsack,
    discretize_sample,
    project_global,
    project_local_global,
)
from graphrobust.errors import ConfigError
from graphrobust.graph import Graph
from graphrobust.rng import labeled_rng


def qp_projection_oracle(s, delta):
    """Exhaustive active-set search for argmin ||p - s||^2 with box + sum
    constraints.  Independent of the bisection path."""
    m = len(s)
    clipped = np.clip(s, 0.0, 1.0)
    if clipped.sum() <= delta + 1e-15:
        return clipped
    best, best_dist = None, np.inf
    for assignment in itertools.product((0, 1, 2), repeat=m):  # 0:zero 1:one 2:interior
        zeros = [i for i, a in enumerate(assignment) if a == 0]
        ones = [i for i, a in enumerate(assignment) if a == 1]
        inter = [i for i, a in enumerate(assignment) if a == 2]
        if not inter:
            p = np.zeros(m)
            p[ones] = 1.0
            if p.sum() > delta + 1e-12:
                continue
        else:
            # binding sum constraint: p_i = s_i - mu on the interior set
            mu = (sum(s[i] for i in inter) + len(ones) - delta) / len(inter)
            if mu < -1e-12:
                continue
            p = np.zeros(m)
            p[ones] = 1.0
            ok = True
            for i in inter:
                val = s[i] - mu
                if val < -1e-9 or val > 1.0 + 1e-9:
                    ok = False
                    break
                p[i] = min(max(val, 0.0), 1.0)
            if not ok:
                continue
            for i in zeros:
                if s[i] - mu > 1e-9:  # KKT: clipping to 0 must be optimal
                    ok = False
                    break
            for i in ones:
                if s[i] - mu < 1.0 - 1e-9:
                    ok = False
                    break
            if not ok:
                continue
        dist = float(np.sum((p - s) ** 2))
        if dist < best_dist - 1e-15:
            best, best_dist = p, dist
    assert best is not None
    return best


def knapsack_lp_oracle(s, u, v, budget, n):
    """LP optimum of the relaxed knapsack via scipy linprog (HiGHS)."""
    w = np.clip(s, 0.0, 1.0)
    m = len(s)
    a_ub = [w]
    b_ub = [budget.global_delta]
    local = budget.local_or_unlimited(n)
    for node in range(n):
        if local[node] >= 1e17:
            continue
        row = np.zeros(m)
        row[(u == node) | (v == node)] = w[(u == node) | (v == node)]
        a_ub.append(row)
        b_ub.append(local[node])
    res = linprog(-s, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                  bounds=[(0, 1)] * m, method="highs")
    assert res.success
    return -res.fun  # optimal objective sum(s * c)


def test_project_global_hand_traces():
    assert np.allclose(project_global(np.array([0.3, 0.2]), 2), [0.3, 0.2])
    assert np.allclose(project_global(np.array([0.9, 0.8, 0.5]), 1), [0.5, 0.4, 0.1],
                       atol=1e-8)
    assert np.allclose(project_global(np.array([-0.5, 2.0]), 1), [0.0, 1.0])
    assert np.array_equal(project_global(np.array([0.4, 0.9]), 0), [0.0, 0.0])


def test_project_global_idempotent_and_kkt():
    rng = np.random.default_rng(0)
    for _ in range(200):
        m = int(rng.integers(1, 7))
        s = rng.normal(0.3, 1.0, m)
        delta = float(rng.uniform(0.1, m))
        p = project_global(s, delta)
        assert p.min() >= 0.0 and p.max() <= 1.0
        assert p.sum() <= delta + 1e-6
        again = project_global(p, delta)
        assert np.allclose(again, p, atol=1e-7)
        interior = (p > 1e-9) & (p < 1 - 1e-9)
        if interior.sum() >= 2 and p.sum() >= delta - 1e-6:
            shifts = s[interior] - p[interior]
            assert shifts.max() - shifts.min() < 1e-6


def test_project_global_matches_qp_oracle():
    rng = np.random.default_rng(1)
    for _ in range(300):
        m = int(rng.integers(1, 7))
        s = rng.normal(0.4, 1.0, m)
        delta = float(rng.uniform(0.05, m * 0.9))
        mine = project_global(s, delta)
        oracle = qp_projection_oracle(s, delta)
        assert np.abs(mine - oracle).max() <= 1e-6


def test_project_local_global_hand_traces():
    # fractional knapsack, unlimited locals
    out = project_local_global(np.array([0.9, 0.8, 0.5]), np.array([0, 2, 4]),
                               np.array([1, 3, 5]), Budget(1.5), 6)
    assert np.allclose(out, [0.9, 0.6, 0.0])
    # triangle with unit local budgets
    out = project_local_global(np.array([0.9, 0.8, 0.7]), np.array([0, 0, 1]),
                               np.array([1, 2, 2]), Budget(2, np.ones(3)), 3)
    assert np.allclose(out, [0.9, 0.1, 0.1])
    # non-positive entries stay zero
    out = project_local_global(np.array([-0.2, 0.0]), np.array([0, 1]),
                               np.array([1, 2]), Budget(3), 3)
    assert np.array_equal(out, [0.0, 0.0])


def test_project_local_global_matches_lp_with_unlimited_locals():
    rng = np.random.default_rng(2)
    for _ in range(300):
        m = int(rng.integers(1, 7))
        n = 2 * m
        s = rng.normal(0.4, 1.0, m)
        u = np.arange(0, 2 * m, 2)
        v = u + 1
        budget = Budget(float(rng.uniform(0.1, m * 0.8)))
        mine = project_local_global(s, u, v, budget, n)
        # objective of the LP is sum(s * c) with p = clip(s) * c
        weights = np.clip(s, 1e-300, 1.0)
        value = float(np.sum(np.where(s > 0, s * mine / weights, 0.0)))
        lp = knapsack_lp_oracle(s, u, v, budget, n)
        assert value == pytest.approx(lp, abs=1e-7)


def test_project_local_global_feasible_and_dominates_early_stop():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        m = int(rng.integers(1, 9))
        n = int(rng.integers(2, 7))
        s = rng.normal(0.3, 1.0, m)
        u = rng.integers(0, n - 1, m)
        v = (u + 1 + rng.integers(0, n - 1 - u)).clip(max=n - 1)
        local = rng.integers(0, 4, n).astype(float)
        budget = Budget(float(rng.integers(0, 6)), local)
        mine = project_local_global(s, u, v, budget, n)
        # feasibility (exact)
        assert mine.sum() <= budget.global_delta + 1e-9
        per_node = np.zeros(n)
        np.add.at(per_node, u, mine)
        np.add.at(per_node, v, mine)
        assert np.all(per_node <= local + 1e-9)
        assert np.all(mine >= 0) and np.all(mine <= 1)
        # dominates the pseudo-code-literal early-return variant
        lit = _project_local_global_early_stop(s, u, v, budget, n)
        assert (s * mine).sum() >= (s * lit).sum() - 1e-12


def test_compute_budgets_formulas():
    edges = [(i, i + 1) for i in range(20)]
    g = Graph(21, np.array(edges), np.zeros((21, 1)), np.zeros(21, dtype=int), 1)
    # degrees: endpoints 1, middles 2; targets cover sum 40
    targets = np.arange(21)
    b = compute_budgets(g, targets, 0.1, "unlimited")
    assert b.global_delta == 2  # round(0.1 * 40 / 2)
    assert b.local_delta is None
    star = Graph(6, np.array([(0, i) for i in range(1, 6)]), np.zeros((6, 1)),
                 np.zeros(6, dtype=int), 1)
    b = compute_budgets(star, np.arange(6), 1.0, "half_degree")
    assert b.local_delta[0] == 2  # floor(5/2)
    assert np.all(b.local_delta[1:] == 0)
    b = compute_budgets(star, np.arange(6), 1.0, "quarter_degree")
    assert b.local_delta[0] == 1
    assert compute_budgets(g, targets, 0.0, "unlimited").global_delta == 0
    with pytest.raises(ConfigError):
        compute_budgets(g, targets, -0.1, "unlimited")
    with pytest.raises(ConfigError):
        compute_budgets(g, np.array([], dtype=int), 0.1, "unlimited")


def test_budget_rounding_is_half_even():
    # sum of degrees / 2 * eps exactly at .5 boundaries
    g = Graph(4, np.array([(0, 1), (2, 3)]), np.zeros((4, 1)), np.zeros(4, int), 1)
    # sum degrees = 4 -> delta = round(eps * 2)
    assert compute_budgets(g, np.arange(4), 0.75, "unlimited").global_delta == 2  # 1.5 -> 2
    assert compute_budgets(g, np.arange(4), 1.25, "unlimited").global_delta == 2  # 2.5 -> 2


def test_discretize_sample_binary_passthrough():
    vals = np.array([1.0, 0.0, 1.0])
    mask = discretize_sample(vals, Budget(5), lambda m: 0.0, 10, labeled_rng(0, "x"))
    assert np.array_equal(mask, [True, False, True])


def test_discretize_sample_respects_budget():
    rng = labeled_rng(1, "discretize")
    vals = np.full(4, 0.5)
    for _ in range(50):
        mask = discretize_sample(vals, Budget(2), lambda m: float(m.sum()), 20, rng)
        assert mask.sum() <= 2


def test_discretize_sample_mean_matches_bernoulli():
    rng = labeled_rng(2, "discretize")
    vals = np.array([0.1, 0.5, 0.9, 0.3])
    draws = np.array([(rng.random(4) < vals).sum() for _ in range(10_000)])
    expected = vals.sum()
    sigma = np.sqrt((vals * (1 - vals)).sum() / 10_000)
    assert abs(draws.mean() - expected) < 3 * sigma + 1e-9


def test_discretize_sample_fallback_top_delta():
    vals = np.array([0.9, 0.8, 0.7, 0.6])
    # budget 0 forces rejection of every nonzero draw; fallback takes top-0
    mask = discretize_sample(vals, Budget(0), lambda m: 0.0, 3, labeled_rng(3, "d"))
    assert mask.sum() == 0


def test_discretize_knapsack_traces():
    mask = discretize_knapsack(np.array([0.9, 0.8, 0.7]), np.array([0, 0, 1]),
                               np.array([1, 2, 2]), Budget(2, np.ones(3)), 3)
    assert np.array_equal(mask, [True, False, False])
    mask = discretize_knapsack(np.array([0.9, 0.8]), np.array([0, 2]),
                               np.array([1, 3]), Budget(0), 4)
    assert mask.sum() == 0
    mask = discretize_knapsack(np.array([0.3, 0.9, 0.5]), np.array([0, 2, 4]),
                               np.array([1, 3, 5]), Budget(2), 6)
    assert np.array_equal(mask, [False, True, True])  # top-2 by value


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_knapsack_discretization_always_feasible(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 12))
    n = int(rng.integers(2, 8))
    u = rng.integers(0, n - 1, m)
    v = (u + 1 + rng.integers(0, n - 1 - u)).clip(max=n - 1)
    vals = rng.uniform(0, 1, m)
    local = rng.integers(0, 3, n).astype(float)
    budget = Budget(int(rng.integers(0, 6)), local)
    mask = discretize_knapsack(vals, u, v, budget, n)
    assert mask.sum() <= budget.global_delta
    per_node = np.zeros(n)
    np.add.at(per_node, u[mask], 1.0)
    np.add.at(per_node, v[mask], 1.0)
    assert np.all(per_node <= local + 1e-12)
