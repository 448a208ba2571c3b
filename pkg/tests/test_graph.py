import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphrobust.errors import DataError
from graphrobust.graph import (
    Graph,
    OperatorKind,
    RelaxedPerturbation,
    apply_flips,
    build_normalized,
    degrees,
    load_graph,
    save_graph,
)

from conftest import random_graph


def line_graph(n):
    return Graph(n, np.array([(i, i + 1) for i in range(n - 1)]),
                 np.zeros((n, 1)), np.zeros(n, dtype=int), 1)


def test_two_node_selfloop_operator_is_half_everywhere():
    g = Graph(2, np.array([[0, 1]]), np.zeros((2, 1)), np.array([0, 1]), 2)
    op = build_normalized(g, OperatorKind.SYM_LOOPS)
    assert np.array_equal(op.to_dense(), np.full((2, 2), 0.5))
    assert np.array_equal(op.degrees, [2.0, 2.0])


def test_full_flip_removes_edge_from_support():
    g = Graph(2, np.array([[0, 1]]), np.zeros((2, 1)), np.array([0, 1]), 2)
    pert = RelaxedPerturbation(np.array([0]), np.array([1]), np.array([1.0]), 2)
    op = build_normalized(g, OperatorKind.SYM, pert)
    assert op.entry(0, 1) == 0.0
    assert np.array_equal(op.degrees, [0.0, 0.0])


def test_partial_flip_weight():
    g = Graph(2, np.array([[0, 1]]), np.zeros((2, 1)), np.array([0, 1]), 2)
    pert = RelaxedPerturbation(np.array([0]), np.array([1]), np.array([0.3]), 2)
    op = build_normalized(g, OperatorKind.SYM_LOOPS, pert)
    # perturbed weight 1 - 0.3 = 0.7, degrees 1.7 with the self-loop
    assert op.degrees[0] == pytest.approx(1.7)
    assert op.entry(0, 1) == pytest.approx(0.7 / 1.7)


def test_degrees_trivial_cases():
    tri = Graph(3, np.array([[0, 1], [0, 2], [1, 2]]), np.zeros((3, 1)),
                np.zeros(3, dtype=int), 1)
    assert np.array_equal(degrees(tri), [2, 2, 2])
    empty = Graph(3, np.zeros((0, 2)), np.zeros((3, 1)), np.zeros(3, dtype=int), 1)
    assert np.array_equal(degrees(empty), [0, 0, 0])
    assert np.array_equal(degrees(line_graph(3)), [1, 2, 1])


def test_binary_perturbation_equals_explicit_flip():
    rng = np.random.default_rng(7)
    g = random_graph(rng, 10)
    slots = np.array([[0, 1], [2, 7], [3, 9], [5, 6]])
    pert = RelaxedPerturbation(slots[:, 0], slots[:, 1], np.ones(4), 10)
    flipped = apply_flips(g, slots)
    for kind in OperatorKind:
        a = build_normalized(g, kind, pert)
        b = build_normalized(flipped, kind)
        assert np.array_equal(a.to_dense(), b.to_dense()), kind
        assert np.array_equal(np.sort(a.degrees), np.sort(b.degrees))


def test_double_flip_is_identity():
    rng = np.random.default_rng(3)
    g = random_graph(rng, 9)
    slots = np.array([[0, 2], [4, 8]])
    assert np.array_equal(apply_flips(apply_flips(g, slots), slots).edges, g.edges)


def test_operator_symmetry_and_continuity(small_graph):
    slots = np.array([[0, 3], [2, 6]])
    vals = np.array([0.4, 0.8])
    pert = RelaxedPerturbation(slots[:, 0], slots[:, 1], vals, small_graph.n)
    for kind in OperatorKind:
        op = build_normalized(small_graph, kind, pert)
        dense = op.to_dense()
        assert np.array_equal(dense, dense.T)
        # continuity: O(delta) change for a delta bump in one p
        delta = 1e-6
        bumped = RelaxedPerturbation(slots[:, 0], slots[:, 1],
                                     vals + np.array([delta, 0.0]), small_graph.n)
        dense2 = build_normalized(small_graph, kind, bumped).to_dense()
        assert np.abs(dense2 - dense).max() < 100 * delta


def test_isolated_nodes_zero_rows_not_nan():
    g = Graph(3, np.array([[0, 1]]), np.zeros((3, 1)), np.zeros(3, dtype=int), 1)
    for kind in (OperatorKind.SYM, OperatorKind.NEG_SYM):
        dense = build_normalized(g, kind).to_dense()
        assert np.all(np.isfinite(dense))
        assert np.all(dense[2] == 0.0)
    loops = build_normalized(g, OperatorKind.SYM_LOOPS).to_dense()
    assert loops[2, 2] == 1.0


def test_out_of_range_perturbation_rejected():
    with pytest.raises(DataError):
        RelaxedPerturbation(np.array([0]), np.array([1]), np.array([1.5]), 2)
    with pytest.raises(DataError):
        RelaxedPerturbation(np.array([0]), np.array([1]), np.array([-0.1]), 2)


def test_duplicate_slots_rejected():
    with pytest.raises(DataError):
        RelaxedPerturbation(np.array([0, 0]), np.array([1, 1]), np.array([0.1, 0.2]), 3)


def test_graph_invariant_violations():
    with pytest.raises(DataError):
        Graph(3, np.array([[1, 0]]), np.zeros((3, 1)), np.zeros(3, dtype=int), 1)
    with pytest.raises(DataError):
        Graph(3, np.array([[0, 1], [0, 1]]), np.zeros((3, 1)), np.zeros(3, dtype=int), 1)
    with pytest.raises(DataError):
        Graph(3, np.array([[0, 1]]), np.zeros((2, 1)), np.zeros(3, dtype=int), 1)
    with pytest.raises(DataError):
        Graph(3, np.array([[0, 1]]), np.zeros((3, 1)), np.array([0, 0, 5]), 2)


def test_save_load_round_trip(tmp_path, small_graph):
    paths = [tmp_path / p for p in ("edges.txt", "feat.csv", "lab.csv")]
    save_graph(small_graph, *paths)
    loaded = load_graph(*paths, n_classes=small_graph.n_classes)
    assert loaded.n == small_graph.n
    assert np.array_equal(loaded.edges, small_graph.edges)
    assert np.array_equal(loaded.features, small_graph.features)  # bit-exact floats
    assert np.array_equal(loaded.labels, small_graph.labels)


def test_edge_file_canonicalizes_orientation(tmp_path):
    (tmp_path / "e.txt").write_text("5 2\n# comment\n1 0\n")
    (tmp_path / "f.csv").write_text("\n".join("0.0" for _ in range(6)) + "\n")
    (tmp_path / "l.csv").write_text("\n".join(f"{i},0" for i in range(6)) + "\n")
    g = load_graph(tmp_path / "e.txt", tmp_path / "f.csv", tmp_path / "l.csv")
    assert np.array_equal(g.edges, [[0, 1], [2, 5]])


def test_feature_row_count_mismatch(tmp_path):
    (tmp_path / "e.txt").write_text("0 5\n")
    (tmp_path / "f.csv").write_text("0.0\n0.0\n")
    (tmp_path / "l.csv").write_text("0,0\n")
    with pytest.raises(DataError):
        load_graph(tmp_path / "e.txt", tmp_path / "f.csv", tmp_path / "l.csv")


def test_malformed_edge_line_reports_line_number(tmp_path):
    (tmp_path / "e.txt").write_text("0 1\nnot an edge\n")
    (tmp_path / "f.csv").write_text("0.0\n0.0\n")
    (tmp_path / "l.csv").write_text("0,0\n1,1\n")
    with pytest.raises(DataError, match=":2"):
        load_graph(tmp_path / "e.txt", tmp_path / "f.csv", tmp_path / "l.csv")


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=12), st.integers(min_value=0, max_value=10**6))
def test_binary_flip_equivalence_property(n, seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, p=0.4)
    total = n * (n - 1) // 2
    k = int(rng.integers(1, min(total, 6) + 1))
    chosen = rng.choice(total, size=k, replace=False)
    from graphrobust.data import _unrank_triangular

    u, v = _unrank_triangular(np.sort(chosen), n)
    pert = RelaxedPerturbation(u, v, np.ones(k), n)
    flipped = apply_flips(g, np.stack([u, v], 1))
    a = build_normalized(g, OperatorKind.SYM_LOOPS, pert).to_dense()
    b = build_normalized(flipped, OperatorKind.SYM_LOOPS).to_dense()
    assert np.array_equal(a, b)
