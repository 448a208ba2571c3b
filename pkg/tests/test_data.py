import numpy as np
import pytest

from graphrobust.data import (
    CsbmParams,
    Split,
    _unrank_triangular,
    induced_subgraph,
    karate_club,
    load_split,
    make_split,
    sample_csbm,
    save_split,
    training_view,
    validation_view,
)
from graphrobust.errors import DataError
from graphrobust.graph import Graph


def ring_graph(n, n_classes=2):
    edges = sorted([(i, i + 1) for i in range(n - 1)] + [(0, n - 1)])
    return Graph(n, np.array(edges), np.zeros((n, 2)), np.arange(n) % n_classes, n_classes)


def test_unrank_triangular_exhaustive():
    for n in (2, 3, 7, 40):
        got = np.stack(_unrank_triangular(np.arange(n * (n - 1) // 2), n), axis=1)
        expected = np.array([(i, j) for i in range(n) for j in range(i + 1, n)])
        assert np.array_equal(got, expected)


def test_karate_club_shape():
    g = karate_club()
    assert g.n == 34
    assert g.n_edges == 78
    counts = np.bincount(g.labels)
    assert len(counts) == 2 and counts.min() > 0
    assert np.array_equal(g.features, np.eye(34))


def test_karate_club_matches_independent_source():
    nx = pytest.importorskip("networkx")
    ref = nx.karate_club_graph()
    g = karate_club()
    ref_edges = sorted((min(u, v), max(u, v)) for u, v in ref.edges())
    assert g.edges.tolist() == [list(e) for e in ref_edges]
    ref_labels = [0 if ref.nodes[i]["club"] == "Mr. Hi" else 1 for i in ref.nodes]
    assert g.labels.tolist() == ref_labels


def test_csbm_heterophilic_edge_fractions():
    g = sample_csbm(CsbmParams(n=2000, seed=0))
    same = g.labels[g.edges[:, 0]] == g.labels[g.edges[:, 1]]
    assert same.mean() < 0.5  # q_out > p_in: cross-class edges dominate


def test_csbm_is_connected_and_deterministic():
    a = sample_csbm(CsbmParams(n=500, p_in=0.01, q_out=0.02, seed=12))
    b = sample_csbm(CsbmParams(n=500, p_in=0.01, q_out=0.02, seed=12))
    assert np.array_equal(a.edges, b.edges)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.labels, b.labels)
    import scipy.sparse as sp
    from scipy.sparse.csgraph import connected_components

    adj = sp.csr_matrix((np.ones(a.n_edges), (a.edges[:, 0], a.edges[:, 1])),
                        shape=(a.n, a.n))
    n_comp, _ = connected_components(adj, directed=False)
    assert n_comp == 1


def test_csbm_no_edges_is_error():
    with pytest.raises(DataError):
        sample_csbm(CsbmParams(n=50, p_in=0.0, q_out=0.0, seed=0))


def test_csbm_invalid_params():
    with pytest.raises(DataError):
        CsbmParams(n=1)
    with pytest.raises(DataError):
        CsbmParams(n=10, sigma=0.0)


def test_csbm_zero_distance_features_carry_no_signal():
    """With coincident class means a feature-only classifier is at chance."""
    params = CsbmParams(n=10_000, distance=0.0, p_in=0.002, q_out=0.002, seed=4)
    g = sample_csbm(params)
    # the optimal direction under the generative model is the all-ones vector
    score = g.features.mean(axis=1)
    acc = ((score > 0).astype(int) == g.labels).mean()
    assert abs(acc - 0.5) < 0.05


def test_csbm_edge_density_matches_probabilities():
    """Empirical densities within 3 standard errors, averaged over seeds."""
    p_in, q_out = 0.004, 0.012
    same_rates, cross_rates = [], []
    for seed in range(20):
        g = sample_csbm(CsbmParams(n=2000, p_in=p_in, q_out=q_out, seed=seed))
        y = g.labels
        n0, n1 = int((y == 0).sum()), int((y == 1).sum())
        same_pairs = n0 * (n0 - 1) // 2 + n1 * (n1 - 1) // 2
        cross_pairs = n0 * n1
        same_edges = int((y[g.edges[:, 0]] == y[g.edges[:, 1]]).sum())
        same_rates.append(same_edges / same_pairs)
        cross_rates.append((g.n_edges - same_edges) / cross_pairs)
    # LCC extraction only trims isolated-ish nodes at these densities, so the
    # surviving subgraph keeps the pair densities
    for rates, p, pairs in ((same_rates, p_in, same_pairs), (cross_rates, q_out, cross_pairs)):
        se = np.sqrt(p * (1 - p) / pairs / len(rates))
        assert abs(np.mean(rates) - p) < 3 * se + 5e-5


def test_make_split_counts_and_determinism():
    g = ring_graph(1000)
    s = make_split(g, 20, 20, 0.10, True, seed=5)
    assert len(s.train_labeled) == 40
    assert len(s.val) == 40
    assert len(s.test) == 100
    assert len(s.train_unlabeled) == 820
    s2 = make_split(g, 20, 20, 0.10, True, seed=5)
    for attr in ("train_labeled", "train_unlabeled", "val", "test"):
        assert np.array_equal(getattr(s, attr), getattr(s2, attr))
    s3 = make_split(g, 20, 20, 0.10, True, seed=6)
    assert not np.array_equal(s.test, s3.test)


def test_make_split_stratification_within_one():
    g = ring_graph(997, n_classes=3)  # uneven class sizes
    s = make_split(g, 10, 10, 0.10, True, seed=1)
    for k in range(3):
        size = int((g.labels == k).sum())
        got = int((g.labels[s.test] == k).sum())
        assert abs(got - 0.10 * size) < 1.0


def test_make_split_too_few_nodes_names_class():
    g = ring_graph(100)
    with pytest.raises(DataError, match="class [01]"):
        make_split(g, 600, 20, 0.10, True, seed=0)


def test_split_disjointness_enforced():
    with pytest.raises(DataError):
        Split(np.array([0, 1]), np.array([1, 2]), np.array([3]), np.array([4]), True)


def test_training_view_excludes_heldout_edges():
    g = ring_graph(50)
    s = make_split(g, 5, 5, 0.10, True, seed=2)
    view, mapping = training_view(g, s)
    held_out = set(s.val.tolist()) | set(s.test.tolist())
    assert not (set(mapping.tolist()) & held_out)
    # every edge endpoint in the view maps back to a training node
    for u, v in view.edges.tolist():
        assert int(mapping[u]) not in held_out
        assert int(mapping[v]) not in held_out


def test_transductive_training_view_is_identity():
    g = ring_graph(30)
    s = make_split(g, 3, 3, 0.10, False, seed=0)
    view, mapping = training_view(g, s)
    assert view is g
    assert np.array_equal(mapping, np.arange(30))


def test_view_roundtrip_restores_graph():
    g = ring_graph(60)
    s = make_split(g, 5, 5, 0.10, True, seed=9)
    full, mapping = induced_subgraph(g, np.arange(g.n))
    assert np.array_equal(full.edges, g.edges)
    # re-adding val+test to the training view -> original up to reindexing
    nodes = np.sort(np.concatenate([s.train_all, s.val, s.test]))
    sub, mp = induced_subgraph(g, nodes)
    assert sub.n == g.n
    assert np.array_equal(mp[sub.edges], g.edges)


def test_validation_view_adds_only_val():
    g = ring_graph(50)
    s = make_split(g, 5, 5, 0.10, True, seed=2)
    vv, mapping = validation_view(g, s)
    present = set(mapping.tolist())
    assert set(s.val.tolist()) <= present
    assert not (set(s.test.tolist()) & present)


def test_split_save_load_roundtrip(tmp_path):
    g = ring_graph(40)
    s = make_split(g, 4, 4, 0.10, True, seed=7)
    save_split(s, tmp_path / "s.json")
    loaded = load_split(tmp_path / "s.json")
    for attr in ("train_labeled", "train_unlabeled", "val", "test"):
        assert np.array_equal(getattr(s, attr), getattr(loaded, attr))
    assert loaded.inductive == s.inductive
