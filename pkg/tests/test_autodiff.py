import numpy as np
import pytest

from graphrobust import autodiff as ad
from graphrobust.errors import DataError
from graphrobust.graph import OperatorKind, RelaxedPerturbation, build_structure

from conftest import random_graph


def numeric_grad(fn, x, h=1e-6):
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        ix = it.multi_index
        orig = x[ix]
        x[ix] = orig + h
        fp = fn()
        x[ix] = orig - h
        fm = fn()
        x[ix] = orig
        g[ix] = (fp - fm) / (2 * h)
    return g


def test_matmul_relu_bias_chain():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 3))
    w = rng.normal(size=(3, 4))
    b = rng.normal(size=4)

    def value():
        tape = ad.Tape()
        out = ad.relu(ad.add_bias(ad.matmul(tape.leaf(x), tape.leaf(w)), tape.leaf(b)))
        return float(np.sum(out.value * out.value))

    tape = ad.Tape()
    xn, wn, bn = tape.leaf(x), tape.leaf(w), tape.leaf(b)
    out = ad.relu(ad.add_bias(ad.matmul(xn, wn), bn))
    loss = tape._record(np.float64(np.sum(out.value**2)), (out,),
                        lambda g: (2.0 * g * out.value,))
    gx, gw, gb = tape.gradients(loss, [xn, wn, bn])
    assert np.allclose(gw, numeric_grad(value, w), atol=1e-6)
    assert np.allclose(gb, numeric_grad(value, b), atol=1e-6)
    assert np.allclose(gx, numeric_grad(value, x), atol=1e-6)


def test_gradients_accumulate_on_fanout():
    tape = ad.Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    y = ad.add(x, x)  # dy/dx = 2
    loss = tape._record(np.float64(y.value.sum()), (y,),
                        lambda g: (np.full(2, float(g)),))
    (gx,) = tape.gradients(loss, [x])
    assert np.array_equal(gx, [2.0, 2.0])


def test_unused_leaf_gets_zero_gradient():
    tape = ad.Tape()
    x = tape.leaf(np.array([1.0, 2.0]))
    unused = tape.leaf(np.array([5.0]))
    loss = tape._record(np.float64(x.value.sum()), (x,), lambda g: (np.ones(2) * g,))
    gu = tape.gradients(loss, [unused])[0]
    assert np.array_equal(gu, [0.0])


def test_backward_requires_scalar_root():
    tape = ad.Tape()
    x = tape.leaf(np.ones(3))
    with pytest.raises(DataError):
        tape.gradients(x, [x])


def test_cross_entropy_matches_closed_form():
    tape = ad.Tape()
    logits = tape.leaf(np.array([[1.0, 0.0], [0.0, 1.0]]))
    loss = ad.softmax_cross_entropy(logits, np.array([0, 1]), np.array([0, 1]))
    # each node: -log(e / (e + 1))
    expected = -np.log(np.e / (np.e + 1.0))
    assert loss.value == pytest.approx(expected, abs=1e-12)


def test_cross_entropy_uniform_logits_is_log2():
    tape = ad.Tape()
    logits = tape.leaf(np.zeros((4, 2)))
    loss = ad.softmax_cross_entropy(logits, np.zeros(4, dtype=int), np.arange(4))
    assert loss.value == pytest.approx(np.log(2.0), abs=1e-12)


def test_cross_entropy_confident_correct_is_near_zero():
    tape = ad.Tape()
    z = np.full((3, 3), -50.0)
    z[np.arange(3), [0, 1, 2]] = 50.0
    loss = ad.softmax_cross_entropy(tape.leaf(z), np.array([0, 1, 2]), np.arange(3))
    assert loss.value == pytest.approx(0.0, abs=1e-12)


def test_cross_entropy_empty_index_set_errors():
    tape = ad.Tape()
    with pytest.raises(DataError):
        ad.softmax_cross_entropy(tape.leaf(np.zeros((2, 2))), np.zeros(2, int),
                                 np.zeros(0, int))


def test_tanh_margin_values():
    tape = ad.Tape()
    # huge correct margin -> -1; equal logits -> 0; wrong by 1 -> tanh(1)
    z = np.array([[1000.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    labels = np.array([0, 0, 0])
    loss = ad.tanh_margin(tape.leaf(z[:1]), labels[:1], np.array([0]))
    assert loss.value == pytest.approx(-1.0, abs=1e-12)
    loss = ad.tanh_margin(tape.leaf(z[1:2]), labels[:1], np.array([0]))
    assert loss.value == pytest.approx(0.0, abs=1e-12)
    loss = ad.tanh_margin(tape.leaf(z[2:3]), labels[:1], np.array([0]))
    assert loss.value == pytest.approx(np.tanh(1.0), abs=1e-12)
    assert loss.value == pytest.approx(0.761594, abs=1e-6)


def test_tanh_margin_needs_two_classes():
    tape = ad.Tape()
    with pytest.raises(DataError):
        ad.tanh_margin(tape.leaf(np.zeros((2, 1))), np.zeros(2, int), np.array([0]))


def test_loss_gradients_match_finite_differences():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(6, 4))
    labels = rng.integers(0, 4, size=6)
    idx = np.array([0, 2, 3, 5])
    for op in (ad.softmax_cross_entropy, ad.tanh_margin):
        tape = ad.Tape()
        node = tape.leaf(z)
        loss = op(node, labels, idx)
        (gz,) = tape.gradients(loss, [node])

        def value():
            t2 = ad.Tape()
            return float(op(t2.leaf(z), labels, idx).value)

        fd = numeric_grad(value, z)
        assert np.allclose(gz, fd, atol=1e-6)


def test_normalize_edges_gradient_through_degrees():
    rng = np.random.default_rng(11)
    g = random_graph(rng, 7, p=0.35)
    slots = np.array([[0, 1], [2, 4], [3, 6]])
    vals = rng.uniform(0.1, 0.9, 3)
    for kind in OperatorKind:
        structure = build_structure(
            g, kind, RelaxedPerturbation(slots[:, 0], slots[:, 1], vals, g.n))

        def value():
            adj = structure.adjacency_values(vals)
            b, _, _ = structure.normalized_values(adj)
            return float(np.sum(b * b))

        tape = ad.Tape()
        p = tape.leaf(vals)
        b = ad.normalize_edges(structure, p, tape)
        loss = tape._record(np.float64(np.sum(b.value**2)), (b,),
                            lambda gr: (2.0 * gr * b.value,))
        (gp,) = tape.gradients(loss, [p])
        fd = numeric_grad(value, vals)
        assert np.allclose(gp, fd, atol=1e-6), kind
