import math

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import random_graph
from gradcheck import worst_gradient_error
from tenuous.embed import (
    DENSE_DECODE_LIMIT,
    GcnParams,
    TrainConfig,
    aggregation_operator,
    decode,
    embed_graph,
    forward,
    loss,
    loss_and_grad,
    read_embedding,
    sample_pairs,
    train,
    write_embedding,
)
from tenuous.graph import Graph


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("mode", ["motif", "symnorm"])
def test_gradient_matches_finite_differences(seed, mode):
    assert worst_gradient_error(seed, mode) < 1e-4


def test_gradient_with_features():
    assert worst_gradient_error(11, "motif", features=True) < 1e-4


def test_sampled_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    g = random_graph(rng, 7, 0.4)
    w = aggregation_operator(g, "motif")
    p = GcnParams.glorot(7, 4, 3, 4)
    sample = sample_pairs(g, np.random.default_rng(0))
    _, dW0, dW1 = loss_and_grad(g, None, w, p, sample)
    h = 1e-5
    for name, grad in (("W0", dW0), ("W1", dW1)):
        m = getattr(p, name)
        for idx in [(0, 0), (2, 1), (m.shape[0] - 1, m.shape[1] - 1)]:
            old = m[idx]
            m[idx] = old + h
            up = loss_and_grad(g, None, w, p, sample)[0]
            m[idx] = old - h
            down = loss_and_grad(g, None, w, p, sample)[0]
            m[idx] = old
            num = (up - down) / (2 * h)
            assert abs(num - grad[idx]) <= 1e-4 * max(abs(num), abs(grad[idx]), 1e-8)


def test_forward_zero_weights(toy):
    w = aggregation_operator(toy, "motif")
    p = GcnParams(np.zeros((5, 4)), np.zeros((4, 2)))
    assert not forward(toy, None, w, p).values.any()


def test_forward_isolated_node():
    g = Graph.from_edges(1, [])
    w = aggregation_operator(g, "motif")
    p = GcnParams(np.array([[0.5, -2.0]]), np.array([[1.0], [3.0]]))
    z = forward(g, np.ones((1, 1)), w, p).values
    assert z.tolist() == [[0.5]]


def test_forward_two_node_path_oracle():
    g = Graph.from_edges(2, [(0, 1)])
    w = aggregation_operator(g, "symnorm")
    x = np.array([[1.0], [-3.0]])
    p = GcnParams(np.array([[0.7]]), np.array([[-1.3]]))
    # straight-line evaluation: a = 1/2 everywhere
    h0 = [1.0 * 0.7, -3.0 * 0.7]
    pre = [0.5 * h0[0] + 0.5 * h0[1]] * 2
    z1 = [max(v, 0.0) for v in pre]
    h1 = [v * -1.3 for v in z1]
    expect = [0.5 * h1[0] + 0.5 * h1[1]] * 2
    got = forward(g, x, w, p, "symnorm").values.ravel()
    assert np.allclose(got, expect, rtol=0, atol=1e-12)
    x = np.array([[1.0], [3.0]])
    h0 = [0.7, 2.1]
    pre = [1.4, 1.4]
    z = 0.5 * (pre[0] * -1.3) + 0.5 * (pre[1] * -1.3)
    assert np.allclose(forward(g, x, w, p, "symnorm").values.ravel(), [z, z], rtol=0, atol=1e-12)


def test_featureless_equals_identity(toy):
    w = aggregation_operator(toy, "motif")
    p = GcnParams.glorot(5, 6, 3, 1)
    a = forward(toy, None, w, p).values
    b = forward(toy, np.eye(5), w, p).values
    assert np.allclose(a, b, rtol=0, atol=1e-12)
    la, ga0, ga1 = loss_and_grad(toy, None, w, p)
    lb, gb0, gb1 = loss_and_grad(toy, np.eye(5), w, p)
    assert abs(la - lb) < 1e-12
    assert np.allclose(ga0, gb0, rtol=0, atol=1e-12) and np.allclose(ga1, gb1, rtol=0, atol=1e-12)


def test_shape_mismatch(toy):
    w = aggregation_operator(toy, "motif")
    with pytest.raises(ValueError):
        forward(toy, None, w, GcnParams.glorot(4, 3, 2, 0))
    with pytest.raises(ValueError):
        forward(toy, np.ones((4, 2)), w, GcnParams.glorot(2, 3, 2, 0))
    with pytest.raises(ValueError):
        forward(toy, None, sp.eye(3, format="csr"), GcnParams.glorot(5, 3, 2, 0))


def test_decode_examples():
    z = np.zeros((3, 2))
    assert np.all(decode(z).dense() == 0.5)
    v = np.array([math.sqrt(math.log(3.0)), 0.0])
    assert math.isclose(decode(np.stack([v, v]))(0, 1), 0.75, rel_tol=1e-12)
    rng = np.random.default_rng(7)
    z = rng.normal(size=(3, 4))
    dec = decode(z)
    for i in range(3):
        for j in range(3):
            expect = sigmoid(sum(z[i, d] * z[j, d] for d in range(4)))
            assert abs(dec(i, j) - expect) < 1e-12
            assert abs(dec.dense()[i, j] - expect) < 1e-12


def test_decode_refuses_large_dense():
    dec = decode(np.zeros((DENSE_DECODE_LIMIT + 1, 1)))
    assert dec(0, 1) == 0.5
    with pytest.raises(MemoryError):
        dec.dense()


def test_loss_zero_embedding_is_weighted_ln2(toy):
    n, n_pos = 5, 2 * 5 + 5
    pw = (n * n - n_pos) / n_pos
    expect = math.log(2.0) * (pw * n_pos + (n * n - n_pos)) / (n * n)
    assert math.isclose(loss(toy, np.zeros((5, 3))), expect, rel_tol=1e-12)


def test_loss_two_node_oracle():
    g = Graph.from_edges(2, [(0, 1)])
    z = np.array([[0.3, -1.2], [0.8, 0.5]])
    # every entry of A + I is positive, so no negatives and weight 1
    total = 0.0
    for i in range(2):
        for j in range(2):
            s = z[i, 0] * z[j, 0] + z[i, 1] * z[j, 1]
            total += -math.log(sigmoid(s))
    assert math.isclose(loss(g, z), total / 4, rel_tol=1e-12)
    g = Graph.from_edges(2, [])
    total = 0.0
    for i in range(2):
        for j in range(2):
            s = z[i, 0] * z[j, 0] + z[i, 1] * z[j, 1]
            total += -math.log(sigmoid(s)) if i == j else -math.log(1 - sigmoid(s))
    # pos weight is 2 negatives / 2 positives = 1
    assert math.isclose(loss(g, z), total / 4, rel_tol=1e-12)


def test_loss_vanishes_at_perfect_reconstruction():
    g = Graph.from_edges(2, [])
    z = np.array([[10.0, 0.0], [-10.0, 0.0]])
    assert loss(g, z) < 1e-40


def test_sampled_loss():
    g = Graph.from_edges(4, [(0, 1), (2, 3)])
    sample = sample_pairs(g, np.random.default_rng(0))
    assert sample.targets.sum() == 8 and len(sample.targets) == 16
    keys = set(zip(sample.rows.tolist(), sample.cols.tolist()))
    neg = [(r, c) for r, c, t in zip(sample.rows, sample.cols, sample.targets) if t == 0]
    assert all(r != c and (min(r, c), max(r, c)) not in {(0, 1), (2, 3)} for r, c in neg)
    assert {(0, 0), (0, 1), (1, 0), (3, 2)} <= keys
    assert math.isclose(loss(g, np.zeros((4, 2)), sample), math.log(2.0), rel_tol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(mode="gat")
    with pytest.raises(ValueError):
        TrainConfig(hidden2=0)


def test_one_epoch_is_one_update(toy):
    cfg = TrainConfig(epochs=1, optimizer="sgd", learning_rate=0.1, hidden1=4, hidden2=2, seed=3)
    w = aggregation_operator(toy, "motif")
    p = GcnParams.glorot(5, 4, 2, 3)
    _, d0, d1 = loss_and_grad(toy, None, w, p)
    p.W0 -= 0.1 * d0
    p.W1 -= 0.1 * d1
    z = train(toy, None, w, cfg)
    assert np.array_equal(z.values, forward(toy, None, w, p).values)
    assert z.training_meta["epochs"] == 1


@pytest.mark.parametrize("mode", ["motif", "symnorm"])
def test_training_reduces_loss_and_is_deterministic(toy, mode):
    cfg = TrainConfig(mode=mode, seed=5)
    a = embed_graph(toy, cfg)
    b = embed_graph(toy, cfg)
    assert np.array_equal(a.values, b.values)
    assert a.training_meta["final_loss"] < a.training_meta["initial_loss"]
    assert np.all(np.isfinite(a.values))


def test_triangle_free_modes_both_train():
    tree = Graph.from_edges(7, [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)])
    for mode in ("motif", "symnorm"):
        z = embed_graph(tree, TrainConfig(mode=mode, epochs=50))
        assert np.all(np.isfinite(z.values))
        assert z.training_meta["final_loss"] < z.training_meta["initial_loss"]


def test_negative_sampling_training(toy):
    cfg = TrainConfig(negative_sampling=True, seed=2, epochs=100)
    a, b = embed_graph(toy, cfg), embed_graph(toy, cfg)
    assert np.array_equal(a.values, b.values)
    assert a.training_meta["negative_sampling"]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    g = random_graph(np.random.default_rng(0), 12, 0.5)
    cfg = TrainConfig(optimizer="sgd", learning_rate=1e200, epochs=5)
    with pytest.raises(FloatingPointError):
        embed_graph(g, cfg)


def test_embedding_round_trip(tmp_path, toy):
    z = embed_graph(toy, TrainConfig(epochs=3))
    p = tmp_path / "z.csv"
    write_embedding(z, p)
    assert p.read_text().splitlines()[0] == "node," + ",".join(f"d{i}" for i in range(16))
    assert np.array_equal(read_embedding(p).values, z.values)
