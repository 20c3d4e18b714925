import numpy as np
import pytest

from arnet import autodiff as ad
from arnet.autodiff import Value, grad_check
from arnet.gcn import (GraphConvLayer, PredictorConfig, gc_forward, init_params,
                       predictor_forward)

TINY = PredictorConfig(K_nodes=6, L=8, d_hidden=16, blocks=2, dropout_p=0.3, seed=4)


def straight_line_forward(p, H):
    """Same network written out with plain numpy; no autodiff involved."""
    def layer(l, x):
        y = l.A.data @ x @ l.W.data
        return np.tanh(y) if l.use_activation else y

    h = layer(p.input_layer, H)
    for b in p.blocks:
        h = h + layer(b.layer2, layer(b.layer1, h))
    return layer(p.output_layer, h) + H


def test_identity_layer_without_activation(rng):
    H = rng.normal(size=(4, 3))
    layer = GraphConvLayer(Value(np.eye(4)), Value(np.eye(3)), use_activation=False)
    np.testing.assert_array_equal(gc_forward(layer, Value(H)).data, H)


def test_zero_input_zero_output(rng):
    layer = GraphConvLayer(Value(rng.normal(size=(4, 4))), Value(rng.normal(size=(3, 5))))
    assert np.all(gc_forward(layer, Value(np.zeros((4, 3)))).data == 0)


def test_manual_two_node_example():
    layer = GraphConvLayer(Value([[1.0, 1.0], [0.0, 1.0]]), Value([[2.0]]))
    out = gc_forward(layer, Value([[1.0], [2.0]])).data
    np.testing.assert_allclose(out, np.tanh([[6.0], [4.0]]), rtol=0, atol=1e-15)


def test_gc_shape_error(rng):
    layer = GraphConvLayer(Value(np.eye(4)), Value(np.eye(3)))
    with pytest.raises(ad.ShapeError):
        gc_forward(layer, Value(np.zeros((5, 3))))


def test_permutation_covariance(rng):
    K = 5
    A, H, W = rng.normal(size=(K, K)), rng.normal(size=(K, 3)), rng.normal(size=(3, 2))
    P = np.eye(K)[rng.permutation(K)]
    lhs = gc_forward(GraphConvLayer(Value(P @ A @ P.T), Value(W)), Value(P @ H)).data
    rhs = P @ gc_forward(GraphConvLayer(Value(A), Value(W)), Value(H)).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_zero_head_is_identity(rng):
    p = init_params(TINY).zero_head()
    H = rng.normal(size=(3, 6, 8))
    out = predictor_forward(p, H, train_mode=False).data
    assert np.max(np.abs(out - H)) == 0.0
    out_train = predictor_forward(p, H, train_mode=True, rng=rng).data
    assert np.max(np.abs(out_train - H)) == 0.0


def test_eval_mode_deterministic(rng):
    p = init_params(TINY)
    H = rng.normal(size=(6, 8))
    a = predictor_forward(p, H).data
    b = predictor_forward(p, H).data
    assert a.tobytes() == b.tobytes()


def test_matches_straight_line_reimplementation(rng):
    p = init_params(TINY)
    H = rng.normal(size=(2, 6, 8))
    out = predictor_forward(p, H).data
    assert np.max(np.abs(out - straight_line_forward(p, H))) <= 1e-12


def test_dropout_only_in_train_mode(rng):
    p = init_params(TINY)
    H = rng.normal(size=(6, 8))
    ev = predictor_forward(p, H, train_mode=False, rng=rng).data
    tr = predictor_forward(p, H, train_mode=True, rng=np.random.default_rng(0)).data
    assert not np.allclose(ev, tr)
    np.testing.assert_array_equal(ev, predictor_forward(p, H).data)


def test_shape_mismatch_vs_config():
    with pytest.raises(ad.ShapeError):
        predictor_forward(init_params(TINY), np.zeros((6, 7)))


def test_init_deterministic_and_seed_sensitive():
    a, b = init_params(TINY), init_params(TINY)
    c = init_params(PredictorConfig(6, 8, 16, 2, 0.3, seed=5))
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert pa.data.tobytes() == pb.data.tobytes()
    assert any(not np.array_equal(pa.data, pc.data) for pa, pc in zip(a.parameters(), c.parameters()))


def test_init_ranges():
    p = init_params(TINY)
    K = TINY.K_nodes
    layers = [p.input_layer, p.output_layer] + [l for b in p.blocks for l in (b.layer1, b.layer2)]
    for l in layers:
        assert np.max(np.abs(l.A.data - np.eye(K))) <= 1 / np.sqrt(K)
        assert np.max(np.abs(l.W.data)) <= 1 / np.sqrt(l.W.shape[0])


def test_config_validation():
    with pytest.raises(ValueError):
        PredictorConfig(6, 8, dropout_p=1.0)
    with pytest.raises(ValueError):
        PredictorConfig(0, 8)


def test_full_model_grad_check(rng):
    cfg = PredictorConfig(K_nodes=3, L=4, d_hidden=5, blocks=1, dropout_p=0.0, seed=1)
    p = init_params(cfg)
    H = rng.normal(size=(2, 3, 4))
    target = rng.normal(size=(2, 3, 4))
    rep = grad_check(lambda: ad.mean(ad.mul_const(predictor_forward(p, H), target)),
                     p.parameters(), 1e-5, 1e-4)
    assert rep.passed, rep
