"""Graph-convolutional coarse predictor operating on DCT coefficients.

Nodes are angle channels and node features are the retained DCT
coefficients of that channel, so activations have shape (B, K, d).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


@dataclass
class PredictorConfig:
    K_nodes: int
    L: int
    d_hidden: int = 64
    blocks: int = 4
    dropout_p: float = 0.5
    seed: int = 0
    dtype: str = "float64"
    input_activation: bool = True

    def __post_init__(self):
        if min(self.K_nodes, self.L, self.d_hidden) <= 0 or self.blocks < 0:
            raise ValueError("predictor sizes must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")


@dataclass
class GraphConvLayer:
    A: ad.Value
    W: ad.Value
    use_activation: bool = True

    def __post_init__(self):
        K = self.A.shape[0]
        if self.A.shape != (K, K):
            raise ad.ShapeError(f"adjacency must be square, got {self.A.shape}")
        if self.W.data.ndim != 2:
            raise ad.ShapeError(f"weight must be 2D, got {self.W.shape}")

    def parameters(self):
        return [self.A, self.W]


@dataclass
class ResidualGcBlock:
    layer1: GraphConvLayer
    layer2: GraphConvLayer

    def parameters(self):
        return self.layer1.parameters() + self.layer2.parameters()


@dataclass
class CoarsePredictor:
    config: PredictorConfig
    input_layer: GraphConvLayer
    blocks: list = field(default_factory=list)
    output_layer: GraphConvLayer = None

    def parameters(self):
        ps = self.input_layer.parameters()
        for b in self.blocks:
            ps += b.parameters()
        return ps + self.output_layer.parameters()

    def zero_head(self):
        self.output_layer.W.data[...] = 0.0
        return self


def gc_forward(layer, H):
    """sigma(A @ H @ W) with sigma = tanh, or identity when activation is off."""
    if H.shape[-2] != layer.A.shape[1] or H.shape[-1] != layer.W.shape[0]:
        raise ad.ShapeError(
            f"graph conv expects (.., {layer.A.shape[1]}, {layer.W.shape[0]}), got {H.shape}")
    out = ad.matmul(ad.matmul(layer.A, H), layer.W)
    return ad.tanh_act(out) if layer.use_activation else out


def _layer(rng, K, d_in, d_out, activation, dtype):
    a = 1.0 / np.sqrt(K)
    w = 1.0 / np.sqrt(d_in)
    A = np.eye(K) + rng.uniform(-a, a, size=(K, K))
    W = rng.uniform(-w, w, size=(d_in, d_out))
    return GraphConvLayer(ad.Value(A, True, dtype=dtype), ad.Value(W, True, dtype=dtype),
                          activation)


def init_params(config, rng=None):
    """Identity-plus-noise adjacencies and fan-in uniform weights, seeded."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    K, L, d, dt = config.K_nodes, config.L, config.d_hidden, np.dtype(config.dtype)
    inp = _layer(rng, K, L, d, config.input_activation, dt)
    blocks = [ResidualGcBlock(_layer(rng, K, d, d, True, dt), _layer(rng, K, d, d, True, dt))
              for _ in range(config.blocks)]
    out = _layer(rng, K, d, L, False, dt)
    return CoarsePredictor(config, inp, blocks, out)


def _dropout(h, p, rng):
    if rng is None or p <= 0.0:
        return h
    keep = (rng.random(h.shape) >= p).astype(h.data.dtype) / (1.0 - p)
    return ad.mul_const(h, keep)


def predictor_forward(p, H_I, train_mode=False, rng=None):
    """network(H_I) + H_I on (B, K, L) or (K, L) coefficients.

    Dropout is applied after every hidden activation in ``train_mode`` and
    draws its masks from ``rng``.
    """
    H_I = ad._const(H_I)
    cfg = p.config
    if H_I.shape[-2:] != (cfg.K_nodes, cfg.L):
        raise ad.ShapeError(f"predictor expects (.., {cfg.K_nodes}, {cfg.L}), got {H_I.shape}")
    drop = cfg.dropout_p if train_mode else 0.0
    rng = rng if train_mode else None
    h = _dropout(gc_forward(p.input_layer, H_I), drop, rng)
    for blk in p.blocks:
        y = _dropout(gc_forward(blk.layer1, h), drop, rng)
        y = _dropout(gc_forward(blk.layer2, y), drop, rng)
        h = ad.add(h, y)
    return ad.add(gc_forward(p.output_layer, h), H_I)
