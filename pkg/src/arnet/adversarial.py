"""Cross-subject error augmentation with a conditional generator/discriminator pair.

Real errors come from the coarse predictions of one sampled subject
("Subject II"); the generator produces errors conditioned on the coarse
predictions of the remaining subjects ("Subject I").  Everything here is
training-only: evaluation never touches these parameters.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .dct import TrajectoryCoefficients, encode, encode_batch
from .motion import ConfigurationError, MotionSequence


@dataclass(frozen=True, eq=False)
class ErrorSample:
    """Coefficient-space perturbation, node-major (K, L) or batched (B, K, L)."""

    delta: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in ("real", "generated"):
            raise ValueError(f"unknown error kind {self.kind!r}")
        if not np.all(np.isfinite(self.delta)):
            raise ValueError("error sample must be finite")


def _mlp_layer(rng, d_in, d_out, dtype, zero=False):
    w = np.zeros((d_in, d_out)) if zero else rng.uniform(-1, 1, (d_in, d_out)) / np.sqrt(d_in)
    return ad.Value(w, True, dtype=dtype), ad.Value(np.zeros(d_out), True, dtype=dtype)


@dataclass
class ErrorGenerator:
    W1: ad.Value
    b1: ad.Value
    W2: ad.Value
    b2: ad.Value
    K: int
    L: int
    noise_dim: int = 16
    gamma: float = 0.1

    @classmethod
    def init(cls, K, L, hidden=64, noise_dim=16, gamma=0.1, rng=None, dtype="float64",
             zero_head=False):
        rng = np.random.default_rng(0) if rng is None else rng
        W1, b1 = _mlp_layer(rng, K * L + noise_dim, hidden, dtype)
        W2, b2 = _mlp_layer(rng, hidden, K * L, dtype, zero=zero_head)
        return cls(W1, b1, W2, b2, K, L, noise_dim, gamma)

    def parameters(self):
        return [self.W1, self.b1, self.W2, self.b2]


@dataclass
class ErrorDiscriminator:
    W1: ad.Value
    b1: ad.Value
    W2: ad.Value
    b2: ad.Value
    K: int
    L: int
    conditional: bool = True

    @classmethod
    def init(cls, K, L, hidden=64, conditional=True, rng=None, dtype="float64",
             zero_head=False):
        rng = np.random.default_rng(1) if rng is None else rng
        d_in = (2 if conditional else 1) * K * L
        W1, b1 = _mlp_layer(rng, d_in, hidden, dtype)
        W2, b2 = _mlp_layer(rng, hidden, 1, dtype, zero=zero_head)
        return cls(W1, b1, W2, b2, K, L, conditional)

    def parameters(self):
        return [self.W1, self.b1, self.W2, self.b2]


def _flat(x, K, L):
    x = ad._const(x.delta if isinstance(x, ErrorSample) else x)
    if x.shape[-2:] != (K, L):
        raise ad.ShapeError(f"expected (.., {K}, {L}), got {x.shape}")
    batch = x.shape[:-2]
    return ad.reshape(x, (int(np.prod(batch)) if batch else 1, K * L)), batch


def real_error(coarse_II, truth_II, L=None):
    """coarse - encode(truth) for a single window, node-major (C, L)."""
    if isinstance(coarse_II, TrajectoryCoefficients):
        c = coarse_II.coeffs
    else:
        c = np.asarray(coarse_II)
    L = c.shape[0] if L is None else L
    if not isinstance(truth_II, MotionSequence):
        truth_II = MotionSequence(np.asarray(truth_II, dtype=float))
    truth = encode(truth_II, L).coeffs
    if truth.shape != c.shape:
        raise ad.ShapeError(f"coarse {c.shape} vs encoded truth {truth.shape}")
    return ErrorSample((c - truth).T, "real")


def real_error_batch(coarse_II, truth_full):
    """Batched real errors: coarse (B, K, L) minus encoded truth (B, M, C)."""
    coarse = coarse_II.data if isinstance(coarse_II, ad.Value) else np.asarray(coarse_II)
    truth = encode_batch(truth_full, coarse.shape[-1])
    if truth.shape != coarse.shape:
        raise ad.ShapeError(f"coarse {coarse.shape} vs encoded truth {truth.shape}")
    return (coarse - truth).astype(coarse.dtype, copy=False)


def generator_delta(g, condition, noise):
    """Differentiable gamma * MLP(condition ++ noise) reshaped to the condition shape."""
    flat, batch = _flat(condition, g.K, g.L)
    noise = ad._const(np.asarray(noise, dtype=flat.data.dtype).reshape(flat.shape[0], -1))
    if noise.shape[1] != g.noise_dim:
        raise ad.ShapeError(f"noise width {noise.shape[1]} != noise_dim {g.noise_dim}")
    h = ad.tanh_act(ad.add_bias(ad.matmul(ad.concat([flat, noise]), g.W1), g.b1))
    out = ad.scale(ad.add_bias(ad.matmul(h, g.W2), g.b2), g.gamma)
    return ad.reshape(out, tuple(batch) + (g.K, g.L))


def generate_error(g, condition_I, noise):
    return ErrorSample(np.array(generator_delta(g, condition_I, noise).data), "generated")


def discriminator_score(d, e, condition=None):
    """Sigmoid probability that ``e`` is a real error, shape (B, 1)."""
    flat_e, _ = _flat(e, d.K, d.L)
    parts = [flat_e]
    if d.conditional:
        if condition is None:
            raise ValueError("conditional discriminator needs a condition")
        flat_c, _ = _flat(condition, d.K, d.L)
        if flat_c.shape != flat_e.shape:
            raise ad.ShapeError(f"condition {flat_c.shape} vs error {flat_e.shape}")
        parts.append(flat_c)
    x = ad.concat(parts) if len(parts) > 1 else flat_e
    h = ad.tanh_act(ad.add_bias(ad.matmul(x, d.W1), d.b1))
    return ad.sigmoid(ad.add_bias(ad.matmul(h, d.W2), d.b2))


def sample_pairing(ds, rng):
    """Pick Subject II uniformly; return equal-length (batch_I, batch_II) window lists.

    batch_I holds every window of the other subjects in shuffled order;
    batch_II cycles through shuffled Subject II windows to the same length.
    """
    subjects = ds.subject_ids
    if len(subjects) < 2:
        raise ConfigurationError("pairing needs at least two subjects")
    s2 = subjects[int(rng.integers(len(subjects)))]
    pool_I = [w for w in ds.windows if w.subject_id != s2]
    pool_II = [w for w in ds.windows if w.subject_id == s2]
    order_I = rng.permutation(len(pool_I))
    reps = -(-len(pool_I) // len(pool_II))
    order_II = np.concatenate([rng.permutation(len(pool_II)) for _ in range(reps)])[:len(pool_I)]
    return [pool_I[i] for i in order_I], [pool_II[i] for i in order_II]


def generator_loss(d_fake, eps=ad.BCE_EPS):
    return ad.mean(ad.log(ad.add_scalar(ad.scale(ad.clamp(d_fake, eps, 1.0 - eps), -1.0), 1.0)))


def adversarial_step(g, d, real_delta, cond_real, cond_fake, rng, opt_g, opt_d):
    """One discriminator update followed by one generator update.

    Returns the losses measured before either update.
    """
    real_delta = np.asarray(real_delta)
    cond_real = np.asarray(cond_real)
    cond_fake = np.asarray(cond_fake)
    if real_delta.shape[0] == 0 or cond_fake.shape[0] == 0:
        raise ValueError("adversarial step needs non-empty batches")
    noise = rng.standard_normal((cond_fake.shape[0], g.noise_dim)).astype(real_delta.dtype)

    fake = generator_delta(g, cond_fake, noise).data
    opt_d.zero_grad()
    with ad.Tape() as tape:
        loss_d, loss_g = ad.bce_terms(discriminator_score(d, real_delta, cond_real),
                                      discriminator_score(d, fake, cond_fake))
    tape.backward(loss_d)
    pre = (loss_d.item(), loss_g.item())
    opt_d.step()

    opt_g.zero_grad()
    with ad.Tape() as tape:
        score = discriminator_score(d, generator_delta(g, cond_fake, noise), cond_fake)
        loss_g = generator_loss(score)
    tape.backward(loss_g)
    opt_g.step()
    opt_d.zero_grad()
    return pre
