"""Losses, the joint train step with error augmentation, the epoch loop and checkpoints."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .adversarial import (ErrorDiscriminator, ErrorGenerator, adversarial_step,
                          generator_delta, real_error_batch, sample_pairing)
from .dct import _basis_matrix, encode_batch
from .evaluation import evaluate, horizon_index
from .gcn import PredictorConfig, predictor_forward
from .motion import ConfigurationError, pad_array, stack_windows
from .optim import Adam, AdamConfig
from .refinement import build_cascade, refine_cascade

log = logging.getLogger(__name__)

LOG_FIELDS = ["epoch", "L_P", "L_R", "L", "loss_d", "loss_g", "eval_mae_80", "eval_mae_400"]


class NumericalError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    """All training hyperparameters.

    Defaults follow the full-scale setting (batch 256, 50 epochs);
    :meth:`desk` gives the small setting used by the test-suite.
    ``stages`` counts the coarse predictor too, so ``stages=2`` is one
    refinement stage and the refinement-loss weight is ``stages - 1``.
    """

    lr: float = 0.002
    batch_size: int = 256
    epochs: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    gamma: float = 0.1
    N: int = 10
    T: int = 10
    L: int = 0
    d_hidden: int = 64
    blocks: int = 4
    dropout: float = 0.5
    stages: int = 2
    plain_stack: bool = False
    adversarial: bool = True
    noise_dim: int = 16
    gen_hidden: int = 64
    disc_hidden: int = 64
    conditional: bool = True
    squared_loss: bool = False
    joint_dim: int = 3
    checkpoint_every: int = 0
    dtype: str = "float32"
    mae_mode: str = "frame"
    input_activation: bool = True
    warm_start: bool = True

    def __post_init__(self):
        if self.lr <= 0 or self.batch_size <= 0 or self.epochs < 0:
            raise ConfigurationError("lr and batch_size must be positive, epochs non-negative")
        if self.stages < 1:
            raise ConfigurationError("stages counts the coarse predictor and must be >= 1")
        if self.N <= 0 or self.T <= 0:
            raise ConfigurationError("N and T must be positive")
        if not 0 <= self.L <= self.N + self.T:
            raise ConfigurationError(f"L must lie in [1, N+T] (0 = N+T), got {self.L}")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be non-negative")

    @classmethod
    def desk(cls, **overrides):
        base = dict(batch_size=32, epochs=30)
        base.update(overrides)
        return cls(**base)

    @property
    def n_coeffs(self):
        return self.L or self.N + self.T

    @property
    def n_refine(self):
        return self.stages - 1

    @property
    def adversarial_active(self):
        return self.adversarial and self.gamma > 0 and self.n_refine > 0 and not self.plain_stack

    def adam(self):
        return AdamConfig(self.lr, self.beta1, self.beta2, self.adam_eps)

    def to_kv(self):
        return {f.name: _fmt(getattr(self, f.name)) for f in dataclasses.fields(self)}

    @classmethod
    def from_kv(cls, kv):
        types = {f.name: type(f.default) for f in dataclasses.fields(cls)}
        unknown = set(kv) - set(types)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**{k: _parse(types[k], v) for k, v in kv.items()})


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(tp, text):
    text = str(text).strip()
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {text!r}")
    try:
        return tp(text)
    except ValueError:
        raise ConfigurationError(f"cannot parse {text!r} as {tp.__name__}") from None


def read_kv_file(path):
    """``key=value`` lines; blank lines and ``#`` comments ignored."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# --- losses ---------------------------------------------------------------

def decode_value(H, M):
    """Differentiable (B, K, L) coefficients -> (B, M, K) frames."""
    L = H.shape[-1]
    basis_t = ad.Value(np.ascontiguousarray(_basis_matrix(M)[:L].T), dtype=H.data.dtype)
    return ad.matmul(basis_t, ad.swap_last(H))


def prediction_loss(decoded, truth_full, joint_dim=3, squared=False):
    """Mean per-joint distance over all N+T frames."""
    return ad.mse_norm_loss(decoded, truth_full, joint_dim, squared)


def refinement_loss(decoded_list, truth_full, joint_dim=3, squared=False):
    """Equal-weight mean of the per-stage prediction losses."""
    if not decoded_list:
        raise ValueError("refinement loss needs at least one stage output")
    terms = [prediction_loss(d, truth_full, joint_dim, squared) for d in decoded_list]
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return ad.scale(total, 1.0 / len(terms))


def total_loss(L_P, L_R, s):
    if L_R is None or s == 0:
        return L_P
    return ad.add(L_P, ad.scale(L_R, float(s)))


# --- state ----------------------------------------------------------------

@dataclass
class Checkpoint:
    """Everything needed to resume training bit for bit."""

    config: TrainConfig
    model: object
    generator: ErrorGenerator
    discriminator: ErrorDiscriminator
    opt_model: Adam
    opt_g: Adam
    opt_d: Adam
    rng: np.random.Generator
    gan_rng: np.random.Generator
    epoch: int = 0
    K_nodes: int = 0

    def all_arrays(self):
        named = []
        for prefix, params in (("model", self.model.parameters()),
                               ("gen", self.generator.parameters()),
                               ("disc", self.discriminator.parameters())):
            named += [(f"{prefix}.{i}", p.data) for i, p in enumerate(params)]
        for prefix, opt in (("adam.model", self.opt_model), ("adam.gen", self.opt_g),
                            ("adam.disc", self.opt_d)):
            named += [(f"{prefix}.m.{i}", m) for i, m in enumerate(opt.state.m)]
            named += [(f"{prefix}.v.{i}", v) for i, v in enumerate(opt.state.v)]
        return named


def init_state(config, K_nodes):
    pcfg = PredictorConfig(K_nodes, config.n_coeffs, config.d_hidden, config.blocks,
                           config.dropout, config.seed, config.dtype,
                           config.input_activation)
    model = build_cascade(pcfg, config.n_refine, config.plain_stack,
                          (config.N, config.T) if config.warm_start else None)
    grng = np.random.default_rng([config.seed, 1])
    gen = ErrorGenerator.init(K_nodes, config.n_coeffs, config.gen_hidden, config.noise_dim,
                              config.gamma, grng, config.dtype)
    disc = ErrorDiscriminator.init(K_nodes, config.n_coeffs, config.disc_hidden,
                                   config.conditional, grng, config.dtype)
    adam = config.adam()
    return Checkpoint(config, model, gen, disc, Adam(model.parameters(), adam),
                      Adam(gen.parameters(), adam), Adam(disc.parameters(), adam),
                      np.random.default_rng([config.seed, 2]),
                      np.random.default_rng([config.seed, 3]), 0, K_nodes)


def parameter_digest(params):
    """Stable hash of parameter bytes, for side-effect checks."""
    import hashlib

    h = hashlib.sha256()
    for p in params:
        h.update(np.ascontiguousarray(p.data).tobytes())
    return h.hexdigest()


# --- one step -------------------------------------------------------------

def _batch_arrays(windows, config):
    hist, fut = stack_windows(windows)
    truth = np.concatenate([hist, fut], axis=1).astype(config.dtype)
    H_I = encode_batch(pad_array(hist, config.T), config.n_coeffs).astype(config.dtype)
    return H_I, truth


def train_step(state, batch_I, batch_II=None):
    """Joint update of predictor and stages, with the GAN update in between.

    Order: coarse forward on both batches, real errors from batch_II,
    discriminator then generator update, a fresh generated bias added to
    the batch_I coarse prediction, refinement forward, total-loss backward
    and the Adam step on predictor and stages.
    """
    cfg = state.config
    rng = state.rng  # pairing and dropout; the GAN draws from state.gan_rng
    M = cfg.N + cfg.T
    jd, sq = cfg.joint_dim, cfg.squared_loss
    H_I, truth_I = _batch_arrays(batch_I, cfg)
    pair = batch_II is not None and len(batch_II) > 0
    metrics = {"loss_d": float("nan"), "loss_g": float("nan")}

    state.opt_model.zero_grad()
    with ad.Tape() as tape:
        H_P = predictor_forward(state.model.predictor, H_I, True, rng)
        L_P = prediction_loss(decode_value(H_P, M), truth_I, jd, sq)
        if pair:
            H_II, truth_II = _batch_arrays(batch_II, cfg)
            H_P_II = predictor_forward(state.model.predictor, H_II, True, rng)
            L_P_II = prediction_loss(decode_value(H_P_II, M), truth_II, jd, sq)
            L_P = ad.scale(ad.add(L_P, L_P_II), 0.5)

        bias = None
        if cfg.adversarial_active and pair:
            real = real_error_batch(H_P_II.data, truth_II)
            metrics["loss_d"], metrics["loss_g"] = adversarial_step(
                state.generator, state.discriminator, real, H_P_II.data, H_P.data,
                state.gan_rng, state.opt_g, state.opt_d)
            noise = state.gan_rng.standard_normal((H_P.shape[0], cfg.noise_dim))
            with ad.no_grad():
                bias = generator_delta(state.generator, H_P.data, noise).data

        outs = refine_cascade(state.model, H_P, H_I, bias, True, rng)
        if not outs:
            L_R, loss = None, L_P
        elif state.model.plain_stack:
            L_R = prediction_loss(decode_value(outs[-1], M), truth_I, jd, sq)
            loss = L_R
        else:
            L_R = refinement_loss([decode_value(o, M) for o in outs], truth_I, jd, sq)
            loss = total_loss(L_P, L_R, cfg.n_refine)
    tape.backward(loss)
    state.opt_model.step()

    metrics["L_P"] = L_P.item()
    metrics["L_R"] = L_R.item() if L_R is not None else float("nan")
    metrics["L"] = loss.item()
    if not np.isfinite(metrics["L"]):
        raise NumericalError(f"non-finite training loss {metrics['L']}")
    return metrics


# --- loop -----------------------------------------------------------------

@dataclass
class TrainResult:
    state: Checkpoint
    log: list = field(default_factory=list)


def _epoch_batches(ds, state):
    cfg = state.config
    if len(ds.subject_ids) >= 2:
        batch_I, batch_II = sample_pairing(ds, state.rng)
    else:
        if cfg.adversarial_active:
            raise ConfigurationError("adversarial training needs at least two subjects")
        batch_I = [ds.windows[i] for i in state.rng.permutation(len(ds))]
        batch_II = None
    bs = cfg.batch_size
    for start in range(0, len(batch_I), bs):
        yield batch_I[start:start + bs], (batch_II[start:start + bs] if batch_II else None)


def _eval_row(state, eval_ds):
    cfg = state.config
    hs = [h for h in (80, 400) if 0 <= horizon_index(h, eval_ds.frame_rate) < eval_ds.T]
    rep = evaluate(state.model, eval_ds, hs, cfg.mae_mode) if hs else None
    return {f"eval_mae_{h}": (rep.average(h) if rep and h in hs else float("nan"))
            for h in (80, 400)}


def train_loop(ds, config=None, eval_ds=None, state=None, log_path=None,
               checkpoint_path=None):
    """Train for ``config.epochs`` epochs, resuming from ``state`` if given.

    Each epoch resamples Subject II and walks all other-subject windows in
    minibatches.  A metrics row is appended per epoch; checkpoints are
    written every ``checkpoint_every`` epochs and at the end when
    ``checkpoint_path`` is set.
    """
    if state is None:
        state = init_state(config, ds.n_channels)
    cfg = state.config
    if (ds.N, ds.T) != (cfg.N, cfg.T):
        raise ConfigurationError(f"dataset windows are {ds.N}+{ds.T}, config wants {cfg.N}+{cfg.T}")
    if ds.n_channels != state.K_nodes:
        raise ConfigurationError(f"dataset has {ds.n_channels} channels, model {state.K_nodes}")
    eval_ds = ds if eval_ds is None else eval_ds
    rows = []
    if log_path is not None and state.epoch == 0:
        _write_log_header(log_path)
    while state.epoch < cfg.epochs:
        steps = [train_step(state, bI, bII) for bI, bII in _epoch_batches(ds, state)]
        row = {"epoch": state.epoch + 1}
        for k in ("L_P", "L_R", "L", "loss_d", "loss_g"):
            row[k] = float(np.mean([s[k] for s in steps]))
        row.update(_eval_row(state, eval_ds))
        state.epoch += 1
        rows.append(row)
        log.info("epoch %d L=%.5f eval_mae_400=%.4f", row["epoch"], row["L"], row["eval_mae_400"])
        if log_path is not None:
            _append_log(log_path, row)
        if checkpoint_path and cfg.checkpoint_every and state.epoch % cfg.checkpoint_every == 0:
            save_checkpoint(checkpoint_path, state)
    if checkpoint_path:
        save_checkpoint(checkpoint_path, state)
    return TrainResult(state, rows)


def format_log_row(row):
    return [str(row["epoch"])] + [repr(float(row[k])) for k in LOG_FIELDS[1:]]


def _write_log_header(path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(LOG_FIELDS)
    except OSError as exc:
        raise OSError(f"cannot write metrics log {path}: {exc.strerror}") from exc


def _append_log(path, row):
    try:
        with open(path, "a", newline="", encoding="utf-8") as fh:
            csv.writer(fh, lineterminator="\n").writerow(format_log_row(row))
    except OSError as exc:
        raise OSError(f"cannot append to metrics log {path}: {exc.strerror}") from exc


# --- checkpoint container -------------------------------------------------

MAGIC = b"ARN1"


def save_checkpoint(path, state):
    """Write the ``ARN1`` container.

    Layout: magic, u64 config length, UTF-8 ``key=value`` block, u64 array
    count, then per array: u64 name length, name, u64 ndim, u64 dims and
    little-endian float32 payload.  Integers are little-endian.
    """
    kv = state.config.to_kv()
    kv.update({
        "format_version": "1",
        "K_nodes": str(state.K_nodes),
        "epoch": str(state.epoch),
        "adam.model.t": str(state.opt_model.state.t),
        "adam.gen.t": str(state.opt_g.state.t),
        "adam.disc.t": str(state.opt_d.state.t),
        "rng_state": json.dumps(state.rng.bit_generator.state, sort_keys=True),
        "gan_rng_state": json.dumps(state.gan_rng.bit_generator.state, sort_keys=True),
    })
    block = "".join(f"{k}={v}\n" for k, v in kv.items()).encode("utf-8")
    arrays = state.all_arrays()
    parts = [MAGIC, struct.pack("<Q", len(block)), block, struct.pack("<Q", len(arrays))]
    for name, arr in arrays:
        nb = name.encode("utf-8")
        parts.append(struct.pack("<Q", len(nb)) + nb)
        parts.append(struct.pack("<Q", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise OSError(f"cannot write checkpoint {path}: {exc.strerror}") from exc


class CheckpointError(ValueError):
    pass


def load_checkpoint(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc.strerror}") from exc
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CheckpointError(f"{path}: truncated checkpoint")
        out = raw[pos:pos + n]
        pos += n
        return out

    (clen,) = struct.unpack("<Q", take(8))
    kv = dict(line.split("=", 1) for line in take(clen).decode("utf-8").splitlines() if line)
    meta = {k: kv.pop(k) for k in ("format_version", "K_nodes", "epoch", "adam.model.t",
                                   "adam.gen.t", "adam.disc.t", "rng_state",
                                   "gan_rng_state")}
    state = init_state(TrainConfig.from_kv(kv), int(meta["K_nodes"]))
    (count,) = struct.unpack("<Q", take(8))
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<Q", take(8))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<Q", take(8))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape)
    for name, target in state.all_arrays():
        if name not in arrays:
            raise CheckpointError(f"{path}: missing array {name}")
        if arrays[name].shape != target.shape:
            raise CheckpointError(f"{path}: {name} has shape {arrays[name].shape}, expected {target.shape}")
        target[...] = arrays[name]
    state.epoch = int(meta["epoch"])
    state.opt_model.state.t = int(meta["adam.model.t"])
    state.opt_g.state.t = int(meta["adam.gen.t"])
    state.opt_d.state.t = int(meta["adam.disc.t"])
    state.rng.bit_generator.state = json.loads(meta["rng_state"])
    state.gan_rng.bit_generator.state = json.loads(meta["gan_rng_state"])
    return state
