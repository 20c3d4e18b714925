"""Mean angle error at fixed horizons and report export."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import autodiff as ad
from .dct import decode_batch, encode_batch
from .motion import pad_array
from .refinement import cascade_forward

DEFAULT_HORIZONS = (80, 160, 320, 400)


def horizon_index(ms, frame_rate):
    """0-based future frame index reached ``ms`` milliseconds after the last input."""
    return int(round(ms * frame_rate / 1000.0)) - 1


def frame_errors(pred, truth, mode="frame", joint_dim=3):
    """Per-sample error of (B, C) frames: full-frame norm or mean per-joint norm."""
    diff = np.asarray(pred, dtype=np.float64) - np.asarray(truth, dtype=np.float64)
    if mode == "frame":
        return _kernels.frame_norms(diff)
    if mode == "joint-mean":
        B, C = diff.shape
        return _kernels.frame_norms(diff.reshape(B * C // joint_dim, joint_dim)).reshape(B, -1).mean(axis=1)
    raise ValueError(f"unknown MAE mode {mode!r}")


def mae_at_frame(preds, truths, t, mode="frame"):
    if not preds or len(preds) != len(truths):
        raise ValueError("need equal-length, non-empty prediction and truth lists")
    T = min(p.n_frames for p in preds + truths)
    if not 0 <= t < T:
        raise IndexError(f"frame index {t} outside future length {T}")
    p = np.stack([s.values[t] for s in preds])
    g = np.stack([s.values[t] for s in truths])
    return float(frame_errors(p, g, mode).mean())


@dataclass
class EvalReport:
    """MAE per (action, horizon_ms) for the final output and the coarse output."""

    horizons: list
    actions: list
    mae: dict = field(default_factory=dict)
    coarse: dict = field(default_factory=dict)

    def average(self, h, coarse=False):
        table = self.coarse if coarse else self.mae
        return float(np.mean([table[(a, h)] for a in self.actions]))

    def mean_over_horizons(self, coarse=False):
        return float(np.mean([self.average(h, coarse) for h in self.horizons]))

    def rows(self):
        return [(a, h, self.mae[(a, h)]) for a in self.actions for h in self.horizons]


def predict_batch(model, history, T, L=None):
    """Eval-mode forward on (B, N, C) histories -> (final, coarse), both (B, N+T, C)."""
    cfg = model.config
    L = cfg.L if L is None else L
    H_I = encode_batch(pad_array(history, T), L).astype(cfg.dtype)
    with ad.no_grad():
        H_P, outs = cascade_forward(model, H_I, None, train_mode=False)
    M = history.shape[1] + T
    coarse = decode_batch(H_P.data.astype(np.float64), M)
    final = decode_batch(outs[-1].data.astype(np.float64), M) if outs else coarse
    return final, coarse


def _report(ds, horizons, predict, mode):
    hist, fut = ds.arrays()
    N, T = ds.N, ds.T
    idx = {h: horizon_index(h, ds.frame_rate) for h in horizons}
    for h, i in idx.items():
        if not 0 <= i < T:
            raise ValueError(f"horizon {h} ms maps to future frame {i}, beyond T={T}")
    final, coarse = predict(hist, T)
    actions = np.array([w.action_id for w in ds.windows])
    report = EvalReport(list(horizons), sorted(set(actions.tolist())))
    for a in report.actions:
        sel = actions == a
        for h, i in idx.items():
            report.mae[(a, h)] = float(frame_errors(final[sel, N + i], fut[sel, i], mode).mean())
            report.coarse[(a, h)] = float(frame_errors(coarse[sel, N + i], fut[sel, i], mode).mean())
    return report


def evaluate(model, ds, horizons=DEFAULT_HORIZONS, mode="frame"):
    """Per-action, per-horizon MAE of the eval-path cascade (no error bias)."""
    return _report(ds, horizons, lambda hist, T: predict_batch(model, hist, T), mode)


def zero_velocity_report(ds, horizons=DEFAULT_HORIZONS, mode="frame"):
    def predict(hist, T):
        full = pad_array(hist, T)
        return full, full

    return _report(ds, horizons, predict, mode)


def export_csv(report, path):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["action", "horizon_ms", "mae"])
            for a, h, v in report.rows():
                w.writerow([a, h, f"{v:.9g}"])
    except OSError as exc:
        raise OSError(f"cannot write report to {path}: {exc.strerror}") from exc


def write_table_csv(rows, horizons, path):
    """Ablation table: one row per model variant, one column per horizon."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model"] + [str(h) for h in horizons])
        for name, values in rows:
            w.writerow([name] + [f"{values[h]:.6f}" for h in horizons])
