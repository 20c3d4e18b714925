"""Command-line entry point: synth, train, predict, eval, ablate, export.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
Every flag can also come from a ``--config`` key=value file (keys use the
flag name with dashes or underscores); explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys

import numpy as np

from .evaluation import (DEFAULT_HORIZONS, evaluate, export_csv, predict_batch,
                         write_table_csv, zero_velocity_report)
from .motion import (ConfigurationError, MotionFormatError, MotionSequence, load_dataset,
                     read_motion_file, save_dataset, synth_dataset, write_motion_file)
from .training import (CheckpointError, NumericalError, TrainConfig, load_checkpoint,
                       read_kv_file, train_loop)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _horizons(text):
    try:
        return [int(h) for h in str(text).split(",") if h.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad horizon list {text!r}") from None


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser():
    p = _Parser(prog="arnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="write a synthetic multi-subject dataset")
    s.add_argument("--seed", type=int)
    s.add_argument("--subjects", type=int)
    s.add_argument("--windows", type=int, help="windows per subject")
    s.add_argument("--n", type=int)
    s.add_argument("--t", type=int)
    s.add_argument("--channels", type=int)
    s.add_argument("--actions", type=int)
    s.add_argument("--subject-seed", type=int)
    s.add_argument("--out")

    t = sub.add_parser("train", help="train a cascade and write a checkpoint")
    t.add_argument("--data")
    t.add_argument("--eval-data")
    t.add_argument("--out")
    t.add_argument("--log", help="per-epoch metrics CSV (default: <out>.metrics.csv)")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--gamma", type=float)
    t.add_argument("--stages", type=int, help="total stages incl. the coarse predictor")
    t.add_argument("--plain-stack", action="store_const", const=True)
    t.add_argument("--no-adversarial", action="store_const", const=True)

    r = sub.add_parser("predict", help="predict future frames for one motion file")
    r.add_argument("--ckpt")
    r.add_argument("--input")
    r.add_argument("--frames", type=int)
    r.add_argument("--out")

    e = sub.add_parser("eval", help="MAE per action and horizon")
    e.add_argument("--ckpt")
    e.add_argument("--data")
    e.add_argument("--horizons", type=_horizons)
    e.add_argument("--csv")
    e.add_argument("--mae-mode", choices=["frame", "joint-mean"])
    e.add_argument("--baseline", action="store_const", const=True,
                   help="also print the zero-velocity baseline")

    a = sub.add_parser("ablate", help="train the ablation variants and write a table CSV")
    a.add_argument("--data")
    a.add_argument("--test-data")
    a.add_argument("--out")
    a.add_argument("--horizons", type=_horizons)
    a.add_argument("--variants", help="comma list; default all")
    a.add_argument("--epochs", type=int)
    a.add_argument("--batch-size", type=int)
    a.add_argument("--lr", type=float)
    a.add_argument("--seed", type=int)
    a.add_argument("--gamma", type=float)

    x = sub.add_parser("export", help="write predicted and true frames of one window")
    x.add_argument("--ckpt")
    x.add_argument("--data")
    x.add_argument("--index", type=int)
    x.add_argument("--out")

    for sp in (s, t, r, e, a, x):
        sp.add_argument("--config", help="key=value file")
    return p, sub.choices


DEFAULTS = {
    "synth": dict(seed=0, subjects=2, windows=100, n=10, t=10, channels=12, actions=2),
    "eval": dict(horizons=list(DEFAULT_HORIZONS), mae_mode="frame", baseline=False),
    "ablate": dict(horizons=list(DEFAULT_HORIZONS)),
    "export": dict(index=0),
}
REQUIRED = {
    "synth": ["out"], "train": ["data", "out"], "predict": ["ckpt", "input", "out"],
    "eval": ["ckpt", "data"], "ablate": ["data", "out"], "export": ["ckpt", "data", "out"],
}


def _apply_config(args, subparser):
    """Fill unset flags from the config file; return leftover keys."""
    if not args.config:
        return {}
    kv = read_kv_file(args.config)
    actions = {a.dest: a for a in subparser._actions}
    rest = {}
    for key, raw in kv.items():
        dest = key.replace("-", "_")
        act = actions.get(dest)
        if act is None or dest == "config":
            rest[key] = raw
            continue
        if getattr(args, dest) is not None:
            continue
        if act.const is True:
            value = _bool(raw) or None
        elif act.type is not None:
            value = act.type(raw)
        else:
            value = raw
        setattr(args, dest, value)
    return rest


def _cmd_synth(args):
    ds = synth_dataset(args.seed, args.subjects, args.windows, args.n, args.t, args.channels,
                       actions=args.actions, subject_seed=args.subject_seed)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} windows for subjects {ds.subject_ids} to {args.out}")


def train_config_from(args, extra):
    kv = dict(extra)
    for dest in ("epochs", "batch_size", "lr", "seed", "gamma", "stages"):
        if getattr(args, dest, None) is not None:
            kv[dest] = str(getattr(args, dest))
    if getattr(args, "plain_stack", None):
        kv["plain_stack"] = "true"
    if getattr(args, "no_adversarial", None):
        kv["adversarial"] = "false"
    return TrainConfig.from_kv(kv)


def _cmd_train(args, extra):
    cfg = train_config_from(args, extra)
    if not cfg.adversarial:
        cfg.gamma = 0.0
    ds = load_dataset(args.data, cfg.N, cfg.T)
    eval_ds = load_dataset(args.eval_data, cfg.N, cfg.T) if args.eval_data else None
    log_path = args.log or f"{args.out}.metrics.csv"
    res = train_loop(ds, cfg, eval_ds=eval_ds, log_path=log_path, checkpoint_path=args.out)
    last = res.log[-1] if res.log else None
    if last:
        print(f"epoch {last['epoch']}: L={last['L']:.5f} eval_mae_400={last['eval_mae_400']:.4f}")
    print(f"checkpoint {args.out}, metrics {log_path}")


def _cmd_predict(args):
    state = load_checkpoint(args.ckpt)
    cfg = state.config
    seq = read_motion_file(args.input)
    frames = cfg.T if args.frames is None else args.frames
    if not 1 <= frames <= cfg.T:
        raise ConfigurationError(f"--frames must lie in [1, {cfg.T}] for this checkpoint")
    if seq.n_frames < cfg.N:
        raise ConfigurationError(f"input has {seq.n_frames} frames, model needs {cfg.N}")
    if seq.n_channels != state.K_nodes:
        raise ConfigurationError(f"input has {seq.n_channels} channels, model {state.K_nodes}")
    hist = seq.values[-cfg.N:][None]
    final, _ = predict_batch(state.model, hist, cfg.T)
    write_motion_file(args.out, MotionSequence(final[0, cfg.N:cfg.N + frames], seq.frame_rate))


def _print_report(title, rep):
    print(title)
    print("action  " + "".join(f"{h:>9}" for h in rep.horizons))
    for a in rep.actions:
        print(f"{a:<8}" + "".join(f"{rep.mae[(a, h)]:9.4f}" for h in rep.horizons))
    print("average " + "".join(f"{rep.average(h):9.4f}" for h in rep.horizons))


def _cmd_eval(args):
    state = load_checkpoint(args.ckpt)
    ds = load_dataset(args.data, state.config.N, state.config.T)
    rep = evaluate(state.model, ds, args.horizons, args.mae_mode)
    _print_report("model", rep)
    if args.baseline:
        _print_report("zero-velocity", zero_velocity_report(ds, args.horizons, args.mae_mode))
    if args.csv:
        export_csv(rep, args.csv)


ABLATION_VARIANTS = {
    "1-stage CoarseNet": dict(stages=1, adversarial=False),
    "2-stage CoarseNet": dict(stages=2, plain_stack=True, adversarial=False),
    "2-stage RefineNet": dict(stages=2, adversarial=False),
    "2-stage ARNet": dict(stages=2),
    "3-stage ARNet": dict(stages=3),
    "4-stage ARNet": dict(stages=4),
}


def run_ablation(train_ds, test_ds, base, horizons=DEFAULT_HORIZONS, variants=None):
    """Train each variant from the same base config; rows of (name, {h: mae})."""
    from dataclasses import replace

    rows = []
    for name in variants or ABLATION_VARIANTS:
        over = dict(ABLATION_VARIANTS[name])
        if not over.get("adversarial", True):
            over["gamma"] = 0.0
        res = train_loop(train_ds, replace(base, **over), eval_ds=test_ds)
        rep = evaluate(res.state.model, test_ds, horizons, base.mae_mode)
        rows.append((name, {h: rep.average(h) for h in horizons}))
    return rows


def _cmd_ablate(args, extra):
    cfg = train_config_from(args, extra)
    train_ds = load_dataset(args.data, cfg.N, cfg.T)
    test_ds = load_dataset(args.test_data, cfg.N, cfg.T) if args.test_data else train_ds
    names = [v.strip() for v in args.variants.split(",")] if args.variants else None
    for n in names or []:
        if n not in ABLATION_VARIANTS:
            raise ConfigurationError(f"unknown variant {n!r}; choose from {list(ABLATION_VARIANTS)}")
    rows = run_ablation(train_ds, test_ds, cfg, args.horizons, names)
    write_table_csv(rows, args.horizons, args.out)
    for name, vals in rows:
        print(f"{name:<20}" + "".join(f"{vals[h]:9.4f}" for h in args.horizons))


def _cmd_export(args):
    state = load_checkpoint(args.ckpt)
    cfg = state.config
    ds = load_dataset(args.data, cfg.N, cfg.T)
    if not 0 <= args.index < len(ds):
        raise ConfigurationError(f"window index {args.index} outside [0, {len(ds)})")
    hist, fut = ds.arrays([args.index])
    final, coarse = predict_batch(state.model, hist, cfg.T)
    truth = np.concatenate([hist, fut], axis=1)[0]
    C = truth.shape[1]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "source"] + [f"c{i}" for i in range(C)])
        for name, arr in (("truth", truth), ("coarse", coarse[0]), ("refined", final[0])):
            for i, row in enumerate(arr):
                w.writerow([i, name] + [f"{v:.9g}" for v in row])


def main(argv=None):
    parser, subparsers = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        extra = _apply_config(args, subparsers[args.command])
        for dest, value in DEFAULTS.get(args.command, {}).items():
            if getattr(args, dest) is None:
                setattr(args, dest, value)
        missing = [d for d in REQUIRED[args.command] if getattr(args, d) is None]
        if missing:
            raise UsageError(f"arnet {args.command}: missing "
                             + ", ".join("--" + m.replace("_", "-") for m in missing))
        if extra and args.command not in ("train", "ablate"):
            raise UsageError(f"unknown config keys: {', '.join(sorted(extra))}")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigurationError, OSError, argparse.ArgumentTypeError) as exc:
        print(f"arnet: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            _cmd_synth(args)
        elif args.command == "train":
            _cmd_train(args, extra)
        elif args.command == "predict":
            _cmd_predict(args)
        elif args.command == "eval":
            _cmd_eval(args)
        elif args.command == "ablate":
            _cmd_ablate(args, extra)
        elif args.command == "export":
            _cmd_export(args)
    except NumericalError as exc:
        print(f"arnet: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (MotionFormatError, CheckpointError, ConfigurationError, ValueError, OSError) as exc:
        print(f"arnet: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
