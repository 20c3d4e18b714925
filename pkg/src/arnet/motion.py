"""Motion sequences, windows, the CSV motion format and synthetic subjects."""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class MotionFormatError(ValueError):
    """Malformed motion file; ``line`` is 1-based."""

    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class HeaderError(MotionFormatError):
    pass


class CellError(MotionFormatError):
    pass


class RaggedRowError(MotionFormatError):
    pass


class ChannelCountError(MotionFormatError):
    pass


class EmptyBodyError(MotionFormatError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MotionSequence:
    """Frames x channels exponential-map angles (3 channels per joint)."""

    values: np.ndarray
    frame_rate: float = 25.0

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"motion values must be 2D, got shape {v.shape}")
        if v.shape[0] < 1:
            raise ValueError("motion sequence needs at least one frame")
        if v.shape[1] < 3 or v.shape[1] % 3:
            raise ValueError(f"channel count must be a positive multiple of 3, got {v.shape[1]}")
        if not np.all(np.isfinite(v)):
            raise ValueError("motion values must be finite")
        if not self.frame_rate > 0:
            raise ValueError("frame_rate must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    @property
    def n_frames(self):
        return self.values.shape[0]

    @property
    def n_channels(self):
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MotionSequence):
            return NotImplemented
        return self.frame_rate == other.frame_rate and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class SampleWindow:
    history: MotionSequence
    future: MotionSequence
    subject_id: int
    action_id: int = 0

    def __post_init__(self):
        if self.history.n_channels != self.future.n_channels:
            raise ValueError("history and future channel counts differ")
        if self.history.frame_rate != self.future.frame_rate:
            raise ValueError("history and future frame rates differ")

    @property
    def full(self):
        """History followed by future, N+T frames."""
        return np.concatenate([self.history.values, self.future.values], axis=0)


@dataclass(frozen=True)
class SinusoidParams:
    """Closed-form trajectory: offset + sum_i amp_i * sin(2*pi*freq_i*t/fps + phase_i).

    Arrays have shape (C, 2) except ``offset`` (C,).  ``t`` is a 1-based
    frame index; history covers t = 1..N and future t = N+1..N+T.
    """

    amplitude: np.ndarray
    frequency: np.ndarray
    phase: np.ndarray
    offset: np.ndarray
    frame_rate: float

    def evaluate(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        arg = 2.0 * np.pi * self.frequency[None] * t[:, None, None] / self.frame_rate + self.phase[None]
        return self.offset[None] + np.sum(self.amplitude[None] * np.sin(arg), axis=-1)


@dataclass
class Dataset:
    windows: list
    trajectories: list = field(default_factory=list)

    def __post_init__(self):
        if not self.windows:
            raise ValueError("dataset has no windows")
        w0 = self.windows[0]
        shape = (w0.history.n_frames, w0.future.n_frames, w0.history.n_channels)
        for w in self.windows:
            if (w.history.n_frames, w.future.n_frames, w.history.n_channels) != shape:
                raise ValueError("all windows must share N, T and C")

    @property
    def subject_ids(self):
        return sorted({w.subject_id for w in self.windows})

    @property
    def action_ids(self):
        return sorted({w.action_id for w in self.windows})

    @property
    def N(self):
        return self.windows[0].history.n_frames

    @property
    def T(self):
        return self.windows[0].future.n_frames

    @property
    def n_channels(self):
        return self.windows[0].history.n_channels

    @property
    def frame_rate(self):
        return self.windows[0].history.frame_rate

    def __len__(self):
        return len(self.windows)

    def subset(self, subjects):
        keep = set(subjects)
        idx = [i for i, w in enumerate(self.windows) if w.subject_id in keep]
        trajs = [self.trajectories[i] for i in idx] if self.trajectories else []
        return Dataset([self.windows[i] for i in idx], trajs)

    def arrays(self, indices=None):
        """Stacked (history, future) arrays of shape (B, N, C) and (B, T, C)."""
        ws = self.windows if indices is None else [self.windows[i] for i in indices]
        return stack_windows(ws)


def stack_windows(windows):
    hist = np.stack([w.history.values for w in windows])
    fut = np.stack([w.future.values for w in windows])
    return hist, fut


# --- file format ----------------------------------------------------------

def parse_motion_file(text):
    """Parse ``frame_rate,C`` followed by rows of C comma-separated numbers."""
    if not isinstance(text, str):
        text = text.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise HeaderError(1, "missing header")
    head = lines[0].strip().split(",")
    if len(head) != 2:
        raise HeaderError(1, f"expected 'frame_rate,C', got {lines[0]!r}")
    try:
        frame_rate = float(head[0])
        n_channels = int(head[1])
    except ValueError:
        raise HeaderError(1, f"expected 'frame_rate,C', got {lines[0]!r}") from None
    if not (np.isfinite(frame_rate) and frame_rate > 0) or n_channels <= 0:
        raise HeaderError(1, "frame rate and channel count must be positive")
    if n_channels % 3:
        raise ChannelCountError(1, f"channel count {n_channels} is not divisible by 3")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.strip().split(",")
        if len(cells) != n_channels:
            raise RaggedRowError(lineno, f"expected {n_channels} values, got {len(cells)}")
        try:
            row = [float(c) for c in cells]
        except ValueError:
            raise CellError(lineno, f"non-numeric cell in {line!r}") from None
        if not all(np.isfinite(row)):
            raise CellError(lineno, "non-finite value")
        rows.append(row)
    if not rows:
        raise EmptyBodyError(2, "no frames after header")
    return MotionSequence(np.array(rows), frame_rate)


def serialize_motion_file(seq):
    out = io.StringIO()
    out.write(f"{seq.frame_rate:g},{seq.n_channels}\n")
    for row in seq.values:
        out.write(",".join(f"{x:.17g}" for x in row))
        out.write("\n")
    return out.getvalue()


def read_motion_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_motion_file(fh.read())


def write_motion_file(path, seq):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_motion_file(seq))


def _dir_id(name, names):
    digits = "".join(ch for ch in name if ch.isdigit())
    if digits and all(any(ch.isdigit() for ch in n) for n in names):
        return int(digits)
    return sorted(names).index(name)


def save_dataset(ds, root):
    """Write ``<root>/<subject>/<action>/<trial>.csv``, one N+T trial per window."""
    root = Path(root)
    counters = {}
    for w in ds.windows:
        key = (w.subject_id, w.action_id)
        trial = counters.get(key, 0)
        counters[key] = trial + 1
        d = root / str(w.subject_id) / str(w.action_id)
        d.mkdir(parents=True, exist_ok=True)
        write_motion_file(d / f"{trial}.csv", MotionSequence(w.full, w.history.frame_rate))


def load_dataset(root, N, T, stride=None):
    """Cut every trial under ``root`` into (N, T) windows with the given stride."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    stride = stride or (N + T)
    windows = []
    subj_names = sorted(p.name for p in root.iterdir() if p.is_dir())
    for sname in subj_names:
        sdir = root / sname
        act_names = sorted(p.name for p in sdir.iterdir() if p.is_dir())
        for aname in act_names:
            trials = sorted(sdir.joinpath(aname).glob("*.csv"),
                            key=lambda p: (len(p.stem), p.stem))
            for path in trials:
                try:
                    seq = read_motion_file(path)
                except MotionFormatError as exc:
                    raise MotionFormatError(exc.line, f"{path}: {exc}") from None
                for start in range(0, seq.n_frames - (N + T) + 1, stride):
                    hist = MotionSequence(seq.values[start:start + N], seq.frame_rate)
                    fut = MotionSequence(seq.values[start + N:start + N + T], seq.frame_rate)
                    windows.append(SampleWindow(hist, fut, _dir_id(sname, subj_names),
                                                _dir_id(aname, act_names)))
    if not windows:
        raise ValueError(f"no windows of {N}+{T} frames found under {root}")
    return Dataset(windows)


# --- sequence ops ---------------------------------------------------------

def pad_with_last_frame(history, T):
    if T < 0:
        raise ValueError("T must be non-negative")
    v = history.values
    padded = np.concatenate([v, np.repeat(v[-1:], T, axis=0)], axis=0)
    return MotionSequence(padded, history.frame_rate)


def pad_array(history, T):
    """Batched last-frame padding of (B, N, C) -> (B, N+T, C)."""
    last = history[:, -1:, :]
    return np.concatenate([history, np.repeat(last, T, axis=1)], axis=1)


def zero_velocity_predict(history, T):
    v = history.values
    return MotionSequence(np.repeat(v[-1:], T, axis=0), history.frame_rate)


# --- synthetic subjects ---------------------------------------------------

def _subject_profile(subject_seed, subject, n_channels):
    rng = np.random.default_rng([subject_seed, 7919, subject])
    return {
        "amp": rng.uniform(0.05, 0.35, size=(n_channels, 2)),
        "freq": np.sort(rng.uniform(0.3, 2.0, size=(n_channels, 2)), axis=1),
        "phase": rng.uniform(0.0, 2.0 * np.pi, size=(n_channels, 2)),
        "offset": rng.uniform(-0.4, 0.4, size=n_channels),
    }


def synth_dataset(seed, subjects, windows_per_subject, N, T, C, actions=2,
                  frame_rate=25.0, subject_seed=None):
    """Sum-of-two-sinusoids windows with subject-specific parameter laws.

    Subject laws depend only on ``subject_seed`` (defaults to ``seed``), so
    a second call with another ``seed`` draws fresh windows from the same
    subjects.  Window ``i`` of a subject gets action ``i % actions``; the
    action scales both frequencies.
    """
    if subjects < 2:
        raise ConfigurationError("synth_dataset needs at least 2 subjects")
    if min(windows_per_subject, N, T, C, actions) <= 0:
        raise ConfigurationError("counts must be positive")
    if C % 3:
        raise ConfigurationError(f"C={C} is not divisible by 3")
    subject_seed = seed if subject_seed is None else subject_seed
    windows, trajs = [], []
    for s in range(subjects):
        prof = _subject_profile(subject_seed, s, C)
        rng = np.random.default_rng([seed, 104729, s])
        for i in range(windows_per_subject):
            action = i % actions
            amp = prof["amp"] * np.exp(0.25 * rng.standard_normal((C, 2)))
            freq = prof["freq"] * (1.0 + 0.35 * action) * np.exp(0.1 * rng.standard_normal((C, 2)))
            phase = prof["phase"] + rng.uniform(-np.pi, np.pi, size=(C, 1)) + 0.3 * rng.standard_normal((C, 2))
            offset = prof["offset"] + 0.05 * rng.standard_normal(C)
            params = SinusoidParams(amp, freq, phase, offset, frame_rate)
            traj = params.evaluate(np.arange(1, N + T + 1))
            windows.append(SampleWindow(MotionSequence(traj[:N], frame_rate),
                                        MotionSequence(traj[N:], frame_rate), s, action))
            trajs.append(params)
    return Dataset(windows, trajs)
