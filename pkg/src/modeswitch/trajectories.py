"""Synthetic letter-writing trajectories standing in for testbed recordings.

Each trajectory is a (length, 5) array of [q, v, a, f, tq] samples. The
joint-angle stroke q follows a class template built from binary "branch"
decisions: all classes share the opening stroke, the first class bit
diverges around 28% of the task and the next around 45%, so the task is
ambiguous early and clear after ~60%. Velocity and acceleration are
backward differences of q; force and torque are smooth functions of the
kinematics.
"""
from __future__ import annotations

import csv
import io
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHANNELS = ("q", "v", "a", "f", "tq")
N_CHANNELS = len(CHANNELS)
DEFAULT_N_CLASSES = 4
DEFAULT_NOISE = 0.1
DEFAULT_SLOT_DURATION = 0.02  # s
MEAN_LENGTH = 330
LENGTH_SPREAD = 30
MIN_LENGTH = 20

# q noise: smooth jitter plus a Brownian drift (std 1 at task end), in units of noise_scale
_JITTER_WEIGHT = 0.0
_DRIFT_WEIGHT = 1.0
_SMOOTH_SLOTS = 25.0
_EASE = 0.1


@dataclass
class Trajectory:
    label: int
    samples: np.ndarray  # (length, 5)
    slot_duration: float = DEFAULT_SLOT_DURATION

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2 or self.samples.shape[1] != N_CHANNELS:
            raise ValueError(f"samples must be (length, {N_CHANNELS}), got {self.samples.shape}")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def length(self) -> int:
        return self.samples.shape[0]

    def channel(self, name: str) -> np.ndarray:
        return self.samples[:, CHANNELS.index(name)]

    def __eq__(self, other):
        return (isinstance(other, Trajectory) and self.label == other.label
                and self.slot_duration == other.slot_duration
                and np.array_equal(self.samples, other.samples))


@dataclass
class ObservationWindow:
    samples: np.ndarray  # observed prefix
    label: int
    suffix: np.ndarray  # the rest of the trajectory
    fraction: float
    total_length: int

    @property
    def length(self) -> int:
        return self.samples.shape[0]


@dataclass
class Dataset:
    trajectories: list[Trajectory]
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    generator_seed: int
    noise_scale: float = DEFAULT_NOISE
    n_classes: int = DEFAULT_N_CLASSES
    slot_duration: float = DEFAULT_SLOT_DURATION
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.trajectories)

    def split(self, name: str) -> list[Trajectory]:
        return [self.trajectories[i] for i in getattr(self, name)]

    @property
    def labels(self) -> np.ndarray:
        return np.array([t.label for t in self.trajectories])

    def __eq__(self, other):
        return (isinstance(other, Dataset)
                and self.trajectories == other.trajectories
                and all(np.array_equal(getattr(self, s), getattr(other, s))
                        for s in ("train", "val", "test"))
                and self.generator_seed == other.generator_seed
                and self.noise_scale == other.noise_scale
                and self.n_classes == other.n_classes
                and self.slot_duration == other.slot_duration)


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (x * (6.0 * x - 15.0) + 10.0)


def _ease_in(u):
    # C2 time reparametrisation with zero speed at u=0, identity after _EASE
    x = u / _EASE
    head = _EASE * x * x * (3.0 - 3.0 * x + x * x)
    return np.where(u < _EASE, head, u)


def _n_bits(n_classes):
    return max(1, math.ceil(math.log2(n_classes)))


def class_template(label: int, u: np.ndarray, n_classes: int = DEFAULT_N_CLASSES) -> np.ndarray:
    """Noise-free stroke q(u) for normalised time u in [0, 1]."""
    if not 0 <= label < n_classes:
        raise ValueError(f"unknown task label {label} for {n_classes} classes")
    q = 0.6 * np.sin(1.5 * np.pi * u) + 0.3 * u - 0.2
    n_bits = _n_bits(n_classes)
    for k in range(n_bits):
        bit = (label >> (n_bits - 1 - k)) & 1
        sign = 1.0 if bit else -1.0
        start = 0.28 + 0.17 * k / max(n_bits - 1, 1)
        ramp = _smootherstep((u - start) / 0.15)
        q = q + sign * ramp * (0.45 + 0.2 * np.sin(2.0 * np.pi * (k + 2) * (u - start)))
    return q


def class_length_range(label: int, n_classes: int = DEFAULT_N_CLASSES) -> tuple[int, int]:
    center = MEAN_LENGTH + (label - (n_classes - 1) / 2.0) * 10.0
    return int(round(center - LENGTH_SPREAD)), int(round(center + LENGTH_SPREAD))


def _gauss_smooth(x, sigma):
    radius = int(math.ceil(3 * sigma))
    k = np.exp(-0.5 * (np.arange(-radius, radius + 1) / sigma) ** 2)
    k /= k.sum()
    padded = np.pad(x, radius, mode="edge")
    return np.convolve(padded, k, mode="valid")


def kinematics(q: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Backward differences with q[-1] = q[0] and v[-1] = 0."""
    v = np.diff(q, prepend=q[0]) / dt
    a = np.diff(v, prepend=0.0) / dt
    return v, a


def generate_letter(label: int, rng: np.random.Generator, noise_scale: float = DEFAULT_NOISE,
                    n_classes: int = DEFAULT_N_CLASSES,
                    slot_duration: float = DEFAULT_SLOT_DURATION) -> Trajectory:
    if not 0 <= label < n_classes:
        raise ValueError(f"unknown task label {label} for {n_classes} classes")
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    lo, hi = class_length_range(label, n_classes)
    length = int(rng.integers(lo, hi + 1))
    amp = rng.uniform(0.75, 1.25)
    offset = rng.uniform(-0.1, 0.1)
    warp = rng.uniform(-0.02, 0.02)
    jitter_white = rng.standard_normal(length)
    drift_white = rng.standard_normal(length)

    u = np.linspace(0.0, 1.0, length)
    u_warped = _ease_in(u + warp * np.sin(np.pi * u))
    q = amp * class_template(label, u_warped, n_classes) + offset
    if noise_scale > 0:
        jitter = _gauss_smooth(jitter_white, _SMOOTH_SLOTS)
        jitter /= jitter.std() + 1e-12
        drift = _gauss_smooth(np.cumsum(drift_white) / math.sqrt(length), _SMOOTH_SLOTS)
        # the arm starts at rest: fade the noise in over the first few percent
        fade = _smoothstep(u / _EASE)
        q = q + noise_scale * fade * (_JITTER_WEIGHT * jitter + _DRIFT_WEIGHT * drift)
    v, a = kinematics(q, slot_duration)
    f = 1.0 + 0.6 * np.sin(np.pi * u) + 0.4 * v
    tq = 0.3 * q + 0.1 * v
    return Trajectory(label, np.column_stack([q, v, a, f, tq]), slot_duration)


def split_counts(n: int) -> tuple[int, int, int]:
    """70/15/15 train/val/test, rounding half up."""
    n_train = int(math.floor(0.7 * n + 0.5))
    n_val = int(math.floor(0.15 * n + 0.5))
    return n_train, n_val, n - n_train - n_val


def generate_dataset(n_per_class: int = 150, noise_scale: float = DEFAULT_NOISE, seed: int = 0,
                     n_classes: int = DEFAULT_N_CLASSES,
                     slot_duration: float = DEFAULT_SLOT_DURATION, workers: int = 1) -> Dataset:
    if n_per_class < 10:
        raise ValueError("n_per_class must be >= 10")
    root = np.random.SeedSequence(seed)
    traj_seqs = root.spawn(n_per_class * n_classes)
    split_rng = np.random.default_rng(root.spawn(1)[0])
    jobs = [(c, traj_seqs[c * n_per_class + i]) for c in range(n_classes)
            for i in range(n_per_class)]

    def make(job):
        c, ss = job
        return generate_letter(c, np.random.default_rng(ss), noise_scale, n_classes, slot_duration)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            trajs = list(pool.map(make, jobs))
    else:
        trajs = [make(j) for j in jobs]

    n_train, n_val, _ = split_counts(n_per_class)
    train, val, test = [], [], []
    for c in range(n_classes):
        idx = c * n_per_class + split_rng.permutation(n_per_class)
        train.extend(idx[:n_train])
        val.extend(idx[n_train:n_train + n_val])
        test.extend(idx[n_train + n_val:])
    return Dataset(trajs, np.sort(np.array(train)), np.sort(np.array(val)),
                   np.sort(np.array(test)), int(seed), float(noise_scale), n_classes,
                   float(slot_duration))


def window(traj: Trajectory, fraction: float) -> ObservationWindow:
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction!r}")
    w = int(math.floor(fraction * traj.length + 1e-9))
    if w < 1:
        raise ValueError(f"window of fraction {fraction} is shorter than one slot")
    return ObservationWindow(traj.samples[:w], traj.label, traj.samples[w:], float(fraction),
                             traj.length)


# ---------------------------------------------------------------- file format
#
#   8 bytes   magic b"MSTRAJDS"
#   uint32    version (1)
#   uint32    header length H
#   H bytes   UTF-8 JSON header (channels, n_classes, seed, noise_scale,
#             slot_duration, splits, n_trajectories)
#   n * 24    index: (uint64 data offset, uint64 length, int64 label) per record,
#             offsets counted from the start of the data block
#   ...       data block: float64 samples, row-major (length, 5) per record

DS_MAGIC = b"MSTRAJDS"
DS_VERSION = 1
_INDEX = struct.Struct("<QQq")


class DatasetFormatError(ValueError):
    pass


def dataset_to_bytes(ds: Dataset) -> bytes:
    header = json.dumps({
        "channels": list(CHANNELS),
        "n_classes": ds.n_classes,
        "generator_seed": ds.generator_seed,
        "noise_scale": ds.noise_scale,
        "slot_duration": ds.slot_duration,
        "n_trajectories": len(ds.trajectories),
        "splits": {s: [int(i) for i in getattr(ds, s)] for s in ("train", "val", "test")},
    }, sort_keys=True).encode()
    out = io.BytesIO()
    out.write(DS_MAGIC)
    out.write(struct.pack("<II", DS_VERSION, len(header)))
    out.write(header)
    offset = 0
    for t in ds.trajectories:
        out.write(_INDEX.pack(offset, t.length, t.label))
        offset += t.samples.size * 8
    for t in ds.trajectories:
        out.write(np.ascontiguousarray(t.samples, dtype="<f8").tobytes())
    return out.getvalue()


def dataset_from_bytes(data: bytes) -> Dataset:
    if len(data) < 16:
        raise DatasetFormatError(f"file truncated at byte offset {len(data)} (header needs 16 bytes)")
    if data[:8] != DS_MAGIC:
        raise DatasetFormatError("not a trajectory dataset file (bad magic at byte offset 0)")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != DS_VERSION:
        raise DatasetFormatError(f"unsupported version {version} (this reader handles {DS_VERSION})")
    if len(data) < 16 + hlen:
        raise DatasetFormatError(f"file truncated at byte offset {len(data)} inside the JSON header")
    try:
        header = json.loads(data[16:16 + hlen])
    except ValueError as exc:
        raise DatasetFormatError(f"malformed JSON header at byte offset 16: {exc}") from None
    if header.get("channels") != list(CHANNELS):
        raise DatasetFormatError(f"unexpected channel layout {header.get('channels')}")
    n = int(header["n_trajectories"])
    n_classes = int(header["n_classes"])
    index_at = 16 + hlen
    data_at = index_at + n * _INDEX.size
    if len(data) < data_at:
        raise DatasetFormatError(f"file truncated at byte offset {len(data)} inside the record index "
                                 f"(needs {data_at} bytes)")
    trajs = []
    expected = 0
    for i in range(n):
        offset, length, label = _INDEX.unpack_from(data, index_at + i * _INDEX.size)
        if offset != expected:
            raise DatasetFormatError(f"record {i}: data offset {offset} breaks contiguity "
                                     f"(expected {expected})")
        if length < 1:
            raise DatasetFormatError(f"record {i}: empty trajectory")
        if not 0 <= label < n_classes:
            raise DatasetFormatError(f"record {i}: label {label} outside [0, {n_classes})")
        start = data_at + offset
        nbytes = int(length) * N_CHANNELS * 8
        if start + nbytes > len(data):
            raise DatasetFormatError(f"record {i}: data truncated at byte offset {len(data)} "
                                     f"(needs {start + nbytes})")
        arr = np.frombuffer(data, "<f8", count=int(length) * N_CHANNELS, offset=start)
        trajs.append(Trajectory(int(label), arr.reshape(int(length), N_CHANNELS).astype(float),
                                float(header["slot_duration"])))
        expected += nbytes
    if data_at + expected != len(data):
        raise DatasetFormatError(f"{len(data) - data_at - expected} trailing bytes after record {n - 1}")
    splits = header["splits"]
    return Dataset(trajs, np.array(splits["train"], dtype=int), np.array(splits["val"], dtype=int),
                   np.array(splits["test"], dtype=int), int(header["generator_seed"]),
                   float(header["noise_scale"]), n_classes, float(header["slot_duration"]))


def save_dataset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())


def export_csv(ds: Dataset, path) -> None:
    """One row per sample: t (seconds), the five channels, label, traj_id."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *CHANNELS, "label", "traj_id"])
        for tid, traj in enumerate(ds.trajectories):
            for k, row in enumerate(traj.samples):
                w.writerow([repr(k * traj.slot_duration), *(repr(float(x)) for x in row),
                            traj.label, tid])
