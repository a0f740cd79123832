"""Dataset ingestion and Poisson rate coding.

Three on-disk formats are read: IDX (MNIST, optionally gzipped), a feature
CSV (label followed by feature values, e.g. precomputed MFCCs) and a
pre-encoded spike CSV (``example,channel,time_ms`` plus a labels file).
"""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

DEFAULT_MAX_RATE_HZ = 63.75
DEFAULT_MAX_INTENSITY = 255.0


class DataError(Exception):
    """Base class for dataset problems (exit code 3 on the command line)."""


class BadMagicError(DataError):
    pass


class TruncatedFileError(DataError):
    def __init__(self, path, offset: int, needed: int):
        super().__init__(f"{path}: truncated at byte offset {offset} (needed {needed} more bytes)")
        self.offset = offset


class CountMismatchError(DataError):
    pass


class MalformedRowError(DataError):
    pass


@dataclass
class Dataset:
    """Examples as a dense (n, channels) intensity matrix plus integer labels."""

    features: np.ndarray
    labels: np.ndarray
    max_intensity: float = DEFAULT_MAX_INTENSITY
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DataError("features must be a 2-D array")
        if len(self.features) != len(self.labels):
            raise CountMismatchError(
                f"{len(self.features)} examples but {len(self.labels)} labels"
            )

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def channels(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def head(self, n: int | None) -> "Dataset":
        """First ``n`` examples (the 'first 10000 training examples' protocol)."""
        if n is None or n >= len(self):
            return self
        return Dataset(self.features[:n], self.labels[:n], self.max_intensity, dict(self.meta))

    def subset(self, index) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.max_intensity, dict(self.meta))


def _read(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _header(data: bytes, path, fmt: str) -> tuple:
    size = struct.calcsize(fmt)
    if len(data) < size:
        raise TruncatedFileError(path, len(data), size - len(data))
    return struct.unpack_from(fmt, data)


def read_idx_images(path) -> np.ndarray:
    data = _read(path)
    magic, n, rows, cols = _header(data, path, ">IIII")
    if magic != IDX_IMAGES_MAGIC:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    need = 16 + n * rows * cols
    if len(data) < need:
        raise TruncatedFileError(path, len(data), need - len(data))
    return np.frombuffer(data, dtype=np.uint8, count=n * rows * cols, offset=16).reshape(n, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    data = _read(path)
    magic, n = _header(data, path, ">II")
    if magic != IDX_LABELS_MAGIC:
        raise BadMagicError(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if len(data) < 8 + n:
        raise TruncatedFileError(path, len(data), 8 + n - len(data))
    return np.frombuffer(data, dtype=np.uint8, count=n, offset=8)


def load_idx(images_path, labels_path) -> Dataset:
    images = read_idx_images(images_path)
    labels = read_idx_labels(labels_path)
    if len(images) != len(labels):
        raise CountMismatchError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels"
        )
    return Dataset(images, labels, DEFAULT_MAX_INTENSITY, {"format": "idx"})


def load_feature_csv(
    path,
    low: float = 0.0,
    high: float = DEFAULT_MAX_INTENSITY,
    affine: tuple[float, float] | None = None,
) -> Dataset:
    """Read ``label,f1,...,fk`` rows and map features onto ``[low, high]``.

    The map is ``x -> scale * x + offset`` fitted to the file's global min/max
    unless ``affine`` is given (e.g. to reuse the training set's map on the
    test set). The map used is stored in ``meta['affine']``.
    """
    labels, rows = [], []
    width = None
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise MalformedRowError(f"{path}:{lineno}: non-numeric cell") from None
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise MalformedRowError(
                    f"{path}:{lineno}: {len(values)} columns, expected {width}"
                )
            if values[0] != int(values[0]) or values[0] < 0:
                raise MalformedRowError(f"{path}:{lineno}: label {values[0]} is not a class id")
            labels.append(int(values[0]))
            rows.append(values[1:])
    if not rows:
        raise DataError(f"{path}: no data rows")
    x = np.asarray(rows, dtype=np.float64)
    if affine is None:
        lo, hi = float(x.min()), float(x.max())
        scale = (high - low) / (hi - lo) if hi > lo else 0.0
        affine = (scale, low - scale * lo)
    scale, offset = affine
    mapped = np.clip(scale * x + offset, low, high)
    return Dataset(mapped, np.asarray(labels), high,
                   {"format": "csv", "affine": [float(scale), float(offset)]})


def split_dataset(ds: Dataset, train_fraction: float = 0.8) -> tuple[Dataset, Dataset]:
    """Leading ``round(n * train_fraction)`` rows train, the rest test."""
    n_train = int(round(len(ds) * train_fraction))
    idx = np.arange(len(ds))
    return ds.subset(idx[:n_train]), ds.subset(idx[n_train:])


@dataclass(frozen=True)
class SpikeTrain:
    """Spike times per input channel, stored flat and sorted by (channel, time)."""

    channel: np.ndarray
    time_ms: np.ndarray
    n_channels: int
    duration_ms: float

    def __post_init__(self):
        ch = np.asarray(self.channel, dtype=np.int32)
        t = np.asarray(self.time_ms, dtype=np.float64)
        order = np.lexsort((t, ch))
        object.__setattr__(self, "channel", ch[order])
        object.__setattr__(self, "time_ms", t[order])
        if len(ch) and (ch.min() < 0 or ch.max() >= self.n_channels):
            raise DataError("spike channel index out of range")
        if len(t) and (t.min() < 0 or t.max() >= self.duration_ms):
            raise DataError("spike time outside the stimulus window")
        same = (np.diff(ch[order]) == 0) & (np.diff(t[order]) <= 0)
        if same.any():
            raise DataError("spike times must be strictly increasing within a channel")

    def __len__(self) -> int:
        return len(self.time_ms)

    def per_channel(self) -> list[np.ndarray]:
        bounds = np.searchsorted(self.channel, np.arange(self.n_channels + 1))
        return [self.time_ms[bounds[c] : bounds[c + 1]] for c in range(self.n_channels)]


def rate_of(intensity, max_rate_hz: float, max_intensity: float):
    return np.asarray(intensity, dtype=np.float64) / max_intensity * max_rate_hz


def poisson_encode(
    intensities: Sequence[float],
    max_rate_hz: float = DEFAULT_MAX_RATE_HZ,
    duration_ms: float = 350.0,
    seed: int | Sequence[int] = 0,
    dt: float = 0.5,
    max_intensity: float = DEFAULT_MAX_INTENSITY,
) -> SpikeTrain:
    """Rate-code one example as Bernoulli(rate * dt) spikes per time step.

    Channel ``c`` always consumes row ``c`` of a (channels, steps) block of
    uniforms from a PCG64 stream seeded by ``seed``, so each channel's train
    depends only on its own intensity and the seed. For rate * dt << 1 this
    approximates a Poisson process; the step-wise count is binomial.
    """
    x = np.asarray(intensities, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("one example is a 1-D intensity vector")
    if np.any(x < 0):
        raise DataError("intensities must be non-negative")
    if np.any(x > max_intensity):
        raise DataError(f"intensities must not exceed {max_intensity}")
    steps = int(round(duration_ms / dt))
    p = rate_of(x, max_rate_hz, max_intensity) * dt / 1000.0
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random((len(x), steps))
    ch, k = np.nonzero(u < p[:, None])
    return SpikeTrain(ch, k * dt, len(x), duration_ms)


def encode_dataset(
    ds: Dataset,
    seed: int,
    max_rate_hz: float = DEFAULT_MAX_RATE_HZ,
    duration_ms: float = 350.0,
    dt: float = 0.5,
) -> list[SpikeTrain]:
    """Encode every example with seed ``(seed, index)``."""
    return [
        poisson_encode(row, max_rate_hz, duration_ms, [seed, i], dt, ds.max_intensity)
        for i, row in enumerate(ds.features)
    ]


def load_spike_csv(
    spikes_path, labels_path, n_channels: int, duration_ms: float
) -> tuple[list[SpikeTrain], np.ndarray]:
    """Pre-encoded input: ``example,channel,time_ms`` rows and ``example,label`` rows."""
    labels = {}
    with open(labels_path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            try:
                labels[int(row[0])] = int(row[1])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise MalformedRowError(f"{labels_path}:{lineno}: expected example,label") from None
    spikes: dict[int, list[tuple[int, float]]] = {k: [] for k in labels}
    with open(spikes_path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            try:
                ex, ch, t = int(row[0]), int(row[1]), float(row[2])
            except (ValueError, IndexError):
                if lineno == 1:
                    continue
                raise MalformedRowError(f"{spikes_path}:{lineno}: expected example,channel,time_ms") from None
            if ex not in spikes:
                raise DataError(f"{spikes_path}:{lineno}: example {ex} has no label")
            spikes[ex].append((ch, t))
    order = sorted(labels)
    trains = []
    for ex in order:
        pairs = spikes[ex]
        ch = np.array([c for c, _ in pairs], dtype=np.int32)
        t = np.array([t for _, t in pairs], dtype=np.float64)
        trains.append(SpikeTrain(ch, t, n_channels, duration_ms))
    return trains, np.array([labels[ex] for ex in order], dtype=np.int64)


def synthetic_two_class(n: int, channels: int = 20, seed: int = 0,
                        high: float = 200.0, low: float = 20.0, jitter: float = 20.0) -> Dataset:
    """Rate-separable toy data: class c is bright on its own half of the channels."""
    if channels < 2:
        raise DataError("need at least two channels")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    half = channels // 2
    base = np.full((n, channels), low)
    for i, c in enumerate(labels):
        if c == 0:
            base[i, :half] = high
        else:
            base[i, half:] = high
    x = np.clip(base + rng.uniform(-jitter, jitter, size=base.shape), 0, DEFAULT_MAX_INTENSITY)
    return Dataset(np.round(x), labels, DEFAULT_MAX_INTENSITY, {"format": "synthetic"})
