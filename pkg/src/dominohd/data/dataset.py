"""Windowed multi-domain datasets, splits and the cached-dataset container."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

DOMD_MAGIC = b"DOMD"
DOMD_VERSION = 1
_DOMD_HEADER = struct.Struct("<4sHIIIHHId")


@dataclass(frozen=True)
class DatasetMeta:
    sensors: int
    window: int
    stride: int
    sample_rate: float
    source: str
    n_classes: int
    n_domains: int
    label_names: tuple = field(default=())


@dataclass(eq=False)
class WindowedDataset:
    """Parallel arrays of windows, class labels and domain labels.

    Labels and domains are zero-based: class ``c`` in ``[0, n_classes)`` and
    domain ``d`` in ``[0, n_domains)``.
    """

    windows: np.ndarray  # (N, sensors, T)
    labels: np.ndarray  # (N,) int
    domains: np.ndarray  # (N,) int
    meta: DatasetMeta

    def __post_init__(self):
        self.windows = np.asarray(self.windows, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.domains = np.asarray(self.domains, dtype=np.int64)
        n = len(self.windows)
        if self.windows.ndim != 3:
            raise ValueError(f"windows must be (N, sensors, T), got {self.windows.shape}")
        if self.labels.shape != (n,) or self.domains.shape != (n,):
            raise ValueError("windows, labels and domains must have the same length")
        if self.windows.shape[1:] != (self.meta.sensors, self.meta.window):
            raise ValueError(f"window shape {self.windows.shape[1:]} != meta ({self.meta.sensors}, {self.meta.window})")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.meta.n_classes):
            raise ValueError("class label out of range")
        if n and (self.domains.min() < 0 or self.domains.max() >= self.meta.n_domains):
            raise ValueError("domain label out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return self.meta.n_classes

    @property
    def n_domains(self) -> int:
        return self.meta.n_domains

    def subset(self, idx) -> WindowedDataset:
        idx = np.asarray(idx, dtype=np.intp)
        return WindowedDataset(self.windows[idx], self.labels[idx], self.domains[idx], self.meta)

    def domain_counts(self) -> np.ndarray:
        return np.bincount(self.domains, minlength=self.n_domains)

    def concat(self, other: WindowedDataset) -> WindowedDataset:
        if other.meta != self.meta:
            raise ValueError("cannot concatenate datasets with different metadata")
        return WindowedDataset(np.concatenate([self.windows, other.windows]),
                               np.concatenate([self.labels, other.labels]),
                               np.concatenate([self.domains, other.domains]), self.meta)


def window_count(length: int, window: int, stride: int) -> int:
    if length < window:
        return 0
    return (length - window) // stride + 1


def sliding_windows(signal: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Cut a ``(length, channels)`` recording into ``(count, channels, window)``."""
    signal = np.asarray(signal, dtype=np.float64)
    count = window_count(signal.shape[0], window, stride)
    if count == 0:
        return np.zeros((0, signal.shape[1], window))
    starts = np.arange(count) * stride
    idx = starts[:, None] + np.arange(window)[None, :]
    return signal[idx].transpose(0, 2, 1)


# -- splits -------------------------------------------------------------------

SPLIT_MODES = ("lodo", "partial", "imbalanced", "kfold")


@dataclass(frozen=True)
class SplitSpec:
    """How to carve a dataset into train and test.

    ``holdout`` and ``major_domain`` are zero-based domain indices.
    """

    mode: str = "lodo"
    holdout: int = 0
    fraction: float = 1.0
    major_domain: int = 0
    major_share: float = 0.7
    folds: int = 5
    fold: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in SPLIT_MODES:
            raise ValueError(f"split mode must be one of {SPLIT_MODES}")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("fraction must lie in (0, 1]")
        if not 0.0 < self.major_share <= 1.0:
            raise ValueError("major_share must lie in (0, 1]")
        if self.folds < 2 or not 0 <= self.fold < self.folds:
            raise ValueError("kfold needs folds >= 2 and 0 <= fold < folds")


def make_split(ds: WindowedDataset, spec: SplitSpec) -> tuple[WindowedDataset, WindowedDataset]:
    rng = np.random.default_rng(spec.rng_seed)
    if spec.mode == "kfold":
        order = rng.permutation(len(ds))
        parts = np.array_split(order, spec.folds)
        test_idx = np.sort(parts[spec.fold])
        train_idx = np.sort(np.concatenate([p for i, p in enumerate(parts) if i != spec.fold]))
        return ds.subset(train_idx), ds.subset(test_idx)

    if not 0 <= spec.holdout < ds.n_domains:
        raise ValueError(f"holdout domain {spec.holdout} not in [0, {ds.n_domains})")
    test_idx = np.flatnonzero(ds.domains == spec.holdout)
    pool = np.flatnonzero(ds.domains != spec.holdout)

    if spec.mode == "lodo":
        train_idx = pool
    elif spec.mode == "partial":
        take = int(np.floor(spec.fraction * pool.size + 1e-9))
        train_idx = np.sort(rng.choice(pool, size=take, replace=False))
    else:
        if spec.major_domain == spec.holdout or not 0 <= spec.major_domain < ds.n_domains:
            raise ValueError("major domain must be a valid non-holdout domain")
        major = np.flatnonzero(ds.domains == spec.major_domain)
        minor = pool[ds.domains[pool] != spec.major_domain]
        share = spec.major_share
        n_major = major.size
        n_minor = int(round(n_major * (1 - share) / share))
        if n_minor > minor.size:
            n_minor = minor.size
            n_major = min(major.size, int(round(n_minor * share / (1 - share))))
        train_idx = np.sort(np.concatenate([rng.choice(major, size=n_major, replace=False),
                                            rng.choice(minor, size=n_minor, replace=False)]))
    if train_idx.size == 0:
        raise ValueError("split produced an empty training set")
    return ds.subset(train_idx), ds.subset(test_idx)


# -- DOMD cached-dataset container --------------------------------------------

def save_dataset(ds: WindowedDataset, path) -> None:
    """Write the versioned ``DOMD`` container (little-endian throughout)."""
    m = ds.meta
    source = m.source.encode("utf-8")
    header = _DOMD_HEADER.pack(DOMD_MAGIC, DOMD_VERSION, m.sensors, m.window, len(ds),
                               m.n_classes, m.n_domains, m.stride, float(m.sample_rate))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(struct.pack("<H", len(source)))
        fh.write(source)
        fh.write(ds.windows.astype("<f4").tobytes())
        fh.write(ds.labels.astype("<u2").tobytes())
        fh.write(ds.domains.astype("<u2").tobytes())


def load_dataset_file(path) -> WindowedDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _DOMD_HEADER.size or raw[:4] != DOMD_MAGIC:
        raise ValueError(f"{path}: not a DOMD dataset file")
    magic, version, s, t, n, n_classes, n_domains, stride, rate = _DOMD_HEADER.unpack_from(raw, 0)
    if version != DOMD_VERSION:
        raise ValueError(f"{path}: unsupported DOMD version {version}")
    pos = _DOMD_HEADER.size
    (slen,) = struct.unpack_from("<H", raw, pos)
    pos += 2
    source = raw[pos:pos + slen].decode("utf-8")
    pos += slen
    nw = n * s * t
    expected = pos + 4 * nw + 4 * n
    if len(raw) != expected:
        raise ValueError(f"{path}: truncated or oversized DOMD payload")
    windows = np.frombuffer(raw, dtype="<f4", count=nw, offset=pos).reshape(n, s, t)
    pos += 4 * nw
    labels = np.frombuffer(raw, dtype="<u2", count=n, offset=pos)
    domains = np.frombuffer(raw, dtype="<u2", count=n, offset=pos + 2 * n)
    meta = DatasetMeta(s, t, stride, rate, source, n_classes, n_domains)
    return WindowedDataset(windows.astype(np.float64), labels.astype(np.int64), domains.astype(np.int64), meta)


def with_meta(ds: WindowedDataset, **changes) -> WindowedDataset:
    return WindowedDataset(ds.windows, ds.labels, ds.domains, replace(ds.meta, **changes))
