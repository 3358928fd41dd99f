"""Readers for the DSADS, USC-HAD and PAMAP2 directory layouts.

Each reader windows every recording, assigns domains by grouping subjects in
ascending ID order, and remaps activity labels to contiguous zero-based
indices (the original IDs are kept in ``meta.label_names``).
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .dataset import DatasetMeta, WindowedDataset, sliding_windows


class DataError(Exception):
    """Raised when a dataset directory is missing, malformed or unreadable."""


DATASETS = {
    # name: (window, stride, sample_rate, subjects per domain)
    "dsads": (125, 125, 25.0, 2),
    "uschad": (126, 63, 100.0, 3),
    "pamap2": (127, 63, 100.0, 2),
}

PAMAP2_ACTIVITIES = (1, 2, 3, 4, 12, 13, 16, 17)
PAMAP2_EXCLUDED_SUBJECTS = (109,)
# per-IMU column offsets inside its 17-column block: acc16 (1-3), acc6 (4-6), gyro (7-9), mag (10-12);
# temperature (0) and orientation (13-16, flagged invalid by the dataset authors) are dropped
_PAMAP2_IMU_COLS = tuple(range(1, 13))
_PAMAP2_IMU_STARTS = (3, 20, 37)
PAMAP2_CHANNELS = tuple(start + c for start in _PAMAP2_IMU_STARTS for c in _PAMAP2_IMU_COLS)


def _read_numeric(path: Path, delimiter=None) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=delimiter, ndmin=2)
    except ValueError as exc:
        raise DataError(f"{path}: non-numeric content ({exc})") from exc
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    return data


def _pick_channels(data: np.ndarray, channels, path: Path) -> np.ndarray:
    if channels is None:
        return data
    channels = list(channels)
    if max(channels) >= data.shape[1]:
        raise DataError(f"{path}: channel index {max(channels)} beyond {data.shape[1]} columns")
    return data[:, channels]


def _assemble(chunks, name, label_names, n_domains) -> WindowedDataset:
    window, stride, rate, _ = DATASETS[name]
    chunks = [c for c in chunks if len(c[0])]
    if not chunks:
        raise DataError(f"{name}: no windows produced")
    windows = np.concatenate([c[0] for c in chunks])
    labels = np.concatenate([np.full(len(c[0]), c[1]) for c in chunks])
    domains = np.concatenate([np.full(len(c[0]), c[2]) for c in chunks])
    meta = DatasetMeta(sensors=windows.shape[1], window=window, stride=stride, sample_rate=rate,
                       source=name, n_classes=len(label_names), n_domains=n_domains,
                       label_names=tuple(label_names))
    return WindowedDataset(windows, labels, domains, meta)


def _domain_of(subject_rank: int, per_domain: int) -> int:
    return subject_rank // per_domain


def _map_ordered(fn, items, workers: int):
    if workers <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def load_dsads(root, channels=None, workers: int = 1) -> WindowedDataset:
    """``root/aXX/pY/sZZ.txt`` comma-separated 125 x 45 segments."""
    root = Path(root)
    window, stride, _, per_domain = DATASETS["dsads"]
    act_dirs = sorted(p for p in root.glob("a[0-9]*") if p.is_dir())
    if not act_dirs:
        raise DataError(f"{root}: no DSADS activity directories (aXX) found")
    subjects = sorted({int(p.name[1:]) for a in act_dirs for p in a.glob("p[0-9]*") if p.is_dir()})
    if not subjects:
        raise DataError(f"{root}: no DSADS subject directories (pY) found")
    rank = {s: i for i, s in enumerate(subjects)}
    activities = [int(a.name[1:]) for a in act_dirs]
    jobs = []
    for label, a in enumerate(act_dirs):
        for subj in subjects:
            for seg in sorted((a / f"p{subj}").glob("s*.txt")):
                jobs.append((seg, label, _domain_of(rank[subj], per_domain)))

    def work(job):
        path, label, domain = job
        data = _pick_channels(_read_numeric(path, delimiter=","), channels, path)
        return sliding_windows(data, window, stride), label, domain

    chunks = _map_ordered(work, jobs, workers)
    n_domains = _domain_of(len(subjects) - 1, per_domain) + 1
    return _assemble(chunks, "dsads", activities, n_domains)


_USC_FILE = re.compile(r"a(\d+)t(\d+)\.(mat|csv|txt)$", re.IGNORECASE)


def _read_uschad(path: Path) -> np.ndarray:
    if path.suffix.lower() == ".mat":
        from scipy.io import loadmat

        try:
            mat = loadmat(path)
        except Exception as exc:  # scipy raises several unrelated types
            raise DataError(f"{path}: unreadable .mat file ({exc})") from exc
        if "sensor_readings" not in mat:
            raise DataError(f"{path}: missing 'sensor_readings' variable")
        return np.asarray(mat["sensor_readings"], dtype=np.float64)
    delimiter = "," if path.suffix.lower() == ".csv" else None
    return _read_numeric(path, delimiter=delimiter)


def load_uschad(root, channels=None, workers: int = 1) -> WindowedDataset:
    """``root/SubjectN/aAtT.mat`` (or .csv/.txt) recordings, 6 channels each."""
    root = Path(root)
    window, stride, _, per_domain = DATASETS["uschad"]
    subj_dirs = {}
    for p in root.iterdir() if root.is_dir() else []:
        m = re.fullmatch(r"subject(\d+)", p.name, re.IGNORECASE)
        if m and p.is_dir():
            subj_dirs[int(m.group(1))] = p
    if not subj_dirs:
        raise DataError(f"{root}: no USC-HAD SubjectN directories found")
    subjects = sorted(subj_dirs)
    files = []
    for rank, subj in enumerate(subjects):
        for f in sorted(subj_dirs[subj].iterdir()):
            m = _USC_FILE.search(f.name)
            if m:
                files.append((f, int(m.group(1)), int(m.group(2)), rank))
    if not files:
        raise DataError(f"{root}: no aAtT recording files found")
    activities = sorted({f[1] for f in files})
    label_of = {a: i for i, a in enumerate(activities)}
    files.sort(key=lambda f: (f[3], f[1], f[2]))

    def work(job):
        path, act, _, rank = job
        data = _pick_channels(_read_uschad(path), channels, path)
        return sliding_windows(data, window, stride), label_of[act], _domain_of(rank, per_domain)

    chunks = _map_ordered(work, files, workers)
    n_domains = _domain_of(len(subjects) - 1, per_domain) + 1
    return _assemble(chunks, "uschad", activities, n_domains)


def _runs(labels: np.ndarray):
    """Yield (start, stop, label) for maximal runs of equal labels."""
    if labels.size == 0:
        return
    cut = np.flatnonzero(np.diff(labels)) + 1
    starts = np.concatenate([[0], cut])
    stops = np.concatenate([cut, [labels.size]])
    for a, b in zip(starts, stops):
        yield a, b, labels[a]


def load_pamap2(root, channels=None, workers: int = 1) -> WindowedDataset:
    """``root/[Protocol/]subject1NN.dat`` space-separated 54-column logs."""
    root = Path(root)
    window, stride, _, per_domain = DATASETS["pamap2"]
    base = root / "Protocol" if (root / "Protocol").is_dir() else root
    files = {}
    for p in sorted(base.glob("subject*.dat")):
        m = re.fullmatch(r"subject(\d+)\.dat", p.name)
        if m and int(m.group(1)) not in PAMAP2_EXCLUDED_SUBJECTS:
            files[int(m.group(1))] = p
    if not files:
        raise DataError(f"{base}: no PAMAP2 subjectNNN.dat files found")
    subjects = sorted(files)
    keep = np.array(PAMAP2_ACTIVITIES)
    label_of = {a: i for i, a in enumerate(PAMAP2_ACTIVITIES)}
    cols = list(PAMAP2_CHANNELS)
    if channels is not None:
        cols = [cols[c] for c in channels]

    def work(item):
        rank, subj = item
        path = files[subj]
        data = _read_numeric(path)
        if data.shape[1] < 54:
            raise DataError(f"{path}: expected 54 columns, found {data.shape[1]}")
        labels = data[:, 1].astype(np.int64)
        signal = data[:, cols]
        valid = np.isin(labels, keep) & np.all(np.isfinite(signal), axis=1)
        labels, signal = labels[valid], signal[valid]
        out = []
        for a, b, lab in _runs(labels):
            out.append((sliding_windows(signal[a:b], window, stride), label_of[int(lab)],
                        _domain_of(rank, per_domain)))
        return out

    nested = _map_ordered(work, list(enumerate(subjects)), workers)
    chunks = [c for group in nested for c in group]
    n_domains = _domain_of(len(subjects) - 1, per_domain) + 1
    return _assemble(chunks, "pamap2", PAMAP2_ACTIVITIES, n_domains)


def load_dataset(root, which: str, channels=None, workers: int = 1) -> WindowedDataset:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"{root}: dataset directory does not exist")
    loaders = {"dsads": load_dsads, "uschad": load_uschad, "pamap2": load_pamap2}
    if which not in loaders:
        raise DataError(f"unknown dataset layout {which!r}; expected one of {sorted(loaders)}")
    return loaders[which](root, channels=channels, workers=workers)
