"""Domain-specific modeling: one adaptive HDC model per domain."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .hdc import DimensionMismatch, normalize_rows, score_batch


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.035
    epochs: int = 1
    rng_seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        # zero is allowed so the update path can be instrumented without moving the model
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass
class DomainModel:
    class_rows: np.ndarray  # (n_classes, D)
    domain_id: int
    normalized: bool = False
    degenerate: bool = False  # no training samples in this domain

    @property
    def n_classes(self) -> int:
        return self.class_rows.shape[0]

    @property
    def dim(self) -> int:
        return self.class_rows.shape[1]


@dataclass
class TrainStats:
    samples_seen: int = 0
    updates: int = 0

    def __iadd__(self, other: TrainStats) -> TrainStats:
        self.samples_seen += other.samples_seen
        self.updates += other.updates
        return self


def _cos_from_dot(dot: float, h_norm: float, row_norm: float) -> float:
    # similarity to an all-zero row counts as 0 in the update factor
    if h_norm == 0.0 or row_norm == 0.0:
        return 0.0
    return dot / (h_norm * row_norm)


def _shuffle_rng(cfg: TrainConfig, domain_id: int, pass_index: int) -> np.random.Generator:
    return np.random.default_rng([cfg.rng_seed, domain_id, pass_index])


def train_domain(samples: np.ndarray, labels: np.ndarray, n_classes: int, cfg: TrainConfig,
                 domain_id: int = 0, init_rows: np.ndarray | None = None,
                 pass_index: int = 0) -> tuple[DomainModel, TrainStats]:
    """Run the adaptive update over one domain's encoded samples.

    Each sample is scored against the current class rows by cosine; a correct
    prediction leaves the model untouched, a wrong one pulls the true row
    toward the sample and pushes the predicted row away, both scaled by
    ``learning_rate * (1 - cosine)``. Rows changed during an epoch are
    unit-normalized at its end.
    """
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    d = samples.shape[1] if samples.ndim == 2 else (init_rows.shape[1] if init_rows is not None else 0)
    rows = np.zeros((n_classes, d)) if init_rows is None else np.array(init_rows, dtype=np.float64)
    if rows.shape != (n_classes, d):
        raise DimensionMismatch(f"initial rows have shape {rows.shape}, expected {(n_classes, d)}")
    stats = TrainStats()
    if len(samples) == 0:
        return DomainModel(rows, domain_id, normalized=False, degenerate=True), stats
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("class label out of range")

    eta = cfg.learning_rate
    h_norms = np.linalg.norm(samples, axis=1)
    rng = _shuffle_rng(cfg, domain_id, pass_index)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(samples)) if cfg.shuffle else np.arange(len(samples))
        row_norms = np.linalg.norm(rows, axis=1)
        touched = np.zeros(n_classes, dtype=bool)
        for i in order:
            h = samples[i]
            y = labels[i]
            dots = rows @ h
            live = row_norms > 0
            scores = np.full(n_classes, -np.inf)
            scores[live] = dots[live] / row_norms[live]
            pred = int(np.argmax(scores))
            stats.samples_seen += 1
            if pred == y:
                continue
            d_pred = _cos_from_dot(dots[pred], h_norms[i], row_norms[pred])
            d_true = _cos_from_dot(dots[y], h_norms[i], row_norms[y])
            step_pred = eta * (1.0 - d_pred)
            step_true = eta * (1.0 - d_true)
            rows[pred] -= step_pred * h
            rows[y] += step_true * h
            row_norms[pred] = np.linalg.norm(rows[pred])
            row_norms[y] = np.linalg.norm(rows[y])
            touched[pred] |= step_pred != 0.0
            touched[y] |= step_true != 0.0
            stats.updates += 1
        # rows that received no update are left bit-identical
        rows[touched] = normalize_rows(rows[touched])
    return DomainModel(rows, domain_id, normalized=_is_normalized(rows)), stats


def _is_normalized(rows: np.ndarray, tol: float = 1e-9) -> bool:
    norms = np.linalg.norm(rows, axis=1)
    return bool(np.all((np.abs(norms - 1.0) <= tol) | (norms == 0.0)))


def train_domain_models(samples: np.ndarray, labels, domains, cfg: TrainConfig, n_classes: int,
                        n_domains: int, init: list[DomainModel] | None = None, pass_index: int = 0,
                        workers: int = 1) -> tuple[list[DomainModel], TrainStats]:
    """Train one model per domain, each only on that domain's samples.

    ``init`` continues training from existing models instead of zeros.
    Domains are independent, so ``workers > 1`` trains them concurrently.
    """
    samples = np.asarray(samples, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    domains = np.asarray(domains, dtype=np.int64)
    if samples.ndim != 2 or len(samples) != len(labels) or len(labels) != len(domains):
        raise ValueError("samples must be (N, D) with matching labels and domains")
    if len(labels) and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError("class label out of range")
    if len(domains) and (domains.min() < 0 or domains.max() >= n_domains):
        raise ValueError("domain label out of range")
    if init is not None and len(init) != n_domains:
        raise ValueError(f"expected {n_domains} initial models, got {len(init)}")

    def job(lam: int):
        idx = np.flatnonzero(domains == lam)
        rows = None if init is None else init[lam].class_rows
        return train_domain(samples[idx], labels[idx], n_classes, cfg, domain_id=lam,
                            init_rows=rows, pass_index=pass_index)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(n_domains)))
    else:
        results = [job(lam) for lam in range(n_domains)]
    total = TrainStats()
    for _, st in results:
        total += st
    return [m for m, _ in results], total


def predict_rows(rows: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Argmax of each query against unit-normalized rows.

    All-zero rows never win; if every row is zero the answer is class 0.
    """
    rows = np.asarray(rows, dtype=np.float64)
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != rows.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {queries.shape[1]} vs {rows.shape[1]}")
    unit = normalize_rows(rows)
    scores = score_batch(queries, unit)
    dead = ~np.any(unit != 0, axis=1)
    scores[:, dead] = -np.inf
    return np.argmax(scores, axis=1)


def predict_domain(model: DomainModel, q) -> int:
    return int(predict_rows(model.class_rows, np.asarray(q, dtype=np.float64)[None, :])[0])
