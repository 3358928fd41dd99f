"""Domain-variant dimension filtering, regeneration and model ensembling."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data.dataset import WindowedDataset
from .encoder import EncoderConfig, EncoderState, calibrate, encode_batch, new_encoder, regenerate_dims
from .hdc import DimensionMismatch, normalize_rows
from .training import DomainModel, TrainConfig, TrainStats, predict_rows, train_domain_models

_EPS = 1e-9


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class ClassSpecificMatrix:
    class_id: int
    rows: np.ndarray  # (k, D); row lambda is this class's row from domain model lambda


@dataclass(frozen=True)
class DominoConfig:
    physical_dim: int = 256
    effective_dim: int = 256
    regen_rate: float = 0.25
    train: TrainConfig = field(default_factory=TrainConfig)
    passes_per_iteration: int = 1
    from_scratch: bool = False
    normalize_samples: bool = True
    center_samples: bool = True
    n_gram: int = 3
    backend: str = "ngram"
    position_mode: str = "independent"
    calibration: str = "global"
    feature_scale: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.physical_dim < 1:
            raise ValueError("physical_dim must be >= 1")
        if self.effective_dim < self.physical_dim:
            raise ValueError("effective_dim must be >= physical_dim")
        if not 0.0 < self.regen_rate < 1.0:
            raise ValueError("regen_rate must lie in (0, 1)")
        if self.passes_per_iteration < 1:
            raise ValueError("passes_per_iteration must be >= 1")

    @property
    def iterations(self) -> int:
        """Regeneration rounds implied by ``D* = D + D * R * iterations``."""
        d = self.physical_dim
        return int(math.floor((self.effective_dim - d) / (d * self.regen_rate) + _EPS))

    @property
    def dims_per_iteration(self) -> int:
        return dims_to_select(self.physical_dim, self.regen_rate)

    def encoder_config(self, sensors: int, window: int) -> EncoderConfig:
        feature_len = sensors * window if self.backend == "rbf" else 0
        seed = int(np.random.SeedSequence([self.rng_seed, 1]).generate_state(1)[0])
        return EncoderConfig(dim=self.physical_dim, n_gram=self.n_gram, sensors=sensors,
                             feature_len=feature_len, rng_seed=seed, backend=self.backend,
                             position_mode=self.position_mode, calibration=self.calibration,
                             feature_scale=self.feature_scale)

    def regen_seed(self, iteration: int) -> int:
        return int(np.random.SeedSequence([self.rng_seed, 2, iteration]).generate_state(1)[0])


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    selected: tuple[int, ...]
    v_min: float
    v_max: float
    v_mean: float
    train_accuracy: float

    def to_dict(self) -> dict:
        return {"iteration": self.iteration, "n_selected": len(self.selected), "v_min": self.v_min,
                "v_max": self.v_max, "v_mean": self.v_mean, "train_accuracy": self.train_accuracy}


@dataclass(eq=False)
class DominoModel:
    ensemble: np.ndarray  # (n_classes, D), unit rows
    encoder: EncoderState
    domain_weights: np.ndarray  # (n_domains,), sums to 1
    config: DominoConfig
    history: list[IterationRecord] = field(default_factory=list)
    stats: TrainStats = field(default_factory=TrainStats)
    center: np.ndarray | None = None  # training-mean encoding subtracted from every query

    def prepare(self, encoded: np.ndarray) -> np.ndarray:
        return prepare_samples(encoded, self.center, self.config.normalize_samples)

    @property
    def is_baseline(self) -> bool:
        return self.config.iterations == 0

    @property
    def n_classes(self) -> int:
        return self.ensemble.shape[0]


def aggregate_class_matrices(models: list[DomainModel]) -> list[ClassSpecificMatrix]:
    """Stack class ``c`` of every domain model into a ``(k, D)`` matrix."""
    if not models:
        raise ValueError("no domain models to aggregate")
    shape = models[0].class_rows.shape
    for m in models:
        if m.class_rows.shape != shape:
            raise DimensionMismatch(f"domain model shapes differ: {m.class_rows.shape} vs {shape}")
    stacked = np.stack([m.class_rows for m in models])  # (k, n, D)
    return [ClassSpecificMatrix(c, stacked[:, c, :].copy()) for c in range(shape[0])]


def variance_scores(mats: list[ClassSpecificMatrix]) -> np.ndarray:
    """Sum over classes of the column-wise population variance."""
    if not mats:
        raise ValueError("no class-specific matrices")
    if mats[0].rows.shape[0] < 2:
        raise ValueError("variance across domains needs at least two domain models")
    total = np.zeros(mats[0].rows.shape[1])
    for m in mats:
        total += m.rows.var(axis=0)
    return total


def dims_to_select(d: int, regen_rate: float) -> int:
    return d - int(math.floor((1.0 - regen_rate) * d + _EPS))


def select_domain_variant_dims(v, regen_rate: float) -> np.ndarray:
    """Indices of the top ``regen_rate`` share of dimensions by variance.

    Uses a stable ascending argsort and keeps the tail, so among equal
    scores the higher indices are chosen. Returned sorted.
    """
    if not 0.0 < regen_rate < 1.0:
        raise ValueError("regen_rate must lie in (0, 1)")
    v = np.asarray(v, dtype=np.float64)
    d = v.size
    order = np.argsort(v, kind="stable")
    return np.sort(order[d - dims_to_select(d, regen_rate):])


def ensemble(models: list[DomainModel], counts) -> tuple[np.ndarray, np.ndarray]:
    """Weight each domain model by its share of training samples.

    Returns the row-normalized ensemble and the weights.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if len(models) != counts.size:
        raise ValueError("need one sample count per domain model")
    if np.any(counts < 0) or counts.sum() <= 0:
        raise ValueError("sample counts must be non-negative with a positive total")
    weights = counts / counts.sum()
    m = np.zeros_like(models[0].class_rows)
    for w, model in zip(weights, models):
        if model.class_rows.shape != m.shape:
            raise DimensionMismatch("domain models must share one shape")
        if w > 0:
            m += w * model.class_rows
    return normalize_rows(m), weights


def prepare_samples(encoded: np.ndarray, center: np.ndarray | None, normalize: bool) -> np.ndarray:
    """Subtract the training-mean encoding, then optionally unit-normalize rows.

    Raw encodings share a large common component; removing it keeps the
    cosine-scored updates from being swamped by it.
    """
    h = np.asarray(encoded, dtype=np.float64)
    if center is not None:
        h = h - center
    if normalize:
        norms = np.linalg.norm(h, axis=1, keepdims=True)
        h = np.where(norms > 0, h / np.where(norms > 0, norms, 1.0), 0.0)
    return h


def _repopulate(models, h, labels, domains, selected, train_cfg, n_classes, n_domains, pass_index) -> TrainStats:
    # dropped columns are relearned from zero on their own subspace; the
    # surviving columns keep their values and resume in the next full pass
    sub, stats = train_domain_models(h[:, selected], labels, domains, train_cfg, n_classes, n_domains,
                                     pass_index=pass_index)
    for m, s in zip(models, sub):
        m.class_rows[:, selected] = s.class_rows
    return stats


def run_domino_encoded(raw: np.ndarray, encoded: np.ndarray, labels, domains, cfg: DominoConfig,
                       enc: EncoderState, n_classes: int, n_domains: int, workers: int = 1,
                       timings: dict | None = None) -> DominoModel:
    """Outer loop over already-encoded samples.

    ``raw`` holds the windows behind ``encoded`` so that regenerated columns
    can be re-encoded. Domains without samples are ignored. If ``timings``
    is given, seconds spent in ``train_s`` and ``generalize_s`` are added to it.
    """
    clock = {"train_s": 0.0, "generalize_s": 0.0}
    labels = np.asarray(labels, dtype=np.int64)
    domains = np.asarray(domains, dtype=np.int64)
    counts = np.bincount(domains, minlength=n_domains)
    active = np.flatnonzero(counts > 0)
    if active.size < 2 and cfg.iterations > 0:
        raise ValueError("domain generalization needs at least two training domains")
    cache = np.array(encoded, dtype=np.float64)
    center = cache.mean(axis=0) if cfg.center_samples else None
    h = prepare_samples(cache, center, cfg.normalize_samples)
    u_size = dims_to_select(cfg.physical_dim, cfg.regen_rate)
    models = None
    stats = TrainStats()
    history = []
    pass_index = 0

    def train_round(init):
        nonlocal pass_index, stats
        t0 = time.perf_counter()
        for _ in range(cfg.passes_per_iteration):
            init, st = train_domain_models(h, labels, domains, cfg.train, n_classes, n_domains,
                                           init=init, pass_index=pass_index, workers=workers)
            stats += st
            pass_index += 1
        clock["train_s"] += time.perf_counter() - t0
        return init

    for it in range(cfg.iterations):
        models = train_round(None if cfg.from_scratch else models)
        t0 = time.perf_counter()
        live = [models[i] for i in active]
        v = variance_scores(aggregate_class_matrices(live))
        selected = select_domain_variant_dims(v, cfg.regen_rate)
        if selected.size != u_size:
            raise InvariantViolation(f"selected {selected.size} dimensions, expected {u_size}")
        merged, _ = ensemble(models, counts)
        acc = float(np.mean(predict_rows(merged, h) == labels))
        history.append(IterationRecord(it, tuple(int(i) for i in selected), float(v.min()),
                                       float(v.max()), float(v.mean()), acc))
        enc = regenerate_dims(enc, selected, cfg.regen_seed(it), iteration=it)
        if enc.config.position_mode == "permute":
            cache = encode_batch(enc, raw)
        else:
            cache[:, selected] = encode_batch(enc, raw, dims=selected)
        if center is not None:
            center = cache.mean(axis=0) if enc.config.position_mode == "permute" else center.copy()
            center[selected] = cache[:, selected].mean(axis=0)
        h = prepare_samples(cache, center, cfg.normalize_samples)
        for m in models:
            m.class_rows[:, selected] = 0.0
            m.normalized = False
        if not cfg.from_scratch:
            stats += _repopulate(models, h, labels, domains, selected, cfg.train, n_classes, n_domains, pass_index)
            pass_index += 1
        clock["generalize_s"] += time.perf_counter() - t0

    models = train_round(None if cfg.from_scratch else models)
    merged, weights = ensemble(models, counts)
    if timings is not None:
        for key, val in clock.items():
            timings[key] = timings.get(key, 0.0) + val
    return DominoModel(merged, enc, weights, cfg, history, stats, center)


def run_domino(data: WindowedDataset, cfg: DominoConfig, workers: int = 1,
               timings: dict | None = None) -> DominoModel:
    """Encode ``data``, then alternate training and regeneration and ensemble."""
    if len(data) == 0:
        raise ValueError("empty training dataset")
    t0 = time.perf_counter()
    enc = calibrate(new_encoder(cfg.encoder_config(data.meta.sensors, data.meta.window)), data.windows)
    encoded = encode_batch(enc, data.windows)
    if timings is not None:
        timings["encode_s"] = timings.get("encode_s", 0.0) + time.perf_counter() - t0
    return run_domino_encoded(data.windows, encoded, data.labels, data.domains, cfg, enc,
                              data.n_classes, data.n_domains, workers=workers, timings=timings)
