"""Query-time classification, evaluation metrics and fault-injection studies."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data.dataset import WindowedDataset
from .encoder import encode_batch
from .generalization import DominoModel
from .hdc import dequantize, inject_bit_flips, quantize_matrix
from .training import predict_rows


@dataclass
class PredictionReport:
    overall_accuracy: float
    per_class_accuracy: list[float | None]  # None for classes absent from the dataset
    confusion: np.ndarray  # (n, n); rows are true classes
    latency: dict = field(default_factory=dict)  # seconds: encode, score

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_dict(self) -> dict:
        return {"overall_accuracy": self.overall_accuracy,
                "per_class_accuracy": self.per_class_accuracy,
                "confusion": self.confusion.tolist(),
                "latency": self.latency}


def _check_shape(model: DominoModel, windows: np.ndarray) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    cfg = model.encoder.config
    if windows.ndim != 3 or windows.shape[1] != cfg.sensors:
        raise ValueError(f"expected windows of shape (N, {cfg.sensors}, T), got {windows.shape}")
    return windows


def encode_queries(model: DominoModel, windows) -> np.ndarray:
    """Encode raw windows and apply the model's training-time centering."""
    return model.prepare(encode_batch(model.encoder, _check_shape(model, windows)))


def predict(model: DominoModel, windows, rows: np.ndarray | None = None) -> np.ndarray:
    """Labels for a batch of raw windows; ``rows`` overrides the ensemble."""
    h = encode_queries(model, windows)
    return predict_rows(model.ensemble if rows is None else rows, h)


def classify(model: DominoModel, raw_window) -> int:
    raw_window = np.asarray(raw_window, dtype=np.float64)
    if raw_window.ndim != 2:
        raise ValueError(f"expected a (sensors, T) window, got shape {raw_window.shape}")
    return int(predict(model, raw_window[None])[0])


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def report_from_predictions(y_true, y_pred, n_classes: int, latency=None) -> PredictionReport:
    y_true = np.asarray(y_true)
    if y_true.size == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    cm = confusion_matrix(y_true, y_pred, n_classes)
    support = cm.sum(axis=1)
    per_class = [float(cm[c, c] / support[c]) if support[c] else None for c in range(n_classes)]
    return PredictionReport(float(np.trace(cm) / cm.sum()), per_class, cm, dict(latency or {}))


def evaluate(model: DominoModel, dataset: WindowedDataset, rows: np.ndarray | None = None) -> PredictionReport:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    t0 = time.perf_counter()
    h = encode_queries(model, dataset.windows)
    t1 = time.perf_counter()
    pred = predict_rows(model.ensemble if rows is None else rows, h)
    t2 = time.perf_counter()
    return report_from_predictions(dataset.labels, pred, model.n_classes,
                                   {"encode_s": t1 - t0, "score_s": t2 - t1})


@dataclass(frozen=True)
class FaultRow:
    bitwidth: int
    flip_rate: float
    clean_accuracy: float
    mean_loss: float
    std_loss: float
    losses: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"bitwidth": self.bitwidth, "flip_rate": self.flip_rate,
                "clean_accuracy": self.clean_accuracy, "mean_loss": self.mean_loss,
                "std_loss": self.std_loss, "losses": list(self.losses)}


def evaluate_under_faults(model: DominoModel, dataset: WindowedDataset, bitwidths, flip_rates, seeds,
                          encoded: np.ndarray | None = None) -> list[FaultRow]:
    """Quality loss of the quantized ensemble under random memory bit flips.

    Loss is clean quantized accuracy minus faulty accuracy, so quantization
    error itself is excluded. Only the ensemble rows are corrupted.
    """
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    bitwidths = [bitwidths] if np.isscalar(bitwidths) else list(bitwidths)
    for r in flip_rates:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"flip rate {r} outside [0, 1]")
    h = encode_queries(model, dataset.windows) if encoded is None else encoded
    y = dataset.labels
    out = []
    for b in bitwidths:
        q = quantize_matrix(model.ensemble, b)
        clean = float(np.mean(predict_rows(dequantize(q), h) == y))
        for rate in flip_rates:
            losses = []
            for seed in seeds:
                faulty = inject_bit_flips(q, rate, seed)
                acc = float(np.mean(predict_rows(dequantize(faulty), h) == y))
                losses.append(clean - acc)
            losses_arr = np.array(losses)
            out.append(FaultRow(b, float(rate), clean, float(losses_arr.mean()),
                                float(losses_arr.std()), tuple(losses)))
    return out
