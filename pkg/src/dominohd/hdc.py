"""Hypervector algebra.

Hypervectors are plain 1-D ``float64`` numpy arrays and batches of them are
2-D row-major arrays (one hypervector per row). Quantized forms exist only for
inference and fault-injection experiments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SUPPORTED_BITWIDTHS = (1, 2, 4, 8)
DEFAULT_TILE = 64


class DimensionMismatch(ValueError):
    pass


def _as_vector(a, name: str = "a") -> np.ndarray:
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-D hypervector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN or Inf")
    return v


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"dimension mismatch: {a.shape[-1]} vs {b.shape[-1]}")


def random_bipolar(dim: int, rng: np.random.Generator, size: int | tuple | None = None) -> np.ndarray:
    shape = (dim,) if size is None else (*np.atleast_1d(size), dim)
    return rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0


def similarity(a, b, mode: str = "cosine") -> float:
    """Cosine similarity of two hypervectors.

    ``mode="dot"`` returns the raw dot product, which is what classification
    uses against rows that are already unit-norm.
    """
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    _check_same_dim(a, b)
    dot = float(a @ b)
    if mode == "dot":
        return dot
    if mode != "cosine":
        raise ValueError(f"unknown similarity mode {mode!r}")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity of a zero-norm hypervector is undefined")
    return float(np.clip(dot / (na * nb), -1.0, 1.0))


def bundle(vs) -> np.ndarray:
    """Element-wise sum of a list of hypervectors."""
    if len(vs) == 0:
        raise ValueError("cannot bundle an empty list")
    members = [_as_vector(v, "member") for v in vs]
    if len({m.size for m in members}) != 1:
        raise DimensionMismatch("all bundled hypervectors must share one dimension")
    return np.stack(members).sum(axis=0)


def bind(a, b) -> np.ndarray:
    a = _as_vector(a, "a")
    b = _as_vector(b, "b")
    _check_same_dim(a, b)
    return a * b


def permute(a, shifts: int = 1) -> np.ndarray:
    """Circular shift; each application moves the last element to the front."""
    if shifts < 0:
        raise ValueError("shifts must be non-negative")
    a = _as_vector(a)
    return np.roll(a, shifts % a.size)


def normalize(a) -> np.ndarray:
    a = _as_vector(a)
    norm = np.linalg.norm(a)
    if norm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return a / norm


def normalize_rows(m: np.ndarray) -> np.ndarray:
    """Unit-normalize every row; all-zero rows stay zero."""
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    out = np.zeros_like(m)
    nz = norms[:, 0] > 0
    out[nz] = m[nz] / norms[nz]
    return out


def score_batch(queries: np.ndarray, rows: np.ndarray, tile: int = DEFAULT_TILE) -> np.ndarray:
    """Dot products of every query against every row, in fixed row tiles.

    Tiles are processed in index order so the result does not depend on
    scheduling. Returns an ``(n_queries, n_rows)`` array.
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if queries.shape[1] != rows.shape[1]:
        raise DimensionMismatch(f"dimension mismatch: {queries.shape[1]} vs {rows.shape[1]}")
    if tile < 1:
        raise ValueError("tile must be positive")
    out = np.empty((queries.shape[0], rows.shape[0]))
    rows_t = np.ascontiguousarray(rows.T)
    for start in range(0, queries.shape[0], tile):
        out[start:start + tile] = queries[start:start + tile] @ rows_t
    return out


def argmax_lowest(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest index (numpy's own convention)."""
    return np.argmax(np.atleast_2d(scores), axis=1)


@dataclass(frozen=True)
class QuantizedHypervector:
    values: np.ndarray  # int8 storage, one entry per dimension
    bitwidth: int
    scale: float

    @property
    def dim(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class QuantizedMatrix:
    """Row-wise quantized matrix; each row has its own symmetric scale."""

    values: np.ndarray  # (rows, dim) int8
    bitwidth: int
    scales: np.ndarray  # (rows,)

    def row(self, i: int) -> QuantizedHypervector:
        return QuantizedHypervector(self.values[i].copy(), self.bitwidth, float(self.scales[i]))


def _check_bitwidth(bitwidth: int) -> None:
    if bitwidth not in SUPPORTED_BITWIDTHS:
        raise ValueError(f"unsupported bitwidth {bitwidth}; expected one of {SUPPORTED_BITWIDTHS}")


def _quantize_rows(m: np.ndarray, bitwidth: int) -> tuple[np.ndarray, np.ndarray]:
    _check_bitwidth(bitwidth)
    if bitwidth == 1:
        values = np.where(m >= 0, 1, -1).astype(np.int8)
        # dequantizing to +-mean|a| minimizes the L2 error of a sign code
        scales = np.abs(m).mean(axis=1)
        return values, scales
    qmax = 2 ** (bitwidth - 1) - 1
    peak = np.abs(m).max(axis=1)
    scales = np.where(peak > 0, peak / qmax, 0.0)
    safe = np.where(scales > 0, scales, 1.0)
    values = np.clip(np.rint(m / safe[:, None]), -qmax, qmax).astype(np.int8)
    return values, scales


def quantize(a, bitwidth: int) -> QuantizedHypervector:
    """Symmetric per-vector quantization (``bitwidth=1`` keeps only signs)."""
    a = _as_vector(a)
    values, scales = _quantize_rows(a[None, :], bitwidth)
    return QuantizedHypervector(values[0], bitwidth, float(scales[0]))


def quantize_matrix(m: np.ndarray, bitwidth: int) -> QuantizedMatrix:
    m = np.atleast_2d(np.asarray(m, dtype=np.float64))
    values, scales = _quantize_rows(m, bitwidth)
    return QuantizedMatrix(values, bitwidth, scales)


def dequantize(q: QuantizedHypervector | QuantizedMatrix) -> np.ndarray:
    if isinstance(q, QuantizedMatrix):
        return q.values.astype(np.float64) * q.scales[:, None]
    return q.values.astype(np.float64) * q.scale


def _flip_storage(values: np.ndarray, bitwidth: int, flip_rate: float, rng_seed: int) -> np.ndarray:
    if not 0.0 <= flip_rate <= 1.0:
        raise ValueError(f"flip_rate must lie in [0, 1], got {flip_rate}")
    if flip_rate == 0.0:
        return values.copy()
    rng = np.random.default_rng(rng_seed)
    flips = rng.random((*values.shape, bitwidth)) < flip_rate
    mask = (flips * (1 << np.arange(bitwidth))).sum(axis=-1)
    if bitwidth == 1:
        bits = (values > 0).astype(np.int64) ^ mask
        return np.where(bits == 1, 1, -1).astype(np.int8)
    word = values.astype(np.int64) & ((1 << bitwidth) - 1)
    word ^= mask
    signed = np.where(word >= 1 << (bitwidth - 1), word - (1 << bitwidth), word)
    return signed.astype(np.int8)


def inject_bit_flips(q: QuantizedHypervector | QuantizedMatrix, flip_rate: float, rng_seed: int):
    """Flip every storage bit independently with probability ``flip_rate``.

    Values are stored as ``bitwidth``-bit two's complement words (for one bit,
    set means +1). Scales are treated as protected metadata.
    """
    if isinstance(q, QuantizedMatrix):
        return QuantizedMatrix(_flip_storage(q.values, q.bitwidth, flip_rate, rng_seed), q.bitwidth, q.scales.copy())
    return QuantizedHypervector(_flip_storage(q.values, q.bitwidth, flip_rate, rng_seed), q.bitwidth, q.scale)
