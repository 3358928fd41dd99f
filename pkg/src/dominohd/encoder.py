"""Time-series and feature encoders mapping raw windows to hypervectors.

All random seed material lives in :class:`EncoderState`. Output coordinate
``i`` of an encoding depends only on coordinate ``i`` of the seed material
(in the default ``independent`` position mode), which is what makes
per-dimension regeneration cheap: after ``regenerate_dims(dims)`` only the
``dims`` columns of cached encodings need recomputing.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

BACKENDS = ("ngram", "rbf")
POSITION_MODES = ("independent", "permute")
CALIBRATIONS = ("global", "window-local")

# elements of (chunk x sensors x dims) held at once by the batch encoder
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class EncoderConfig:
    dim: int
    n_gram: int = 3
    sensors: int = 1
    feature_len: int = 0
    rng_seed: int = 0
    backend: str = "ngram"
    position_mode: str = "independent"
    calibration: str = "global"
    feature_scale: float = 1.0

    def __post_init__(self):
        if self.dim < 1 or self.n_gram < 1 or self.sensors < 1:
            raise ValueError("dim, n_gram and sensors must all be >= 1")
        if self.feature_len < 0:
            raise ValueError("feature_len must be >= 0")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.position_mode not in POSITION_MODES:
            raise ValueError(f"position_mode must be one of {POSITION_MODES}")
        if self.calibration not in CALIBRATIONS:
            raise ValueError(f"calibration must be one of {CALIBRATIONS}")
        if self.backend == "rbf" and self.feature_len < 1:
            raise ValueError("the rbf backend needs feature_len >= 1")


@dataclass(frozen=True)
class RegenerationEntry:
    iteration: int
    dims: tuple[int, ...]
    rng_seed: int


@dataclass(frozen=True, eq=False)
class EncoderState:
    config: EncoderConfig
    h_max: np.ndarray  # (sensors, n_gram, dim)
    h_min: np.ndarray  # (sensors, n_gram, dim)
    signatures: np.ndarray  # (sensors, dim)
    rbf_bases: np.ndarray  # (dim, feature_len)
    rbf_phases: np.ndarray  # (dim,)
    value_range: np.ndarray | None = None  # (sensors, 2): y_min, y_max
    regen_log: tuple[RegenerationEntry, ...] = field(default=())

    @property
    def dim(self) -> int:
        return self.config.dim

    @property
    def calibrated(self) -> bool:
        return self.value_range is not None or self.config.calibration == "window-local"

    @property
    def degenerate_sensors(self) -> np.ndarray:
        """Boolean mask of sensors whose calibrated range is empty."""
        if self.value_range is None:
            return np.zeros(self.config.sensors, dtype=bool)
        return self.value_range[:, 1] <= self.value_range[:, 0]

    def same_as(self, other: EncoderState) -> bool:
        arrays = ("h_max", "h_min", "signatures", "rbf_bases", "rbf_phases")
        if self.config != other.config or self.regen_log != other.regen_log:
            return False
        if (self.value_range is None) != (other.value_range is None):
            return False
        if self.value_range is not None and not np.array_equal(self.value_range, other.value_range):
            return False
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)


def _bipolar(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape).astype(np.float64) * 2.0 - 1.0


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


def new_encoder(config: EncoderConfig) -> EncoderState:
    """Draw all seed material deterministically from ``config.rng_seed``."""
    s, n, d, f = config.sensors, config.n_gram, config.dim, config.feature_len
    seq_endpoints, seq_sig, seq_bases, seq_phases = np.random.SeedSequence(config.rng_seed).spawn(4)
    rng = np.random.default_rng(seq_endpoints)
    h_max = _bipolar(rng, (s, n, d))
    h_min = _bipolar(rng, (s, n, d))
    signatures = _bipolar(np.random.default_rng(seq_sig), (s, d))
    rbf_bases = np.random.default_rng(seq_bases).standard_normal((d, f))
    rbf_phases = np.random.default_rng(seq_phases).uniform(0.0, 2 * np.pi, size=d)
    _freeze(h_max, h_min, signatures, rbf_bases, rbf_phases)
    return EncoderState(config, h_max, h_min, signatures, rbf_bases, rbf_phases)


def calibrate(enc: EncoderState, windows) -> EncoderState:
    """Fix per-sensor global (y_min, y_max) from training windows only.

    ``windows`` is an ``(N, sensors, T)`` array or a ``WindowedDataset``.
    """
    windows = np.asarray(getattr(windows, "windows", windows), dtype=np.float64)
    if windows.ndim != 3 or windows.shape[0] == 0:
        raise ValueError("calibration needs a non-empty (N, sensors, T) window array")
    if windows.shape[1] != enc.config.sensors:
        raise ValueError(f"expected {enc.config.sensors} sensors, got {windows.shape[1]}")
    lo = windows.min(axis=(0, 2))
    hi = windows.max(axis=(0, 2))
    value_range = np.stack([lo, hi], axis=1)
    _freeze(value_range)
    return replace(enc, value_range=value_range)


def _level_weights(enc: EncoderState, windows: np.ndarray) -> np.ndarray:
    """Clamped interpolation weights in [0, 1], shape (N, sensors, T)."""
    if enc.config.calibration == "window-local":
        lo = windows.min(axis=2, keepdims=True)
        hi = windows.max(axis=2, keepdims=True)
    else:
        if enc.value_range is None:
            raise ValueError("encoder is not calibrated")
        lo = enc.value_range[None, :, 0:1]
        hi = enc.value_range[None, :, 1:2]
    span = hi - lo
    safe = np.where(span > 0, span, 1.0)
    w = np.clip((windows - lo) / safe, 0.0, 1.0)
    # degenerate ranges map every value onto H_min
    return np.where(span > 0, w, 0.0)


def quantize_value(enc: EncoderState, sensor: int, offset: int, y: float, value_range=None) -> np.ndarray:
    """Level hypervector for value ``y`` on one (sensor, time-offset) pair.

    Linear interpolation between that pair's ``H_min`` and ``H_max`` with ``y``
    clamped to the calibrated range. ``value_range`` overrides the stored
    calibration (used for window-local ranges).
    """
    cfg = enc.config
    if not 0 <= sensor < cfg.sensors or not 0 <= offset < cfg.n_gram:
        raise IndexError(f"sensor {sensor} / offset {offset} out of range")
    if value_range is None:
        if enc.value_range is None:
            raise ValueError("encoder is not calibrated")
        lo, hi = enc.value_range[sensor]
    else:
        lo, hi = value_range
    if hi > lo:
        w = (min(max(y, lo), hi) - lo) / (hi - lo)
    else:
        w = 0.0
    h_min = enc.h_min[sensor, offset]
    return h_min + w * (enc.h_max[sensor, offset] - h_min)


def _ngram_columns(enc: EncoderState, weights: np.ndarray, cols) -> np.ndarray:
    cfg = enc.config
    n = cfg.n_gram
    h_min = enc.h_min[:, :, cols]
    diff = enc.h_max[:, :, cols] - h_min
    sig = enc.signatures[:, cols]
    N, s, T = weights.shape
    out = np.zeros((N, h_min.shape[-1]))
    for g in range(T - n + 1):
        prod = None
        for o in range(n):
            level = h_min[None, :, o, :] + weights[:, :, g + o, None] * diff[None, :, o, :]
            prod = level if prod is None else prod * level
        out += (prod * sig[None]).sum(axis=1)
    return out


def _ngram_permuted(enc: EncoderState, weights: np.ndarray) -> np.ndarray:
    # literal rotation of a single endpoint pair per sensor
    n = enc.config.n_gram
    h_min = enc.h_min[:, 0, :]
    diff = enc.h_max[:, 0, :] - h_min
    N, s, T = weights.shape
    out = np.zeros((N, enc.dim))
    for g in range(T - n + 1):
        prod = None
        for o in range(n):
            level = h_min[None] + weights[:, :, g + o, None] * diff[None]
            level = np.roll(level, n - 1 - o, axis=-1)
            prod = level if prod is None else prod * level
        out += (prod * enc.signatures[None]).sum(axis=1)
    return out


def window_features(enc: EncoderState, windows: np.ndarray) -> np.ndarray:
    """Flattened, range-scaled window values fed to the rbf back-end."""
    w = _level_weights(enc, windows)
    return w.reshape(w.shape[0], -1) * enc.config.feature_scale


def _rbf(enc: EncoderState, features: np.ndarray, cols) -> np.ndarray:
    proj = features @ enc.rbf_bases[cols].T
    return np.cos(proj + enc.rbf_phases[cols]) * np.sin(proj)


def encode_features_rbf(enc: EncoderState, f) -> np.ndarray:
    """``h_i = cos(B_i . f + c_i) * sin(B_i . f)`` for every dimension."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1 or f.size != enc.config.feature_len:
        raise ValueError(f"feature vector length {f.size} != feature_len {enc.config.feature_len}")
    return _rbf(enc, f[None, :], slice(None))[0]


def _check_windows(enc: EncoderState, windows) -> np.ndarray:
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 3:
        raise ValueError(f"expected (N, sensors, T) windows, got shape {windows.shape}")
    cfg = enc.config
    if windows.shape[1] != cfg.sensors:
        raise ValueError(f"sensor-count mismatch: encoder has {cfg.sensors}, window has {windows.shape[1]}")
    if cfg.backend == "ngram" and windows.shape[2] < cfg.n_gram:
        raise ValueError(f"window length {windows.shape[2]} shorter than n_gram {cfg.n_gram}")
    if cfg.backend == "rbf" and windows.shape[1] * windows.shape[2] != cfg.feature_len:
        raise ValueError(f"flattened window length {windows.shape[1] * windows.shape[2]} != feature_len {cfg.feature_len}")
    return windows


def encode_batch(enc: EncoderState, windows, dims=None) -> np.ndarray:
    """Encode ``(N, sensors, T)`` windows to an ``(N, D)`` matrix.

    With ``dims`` only those output columns are computed (``(N, len(dims))``).
    Windows longer than ``n_gram`` are split into overlapping n-grams (stride
    one) whose encodings are bundled.
    """
    windows = _check_windows(enc, windows)
    cols = np.arange(enc.dim) if dims is None else np.asarray(dims, dtype=np.intp)
    if cols.size == 0:
        return np.zeros((windows.shape[0], 0))
    weights = _level_weights(enc, windows)
    if enc.config.backend == "rbf":
        feats = weights.reshape(weights.shape[0], -1) * enc.config.feature_scale
        return _rbf(enc, feats, cols)
    if enc.config.position_mode == "permute":
        return _ngram_permuted(enc, weights)[:, cols]
    chunk = max(1, _CHUNK_ELEMENTS // (enc.config.sensors * cols.size))
    parts = [_ngram_columns(enc, weights[i:i + chunk], cols) for i in range(0, weights.shape[0], chunk)]
    return np.concatenate(parts, axis=0)


def encode_window(enc: EncoderState, window) -> np.ndarray:
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise ValueError(f"expected a (sensors, T) window, got shape {window.shape}")
    return encode_batch(enc, window[None])[0]


def _check_dims(dims, d: int) -> np.ndarray:
    dims = np.asarray(dims, dtype=np.intp).reshape(-1)
    if dims.size and (dims.min() < 0 or dims.max() >= d):
        raise IndexError(f"dimension index out of range [0, {d})")
    if np.unique(dims).size != dims.size:
        raise ValueError("duplicate dimension indices")
    return dims


def regenerate_dims(enc: EncoderState, dims, rng_seed: int, iteration: int = 0) -> EncoderState:
    """Redraw every piece of seed material on the selected dimensions.

    Returns a new state; all other coordinates stay bit-identical. The
    draw is logged so the final state can be replayed from the base seed.
    """
    cfg = enc.config
    dims = _check_dims(dims, cfg.dim)
    if dims.size == 0:
        return enc
    rng = np.random.default_rng(rng_seed)
    m = dims.size
    h_max = enc.h_max.copy()
    h_min = enc.h_min.copy()
    signatures = enc.signatures.copy()
    rbf_bases = enc.rbf_bases.copy()
    rbf_phases = enc.rbf_phases.copy()
    h_max[:, :, dims] = _bipolar(rng, (cfg.sensors, cfg.n_gram, m))
    h_min[:, :, dims] = _bipolar(rng, (cfg.sensors, cfg.n_gram, m))
    signatures[:, dims] = _bipolar(rng, (cfg.sensors, m))
    rbf_bases[dims] = rng.standard_normal((m, cfg.feature_len))
    rbf_phases[dims] = rng.uniform(0.0, 2 * np.pi, size=m)
    _freeze(h_max, h_min, signatures, rbf_bases, rbf_phases)
    entry = RegenerationEntry(int(iteration), tuple(int(i) for i in dims), int(rng_seed))
    return replace(enc, h_max=h_max, h_min=h_min, signatures=signatures, rbf_bases=rbf_bases,
                   rbf_phases=rbf_phases, regen_log=enc.regen_log + (entry,))


def replay_encoder(config: EncoderConfig, log, value_range=None) -> EncoderState:
    """Rebuild an encoder from its base seed, regeneration log and calibration."""
    enc = new_encoder(config)
    for entry in log:
        enc = regenerate_dims(enc, entry.dims, entry.rng_seed, entry.iteration)
    if value_range is not None:
        value_range = np.array(value_range, dtype=np.float64).reshape(config.sensors, 2)
        _freeze(value_range)
        enc = replace(enc, value_range=value_range)
    return enc
