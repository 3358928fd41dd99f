"""Binary model container.

Layout (all integers little-endian)::

    b"DOMV1"            magic
    u32                 header length in bytes
    header              UTF-8 JSON, sorted keys: configs, regeneration log,
                        calibration range, domain weights, history, shapes
    f4[n_classes * D]   ensemble matrix, row-major
    f8[D]               centering vector (present only if header says so)
    32 bytes            SHA-256 of everything above

The encoder is not stored; it is replayed from its base seed and the
regeneration log, so files stay small. The ensemble is stored at 32-bit
precision: a loaded model carries ``float32(original)`` widened back to
float64, and save -> load -> save reproduces the same bytes.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .encoder import EncoderConfig, RegenerationEntry, replay_encoder
from .generalization import DominoConfig, DominoModel, IterationRecord
from .training import TrainConfig, TrainStats

MAGIC = b"DOMV1"
_DIGEST = 32


class ContainerError(ValueError):
    pass


def config_to_dict(cfg: DominoConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_from_dict(d: dict) -> DominoConfig:
    d = dict(d)
    d["train"] = TrainConfig(**d.get("train", {}))
    return DominoConfig(**d)


def _header(model: DominoModel) -> dict:
    enc = model.encoder
    return {
        "format": 1,
        "domino_config": config_to_dict(model.config),
        "encoder_config": dataclasses.asdict(enc.config),
        "regen_log": [[e.iteration, list(e.dims), e.rng_seed] for e in enc.regen_log],
        "value_range": None if enc.value_range is None else enc.value_range.tolist(),
        "domain_weights": [float(w) for w in model.domain_weights],
        "history": [{"iteration": r.iteration, "selected": list(r.selected), "v_min": r.v_min,
                     "v_max": r.v_max, "v_mean": r.v_mean, "train_accuracy": r.train_accuracy}
                    for r in model.history],
        "stats": dataclasses.asdict(model.stats),
        "n_classes": int(model.ensemble.shape[0]),
        "dim": int(model.ensemble.shape[1]),
        "has_center": model.center is not None,
    }


def dumps_model(model: DominoModel) -> bytes:
    header = json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = [MAGIC, struct.pack("<I", len(header)), header,
            np.ascontiguousarray(model.ensemble, dtype="<f4").tobytes()]
    if model.center is not None:
        body.append(np.ascontiguousarray(model.center, dtype="<f8").tobytes())
    payload = b"".join(body)
    return payload + hashlib.sha256(payload).digest()


def loads_model(blob: bytes) -> DominoModel:
    if len(blob) < len(MAGIC) + 4 + _DIGEST or blob[:len(MAGIC)] != MAGIC:
        raise ContainerError("not a DOMV1 model container")
    payload, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if hashlib.sha256(payload).digest() != digest:
        raise ContainerError("checksum mismatch: container is corrupt")
    pos = len(MAGIC)
    (hlen,) = struct.unpack_from("<I", payload, pos)
    pos += 4
    try:
        h = json.loads(payload[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ContainerError(f"unreadable header: {e}") from e
    pos += hlen
    n, d = h["n_classes"], h["dim"]
    expected = pos + 4 * n * d + (8 * d if h["has_center"] else 0)
    if len(payload) != expected:
        raise ContainerError(f"payload is {len(payload)} bytes, header implies {expected}")
    ensemble = np.frombuffer(payload, dtype="<f4", count=n * d, offset=pos).astype(np.float64).reshape(n, d)
    pos += 4 * n * d
    center = np.frombuffer(payload, dtype="<f8", count=d, offset=pos).astype(np.float64) if h["has_center"] else None

    log = [RegenerationEntry(int(it), tuple(dims), int(seed)) for it, dims, seed in h["regen_log"]]
    encoder = replay_encoder(EncoderConfig(**h["encoder_config"]), log, h["value_range"])
    history = [IterationRecord(r["iteration"], tuple(r["selected"]), r["v_min"], r["v_max"], r["v_mean"],
                               r["train_accuracy"]) for r in h["history"]]
    return DominoModel(ensemble, encoder, np.array(h["domain_weights"], dtype=np.float64),
                       config_from_dict(h["domino_config"]), history, TrainStats(**h["stats"]), center)


def save_model(model: DominoModel, path) -> Path:
    path = Path(path)
    path.write_bytes(dumps_model(model))
    return path


def load_model(path) -> DominoModel:
    return loads_model(Path(path).read_bytes())
