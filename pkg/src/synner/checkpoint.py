"""Binary checkpoint format.

Layout (all integers little-endian u32, payloads IEEE-754 float64 LE):

    magic "AESN" | version byte 0x01
    text section:    count, then per entry {byte length, UTF-8 bytes}
                     entry 0 = config JSON, entry 1 = vocabulary JSON
    tensor section:  count, then per tensor {name length, name bytes,
                     rank, one u32 per dim, row-major float64 payload}

JSON is dumped canonically (sorted keys, compact separators) so that
save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from typing import BinaryIO

import numpy as np

from .model import NerModel
from .synextract import SyntaxVocab

MAGIC = b"AESN"
VERSION = 1


class CheckpointError(ValueError):
    """Unreadable or incompatible checkpoint file."""


def _dumps(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<I", value))


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint: wanted {n} bytes, got {len(data)}")
    return data


def _read_u32(fh: BinaryIO) -> int:
    return struct.unpack("<I", _read_exact(fh, 4))[0]


def vocab_bundle(model: NerModel) -> dict:
    return {
        "labels": model.labels,
        "word_vocab": model.word_vocab,
        "syntax_vocabs": {
            c: {"keys": v.key_vocab, "values": v.value_vocab}
            for c, v in model.syntax_vocabs.items()
        },
        "static_vocab": next((t.vocab for t in model.bank.tables if t.name == "static"),
                             None),
    }


def save_checkpoint(path: str, config_dict: dict, vocabs: dict, model: NerModel) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([VERSION]))
        entries = [_dumps(config_dict), _dumps(vocabs)]
        _write_u32(fh, len(entries))
        for blob in entries:
            _write_u32(fh, len(blob))
            fh.write(blob)
        items = list(model.params.items())
        _write_u32(fh, len(items))
        for name, tensor in items:
            raw = name.encode("utf-8")
            _write_u32(fh, len(raw))
            fh.write(raw)
            _write_u32(fh, tensor.data.ndim)
            for dim in tensor.data.shape:
                _write_u32(fh, dim)
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[dict, dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = _read_exact(fh, 4)
        if magic != MAGIC:
            raise CheckpointError(f"not a checkpoint file (magic {magic!r})")
        version = _read_exact(fh, 1)[0]
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        n_entries = _read_u32(fh)
        entries = []
        for _ in range(n_entries):
            length = _read_u32(fh)
            entries.append(_read_exact(fh, length))
        if len(entries) < 2:
            raise CheckpointError(f"expected 2 text entries, found {len(entries)}")
        try:
            config = json.loads(entries[0])
            vocabs = json.loads(entries[1])
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from exc
        tensors: dict[str, np.ndarray] = {}
        n_tensors = _read_u32(fh)
        for _ in range(n_tensors):
            name_len = _read_u32(fh)
            name = _read_exact(fh, name_len).decode("utf-8")
            rank = _read_u32(fh)
            shape = tuple(_read_u32(fh) for _ in range(rank))
            count = int(np.prod(shape)) if shape else 1
            payload = _read_exact(fh, 8 * count)
            tensors[name] = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after tensor section")
    return config, vocabs, tensors


def restore_model(path: str):
    """Rebuild a model from a checkpoint; returns (model, TrainConfig)."""
    from .train import TrainConfig  # local import to avoid a cycle

    config_dict, vocabs, tensors = load_checkpoint(path)
    config = TrainConfig.from_dict(config_dict)
    syntax_vocabs = {}
    for c, d in vocabs["syntax_vocabs"].items():
        syntax_vocabs[c] = SyntaxVocab(c, dict(d["keys"]), dict(d["values"]))
    static = None
    if vocabs.get("static_vocab") is not None:
        if "emb.static" not in tensors:
            raise CheckpointError("static vocabulary present but its table is missing")
        static = (vocabs["static_vocab"], tensors["emb.static"])
    model = NerModel(config.model_config(), vocabs["word_vocab"], syntax_vocabs,
                     vocabs["labels"], seed=config.seed, static_vectors=static)
    names = set(model.params.names())
    saved = set(tensors)
    if names != saved:
        missing = sorted(names - saved)
        extra = sorted(saved - names)
        raise CheckpointError(f"parameter mismatch: missing {missing}, extra {extra}")
    for name, arr in tensors.items():
        tensor = model.params[name]
        if tensor.data.shape != arr.shape:
            raise CheckpointError(
                f"shape mismatch for {name}: {tensor.data.shape} vs {arr.shape}")
        tensor.data[...] = arr
    return model, config
