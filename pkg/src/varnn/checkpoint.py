"""Versioned binary checkpoints.

Layout (all integers little-endian)::

    b"VARNN1"
    u32 header_len, header_len bytes of canonical JSON
    u32 tensor_count
    per tensor: u16 name_len, name (utf-8), u8 ndim, ndim x u32 dims,
                prod(dims) x f64 payload

The header carries the model config, vocabulary, training config, seed and
best validation F. JSON is written with sorted keys and no whitespace, so
load followed by save reproduces the file byte for byte.
"""

import json
import struct
from dataclasses import dataclass

import numpy as np

from .corpus import Vocabulary
from .network import ModelConfig, ModelParams, param_shapes

MAGIC = b"VARNN1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    params: ModelParams
    train_config: dict
    seed: int
    best_val_f: float

    def header(self):
        return {
            "format_version": FORMAT_VERSION,
            "model_config": self.config.to_dict(),
            "vocabulary": {"words": list(self.vocab.words),
                           "labels": list(self.vocab.labels),
                           "lowercase": self.vocab.lowercase},
            "train_config": self.train_config,
            "seed": self.seed,
            "best_val_f": self.best_val_f,
        }


def to_bytes(ckpt):
    header = json.dumps(ckpt.header(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    out = [MAGIC, struct.pack("<I", len(header)), header,
           struct.pack("<I", len(ckpt.params.tensors))]
    for name, a in ckpt.params.items():
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        out.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    return b"".join(out)


def from_bytes(data):
    if not data.startswith(MAGIC):
        raise CheckpointError("not a checkpoint (bad magic)")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError("truncated checkpoint")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (hlen,) = struct.unpack("<I", take(4))
    try:
        header = json.loads(take(hlen).decode("utf-8"))
    except ValueError as e:
        raise CheckpointError(f"unreadable header: {e}") from None
    if not isinstance(header, dict) or header.get("format_version") != FORMAT_VERSION:
        version = header.get("format_version") if isinstance(header, dict) else None
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        config = ModelConfig(**header["model_config"])
        v = header["vocabulary"]
        vocab = Vocabulary(v["words"], v["labels"], v["lowercase"])
        for key in ("train_config", "seed", "best_val_f"):
            header[key]
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"malformed header: {e!r}") from None

    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(take(8 * n), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(data):
        raise CheckpointError("trailing bytes after last tensor")

    expected = param_shapes(config)
    got = {k: a.shape for k, a in tensors.items()}
    if got != expected:
        raise CheckpointError("tensor names/shapes do not match the model config")
    if config.label_count < len(vocab.labels):
        raise CheckpointError(f"decoder has {config.label_count} rows for {len(vocab.labels)} labels")
    if config.vocab_size != len(vocab.words):
        raise CheckpointError("embedding rows do not match vocabulary size")
    return Checkpoint(config, vocab, ModelParams(tensors), header["train_config"],
                      header["seed"], header["best_val_f"])


def save(ckpt, path):
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt))


def load(path):
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
