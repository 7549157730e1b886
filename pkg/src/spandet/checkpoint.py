"""Binary checkpoints: config text plus named float32 parameter records.

Layout: 4-byte magic ``ECNT``, little-endian u32 format version, a
length-prefixed UTF-8 text block, then repeated parameter records of
(length-prefixed name, u32 rank, u32 extents, raw little-endian float32
data) until end of file.  The text block holds the flat config plus
``@``-prefixed metadata lines (epoch counter, RNG state, fallback
vocabulary), so a checkpoint fully determines the model.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from spandet.config import ModelConfig, dump_config, parse_config

MAGIC = b"ECNT"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    version: int
    config: ModelConfig
    params: dict[str, np.ndarray]
    epoch: int = 0
    rng_state: dict | None = None
    vocab: tuple[str, ...] | None = None


def _text_block(config: ModelConfig, epoch: int, rng_state, vocab) -> str:
    parts = [dump_config(config), f"@epoch={epoch}\n"]
    if rng_state is not None:
        parts.append(f"@rng={json.dumps(rng_state)}\n")
    if vocab is not None:
        parts.append("@vocab=" + " ".join(vocab) + "\n")
    return "".join(parts)


def _split_text_block(text: str):
    config_lines = []
    meta = {}
    for line in text.splitlines():
        if line.startswith("@"):
            key, _, value = line[1:].partition("=")
            meta[key] = value
        else:
            config_lines.append(line)
    return "\n".join(config_lines), meta


def save_checkpoint(path, config: ModelConfig, params: dict[str, np.ndarray],
                    *, epoch: int = 0, rng_state=None, vocab=None) -> None:
    text = _text_block(config, epoch, rng_state, vocab).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(text)))
        fh.write(text)
        for name, arr in params.items():
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh, count: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return buf


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise CheckpointError("not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (text_len,) = struct.unpack("<I", _read_exact(fh, 4, "header length"))
        text = _read_exact(fh, text_len, "config text").decode("utf-8")
        config_text, meta = _split_text_block(text)
        try:
            config = parse_config(config_text)
        except ValueError as e:
            raise CheckpointError(f"invalid embedded config: {e}") from e
        params: dict[str, np.ndarray] = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CheckpointError("truncated checkpoint while reading a record")
            (name_len,) = struct.unpack("<I", head)
            name = _read_exact(fh, name_len, "record name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(fh, 4, f"{name} rank"))
            shape = struct.unpack(f"<{rank}I",
                                  _read_exact(fh, 4 * rank, f"{name} extents"))
            count = int(np.prod(shape)) if rank else 1
            raw = _read_exact(fh, 4 * count, f"{name} data")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
    epoch = int(meta.get("epoch", 0))
    rng_state = json.loads(meta["rng"]) if "rng" in meta else None
    vocab = tuple(meta["vocab"].split()) if "vocab" in meta else None
    return Checkpoint(version, config, params, epoch, rng_state, vocab)
