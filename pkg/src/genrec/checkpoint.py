"""Bit-exact model checkpoints.

Layout: UTF-8 ``key=value`` manifest lines, a ``---`` line, then for each
parameter in manifest order a little-endian record::

    u32 name_len | name | u32 ndim | u32 dims[ndim] | f32 data[prod(dims)]
"""
from __future__ import annotations

import hashlib
import io
import struct

import numpy as np

from .model import GenRecConfig, GenRecModel, param_shapes
from .numerics import Parameter

FORMAT_VERSION = "1"
_SEP = b"---\n"


class CheckpointError(ValueError):
    pass


def dumps(model, **manifest):
    """Serialize ``model`` with extra manifest fields (stage, epoch, vocab_hash ...)."""
    head = {"format_version": FORMAT_VERSION}
    head.update({k: str(v) for k, v in manifest.items()})
    for k, v in model.config.to_dict().items():
        head[f"config.{k}"] = repr(v) if isinstance(v, float) else str(v)
    head["num_params"] = str(len(model.params))
    buf = io.BytesIO()
    for k, v in head.items():
        if "\n" in v or "=" in k:
            raise CheckpointError(f"manifest entry {k!r} cannot be written")
        buf.write(f"{k}={v}\n".encode("utf-8"))
    buf.write(_SEP)
    for name, p in model.params.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", p.data.ndim))
        buf.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
        buf.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(blob):
    """Return ``(model, manifest)``; manifest keeps the original key order."""
    end = blob.find(b"\n" + _SEP)
    if end < 0:
        raise CheckpointError("missing manifest separator")
    manifest = {}
    for line in blob[:end].decode("utf-8").split("\n"):
        k, sep, v = line.partition("=")
        if not sep:
            raise CheckpointError(f"bad manifest line {line!r}")
        manifest[k] = v
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {manifest.get('format_version')!r}")
    config = GenRecConfig.from_dict(
        {k[len("config."):]: v for k, v in manifest.items() if k.startswith("config.")})
    expected = param_shapes(config)

    pos = end + 1 + len(_SEP)
    params = {}

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise CheckpointError("truncated checkpoint")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    for _ in range(int(manifest["num_params"])):
        (n,) = struct.unpack("<I", take(4))
        name = take(n).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        if expected.get(name) != tuple(shape):
            raise CheckpointError(f"parameter {name!r} has shape {shape}, config expects {expected.get(name)}")
        data = np.frombuffer(take(4 * int(np.prod(shape))), dtype="<f4").reshape(shape)
        params[name] = Parameter(name, data, dtype=np.float32)
    if pos != len(blob):
        raise CheckpointError("trailing bytes after last parameter")
    if list(params) != list(expected):
        raise CheckpointError("parameter set does not match the configuration")
    return GenRecModel(config, params=params), manifest


def save(path, model, **manifest):
    blob = dumps(model, **manifest)
    with open(path, "wb") as fh:
        fh.write(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path, vocab_hash=None):
    with open(path, "rb") as fh:
        model, manifest = loads(fh.read())
    if vocab_hash is not None and manifest.get("vocab_hash") != vocab_hash:
        raise CheckpointError(
            f"{path}: vocabulary hash {manifest.get('vocab_hash')} does not match {vocab_hash}")
    return model, manifest
