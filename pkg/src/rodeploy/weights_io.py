"""Binary container for trained controller weights.

Layout (little-endian):
    magic       8 bytes  b"RODMLP\\x00\\x01"
    version     u32
    n_layers    u32
    dims        u32 * (n_layers + 1)
    payload     float64: per layer W (row-major) then b; then input mean,
                std, low, high; then dataset-hash digest (32 bytes raw) and
                final MAE (float64)
    checksum    sha256 of everything from magic through payload
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import ModelChecksumError, ModelShapeError, ModelVersionError
from .nn import MLP

MAGIC = b"RODMLP\x00\x01"
VERSION = 1


def save_weights(model, path):
    dims = model.dims
    head = MAGIC + struct.pack("<II", VERSION, len(model.weights))
    head += struct.pack(f"<{len(dims)}I", *dims)

    chunks = [head]
    for w, b in zip(model.weights, model.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    for vec in (model.input_mean, model.input_std):
        chunks.append(np.ascontiguousarray(vec, dtype="<f8").tobytes())
    low = model.input_low if model.input_low is not None else np.full(dims[0], -np.inf)
    high = model.input_high if model.input_high is not None else np.full(dims[0], np.inf)
    chunks.append(np.ascontiguousarray(low, dtype="<f8").tobytes())
    chunks.append(np.ascontiguousarray(high, dtype="<f8").tobytes())

    digest = bytes.fromhex(model.metadata.get("dataset_hash", "00" * 32))
    chunks.append(digest)
    chunks.append(struct.pack("<d", float(model.metadata.get("final_mae", np.nan))))

    body = b"".join(chunks)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(hashlib.sha256(body).digest())


def load_weights(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 + 32:
        raise ModelChecksumError("weights file truncated")
    body, checksum = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != checksum:
        raise ModelChecksumError("weights file checksum mismatch")
    if body[: len(MAGIC)] != MAGIC:
        raise ModelVersionError("not a controller weights file")
    off = len(MAGIC)
    version, n_layers = struct.unpack_from("<II", body, off)
    off += 8
    if version != VERSION:
        raise ModelVersionError(f"unsupported weights version {version}")
    if not 1 <= n_layers <= 64:
        raise ModelShapeError(f"implausible layer count {n_layers}")
    dims = struct.unpack_from(f"<{n_layers + 1}I", body, off)
    off += 4 * (n_layers + 1)

    def take(count):
        nonlocal off
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        return arr

    expected = sum(
        dims[i] * dims[i + 1] + dims[i + 1] for i in range(n_layers)
    ) + 4 * dims[0]
    if len(body) - off != 8 * expected + 32 + 8:
        raise ModelShapeError("payload size inconsistent with recorded dims")

    weights, biases = [], []
    for i in range(n_layers):
        weights.append(take(dims[i] * dims[i + 1]).reshape(dims[i], dims[i + 1]))
        biases.append(take(dims[i + 1]))
    mean = take(dims[0])
    std = take(dims[0])
    low = take(dims[0])
    high = take(dims[0])
    digest = body[off : off + 32]
    off += 32
    (final_mae,) = struct.unpack_from("<d", body, off)

    model = MLP(
        weights=weights,
        biases=biases,
        input_mean=mean,
        input_std=std,
        input_low=None if np.all(np.isinf(low)) else low,
        input_high=None if np.all(np.isinf(high)) else high,
        metadata={"dataset_hash": digest.hex(), "final_mae": final_mae},
    )
    return model
