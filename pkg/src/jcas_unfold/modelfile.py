"""Versioned on-disk format for trained models.

Layout::

    JCASUNFOLD\\n
    <header: one line of canonical JSON>\\n
    <payload: 8*L*2N little-endian float64>

The payload is layer-major; inside a layer the vectors come in the order
w1, b1, w2, b2, w3, b3, w4, b4, each of length 2N. The header carries
``format_version``, ``n``, ``layers``, ``rho``, ``seed``, ``lr``, ``decay``,
``payload_bytes``, ``sha256`` of the payload and free-form ``metadata``.
Saving the same model twice gives identical bytes.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile

import numpy as np

from .errors import DimensionError, ModelFileError
from .network import UnfoldModel

MAGIC = b"JCASUNFOLD\n"
FORMAT_VERSION = 1


def _payload(model: UnfoldModel) -> bytes:
    # (L, 4, 2N) x2 -> (L, 4, 2, 2N) with w before b in each pair
    inter = np.stack([model.weights, model.biases], axis=2)
    return inter.astype("<f8").tobytes()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def dumps(model: UnfoldModel) -> bytes:
    payload = _payload(model)
    train = model.metadata.get("train", {})
    header = {
        "format_version": FORMAT_VERSION,
        "n": model.n,
        "layers": model.n_layers,
        "rho": model.rho,
        "seed": train.get("seed"),
        "lr": train.get("learning_rate"),
        "decay": train.get("decay"),
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "metadata": model.metadata,
    }
    return MAGIC + _canonical(header).encode() + b"\n" + payload


def loads(data: bytes) -> UnfoldModel:
    if not data.startswith(MAGIC):
        raise ModelFileError("not a model file (bad magic)")
    end = data.find(b"\n", len(MAGIC))
    if end < 0:
        raise ModelFileError("corrupt model file: header truncated")
    try:
        header = json.loads(data[len(MAGIC) : end])
    except ValueError as exc:
        raise ModelFileError(f"corrupt model file: unreadable header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise ModelFileError(
            f"unsupported model format version {header.get('format_version')!r} (expected {FORMAT_VERSION})"
        )
    payload = data[end + 1 :]
    try:
        n, layers = int(header["n"]), int(header["layers"])
        expected = int(header["payload_bytes"])
    except (KeyError, TypeError, ValueError):
        raise ModelFileError("corrupt model file: header missing dimensions") from None
    if len(payload) != expected or expected != 8 * layers * 8 * 2 * n:
        raise ModelFileError(
            f"corrupt model file: payload is {len(payload)} bytes, expected {8 * layers * 8 * 2 * n}"
        )
    if hashlib.sha256(payload).hexdigest() != header.get("sha256"):
        raise ModelFileError("corrupt model file: checksum mismatch")
    inter = np.frombuffer(payload, dtype="<f8").reshape(layers, 4, 2, 2 * n).astype(float)
    return UnfoldModel(inter[:, :, 0].copy(), inter[:, :, 1].copy(), n, float(header["rho"]), header.get("metadata", {}))


def save_model(model: UnfoldModel, path) -> None:
    """Atomic write (temp file + rename)."""
    path = os.fspath(path)
    data = dumps(model)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)), prefix=".tmp-model-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_model(path, n: int | None = None) -> UnfoldModel:
    """Load a model; with ``n`` given, a model for another antenna count is rejected."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc.strerror or exc}") from None
    model = loads(data)
    if n is not None and model.n != n:
        raise DimensionError(f"model in {path} is for N={model.n}, expected N={n}")
    return model
