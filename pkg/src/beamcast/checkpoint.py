"""Checkpoint file format.

Layout: an ASCII magic line ``BRCKPT1``, one line of JSON manifest, then raw
little-endian float64 blobs. The manifest carries arbitrary model metadata
plus, per parameter, name / shape / trainable flag / byte offset into the
blob section. Writing is fully deterministic so identical models produce
byte-identical files.
"""

import json

import numpy as np

from .errors import CheckpointError

MAGIC = b"BRCKPT1"


def save_checkpoint(path, params, meta=None):
    """Write Parameters (any iterable) plus a JSON-serializable `meta` dict."""
    params = list(params)
    entries = []
    offset = 0
    for p in params:
        nbytes = p.tensor.data.size * 8
        entries.append(
            {
                "name": p.name,
                "shape": list(p.tensor.data.shape),
                "trainable": p.trainable,
                "offset": offset,
            }
        )
        offset += nbytes
    manifest = {"meta": meta or {}, "params": entries}
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    with open(path, "wb") as f:
        f.write(MAGIC + b"\n")
        f.write(header.encode("utf-8") + b"\n")
        for p in params:
            f.write(np.ascontiguousarray(p.tensor.data, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (meta, {name: (array, trainable)})."""
    with open(path, "rb") as f:
        magic = f.readline().rstrip(b"\n")
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}; expected {MAGIC!r}")
        try:
            manifest = json.loads(f.readline().decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"unreadable manifest: {e}") from e
        blob = f.read()
    tensors = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        lo = entry["offset"]
        hi = lo + count * 8
        if hi > len(blob):
            raise CheckpointError(f"blob truncated for parameter {entry['name']}")
        arr = np.frombuffer(blob[lo:hi], dtype="<f8").reshape(shape).astype(np.float64)
        tensors[entry["name"]] = (arr, bool(entry["trainable"]))
    return manifest.get("meta", {}), tensors


def restore_into(params, tensors):
    """Copy loaded arrays into an existing parameter collection by name."""
    for p in params:
        if p.name not in tensors:
            raise CheckpointError(f"checkpoint missing parameter {p.name}")
        arr, _ = tensors[p.name]
        if arr.shape != p.tensor.data.shape:
            raise CheckpointError(
                f"shape mismatch for {p.name}: checkpoint {arr.shape} vs model {p.tensor.data.shape}"
            )
        p.tensor.data[...] = arr
