"""Checkpoint format: roundtrip, determinism, error handling."""

import numpy as np
import pytest

from beamcast.checkpoint import load_checkpoint, restore_into, save_checkpoint
from beamcast.errors import CheckpointError
from beamcast.tensor import Parameter


def make_params():
    rng = np.random.default_rng(11)
    return [
        Parameter("layer.w", rng.normal(size=(3, 4))),
        Parameter("layer.b", rng.normal(size=(4,))),
        Parameter("frozen.table", rng.normal(size=(5, 2)), trainable=False),
    ]


def test_roundtrip(tmp_path):
    params = make_params()
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, params, meta={"model": "demo", "mode": "standard"})
    meta, tensors = load_checkpoint(path)
    assert meta == {"model": "demo", "mode": "standard"}
    for p in params:
        arr, trainable = tensors[p.name]
        np.testing.assert_array_equal(arr, p.data)
        assert trainable == p.trainable


def test_byte_identical_across_saves(tmp_path):
    params = make_params()
    a, b = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
    save_checkpoint(a, params, meta={"k": 1})
    save_checkpoint(b, params, meta={"k": 1})
    assert a.read_bytes() == b.read_bytes()


def test_magic_line_present(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, make_params(), meta={})
    assert path.read_bytes().startswith(b"BRCKPT1\n")


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTCKPT\n{}\n")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_truncated_blob_rejected(tmp_path):
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, make_params(), meta={})
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_restore_into_shape_mismatch(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, make_params(), meta={})
    _, tensors = load_checkpoint(path)
    wrong = [Parameter("layer.w", np.zeros((4, 3)))]
    with pytest.raises(CheckpointError):
        restore_into(wrong, tensors)


def test_restore_into_missing_param(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, make_params(), meta={})
    _, tensors = load_checkpoint(path)
    with pytest.raises(CheckpointError):
        restore_into([Parameter("unknown", np.zeros(2))], tensors)


def test_restore_into_copies_values(tmp_path):
    params = make_params()
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params, meta={})
    _, tensors = load_checkpoint(path)
    fresh = [Parameter(p.name, np.zeros_like(p.data), trainable=p.trainable) for p in params]
    restore_into(fresh, tensors)
    for orig, new in zip(params, fresh):
        np.testing.assert_array_equal(orig.data, new.data)
