"""Checkpoint container: nesting fidelity, atomicity, byte determinism."""

import json
import zipfile

import numpy as np
import pytest
import torch

from mlcgan.checkpoint import (
    FORMAT_NAME,
    FORMAT_VERSION,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)


def _assert_same(a, b):
    if isinstance(a, torch.Tensor):
        assert isinstance(b, torch.Tensor)
        assert a.dtype == b.dtype and torch.equal(a, b)
    elif isinstance(a, np.ndarray):
        assert isinstance(b, np.ndarray)
        assert a.dtype == b.dtype and np.array_equal(a, b)
    elif isinstance(a, dict):
        assert set(a) == set(b)
        for k in a:
            _assert_same(a[k], b[k])
    elif isinstance(a, (list, tuple)):
        assert type(a) is type(b) and len(a) == len(b)
        for x, y in zip(a, b):
            _assert_same(x, y)
    else:
        assert type(a) is type(b) and a == b


def _nested_state():
    rng = np.random.Generator(np.random.Philox(1))
    return {
        "weights": {
            "layer.0": torch.from_numpy(rng.standard_normal((3, 4))).float(),
            "layer.1": torch.from_numpy(rng.standard_normal(4)),
        },
        "optimizer": {                   # optimizer-style int-keyed nesting
            "state": {0: {"step": 7, "exp_avg": torch.zeros(3)},
                      1: {"step": 7, "exp_avg": torch.ones(2)}},
            "param_groups": [{"lr": 0.002, "betas": (0.0, 0.99)}],
        },
        "rng": {"counter": np.uint64(123), "key": rng.integers(0, 2**32, 4)},
        "flags": (True, None, "label", 3, 2.5),
        "history": [1, 2, 3],
    }


def test_round_trip_preserves_nesting_and_dtypes(tmp_path):
    state = _nested_state()
    path = tmp_path / "ck.npz"
    save_checkpoint(path, step=42, config={"resolution": 32, "seed": 0},
                    vocabulary=["A", "B"], state=state)
    ck = load_checkpoint(path)
    assert ck.step == 42
    assert ck.version == FORMAT_VERSION
    assert ck.config == {"resolution": 32, "seed": 0}
    assert ck.vocabulary == ["A", "B"]
    _assert_same(ck.state, state)
    # int keys survive as ints, not strings
    assert set(ck.state["optimizer"]["state"]) == {0, 1}


def test_save_load_save_is_byte_identical(tmp_path):
    state = _nested_state()
    first = tmp_path / "a.npz"
    second = tmp_path / "b.npz"
    save_checkpoint(first, step=1, config={"x": 1}, vocabulary=["A"], state=state)
    ck = load_checkpoint(first)
    save_checkpoint(second, step=ck.step, config=ck.config,
                    vocabulary=ck.vocabulary, state=ck.state)
    assert first.read_bytes() == second.read_bytes()


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "nope.npz")


def test_load_rejects_foreign_npz(tmp_path):
    path = tmp_path / "foreign.npz"
    np.savez(path, data=np.zeros(3))
    with pytest.raises(CheckpointError, match="missing metadata"):
        load_checkpoint(path)


def _tampered_meta(path, out, **overrides):
    with np.load(path) as z:
        arrays = {k: z[k] for k in z.files}
    meta = json.loads(bytes(arrays["__meta__"].tobytes()).decode())
    meta.update(overrides)
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    np.savez(out, **arrays)


def test_load_rejects_wrong_format_and_version(tmp_path):
    path = tmp_path / "ck.npz"
    save_checkpoint(path, step=0, config={}, vocabulary=["A"], state={})

    other = tmp_path / "fmt.npz"
    _tampered_meta(path, other, format="something-else")
    with pytest.raises(CheckpointError, match="format"):
        load_checkpoint(other)

    newer = tmp_path / "ver.npz"
    _tampered_meta(path, newer, format=FORMAT_NAME, version=FORMAT_VERSION + 1)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(newer)


def test_unsupported_values_rejected_and_no_temp_left(tmp_path):
    path = tmp_path / "ck.npz"
    with pytest.raises(CheckpointError, match="unsupported value"):
        save_checkpoint(path, step=0, config={}, vocabulary=[],
                        state={"bad": object()})
    with pytest.raises(CheckpointError, match="key type"):
        save_checkpoint(path, step=0, config={}, vocabulary=[],
                        state={("a", 1): torch.zeros(1)})
    assert not path.exists()
    assert list(tmp_path.glob("*.tmp")) == []


def test_write_is_atomic_over_existing_file(tmp_path):
    path = tmp_path / "ck.npz"
    save_checkpoint(path, step=1, config={}, vocabulary=["A"],
                    state={"t": torch.zeros(2)})
    before = path.read_bytes()
    # failed save must leave the old file untouched
    with pytest.raises(CheckpointError):
        save_checkpoint(path, step=2, config={}, vocabulary=["A"],
                        state={"bad": object()})
    assert path.read_bytes() == before
    ck = load_checkpoint(path)
    assert ck.step == 1


def test_archive_is_plain_uncompressed_zip(tmp_path):
    path = tmp_path / "ck.npz"
    save_checkpoint(path, step=0, config={}, vocabulary=["A"],
                    state={"t": torch.zeros(4), "u": torch.ones(2)})
    with zipfile.ZipFile(path) as zf:
        names = zf.namelist()
    assert names == sorted(names)         # deterministic member order
    assert "__meta__.npy" in names
