"""Versioned checkpoint container.

Checkpoints are uncompressed .npz archives: every tensor/array in the
(arbitrarily nested) state becomes a named entry, and a ``__meta__`` entry
carries a JSON document with the format version, step, config, vocabulary
and the structure skeleton needed to rebuild the nesting. Writes go through
a temp file and ``os.replace`` so a crash never leaves a torn file, and the
byte stream is deterministic: saving a loaded checkpoint reproduces it
bit for bit.
"""

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

FORMAT_NAME = "mlcgan-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _flatten(obj, prefix: str, arrays: dict):
    if isinstance(obj, torch.Tensor):
        arrays[prefix] = obj.detach().cpu().numpy()
        return {"__tensor__": prefix}
    if isinstance(obj, np.ndarray):
        arrays[prefix] = obj
        return {"__ndarray__": prefix}
    if isinstance(obj, np.generic):
        arrays[prefix] = np.asarray(obj)
        return {"__npscalar__": prefix}
    if isinstance(obj, dict):
        items = []
        for key in sorted(obj, key=repr):
            if not isinstance(key, (str, int)):
                raise CheckpointError(f"unsupported dict key type {type(key).__name__}")
            tag = "i" if isinstance(key, int) and not isinstance(key, bool) else "s"
            items.append([tag, key, _flatten(obj[key], f"{prefix}/{key}", arrays)])
        return {"__dict__": items}
    if isinstance(obj, tuple):
        return {"__tuple__": [_flatten(v, f"{prefix}/{i}", arrays)
                              for i, v in enumerate(obj)]}
    if isinstance(obj, list):
        return [_flatten(v, f"{prefix}/{i}", arrays) for i, v in enumerate(obj)]
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    raise CheckpointError(f"unsupported value type {type(obj).__name__}")


def _rebuild(skel, arrays: dict):
    if isinstance(skel, dict):
        if "__tensor__" in skel:
            return torch.from_numpy(arrays[skel["__tensor__"]].copy())
        if "__ndarray__" in skel:
            return arrays[skel["__ndarray__"]].copy()
        if "__npscalar__" in skel:
            return arrays[skel["__npscalar__"]][()]
        if "__dict__" in skel:
            return {(int(k) if tag == "i" else str(k)): _rebuild(v, arrays)
                    for tag, k, v in skel["__dict__"]}
        if "__tuple__" in skel:
            return tuple(_rebuild(v, arrays) for v in skel["__tuple__"])
        raise CheckpointError("malformed structure skeleton")
    if isinstance(skel, list):
        return [_rebuild(v, arrays) for v in skel]
    return skel


@dataclass
class Checkpoint:
    step: int
    config: dict
    vocabulary: list[str]
    state: dict
    version: int = FORMAT_VERSION


def save_checkpoint(path, *, step: int, config: dict, vocabulary, state: dict) -> None:
    """Atomically write step/config/vocabulary plus a nested state dict of
    tensors, arrays and plain scalars."""
    path = Path(path)
    arrays: dict[str, np.ndarray] = {}
    skeleton = _flatten(state, "state", arrays)
    meta = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "step": int(step),
        "config": config,
        "vocabulary": list(vocabulary),
        "skeleton": skeleton,
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            # savez with sorted keys keeps the zip member order stable, so
            # identical state produces identical bytes.
            np.savez(fh, **{k: arrays[k] for k in sorted(arrays)})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with np.load(path, allow_pickle=False) as z:
        if "__meta__" not in z.files:
            raise CheckpointError(f"{path} is not a checkpoint (missing metadata)")
        meta = json.loads(bytes(z["__meta__"].tobytes()).decode("utf-8"))
        if meta.get("format") != FORMAT_NAME:
            raise CheckpointError(f"unrecognized checkpoint format {meta.get('format')!r}")
        if meta.get("version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {meta.get('version')!r} "
                f"(expected {FORMAT_VERSION})")
        arrays = {k: z[k] for k in z.files if k != "__meta__"}
    state = _rebuild(meta["skeleton"], arrays)
    return Checkpoint(step=meta["step"], config=meta["config"],
                      vocabulary=meta["vocabulary"], state=state)
