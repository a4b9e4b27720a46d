"""Checkpoint archive: a zip holding the model config, a parameter manifest and raw float32 arrays.

Layout::

    config.json          serialized ModelConfig
    manifest.json        [{"name": ..., "shape": [...], "dtype": ...}, ...]
    extra.json           dataset metadata needed at evaluation time
    params/<name>.f32    row-major little-endian float32
"""
from __future__ import annotations

import json
import zipfile
from pathlib import Path
from typing import Tuple

import numpy as np
import torch

from ..model import M2FN, ModelConfig


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: M2FN, extra: dict = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = []
    tmp = path.with_suffix(path.suffix + ".tmp")
    with zipfile.ZipFile(tmp, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("config.json", model.config.to_json())
        for name, t in model.state_dict().items():
            arr = t.detach().cpu().numpy()
            manifest.append({"name": name, "shape": list(arr.shape), "dtype": str(arr.dtype)})
            zf.writestr(f"params/{name}.f32", np.ascontiguousarray(arr, dtype="<f4").tobytes())
        zf.writestr("manifest.json", json.dumps(manifest))
        zf.writestr("extra.json", json.dumps(extra or {}, sort_keys=True))
    tmp.replace(path)


def load_state(path) -> Tuple[ModelConfig, dict, dict]:
    with zipfile.ZipFile(Path(path)) as zf:
        config = ModelConfig.from_dict(json.loads(zf.read("config.json")))
        manifest = json.loads(zf.read("manifest.json"))
        extra = json.loads(zf.read("extra.json"))
        state = {}
        for entry in manifest:
            raw = zf.read(f"params/{entry['name']}.f32")
            arr = np.frombuffer(raw, dtype="<f4")
            shape = tuple(entry["shape"])
            if arr.size != int(np.prod(shape)):
                raise CheckpointError(f"parameter {entry['name']!r}: {arr.size} values for shape {shape}")
            state[entry["name"]] = (arr.reshape(shape), entry["dtype"])
    return config, state, extra


def load_into(model: M2FN, state: dict) -> None:
    """Copy arrays into `model`, rejecting any name whose shape differs."""
    own = model.state_dict()
    missing = sorted(set(own) - set(state))
    unexpected = sorted(set(state) - set(own))
    if missing or unexpected:
        raise CheckpointError(f"parameter names differ; missing {missing}, unexpected {unexpected}")
    for name, (arr, dtype) in state.items():
        target = own[name]
        if tuple(target.shape) != arr.shape:
            raise CheckpointError(f"shape mismatch for {name!r}: checkpoint {arr.shape}, model {tuple(target.shape)}")
        with torch.no_grad():
            target.copy_(torch.from_numpy(arr.copy()).to(target.dtype))


def load_checkpoint(path, config: ModelConfig = None) -> Tuple[M2FN, dict]:
    saved_config, state, extra = load_state(path)
    model = M2FN(config or saved_config)
    load_into(model, state)
    model.eval()
    return model, extra
