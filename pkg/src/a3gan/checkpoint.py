"""Checkpoint container: one zip archive holding named float arrays plus a
JSON manifest (config, seed, step, subband ordering, profile)."""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np
import torch

CHECKPOINT_VERSION = "a3gan-ckpt-v1"
SUBBAND_ORDER_NOTE = "LL,LH,HL,HH parent-major (full packet tree)"


def save_checkpoint(path, arrays: dict[str, np.ndarray], manifest: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {"version": CHECKPOINT_VERSION, "subband_order": SUBBAND_ORDER_NOTE, **manifest}
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
        for key in sorted(arrays):
            buf = io.BytesIO()
            np.save(buf, np.asarray(arrays[key]))
            zf.writestr(f"arrays/{key}.npy", buf.getvalue())
    return path


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint '{path}' does not exist")
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("manifest.json"))
        if manifest.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"unsupported checkpoint version {manifest.get('version')!r}; "
                f"expected {CHECKPOINT_VERSION!r}"
            )
        arrays = {}
        for name in zf.namelist():
            if name.startswith("arrays/") and name.endswith(".npy"):
                key = name[len("arrays/") : -len(".npy")]
                arrays[key] = np.load(io.BytesIO(zf.read(name)))
    return arrays, manifest


def _array_key(prefix: str, name: str) -> str:
    stem, dot, role = name.rpartition(".")
    return f"{prefix}/{stem}/{role}" if dot else f"{prefix}/{role}"


def model_arrays(module: torch.nn.Module, prefix: str) -> dict[str, np.ndarray]:
    """Parameters as `<prefix>/<layer>/<tensor-role>` arrays."""
    return {
        _array_key(prefix, name): p.detach().cpu().numpy().copy()
        for name, p in module.named_parameters()
    }


def load_model_arrays(module: torch.nn.Module, prefix: str, arrays: dict) -> None:
    for name, p in module.named_parameters():
        key = _array_key(prefix, name)
        if key not in arrays:
            raise KeyError(f"checkpoint is missing array '{key}'")
        with torch.no_grad():
            p.copy_(torch.from_numpy(arrays[key]).to(p.dtype))


def optimizer_arrays(opt: torch.optim.Optimizer, prefix: str) -> dict[str, np.ndarray]:
    out = {}
    for i, entry in opt.state_dict()["state"].items():
        for key, value in entry.items():
            out[f"{prefix}/{i}/{key}"] = np.asarray(
                value.detach().cpu().numpy() if torch.is_tensor(value) else value
            )
    return out


def load_optimizer_arrays(opt: torch.optim.Optimizer, prefix: str, arrays: dict) -> None:
    sd = opt.state_dict()
    state: dict[int, dict] = {}
    marker = f"{prefix}/"
    for key, value in arrays.items():
        if not key.startswith(marker):
            continue
        _, idx, field = key.rsplit("/", 2)
        state.setdefault(int(idx), {})[field] = torch.from_numpy(np.asarray(value))
    sd["state"] = state
    opt.load_state_dict(sd)
