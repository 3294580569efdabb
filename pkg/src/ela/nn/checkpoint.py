"""Versioned JSON checkpoints for parameter stores.

Layout: ``{"format_version": 1, "meta": {...}, "params": {name:
{"shape": [...], "data": [row-major values]}}}`` with sorted keys, so a
rerun with identical parameters produces byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .layers import ParamStore

FORMAT_VERSION = 1


def save_params(store: ParamStore, path: str | Path, meta: dict | None = None) -> None:
    payload = {
        "format_version": FORMAT_VERSION,
        "meta": meta or {},
        "params": {
            name: {
                "shape": list(p.data.shape),
                "data": p.data.reshape(-1).tolist(),
            }
            for name, p in store.items()
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n")


def load_params(path: str | Path) -> tuple[ParamStore, dict]:
    payload = json.loads(Path(path).read_text())
    version = payload.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    store = ParamStore()
    for name, entry in payload["params"].items():
        arr = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        store.add(name, arr)
    return store, payload.get("meta", {})
