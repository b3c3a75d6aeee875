"""On-disk checkpoint format: named parameter arrays + version + step.

A checkpoint is a single ``.npz`` archive. Reserved keys carry the format
version and training step; every other key is a parameter name. Loading
into a store fails loudly on any name or shape mismatch.
"""
from __future__ import annotations

import os

import numpy as np

from .nn import ParamStore

FORMAT_VERSION = 1

_VERSION_KEY = "__format_version__"
_STEP_KEY = "__step__"


class CheckpointError(RuntimeError):
    pass


def save_checkpoint(path: str, arrays: dict[str, np.ndarray], step: int) -> None:
    """Write named arrays atomically (tmp file + rename)."""
    for key in (_VERSION_KEY, _STEP_KEY):
        if key in arrays:
            raise CheckpointError(f"reserved key in parameter names: {key}")
    payload = dict(arrays)
    payload[_VERSION_KEY] = np.int64(FORMAT_VERSION)
    payload[_STEP_KEY] = np.int64(step)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **payload)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], int]:
    """Read a checkpoint back as (name -> array, step)."""
    if not os.path.exists(path):
        raise CheckpointError(f"no checkpoint at {path}")
    with np.load(path) as data:
        if _VERSION_KEY not in data:
            raise CheckpointError(f"{path} is not a checkpoint (no version key)")
        version = int(data[_VERSION_KEY])
        if version != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
            )
        step = int(data[_STEP_KEY])
        arrays = {
            k: np.asarray(data[k], dtype=np.float64)
            for k in data.files
            if k not in (_VERSION_KEY, _STEP_KEY)
        }
    return arrays, step


def save_stores(path: str, stores: dict[str, ParamStore] | ParamStore,
                step: int) -> None:
    if isinstance(stores, ParamStore):
        stores = {"": stores}
    merged: dict[str, np.ndarray] = {}
    for _, store in stores.items():
        for name, arr in store.state_arrays().items():
            if name in merged:
                raise CheckpointError(f"parameter name collision: {name}")
            merged[name] = arr
    save_checkpoint(path, merged, step)


def load_subset(path: str, store: ParamStore) -> int:
    """Load only this store's names from a checkpoint; extras are ignored.

    Used to lift a frozen policy out of a checkpoint that also carries the
    posterior trained alongside it. Every name the store expects must exist.
    """
    arrays, step = load_checkpoint(path)
    missing = sorted(set(store.names()) - set(arrays))
    if missing:
        raise CheckpointError(f"checkpoint {path} lacks parameters: {missing}")
    store.load_state({n: arrays[n] for n in store.names()})
    return step


def restore_stores(path: str, stores: dict[str, ParamStore] | ParamStore) -> int:
    """Load a checkpoint into stores; returns the saved step count."""
    if isinstance(stores, ParamStore):
        stores = {"": stores}
    arrays, step = load_checkpoint(path)
    expected: dict[str, ParamStore] = {}
    for _, store in stores.items():
        for name in store.names():
            expected[name] = store
    unknown = sorted(set(arrays) - set(expected))
    missing = sorted(set(expected) - set(arrays))
    if unknown or missing:
        raise CheckpointError(
            f"checkpoint {path} does not match the model: "
            f"unknown={unknown} missing={missing}"
        )
    for _, store in stores.items():
        store.load_state({n: arrays[n] for n in store.names()})
    return step
