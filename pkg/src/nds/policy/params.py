"""Flat-indexed parameter storage and the binary checkpoint format.

All weights live in one contiguous float64 vector; named views are
reshaped slices of it, so optimizer updates and gradient accumulation
operate on plain arrays. Checkpoints are a little-endian versioned
container: magic, version, length-prefixed JSON header (config echo, view
manifest, optional training state), then the raw float64 payloads.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor

MAGIC = b"NDSCKPT\x00"
VERSION = 1


class CheckpointError(Exception):
    pass


class ParamStore:
    """Named views over one flat float64 parameter vector."""

    def __init__(self, views: Sequence[Tuple[str, Tuple[int, ...]]],
                 data: Optional[np.ndarray] = None):
        self.names: List[str] = []
        self.shapes: Dict[str, Tuple[int, ...]] = {}
        self.offsets: Dict[str, int] = {}
        off = 0
        for name, shape in views:
            if name in self.shapes:
                raise ValueError(f"duplicate view name: {name}")
            shape = tuple(int(s) for s in shape)
            self.names.append(name)
            self.shapes[name] = shape
            self.offsets[name] = off
            off += int(np.prod(shape))
        self.size = off
        if data is None:
            self.flat = np.zeros(self.size, dtype=np.float64)
        else:
            data = np.asarray(data, dtype=np.float64)
            if data.shape != (self.size,):
                raise ValueError(
                    f"parameter vector has length {data.shape}, expected ({self.size},)"
                )
            self.flat = data.copy()

    def view(self, name: str) -> np.ndarray:
        """Writable numpy view (shares memory with the flat vector)."""
        off = self.offsets[name]
        shape = self.shapes[name]
        return self.flat[off:off + int(np.prod(shape))].reshape(shape)

    def leaf(self) -> Tensor:
        """A gradient-tracking tensor over the flat vector; its .grad after
        backward() is the full flat gradient."""
        return Tensor(self.flat, requires_grad=True)

    def tensor_view(self, leaf: Tensor, name: str) -> Tensor:
        off = self.offsets[name]
        shape = self.shapes[name]
        return leaf[off:off + int(np.prod(shape))].reshape(shape)

    def view_manifest(self) -> List[Tuple[str, Tuple[int, ...]]]:
        return [(n, self.shapes[n]) for n in self.names]

    def copy(self) -> "ParamStore":
        return ParamStore(self.view_manifest(), data=self.flat)


def save_checkpoint(path: str, store: ParamStore, config: dict,
                    arrays: Optional[Dict[str, np.ndarray]] = None,
                    train_state: Optional[dict] = None) -> None:
    """Write params (+ optional named float64 arrays, e.g. optimizer
    moments) with a JSON header. Same inputs produce identical bytes."""
    arrays = arrays or {}
    manifest = [["params", store.size]]
    payloads = [store.flat]
    for name in sorted(arrays):
        arr = np.asarray(arrays[name], dtype=np.float64).reshape(-1)
        manifest.append([name, int(arr.size)])
        payloads.append(arr)
    header = {
        "config": config,
        "views": [[n, list(s)] for n, s in store.view_manifest()],
        "arrays": manifest,
        "train_state": train_state,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in payloads:
            fh.write(arr.astype("<f8", copy=False).tobytes())


def load_checkpoint(path: str) -> Tuple[ParamStore, dict, Dict[str, np.ndarray], Optional[dict]]:
    """Inverse of save_checkpoint. Raises CheckpointError on anything that
    does not parse back exactly."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < len(MAGIC) + 12 or raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    pos = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<Q", raw, pos)
    pos += 8
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    pos += hlen

    arrays: Dict[str, np.ndarray] = {}
    for name, count in header["arrays"]:
        nbytes = int(count) * 8
        if pos + nbytes > len(raw):
            raise CheckpointError(f"truncated payload for array {name!r}")
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=int(count),
                                     offset=pos).astype(np.float64)
        pos += nbytes
    if pos != len(raw):
        raise CheckpointError("trailing bytes after declared payloads")
    if "params" not in arrays:
        raise CheckpointError("checkpoint holds no parameter payload")

    views = [(n, tuple(s)) for n, s in header["views"]]
    try:
        store = ParamStore(views, data=arrays.pop("params"))
    except ValueError as exc:
        raise CheckpointError(str(exc)) from exc
    return store, header["config"], arrays, header.get("train_state")
