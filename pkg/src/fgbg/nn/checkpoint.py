"""Versioned binary checkpoint container.

Layout:

    8-byte magic "FGBGCKP1"
    u64 little-endian header length
    UTF-8 JSON header: {arch, iteration, optim, seed, params, has_velocity}
    per parameter, in declaration order: u64 LE byte length + raw LE values
    the same sequence again for velocity buffers when has_velocity is set

Round-trips are bit-exact; the file's SHA-256 identifies the network in
every emitted report row.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import DataError
from .network import Network
from .optim import MomentumSGD, OptimConfig

__all__ = ["save_checkpoint", "load_checkpoint", "checkpoint_sha256"]

_MAGIC = b"FGBGCKP1"


def _le_dtype(dtype: np.dtype) -> np.dtype:
    return np.dtype(dtype).newbyteorder("<")


def save_checkpoint(
    path: Path,
    net: Network,
    iteration: int,
    seed: int,
    optim: Optional[MomentumSGD] = None,
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = net.parameters()
    header = {
        "arch": net.arch_dict(),
        "iteration": int(iteration),
        "optim": optim.config.to_dict() if optim else None,
        "seed": int(seed),
        "params": [
            {"name": name, "shape": list(arr.shape), "dtype": arr.dtype.name}
            for name, arr in params
        ],
        "has_velocity": optim is not None,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _, arr in params:
            data = np.ascontiguousarray(arr).astype(_le_dtype(arr.dtype), copy=False).tobytes()
            fh.write(struct.pack("<Q", len(data)))
            fh.write(data)
        if optim is not None:
            for vel in optim.velocities:
                data = np.ascontiguousarray(vel).astype(_le_dtype(vel.dtype), copy=False).tobytes()
                fh.write(struct.pack("<Q", len(data)))
                fh.write(data)


def _read_block(fh, path) -> bytes:
    raw = fh.read(8)
    if len(raw) != 8:
        raise DataError(f"truncated checkpoint {path}")
    (length,) = struct.unpack("<Q", raw)
    data = fh.read(length)
    if len(data) != length:
        raise DataError(f"truncated checkpoint {path}")
    return data


def load_checkpoint(path: Path):
    """Returns (network, optimizer-or-None, header dict)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise DataError(f"{path} is not a checkpoint (bad magic)")
        header = json.loads(_read_block(fh, path).decode("utf-8"))
        net = Network.from_arch_dict(header["arch"])
        params = net.parameters()
        if [p["name"] for p in header["params"]] != [name for name, _ in params]:
            raise DataError(f"{path}: parameter list does not match architecture")
        for (name, arr), meta in zip(params, header["params"]):
            data = _read_block(fh, path)
            values = np.frombuffer(data, dtype=_le_dtype(np.dtype(meta["dtype"])))
            arr[...] = values.reshape(meta["shape"]).astype(arr.dtype, copy=False)
        optim = None
        if header.get("has_velocity"):
            optim = MomentumSGD(OptimConfig.from_dict(header["optim"]), params)
            for vel in optim.velocities:
                data = _read_block(fh, path)
                values = np.frombuffer(data, dtype=_le_dtype(vel.dtype))
                vel[...] = values.reshape(vel.shape).astype(vel.dtype, copy=False)
    return net, optim, header


def checkpoint_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
