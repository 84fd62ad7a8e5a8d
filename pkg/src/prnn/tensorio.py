"""Binary tensor file format used repo-wide.

Layout: magic b"PTNS", u8 version=1, u8 rank, rank x u32 little-endian
dims, then fp64 little-endian row-major payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PTNS"
VERSION = 1


def save_tensor(path, array: np.ndarray):
    arr = np.ascontiguousarray(array, dtype=np.float64)
    if arr.ndim > 255:
        raise ValueError("rank exceeds format limit")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<BB", VERSION, arr.ndim))
        f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        f.write(arr.astype("<f8").tobytes())


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ValueError(f"{path}: bad magic, not a PTNS file")
        version, rank = struct.unpack("<BB", f.read(2))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        dims = struct.unpack(f"<{rank}I", f.read(4 * rank))
        count = int(np.prod(dims)) if dims else 1
        data = np.frombuffer(f.read(8 * count), dtype="<f8")
        if data.size != count:
            raise ValueError(f"{path}: truncated payload")
        return data.reshape(dims).astype(np.float64)


def _path_to_filename(name: str) -> str:
    return name.replace(".", "__") + ".ptns"


def _filename_to_path(fname: str) -> str:
    return fname[:-len(".ptns")].replace("__", ".")


def save_params(dirpath, params: dict[str, np.ndarray]):
    """Write one tensor file per parameter path into ``dirpath``."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    for name in sorted(params):
        save_tensor(d / _path_to_filename(name), params[name])


def load_params(dirpath) -> dict[str, np.ndarray]:
    d = Path(dirpath)
    out = {}
    for f in sorted(d.glob("*.ptns")):
        if f.name == "bridging_matrix.ptns":
            continue
        out[_filename_to_path(f.name)] = load_tensor(f)
    return out
