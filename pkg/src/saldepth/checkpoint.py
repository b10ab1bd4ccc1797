"""Single-file binary checkpoint container.

Layout: an 8-byte magic+version tag, a little-endian uint64 header length,
a canonical JSON header (sorted keys, no whitespace) describing the run
config, step counter and every array entry, then the raw array payload.
Parameters are little-endian float32; auxiliary entries (optimizer step
counters, RNG state bytes) may use the other scalar codes below. Entries
are sorted by name and the JSON is canonical, so save -> load -> save is
byte-identical.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"SDCKPT01"
FORMAT_VERSION = 1

_DTYPES = {
    "f4": np.dtype("<f4"),
    "f8": np.dtype("<f8"),
    "i4": np.dtype("<i4"),
    "i8": np.dtype("<i8"),
    "u1": np.dtype("u1"),
}
_CODES = {v: k for k, v in _DTYPES.items()}


class CheckpointError(Exception):
    pass


def _dtype_code(arr: np.ndarray) -> str:
    code = arr.dtype.str.lstrip("<>=|")
    if code not in _DTYPES:
        raise CheckpointError(f"unsupported checkpoint dtype: {arr.dtype}")
    return code


def save_checkpoint(path, config_dict: dict, step: int,
                    arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    entries = []
    offset = 0
    blobs = []
    for name in sorted(arrays):
        arr = np.asarray(arrays[name])
        code = _dtype_code(arr)
        arr = arr.astype(_DTYPES[code], copy=False)
        raw = arr.tobytes()  # copies to C order, preserves 0-dim shapes
        entries.append({
            "name": name,
            "dtype": code,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)

    header = {
        "format_version": FORMAT_VERSION,
        "config": config_dict,
        "step": int(step),
        "entries": entries,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header_bytes)))
        fh.write(header_bytes)
        for raw in blobs:
            fh.write(raw)
    tmp.replace(path)


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Returns (header, arrays); header holds config, step, format_version."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint (bad magic {magic!r})")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format_version {header.get('format_version')}")
        payload = fh.read()

    arrays = {}
    for entry in header["entries"]:
        dt = _DTYPES[entry["dtype"]]
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        if len(raw) != entry["nbytes"]:
            raise CheckpointError(f"truncated checkpoint entry {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(raw, dtype=dt).reshape(entry["shape"]).copy()
    return header, arrays
