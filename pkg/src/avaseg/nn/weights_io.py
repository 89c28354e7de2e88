"""Weight file I/O.

Layout: u64 little-endian byte length of a UTF-8 JSON manifest, the
manifest itself, then the raw parameter arrays as float32 little-endian,
concatenated in manifest order. Offsets in the manifest are relative to
the start of the array region.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptFileError, RasterFormatError


def save_weights(path, arrays: dict[str, np.ndarray], extra: dict | None = None) -> None:
    """Write named float arrays; extra (JSON-serializable) rides in the manifest."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in arrays.items():
        a = np.ascontiguousarray(arr, dtype="<f4")
        entries.append({"name": name, "shape": list(a.shape), "offset": offset})
        blobs.append(a.tobytes())
        offset += len(blobs[-1])
    manifest = {"format_version": 1, "entries": entries}
    if extra:
        manifest["extra"] = extra
    mbytes = json.dumps(manifest, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(mbytes)))
        f.write(mbytes)
        for b in blobs:
            f.write(b)


def load_weights(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a weight file; returns ({name: float32 array}, extra dict)."""
    blob = Path(path).read_bytes()
    if len(blob) < 8:
        raise CorruptFileError(f"{path}: too short for a weight file")
    (mlen,) = struct.unpack_from("<Q", blob, 0)
    if 8 + mlen > len(blob):
        raise CorruptFileError(f"{path}: manifest length {mlen} exceeds file size")
    try:
        manifest = json.loads(blob[8:8 + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RasterFormatError(f"{path}: manifest is not valid JSON: {exc}") from exc
    if manifest.get("format_version") != 1:
        raise RasterFormatError(f"{path}: unsupported weight format version")
    region = blob[8 + mlen:]
    arrays = {}
    for e in manifest["entries"]:
        shape = tuple(int(s) for s in e["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = int(e["offset"])
        end = start + count * 4
        if end > len(region):
            raise CorruptFileError(f"{path}: array {e['name']} extends past end of file")
        arrays[e["name"]] = np.frombuffer(region[start:end], dtype="<f4").reshape(shape).copy()
    return arrays, manifest.get("extra", {})
