"""Model archive format: a versioned manifest plus raw float64 arrays.

An archive is a directory holding ``manifest.json`` and one ``.bin`` file per
array (raw little-endian 64-bit floats, C order, shape declared in the
manifest).  Arbitrary JSON metadata rides along in the manifest.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ArchiveError

FORMAT_VERSION = 1


def save_archive(path, arrays, meta=None):
    """Write ``arrays`` (name -> ndarray) and optional ``meta`` dict."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {"format_version": FORMAT_VERSION, "arrays": {}, "meta": meta or {}}
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        fname = f"{name}.bin"
        (path / fname).write_bytes(arr.tobytes())
        manifest["arrays"][name] = {"shape": list(arr.shape), "dtype": "<f8", "file": fname}
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )


def load_archive(path):
    """Read an archive back as (arrays, meta)."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise ArchiveError(f"no manifest.json in {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise ArchiveError(f"malformed manifest: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise ArchiveError(f"unsupported archive format_version {version!r}")
    arrays = {}
    for name, entry in manifest["arrays"].items():
        raw = (path / entry["file"]).read_bytes()
        shape = tuple(entry["shape"])
        arr = np.frombuffer(raw, dtype="<f8")
        if arr.size != int(np.prod(shape, dtype=np.int64)):
            raise ArchiveError(f"array {name!r}: size does not match declared shape")
        arrays[name] = arr.reshape(shape).copy()
    return arrays, manifest.get("meta", {})
