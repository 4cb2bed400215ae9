"""Deterministic persistence: CSV tables, JSON-lines records, run manifests.

Floats are written as decimal text with 17 significant digits, which round-trips
every IEEE double.  Every file is written to a temporary sibling and renamed into
place, so a reader never observes a partial file.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
import time
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "MANIFEST_NAME",
    "format_number",
    "atomic_write_text",
    "write_csv",
    "read_csv",
    "write_jsonl",
    "read_jsonl",
    "sha256_file",
    "write_manifest",
    "verify_manifest",
]

MANIFEST_NAME = "manifest.json"


def format_number(x) -> str:
    """Text for one table cell; ``None`` becomes the empty string."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".17g")
    return str(x)


def atomic_write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _csv_cell(x) -> str:
    s = format_number(x)
    if any(ch in s for ch in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row of length {len(row)} does not match {len(header)} columns")
        lines.append(",".join(_csv_cell(x) for x in row))
    return atomic_write_text(path, "\n".join(lines) + "\n")


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def _json_text(v) -> str:
    # json.dumps would use the shortest repr; keep the 17-digit convention instead
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return format_number(v) if math.isfinite(v) else json.dumps(format_number(v))
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, Mapping):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_text(x)}" for k, x in v.items()) + "}"
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_json_text(x) for x in v) + "]"
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _decode_special(obj):
    special = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}
    return {k: special.get(v, v) if isinstance(v, str) else v for k, v in obj.items()}


def write_jsonl(path, records: Iterable[Mapping]) -> Path:
    return atomic_write_text(path, "".join(_json_text(r) + "\n" for r in records))


def read_jsonl(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line, object_hook=_decode_special) for line in fh if line.strip()]


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(
    out_dir,
    config: Mapping,
    files: Sequence,
    version: str,
    wall_seconds: float,
    n_samples: int = 0,
) -> Path:
    """Snapshot the config and the sha256 of every output, written last."""
    out_dir = Path(out_dir)
    entries = []
    for f in files:
        p = Path(f)
        entries.append({"path": p.name, "sha256": sha256_file(p), "bytes": p.stat().st_size})
    manifest = {
        "tool": "ldp-nls",
        "version": version,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "wall_seconds": wall_seconds,
        "n_samples": int(n_samples),
        "config": config,
        "files": entries,
    }
    return atomic_write_text(out_dir / MANIFEST_NAME, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def verify_manifest(path) -> list[tuple[str, str]]:
    """``(file, status)`` with status ``ok``, ``mismatch`` or ``missing``.

    A missing manifest raises :class:`FileNotFoundError`.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    out = []
    for entry in manifest.get("files", []):
        f = path.parent / entry["path"]
        if not f.is_file():
            out.append((entry["path"], "missing"))
        elif sha256_file(f) != entry["sha256"]:
            out.append((entry["path"], "mismatch"))
        else:
            out.append((entry["path"], "ok"))
    return out
