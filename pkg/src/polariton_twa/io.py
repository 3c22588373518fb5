"""Output files: snapshot dumps, JSON records and CSV tables.

Every file written here carries the hash of the run manifest, either as a
``manifest_sha256`` field (JSON) or as a leading ``# manifest_sha256=...``
comment line (CSV).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .sde import EnsembleState

SNAPSHOT_COLUMNS = ("x1", "p1", "x2", "p2")
_MAGIC = b"TWASNAP1"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def canonical_json(obj) -> str:
    """Sorted-key JSON with non-finite floats mapped to null."""
    return json.dumps(_jsonable(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def manifest_hash(manifest: Mapping) -> str:
    return hashlib.sha256(canonical_json(manifest).encode()).hexdigest()


def write_json(path: Path, payload: Mapping, manifest_sha: str) -> Path:
    body = dict(payload)
    body["manifest_sha256"] = manifest_sha
    path.write_text(json.dumps(_jsonable(body), sort_keys=True, indent=2, allow_nan=False) + "\n")
    return path


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, columns: Sequence[str], rows: Iterable[Mapping], manifest_sha: str) -> Path:
    buf = io.StringIO()
    buf.write(f"# manifest_sha256={manifest_sha}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    path.write_text(buf.getvalue())
    return path


def read_csv(path: Path) -> tuple[str, list[dict]]:
    """Return (manifest hash, rows as string dicts)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# manifest_sha256="):
        raise ValueError(f"{path}: missing manifest header")
    sha = lines[0].split("=", 1)[1]
    return sha, list(csv.DictReader(lines[1:]))


def snapshot_header(s: EnsembleState, seed: int, params_hash: str, manifest_sha: str) -> dict:
    return {"t": float(s.t), "seed": int(seed), "params_hash": params_hash,
            "n_traj": s.n_traj, "columns": list(SNAPSHOT_COLUMNS),
            "manifest_sha256": manifest_sha}


def write_snapshot(path: Path, s: EnsembleState, seed: int, params_hash: str,
                   manifest_sha: str, binary: bool = False) -> Path:
    """Dump an N x 4 snapshot.

    CSV: first line ``# {json header}``, then a column header and one row per
    trajectory. Binary: magic, little-endian u32 header length, the JSON
    header, then N x 4 little-endian float64 in row-major order.
    """
    header = snapshot_header(s, seed, params_hash, manifest_sha)
    if binary:
        h = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(len(h).to_bytes(4, "little"))
            fh.write(h)
            fh.write(np.ascontiguousarray(s.states, dtype="<f8").tobytes())
        return path
    buf = io.StringIO()
    buf.write("# " + json.dumps(header, sort_keys=True) + "\n")
    buf.write(",".join(SNAPSHOT_COLUMNS) + "\n")
    for row in s.states:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())
    return path


def read_snapshot(path: Path) -> tuple[dict, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw.startswith(_MAGIC):
        n = int.from_bytes(raw[8:12], "little")
        header = json.loads(raw[12:12 + n])
        data = np.frombuffer(raw[12 + n:], dtype="<f8").reshape(-1, 4)
        return header, data.copy()
    text = raw.decode()
    first, _, rest = text.partition("\n")
    if not first.startswith("# "):
        raise ValueError(f"{path}: missing snapshot header")
    header = json.loads(first[2:])
    cols, _, body = rest.partition("\n")
    if tuple(cols.split(",")) != SNAPSHOT_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {cols!r}")
    data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    return header, data
