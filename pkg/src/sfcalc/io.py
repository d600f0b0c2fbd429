"""File formats: deterministic CSV writers, the binary operator dump and run manifests.

Binary operator layout (little-endian)::

    offset  size  field
    0       8     magic b"SFCALC01"
    8       4     int32  n     (Clifford generators)
    12      4     int32  N     (module length)
    16      8     int64  rows
    24      8     int64  cols
    32      ...   float64 entries, column-major

A ``<file>.meta.csv`` sidecar carries free-form key/value metadata.
"""
from __future__ import annotations

import csv
import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

MAGIC = b"SFCALC01"
HEADER = struct.Struct("<8siiqq")


def fmt(x) -> str:
    """Round-trippable, platform-stable text for one CSV cell."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if x == 0.0:
            return "0"  # folds -0.0 so reruns agree byte for byte
        return "%.17g" % x
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(c) for c in row])
    return path


def write_kv_csv(path, items: Iterable[tuple[str, object]]) -> Path:
    return write_csv(path, ["key", "value"], items)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def multivector_rows(coeffs) -> list[tuple[int, float]]:
    """(blade mask, coefficient) rows of a multivector, zero blades included."""
    return [(mask, float(c)) for mask, c in enumerate(np.asarray(coeffs))]


# ---- binary operator dumps -------------------------------------------------

def write_operator(path, matrix, n: int, N: int, meta: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    M = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, n, N, rows, cols))
        fh.write(np.asfortranarray(M, dtype="<f8").tobytes(order="F"))
    items = [("n", n), ("N", N), ("rows", rows), ("cols", cols)]
    items += sorted((meta or {}).items())
    write_kv_csv(sidecar_path(path), items)
    return path


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.csv")


def read_operator(path) -> tuple[np.ndarray, dict]:
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n, N, rows, cols = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = HEADER.size + 8 * rows * cols
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f8", offset=HEADER.size, count=rows * cols)
    M = data.reshape((rows, cols), order="F").astype(float)
    meta = {"n": n, "N": N, "rows": rows, "cols": cols}
    side = sidecar_path(path)
    if side.exists():
        _, body = read_csv(side)
        for k, v in body:
            meta.setdefault(k, v)
    return M, meta


# ---- manifests ---------------------------------------------------------------

def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    """What a CLI run produced.

    ``manifest.csv`` holds only reproducible entries. The wall time goes to
    ``timing.csv`` with a fixed-width value, so its size (listed in the
    manifest without a digest) does not vary between runs either.
    """

    command: str
    config_hash: str
    version: str
    wall_time: float = 0.0
    files: list[Path] = field(default_factory=list)

    def add(self, path) -> None:
        path = Path(path)
        if path not in self.files:
            self.files.append(path)

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        timing = write_kv_csv(out_dir / "timing.csv", [("wall_time_s", "%012.3f" % self.wall_time)])
        self.add(timing)
        rows: list[tuple] = [("command", self.command, ""), ("config_hash", self.config_hash, ""),
                             ("version", self.version, "")]
        for p in sorted(self.files, key=lambda q: q.name):
            digest = "" if p == timing else file_digest(p)
            rows.append(("file:" + p.name, p.stat().st_size, digest))
        return write_csv(out_dir / "manifest.csv", ["key", "value", "sha256"], rows)
