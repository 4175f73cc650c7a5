"""Binary field snapshots and run manifests.

Snapshot layout (all little-endian)::

    offset  type     field
    0       4 bytes  magic b"NSKF"
    4       u32      format version (1)
    8       u32      n
    12      u32      points_per_dim P
    16      f64      length L
    24      u32      component count C
    28      f64[...] values, shape (C, P, ..., P), C order

Component 0 is ``sigma``; components ``1..n`` are ``v_1..v_n``.  Values are
physical-space samples at ``x = j L / P``.  Spatial axis ``k`` of the payload
is coordinate ``x_{k+1}``, and the last axis varies fastest.
"""

from __future__ import annotations

import hashlib
import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import State
from .spectral import TorusGrid

__all__ = [
    "SnapshotError",
    "MAGIC",
    "FORMAT_VERSION",
    "write_snapshot",
    "read_snapshot",
    "write_state",
    "read_state",
    "RunManifest",
    "sha256_file",
]

MAGIC = b"NSKF"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIdI")


class SnapshotError(OSError):
    pass


def write_snapshot(path, grid: TorusGrid, fields: np.ndarray) -> Path:
    """Write physical fields of shape ``(C,) + grid.shape``."""
    fields = np.asarray(fields, dtype="<f8")
    if fields.ndim != grid.n + 1 or fields.shape[1:] != grid.shape:
        raise ValueError(f"fields shape {fields.shape} does not match grid {grid.shape}")
    path = Path(path)
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, grid.n, grid.points_per_dim, grid.length, fields.shape[0])
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(fields).tobytes())
    return path


def read_snapshot(path) -> tuple[TorusGrid, np.ndarray]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise SnapshotError(f"cannot read snapshot {path}: {exc}") from exc
    if len(data) < _HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, n, p, length, ncomp = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"{path}: unsupported format version {version}")
    try:
        grid = TorusGrid(int(n), int(p), float(length))
    except ValueError as exc:
        raise SnapshotError(f"{path}: invalid grid header ({exc})") from exc
    expected = ncomp * grid.size * 8
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise SnapshotError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f8").reshape((ncomp,) + grid.shape)
    return grid, values.astype(float)


def write_state(path, state: State) -> Path:
    s, v = state.physical()
    return write_snapshot(path, state.grid, np.concatenate([s[None], v]))


def read_state(path) -> State:
    grid, values = read_snapshot(path)
    if values.shape[0] != grid.n + 1:
        raise SnapshotError(f"{path}: expected {grid.n + 1} components for a state, got {values.shape[0]}")
    return State.from_physical(grid, values[0], values[1:])


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Inventory of one run: config hash, code version, timestamps and output checksums.

    Timestamps live only in the manifest so the data files themselves are
    reproducible byte for byte.
    """

    command: str
    config_sha256: str
    code_version: str
    started: float = field(default_factory=time.time)
    finished: float | None = None
    exit_code: int | None = None
    files: dict = field(default_factory=dict)

    def add(self, path, root=None) -> None:
        path = Path(path)
        key = str(path.relative_to(root)) if root is not None else str(path)
        self.files[key] = sha256_file(path)

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "config_sha256": self.config_sha256,
            "code_version": self.code_version,
            "started": self.started,
            "finished": self.finished,
            "exit_code": self.exit_code,
            "files": dict(sorted(self.files.items())),
        }

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def load(cls, path) -> "RunManifest":
        d = json.loads(Path(path).read_text())
        return cls(**d)

    def verify(self, root) -> list[str]:
        """Names of listed files whose checksum no longer matches."""
        bad = []
        for name, digest in self.files.items():
            p = Path(root) / name
            if not p.exists() or sha256_file(p) != digest:
                bad.append(name)
        return bad
