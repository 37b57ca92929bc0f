"""File formats: binary field stacks and volumes, trajectory CSV/JSON,
and metrics JSON.

Stack file ("ODTS"):  a fixed 48-byte little-endian header
    magic 4s | version u4 | N u4 | T u4 | pitch f8 | wavelength f8 |
    n0 f8 | plane_offset f8
followed by T*N*N complex64 samples, frame-major, row-major within a
frame.  A JSON sidecar (same path + ".json") mirrors the header.

Volume file ("ODTV"): the same header layout with T fixed to 1 and N the
cubic grid size, followed by N^3 complex64 samples.

Trajectory records hold, per frame and in this order: frame index, the
unit quaternion (q0, q1, q2, q3) with q0 >= 0, and optionally the
translation (dx, dy, dz).
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import Optional

import numpy as np

from . import so3
from .grids import FieldStack, VolumeGrid

__all__ = [
    "write_stack",
    "read_stack",
    "write_volume",
    "read_volume",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_trajectory_json",
    "read_trajectory_json",
    "write_metrics",
    "read_metrics",
]

_MAGIC_STACK = b"ODTS"
_MAGIC_VOLUME = b"ODTV"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIdddd")

METRICS_SCHEMA_VERSION = 1


def _write_header(fh, magic: bytes, n: int, t: int, pitch: float,
                  wavelength: float, n0: float, plane_offset: float):
    fh.write(_HEADER.pack(magic, _VERSION, n, t, pitch, wavelength, n0,
                          plane_offset))


def _read_header(fh, magic: bytes):
    raw = fh.read(_HEADER.size)
    if len(raw) != _HEADER.size:
        raise ValueError("truncated header")
    m, version, n, t, pitch, wavelength, n0, plane_offset = _HEADER.unpack(raw)
    if m != magic:
        raise ValueError(f"bad magic {m!r}, expected {magic!r}")
    if version != _VERSION:
        raise ValueError(f"unsupported version {version}")
    return n, t, pitch, wavelength, n0, plane_offset


def _sidecar(path: Path, header: dict):
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(header, indent=2, sort_keys=True) + "\n")


def write_stack(path, stack: FieldStack):
    path = Path(path)
    with open(path, "wb") as fh:
        _write_header(fh, _MAGIC_STACK, stack.n, stack.n_frames, stack.pitch,
                      stack.wavelength, stack.n0, stack.plane_offset)
        fh.write(np.ascontiguousarray(
            stack.values.astype(np.complex64)).tobytes())
    _sidecar(path, {
        "magic": "ODTS", "version": _VERSION, "N": stack.n,
        "T": stack.n_frames, "pitch": stack.pitch,
        "wavelength": stack.wavelength, "n0": stack.n0,
        "plane_offset": stack.plane_offset, "dtype": "complex64",
        "layout": "frame-major row-major",
    })


def read_stack(path) -> FieldStack:
    path = Path(path)
    with open(path, "rb") as fh:
        n, t, pitch, wavelength, n0, plane_offset = _read_header(fh, _MAGIC_STACK)
        payload = fh.read()
    expected = t * n * n * 8
    if len(payload) != expected:
        raise ValueError(f"payload length {len(payload)} != {expected}")
    vals = np.frombuffer(payload, dtype=np.complex64).reshape(t, n, n)
    return FieldStack(vals.astype(complex), pitch, wavelength, n0, plane_offset)


def write_volume(path, vol: VolumeGrid, wavelength: float = 0.0,
                 n0: float = 0.0):
    path = Path(path)
    with open(path, "wb") as fh:
        _write_header(fh, _MAGIC_VOLUME, vol.n, 1, vol.pitch, wavelength, n0,
                      0.0)
        fh.write(np.ascontiguousarray(
            np.asarray(vol.values, dtype=complex).astype(np.complex64)
        ).tobytes())
    _sidecar(path, {
        "magic": "ODTV", "version": _VERSION, "N": vol.n, "T": 1,
        "pitch": vol.pitch, "wavelength": wavelength, "n0": n0,
        "plane_offset": 0.0, "dtype": "complex64",
        "layout": "row-major",
    })


def read_volume(path):
    """Returns (VolumeGrid, wavelength, n0); zeros mean 'not recorded'."""
    path = Path(path)
    with open(path, "rb") as fh:
        n, t, pitch, wavelength, n0, _ = _read_header(fh, _MAGIC_VOLUME)
        payload = fh.read()
    if t != 1 or len(payload) != n**3 * 8:
        raise ValueError("corrupt volume file")
    vals = np.frombuffer(payload, dtype=np.complex64).reshape(n, n, n)
    return VolumeGrid(vals.astype(complex), pitch), wavelength, n0


def _traj_rows(traj: so3.RotationTrajectory):
    for t in range(len(traj)):
        q = so3.to_quaternion(traj.rotations[t])
        row = [t] + [float(c) for c in q]
        if traj.translations is not None:
            row += [float(c) for c in traj.translations[t]]
        yield row


def write_trajectory_csv(path, traj: so3.RotationTrajectory):
    with_d = traj.translations is not None
    header = ["frame", "q0", "q1", "q2", "q3"]
    if with_d:
        header += ["dx", "dy", "dz"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in _traj_rows(traj):
            writer.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])


def read_trajectory_csv(path) -> so3.RotationTrajectory:
    rotations, translations = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        with_d = len(header) >= 8
        for row in reader:
            q = np.array([float(v) for v in row[1:5]])
            rotations.append(so3.from_quaternion(q))
            if with_d:
                translations.append([float(v) for v in row[5:8]])
    return so3.RotationTrajectory(
        np.stack(rotations),
        np.array(translations) if translations else None)


def write_trajectory_json(path, traj: so3.RotationTrajectory):
    records = []
    for row in _traj_rows(traj):
        rec = {"frame": row[0], "q": row[1:5]}
        if len(row) > 5:
            rec["d"] = row[5:8]
        records.append(rec)
    Path(path).write_text(json.dumps(records, indent=2) + "\n")


def read_trajectory_json(path,
                         coordinate_change: Optional[np.ndarray] = None
                         ) -> so3.RotationTrajectory:
    """Load a trajectory; ``coordinate_change`` Q applies R -> Q R^T Q^T,
    the convention used when importing reference trajectories expressed in
    a propagation-along-first-axis frame."""
    records = json.loads(Path(path).read_text())
    rotations, translations = [], []
    for rec in records:
        R = so3.from_quaternion(np.asarray(rec["q"], dtype=float))
        if coordinate_change is not None:
            Q = np.asarray(coordinate_change, dtype=float)
            R = Q @ R.T @ Q.T
        rotations.append(R)
        if "d" in rec:
            translations.append(rec["d"])
    return so3.RotationTrajectory(
        np.stack(rotations),
        np.array(translations) if translations else None)


def write_metrics(path, metrics: dict):
    payload = {"schema_version": METRICS_SCHEMA_VERSION}
    payload.update(metrics)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_metrics(path) -> dict:
    return json.loads(Path(path).read_text())
