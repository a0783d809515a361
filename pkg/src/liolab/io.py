"""Plain-text dataset ingestion and result serialization.

All writers emit "\n" line endings and format floats with 9 significant
digits, so identical inputs produce byte-identical files on every
platform.  Readers validate structure and report the offending line
number on failure.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .liegroup import Pose3
from .state import ImuSample

IMU_HEADER = "t,gx,gy,gz,ax,ay,az"
POINT_HEADER = "t,x,y,z"
POINT_SCAN_HEADER = "t,x,y,z,scan"


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def read_imu_csv(path: str | Path) -> list[ImuSample]:
    """Parse an IMU stream, enforcing the header and monotone timestamps."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != IMU_HEADER:
        raise ValueError(f"{path}: line 1: expected header {IMU_HEADER!r}")
    samples: list[ImuSample] = []
    prev_t = None
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"{path}: line {ln}: expected 7 fields, got {len(parts)}")
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise ValueError(f"{path}: line {ln}: {exc}") from None
        t = vals[0]
        if prev_t is not None and t <= prev_t:
            raise ValueError(f"{path}: line {ln}: non-monotone timestamp {t}")
        prev_t = t
        samples.append(ImuSample(t, np.array(vals[1:4]), np.array(vals[4:7])))
    return samples


def write_imu_csv(path: str | Path, samples: list[ImuSample]) -> None:
    rows = [IMU_HEADER]
    for s in samples:
        rows.append(
            ",".join(
                [_fmt(s.t)] + [_fmt(v) for v in s.gyro] + [_fmt(v) for v in s.acc]
            )
        )
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_points_csv(path: str | Path) -> list[list[tuple[float, np.ndarray]]]:
    """Parse time-stamped points grouped into scans.

    Accepts either the single-scan header ("t,x,y,z") or the multi-scan
    one with a scan-index column; returns a list of scans, each a list
    of (t, xyz) tuples.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].strip()
    if header == POINT_HEADER:
        with_scan = False
    elif header == POINT_SCAN_HEADER:
        with_scan = True
    else:
        raise ValueError(
            f"{path}: line 1: expected header {POINT_HEADER!r} or {POINT_SCAN_HEADER!r}"
        )
    scans: dict[int, list[tuple[float, np.ndarray]]] = {}
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        expected = 5 if with_scan else 4
        if len(parts) != expected:
            raise ValueError(f"{path}: line {ln}: expected {expected} fields, got {len(parts)}")
        try:
            t = float(parts[0])
            xyz = np.array([float(parts[1]), float(parts[2]), float(parts[3])])
            idx = int(parts[4]) if with_scan else 0
        except ValueError as exc:
            raise ValueError(f"{path}: line {ln}: {exc}") from None
        scans.setdefault(idx, []).append((t, xyz))
    return [scans[k] for k in sorted(scans)]


def write_points_csv(
    path: str | Path,
    scans: list[list[tuple[float, np.ndarray]]],
    scan_column: bool = True,
) -> None:
    rows = [POINT_SCAN_HEADER if scan_column else POINT_HEADER]
    for idx, scan in enumerate(scans):
        for t, xyz in scan:
            fields = [_fmt(t), _fmt(xyz[0]), _fmt(xyz[1]), _fmt(xyz[2])]
            if scan_column:
                fields.append(str(idx))
            rows.append(",".join(fields))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def rotation_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (x, y, z, w), Hamilton convention, w >= 0."""
    r = np.asarray(r, dtype=float)
    tr = np.trace(r)
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (r[2, 1] - r[1, 2]) / s
        y = (r[0, 2] - r[2, 0]) / s
        z = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        w = (r[2, 1] - r[1, 2]) / s
        x = 0.25 * s
        y = (r[0, 1] + r[1, 0]) / s
        z = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        w = (r[0, 2] - r[2, 0]) / s
        x = (r[0, 1] + r[1, 0]) / s
        y = 0.25 * s
        z = (r[1, 2] + r[2, 1]) / s
    else:
        s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        w = (r[1, 0] - r[0, 1]) / s
        x = (r[0, 2] + r[2, 0]) / s
        y = (r[1, 2] + r[2, 1]) / s
        z = 0.25 * s
    q = np.array([x, y, z, w])
    q /= np.linalg.norm(q)
    if q[3] < 0.0 or (q[3] == 0.0 and q[int(np.argmax(np.abs(q[:3])))] < 0.0):
        q = -q
    return q


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    x, y, z, w = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def write_trajectory_tum(path: str | Path, records: list[tuple[float, Pose3]]) -> None:
    """One 't tx ty tz qx qy qz qw' line per pose, w-positive quaternions."""
    rows = []
    for t, pose in records:
        q = rotation_to_quaternion(pose.rot)
        fields = [_fmt(t)] + [_fmt(v) for v in pose.trans] + [_fmt(v) for v in q]
        rows.append(" ".join(fields))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_trajectory_tum(path: str | Path) -> list[tuple[float, Pose3]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    out = []
    for ln, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}: line {ln}: expected 8 fields, got {len(parts)}")
        vals = [float(p) for p in parts]
        q = np.array(vals[4:8])
        if abs(np.linalg.norm(q) - 1.0) > 1e-9:
            raise ValueError(f"{path}: line {ln}: quaternion not normalized")
        out.append((vals[0], Pose3(quaternion_to_rotation(q), np.array(vals[1:4]))))
    return out
