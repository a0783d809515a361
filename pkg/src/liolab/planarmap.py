"""Voxelized plane map serving point-to-plane correspondences.

World points are binned into a hash grid keyed by floor(x / voxel_size).
Each voxel keeps running first and second moments, so refitting is O(1)
in stored data and inserting the same multiset twice leaves the fitted
plane unchanged.  A voxel serves a plane once it holds enough points and
the smallest-eigenvalue residual passes the planarity gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

VoxelKey = tuple[int, int, int]


@dataclass(frozen=True)
class PlaneFeature:
    """Fitted plane: unit normal, centroid, mean squared residual, support."""

    normal: np.ndarray
    centroid: np.ndarray
    mse: float
    n_points: int


@dataclass
class _VoxelData:
    n: int = 0
    sum_p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sum_pp: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    plane: PlaneFeature | None = None
    dirty: bool = False


@dataclass
class PlanarMapConfig:
    voxel_size: float = 0.5
    min_points: int = 6
    max_plane_mse: float = 0.05**2
    max_match_distance: float = 0.3


class PlanarMap:
    """Single-writer voxel map of planar features."""

    def __init__(self, config: PlanarMapConfig | None = None):
        self.config = config if config is not None else PlanarMapConfig()
        self._voxels: dict[VoxelKey, _VoxelData] = {}

    def __len__(self) -> int:
        return len(self._voxels)

    def key_of(self, p: np.ndarray) -> VoxelKey:
        s = self.config.voxel_size
        return (
            int(math.floor(p[0] / s)),
            int(math.floor(p[1] / s)),
            int(math.floor(p[2] / s)),
        )

    def insert_points(self, pts: np.ndarray) -> None:
        """Bin world-frame points and mark touched voxels for refit."""
        pts = np.asarray(pts, dtype=float)
        if pts.size == 0:
            return
        for p in pts.reshape(-1, 3):
            key = self.key_of(p)
            v = self._voxels.get(key)
            if v is None:
                v = _VoxelData()
                self._voxels[key] = v
            v.n += 1
            v.sum_p += p
            v.sum_pp += np.outer(p, p)
            v.dirty = True

    def _refit(self, v: _VoxelData) -> None:
        v.dirty = False
        v.plane = None
        if v.n < self.config.min_points:
            return
        centroid = v.sum_p / v.n
        scatter = v.sum_pp - v.n * np.outer(centroid, centroid)
        vals, vecs = np.linalg.eigh(scatter)
        idx = 0
        # eigh sorts ascending; break near-degenerate smallest pairs by
        # preferring the axis-dominant eigenvector with the lowest axis index
        if vals[1] - vals[0] < 1e-12 * max(vals[2], 1.0):
            cand = [0, 1]
            dominant = [int(np.argmax(np.abs(vecs[:, c]))) for c in cand]
            idx = cand[int(np.argmin(dominant))]
        normal = vecs[:, idx]
        # deterministic sign: largest-magnitude component positive
        lead = int(np.argmax(np.abs(normal)))
        if normal[lead] < 0.0:
            normal = -normal
        mse = max(vals[idx], 0.0) / v.n
        if mse <= self.config.max_plane_mse:
            v.plane = PlaneFeature(normal, centroid, float(mse), v.n)

    def plane_at(self, key: VoxelKey) -> PlaneFeature | None:
        v = self._voxels.get(key)
        if v is None:
            return None
        if v.dirty:
            self._refit(v)
        return v.plane

    def match_plane(
        self, p_world: np.ndarray, viewpoint: np.ndarray | None = None
    ) -> PlaneFeature | None:
        """Plane of the containing voxel, else nearest face-adjacent one.

        Gates on the point-to-plane distance; when a viewpoint is given
        the served normal is oriented toward it.
        """
        p_world = np.asarray(p_world, dtype=float)
        key = self.key_of(p_world)
        best: PlaneFeature | None = None
        best_dist = np.inf
        plane = self.plane_at(key)
        if plane is not None:
            best = plane
            best_dist = abs(float(plane.normal @ (p_world - plane.centroid)))
        else:
            for axis in range(3):
                for step in (-1, 1):
                    nk = list(key)
                    nk[axis] += step
                    cand = self.plane_at((nk[0], nk[1], nk[2]))
                    if cand is None:
                        continue
                    d = abs(float(cand.normal @ (p_world - cand.centroid)))
                    if d < best_dist:
                        best, best_dist = cand, d
        if best is None or best_dist > self.config.max_match_distance:
            return None
        if viewpoint is not None and best.normal @ (np.asarray(viewpoint) - best.centroid) < 0.0:
            best = PlaneFeature(-best.normal, best.centroid, best.mse, best.n_points)
        return best
