"""Point-cloud accumulation from posed RGB-D frames and voxel downsampling.

Clouds are stored column-wise (one array per attribute) so geometry code can
stay vectorized; ``CloudPoint`` is a per-point view for convenience.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Sequence

import numpy as np

from .errors import EmptyCloudError
from .geometry import Frame

UNASSIGNED = -1


class CloudPoint(NamedTuple):
    position: np.ndarray
    color: np.ndarray
    frame_id: int
    segment_id: int
    class_id: int


@dataclass
class LabeledCloud:
    """World-frame points with color, provenance, and label columns.

    positions: (N, 3) float64; colors: (N, 3) uint8; frame_ids, segment_ids,
    class_ids: (N,) int32 with -1 meaning unassigned; pixels: (N, 2) int32
    source pixel (u, v) of each point, -1 when unknown.
    """

    positions: np.ndarray
    colors: np.ndarray
    frame_ids: np.ndarray
    segment_ids: np.ndarray
    class_ids: np.ndarray
    pixels: np.ndarray
    stride: int = 1
    frame_count: int = 0
    camera_centers: Dict[int, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.positions)
        self.positions = np.ascontiguousarray(self.positions, dtype=np.float64).reshape(n, 3)
        self.colors = np.ascontiguousarray(self.colors, dtype=np.uint8).reshape(n, 3)
        self.frame_ids = np.ascontiguousarray(self.frame_ids, dtype=np.int32).reshape(n)
        self.segment_ids = np.ascontiguousarray(self.segment_ids, dtype=np.int32).reshape(n)
        self.class_ids = np.ascontiguousarray(self.class_ids, dtype=np.int32).reshape(n)
        self.pixels = np.ascontiguousarray(self.pixels, dtype=np.int32).reshape(n, 2)
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if (self.segment_ids < -1).any() or (self.class_ids < -1).any():
            raise ValueError("segment/class ids must be >= -1")

    def __len__(self) -> int:
        return len(self.positions)

    def point(self, i: int) -> CloudPoint:
        return CloudPoint(self.positions[i], self.colors[i],
                          int(self.frame_ids[i]), int(self.segment_ids[i]),
                          int(self.class_ids[i]))

    def take(self, idx: np.ndarray) -> "LabeledCloud":
        """New cloud holding the rows at idx (provenance carried over)."""
        return LabeledCloud(self.positions[idx], self.colors[idx],
                            self.frame_ids[idx], self.segment_ids[idx],
                            self.class_ids[idx], self.pixels[idx],
                            stride=self.stride, frame_count=self.frame_count,
                            camera_centers=dict(self.camera_centers))

    @classmethod
    def from_arrays(cls, positions: np.ndarray,
                    colors: Optional[np.ndarray] = None,
                    frame_ids: Optional[np.ndarray] = None,
                    class_ids: Optional[np.ndarray] = None) -> "LabeledCloud":
        """Convenience constructor for synthetic/test clouds."""
        n = len(positions)
        if colors is None:
            colors = np.zeros((n, 3), dtype=np.uint8)
        if frame_ids is None:
            frame_ids = np.full(n, UNASSIGNED, dtype=np.int32)
        if class_ids is None:
            class_ids = np.full(n, UNASSIGNED, dtype=np.int32)
        return cls(positions, colors, frame_ids,
                   np.full(n, UNASSIGNED, dtype=np.int32), class_ids,
                   np.full((n, 2), -1, dtype=np.int32))


def accumulate(frames: Sequence[Frame], stride: int = 50,
               pixel_step: int = 4) -> LabeledCloud:
    """Backproject every pixel_step-th pixel of every stride-th frame.

    Pixels with invalid depth (0 or non-finite) are skipped; every point
    records the frame it came from and its source pixel.
    """
    if stride < 1 or pixel_step < 1:
        raise ValueError("stride and pixel_step must be >= 1")
    frames = list(frames)
    if not frames:
        raise ValueError("frame sequence is empty")

    sampled = frames[::stride]
    pos_chunks, col_chunks, fid_chunks, pix_chunks = [], [], [], []
    centers: Dict[int, np.ndarray] = {}
    for frame in sampled:
        intr = frame.intrinsics
        centers[frame.id] = frame.pose.center.copy()
        us = np.arange(0, intr.width, pixel_step)
        vs = np.arange(0, intr.height, pixel_step)
        uu, vv = np.meshgrid(us, vs)
        uu, vv = uu.ravel(), vv.ravel()
        d = frame.depth[vv, uu]
        ok = np.isfinite(d) & (d > 0)
        if not ok.any():
            continue
        uu, vv, d = uu[ok], vv[ok], d[ok]
        cam = np.stack([(uu - intr.cx) * d / intr.fx,
                        (vv - intr.cy) * d / intr.fy,
                        d], axis=1)
        pos_chunks.append(frame.pose.camera_to_world(cam))
        col_chunks.append(frame.rgb[vv, uu])
        fid_chunks.append(np.full(len(uu), frame.id, dtype=np.int32))
        pix_chunks.append(np.stack([uu, vv], axis=1).astype(np.int32))

    if not pos_chunks:
        raise EmptyCloudError("no valid depth anywhere in the sampled frames")

    positions = np.concatenate(pos_chunks)
    n = len(positions)
    return LabeledCloud(positions,
                        np.concatenate(col_chunks),
                        np.concatenate(fid_chunks),
                        np.full(n, UNASSIGNED, dtype=np.int32),
                        np.full(n, UNASSIGNED, dtype=np.int32),
                        np.concatenate(pix_chunks),
                        stride=stride, frame_count=len(sampled),
                        camera_centers=centers)


def voxel_downsample(cloud: LabeledCloud, voxel: float) -> LabeledCloud:
    """Keep at most one point per voxel cell.

    The representative is the input point nearest the centroid of its cell
    (ties broken by lowest input index), so frame provenance survives.
    Cells are keyed by floor(position / voxel).
    """
    if voxel <= 0:
        raise ValueError("voxel size must be positive")
    if len(cloud) == 0:
        return cloud.take(np.array([], dtype=np.intp))

    keys = np.floor(cloud.positions / voxel).astype(np.int64)
    # collapse the 3-int key to one id per occupied cell
    _, cell, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)

    centroids = np.zeros((len(counts), 3))
    np.add.at(centroids, cell, cloud.positions)
    centroids /= counts[:, None]

    d2 = np.einsum("ij,ij->i", cloud.positions - centroids[cell],
                   cloud.positions - centroids[cell])
    idx = np.arange(len(cloud))
    order = np.lexsort((idx, d2, cell))  # cell, then distance, then input index
    first = np.searchsorted(cell[order], np.arange(len(counts)))
    keep = np.sort(order[first])
    return cloud.take(keep)
