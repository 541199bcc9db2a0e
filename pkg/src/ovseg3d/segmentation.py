"""Class-free geometric instance segmentation by region growing.

Normals and curvature come from PCA over k-nearest neighborhoods; regions
then grow across the k-NN graph while neighbor normals stay within a
smoothness angle. Defaults follow the reference configuration: 100
neighbors, 0.05 rad smoothness, curvature threshold 1.0 (which, with
curvature normalized to [0, 1/3], disables the curvature gate).
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np
from scipy.spatial import cKDTree

from .cloud import UNASSIGNED, LabeledCloud

DEFAULT_NEIGHBORS = 100
DEFAULT_SMOOTHNESS = 0.05   # radians
DEFAULT_CURVATURE = 1.0
DEFAULT_MIN_SIZE = 50

_DEGENERATE_NORMAL = np.array([0.0, 0.0, 1.0])
_REL_EPS = 1e-9


@dataclass
class PointGeometry:
    """Per-point surface normal, curvature, and degeneracy flag.

    curvature is lambda0 / (lambda0 + lambda1 + lambda2) of the local
    covariance eigenvalues (ascending), so it lives in [0, 1/3].
    """

    normals: np.ndarray      # (N, 3) unit vectors
    curvatures: np.ndarray   # (N,) in [0, 1/3]
    degenerate: np.ndarray   # (N,) bool


@dataclass
class Segmentation:
    """Dense segment ids 0..count-1 per point, -1 for unassigned."""

    segment_ids: np.ndarray
    count: int

    def __post_init__(self):
        self.segment_ids = np.ascontiguousarray(self.segment_ids, dtype=np.int32)
        present = np.unique(self.segment_ids)
        expected = np.arange(self.count)
        assigned = present[present >= 0]
        if not np.array_equal(assigned, expected):
            raise ValueError("segment ids must be dense 0..count-1 plus -1")

    def indices(self, segment_id: int) -> np.ndarray:
        return np.flatnonzero(self.segment_ids == segment_id)

    @property
    def segments(self) -> List[np.ndarray]:
        return [self.indices(s) for s in range(self.count)]


def estimate_geometry(cloud: LabeledCloud, k: int = DEFAULT_NEIGHBORS,
                      viewpoint: Optional[np.ndarray] = None) -> PointGeometry:
    """PCA normals and curvature over k-nearest neighborhoods.

    Normals are oriented toward the camera center of each point's source
    frame (recorded during accumulation); points without a known camera
    fall back to `viewpoint` (default: the origin). Degenerate
    neighborhoods (coincident or colinear points) get a fixed +z normal,
    zero curvature, and the degenerate flag.
    """
    n = len(cloud)
    if k < 3:
        raise ValueError("k must be >= 3")
    if n < k:
        raise ValueError(f"cloud has {n} points, need at least k={k}")

    tree = cKDTree(cloud.positions)
    _, nbr = tree.query(cloud.positions, k=k)

    pts = cloud.positions[nbr]                      # (N, k, 3)
    centered = pts - pts.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    w, v = np.linalg.eigh(cov)                      # ascending eigenvalues
    w = np.clip(w, 0.0, None)

    total = w.sum(axis=1)
    degenerate = (total <= 0) | (w[:, 1] <= _REL_EPS * np.maximum(total, 1e-300))

    normals = v[:, :, 0].copy()
    curv = np.zeros(n)
    ok = ~degenerate
    curv[ok] = w[ok, 0] / total[ok]
    normals[degenerate] = _DEGENERATE_NORMAL

    # orient toward the observing camera (or the fallback viewpoint)
    if viewpoint is None:
        viewpoint = np.zeros(3)
    targets = np.broadcast_to(np.asarray(viewpoint, dtype=np.float64), (n, 3)).copy()
    if cloud.camera_centers:
        centers = cloud.camera_centers
        for fid in np.unique(cloud.frame_ids):
            if int(fid) in centers:
                targets[cloud.frame_ids == fid] = centers[int(fid)]
    flip = np.einsum("ij,ij->i", normals, targets - cloud.positions) < 0
    normals[flip] *= -1.0

    return PointGeometry(normals, curv, degenerate)


def region_grow(cloud: LabeledCloud, geometry: PointGeometry,
                k: int = DEFAULT_NEIGHBORS,
                smoothness: float = DEFAULT_SMOOTHNESS,
                curvature_thresh: float = DEFAULT_CURVATURE,
                min_size: int = DEFAULT_MIN_SIZE) -> Segmentation:
    """Grow segments over the k-NN graph.

    Seeds are processed in ascending curvature order. A neighbor q of a
    front point p joins p's region when angle(normal_p, normal_q) <=
    smoothness; q extends the growth front only if its curvature is at
    most curvature_thresh. Regions smaller than min_size are dissolved to
    unassigned. Segment ids are dense, in order of region creation.
    """
    if smoothness <= 0:
        raise ValueError("smoothness must be positive")
    if min_size < 1:
        raise ValueError("min_size must be >= 1")
    n = len(cloud)
    if n == 0:
        return Segmentation(np.empty(0, dtype=np.int32), 0)
    k = min(k, n)

    tree = cKDTree(cloud.positions)
    _, nbr = tree.query(cloud.positions, k=k)
    if k == 1:
        nbr = nbr[:, None]

    cos_thresh = np.cos(smoothness)
    normals = geometry.normals
    can_extend = geometry.curvatures <= curvature_thresh

    labels = np.full(n, UNASSIGNED, dtype=np.int32)
    seed_order = np.argsort(geometry.curvatures, kind="stable")

    region = 0
    for seed in seed_order:
        if labels[seed] != UNASSIGNED:
            continue
        labels[seed] = region
        front = deque([seed])
        while front:
            p = front.popleft()
            cand = nbr[p]
            cand = cand[labels[cand] == UNASSIGNED]
            if cand.size == 0:
                continue
            join = cand[normals[cand] @ normals[p] >= cos_thresh]
            if join.size == 0:
                continue
            labels[join] = region
            front.extend(join[can_extend[join]].tolist())
        region += 1

    # dissolve undersized regions, then renumber densely in creation order
    sizes = np.bincount(labels[labels >= 0], minlength=region)
    keep = np.flatnonzero(sizes >= min_size)
    remap = np.full(region, UNASSIGNED, dtype=np.int32)
    remap[keep] = np.arange(len(keep), dtype=np.int32)
    out = np.where(labels >= 0, remap[np.clip(labels, 0, None)], UNASSIGNED)
    return Segmentation(out.astype(np.int32), len(keep))


def apply_segmentation(cloud: LabeledCloud, seg: Segmentation) -> None:
    """Write segment ids into the cloud's segment column."""
    if len(seg.segment_ids) != len(cloud):
        raise ValueError("segmentation size does not match cloud")
    cloud.segment_ids[:] = seg.segment_ids
