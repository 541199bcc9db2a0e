"""Per-segment view association, bounding-box scaling, and cropping.

For each 3D segment this module finds the frames that actually observed it
(reprojection plus depth-consistency), draws a tight 2D box around the
visible projections, scales that box for context, and cuts the crop that
gets embedded downstream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import DEFAULT_OCCLUSION_TOL, Frame, project_points, visible_mask

DEFAULT_SCALE = 1.5          # single-crop factor found most effective
MULTI_SCALE_SET = (1.0, 1.2, 1.5, 1.8, 2.0)
DEFAULT_MIN_VISIBLE = 20     # points; guards against one-pixel ghost views
_MIN_SIDE = 2                # pixels; degenerate boxes are expanded to this


@dataclass(frozen=True)
class BoundingBox:
    """Pixel-aligned box, inclusive-exclusive on both axes."""

    u_min: int
    v_min: int
    u_max: int
    v_max: int

    def __post_init__(self):
        if self.u_min >= self.u_max or self.v_min >= self.v_max:
            raise ValueError(f"empty bounding box {self}")

    @property
    def width(self) -> int:
        return self.u_max - self.u_min

    @property
    def height(self) -> int:
        return self.v_max - self.v_min

    def contains(self, other: "BoundingBox") -> bool:
        return (self.u_min <= other.u_min and self.v_min <= other.v_min
                and self.u_max >= other.u_max and self.v_max >= other.v_max)


@dataclass(frozen=True)
class SegmentView:
    """One qualifying observation of a segment: where, how big, and the crop."""

    segment_id: int
    frame_id: int
    bbox: BoundingBox        # post-scaling, clipped
    visible_points: int
    crop: np.ndarray         # H x W x 3 uint8, dims equal the clipped bbox


def associate(segment_points: np.ndarray, frames: Sequence[Frame],
              tol: float = DEFAULT_OCCLUSION_TOL,
              min_visible: int = DEFAULT_MIN_VISIBLE,
              ) -> List[Tuple[int, BoundingBox, int]]:
    """Find the frames observing a segment.

    Returns (frame_id, tight bbox over visible projections, visible count)
    for every frame where at least min_visible segment points pass the
    visibility test. An empty list means the segment was never observed
    (callers leave it unlabeled).
    """
    segment_points = np.asarray(segment_points, dtype=np.float64)
    if len(segment_points) == 0:
        raise ValueError("segment has no points")
    out = []
    for frame in frames:
        vis = visible_mask(segment_points, frame, tol)
        count = int(vis.sum())
        if count < min_visible:
            continue
        uv, _, _, _ = project_points(segment_points[vis], frame)
        u_min = int(math.floor(uv[:, 0].min()))
        v_min = int(math.floor(uv[:, 1].min()))
        u_max = int(math.floor(uv[:, 0].max())) + 1
        v_max = int(math.floor(uv[:, 1].max())) + 1
        out.append((frame.id, BoundingBox(u_min, v_min, u_max, v_max), count))
    return out


def scale_bbox(bbox: BoundingBox, factor: float,
               image_width: int, image_height: int) -> BoundingBox:
    """Scale a box about its center, then clip to the image.

    Clipping happens after scaling so context grows symmetrically until an
    image edge is hit. Results thinner than 2 px are expanded to 2 px.
    """
    if factor < 1.0:
        raise ValueError("scale factor must be >= 1")
    cu = (bbox.u_min + bbox.u_max) / 2.0
    cv = (bbox.v_min + bbox.v_max) / 2.0
    half_w = bbox.width * factor / 2.0
    half_h = bbox.height * factor / 2.0
    u_min = int(math.floor(cu - half_w))
    u_max = int(math.ceil(cu + half_w))
    v_min = int(math.floor(cv - half_h))
    v_max = int(math.ceil(cv + half_h))

    u_min, u_max = max(u_min, 0), min(u_max, image_width)
    v_min, v_max = max(v_min, 0), min(v_max, image_height)

    u_min, u_max = _ensure_side(u_min, u_max, image_width)
    v_min, v_max = _ensure_side(v_min, v_max, image_height)
    return BoundingBox(u_min, v_min, u_max, v_max)


def _ensure_side(lo: int, hi: int, limit: int) -> Tuple[int, int]:
    """Expand a clipped interval to the 2 px minimum, staying in bounds."""
    while hi - lo < _MIN_SIDE:
        if hi < limit:
            hi += 1
        elif lo > 0:
            lo -= 1
        else:
            break
    return lo, hi


def crop(frame: Frame, bbox: BoundingBox) -> np.ndarray:
    """Pixel-exact sub-image copy for a clipped, valid box."""
    intr = frame.intrinsics
    if bbox.u_min < 0 or bbox.v_min < 0 or bbox.u_max > intr.width or bbox.v_max > intr.height:
        raise ValueError(f"bbox {bbox} exceeds {intr.width}x{intr.height} image")
    return np.array(frame.rgb[bbox.v_min:bbox.v_max, bbox.u_min:bbox.u_max])


def collect_views(segment_id: int, segment_points: np.ndarray,
                  frames: Sequence[Frame], scale: float = DEFAULT_SCALE,
                  tol: float = DEFAULT_OCCLUSION_TOL,
                  min_visible: int = DEFAULT_MIN_VISIBLE,
                  max_views: Optional[int] = None) -> List[SegmentView]:
    """Associate, scale, and crop in one pass for a segment.

    max_views, when given, keeps only the top-N views by visible-point
    count (ties by frame order); by default all qualifying views are kept.
    """
    entries = associate(segment_points, frames, tol, min_visible)
    if max_views is not None and len(entries) > max_views:
        order = sorted(range(len(entries)), key=lambda i: (-entries[i][2], i))
        entries = [entries[i] for i in sorted(order[:max_views])]
    by_id = {f.id: f for f in frames}
    views = []
    for frame_id, raw, count in entries:
        frame = by_id[frame_id]
        box = scale_bbox(raw, scale, frame.intrinsics.width, frame.intrinsics.height)
        views.append(SegmentView(segment_id, frame_id, box, count, crop(frame, box)))
    return views
