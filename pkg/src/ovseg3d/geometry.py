"""Pinhole camera model, rigid poses, projection and depth visibility.

Conventions, fixed for the whole package:

  * camera frame: x right, y down, z forward (camera looks along +z)
  * pixel (u, v): u runs along image width (columns), v along height (rows)
  * poses are camera-to-world
  * depth maps are metric (meters); a value of 0 marks an invalid pixel

Depth lookups use nearest-pixel rounding, never interpolation: depth maps
have step discontinuities and interpolating across them invents surfaces
that do not exist.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

DEFAULT_OCCLUSION_TOL = 0.05  # meters, same order as typical RGB-D noise

_ORTHO_TOL = 1e-6


def _readonly(a: np.ndarray, dtype, shape) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=dtype)
    if out.shape != shape:
        raise ValueError(f"expected array of shape {shape}, got {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform: world = R @ p_cam + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _readonly(self.rotation, np.float64, (3, 3)))
        object.__setattr__(self, "translation", _readonly(self.translation, np.float64, (3,)))
        err = np.abs(self.rotation.T @ self.rotation - np.eye(3)).max()
        if err > _ORTHO_TOL:
            raise ValueError(f"rotation is not orthonormal (|R^T R - I| = {err:.2e})")
        det = np.linalg.det(self.rotation)
        if abs(det - 1.0) > _ORTHO_TOL:
            raise ValueError(f"rotation determinant is {det:.8f}, expected +1")

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"expected 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.translation

    def camera_to_world(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(pts, dtype=np.float64) @ self.rotation.T + self.translation

    def world_to_camera(self, pts: np.ndarray) -> np.ndarray:
        return (np.asarray(pts, dtype=np.float64) - self.translation) @ self.rotation

    def compose(self, other: "Pose") -> "Pose":
        """self ∘ other (apply other first, then self)."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)


@dataclass(frozen=True)
class Frame:
    """One posed RGB-D observation."""

    id: int
    rgb: np.ndarray          # H x W x 3, uint8
    depth: np.ndarray        # H x W, meters, 0 = invalid
    pose: Pose
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        h, w = self.intrinsics.height, self.intrinsics.width
        object.__setattr__(self, "rgb", _readonly(self.rgb, np.uint8, (h, w, 3)))
        object.__setattr__(self, "depth", _readonly(self.depth, np.float64, (h, w)))
        if not np.all(np.isfinite(self.depth)) or self.depth.min() < 0:
            raise ValueError("depth values must be finite and >= 0")


class PixelObservation(NamedTuple):
    """A projected point: pixel coordinates and depth along camera +z."""

    u: float
    v: float
    z: float
    on_image: bool


def backproject(frame: Frame, u: float, v: float) -> Optional[np.ndarray]:
    """Lift pixel (u, v) of a frame to a world-frame 3-vector.

    Returns None when the depth at (u, v) is invalid. Out-of-bounds pixels
    raise ValueError.
    """
    intr = frame.intrinsics
    if not (0 <= u < intr.width and 0 <= v < intr.height):
        raise ValueError(f"pixel ({u}, {v}) outside {intr.width}x{intr.height} image")
    d = frame.depth[int(v), int(u)]
    if d <= 0 or not np.isfinite(d):
        return None
    p_cam = np.array([(u - intr.cx) * d / intr.fx,
                      (v - intr.cy) * d / intr.fy,
                      d])
    return frame.pose.camera_to_world(p_cam)


def project(point: np.ndarray, frame: Frame) -> Optional[PixelObservation]:
    """Project a world point into a frame.

    Returns None for points at or behind the camera (z <= 0); otherwise a
    PixelObservation whose on_image flag says whether (u, v) falls inside
    [0, width) x [0, height).
    """
    point = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(point)):
        raise ValueError("point must be finite")
    x, y, z = frame.pose.world_to_camera(point)
    if z <= 0:
        return None
    intr = frame.intrinsics
    u = intr.fx * x / z + intr.cx
    v = intr.fy * y / z + intr.cy
    on = (0 <= u < intr.width) and (0 <= v < intr.height)
    return PixelObservation(u, v, z, on)


def project_points(points: np.ndarray, frame: Frame):
    """Vectorized projection of (N, 3) world points.

    Returns (uv (N, 2), z (N,), valid (N,), on_image (N,)): valid means
    strictly in front of the camera; on_image additionally means inside the
    image bounds. uv and z are meaningful only where valid.
    """
    points = np.asarray(points, dtype=np.float64)
    cam = frame.pose.world_to_camera(points)
    z = cam[:, 2]
    valid = z > 0
    intr = frame.intrinsics
    uv = np.empty((len(points), 2))
    with np.errstate(divide="ignore", invalid="ignore"):
        uv[:, 0] = intr.fx * cam[:, 0] / z + intr.cx
        uv[:, 1] = intr.fy * cam[:, 1] / z + intr.cy
    on = valid & (uv[:, 0] >= 0) & (uv[:, 0] < intr.width) \
               & (uv[:, 1] >= 0) & (uv[:, 1] < intr.height)
    return uv, z, valid, on


def visible_mask(points: np.ndarray, frame: Frame,
                 tol: float = DEFAULT_OCCLUSION_TOL) -> np.ndarray:
    """Depth-consistency visibility test for (N, 3) world points.

    A point is visible when it projects onto the image, the depth map has a
    valid measurement at the nearest pixel, and the projected depth agrees
    with that measurement within tol meters.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    uv, z, _, on = project_points(points, frame)
    vis = np.zeros(len(points), dtype=bool)
    if not on.any():
        return vis
    iu = np.rint(uv[on, 0]).astype(np.intp)
    iv = np.rint(uv[on, 1]).astype(np.intp)
    intr = frame.intrinsics
    # rounding can push half-pixel border points one past the last index
    inb = (iu >= 0) & (iu < intr.width) & (iv >= 0) & (iv < intr.height)
    d = np.zeros(inb.shape)
    d[inb] = frame.depth[iv[inb], iu[inb]]
    ok = inb & (d > 0) & (np.abs(z[on] - d) <= tol)
    vis[np.flatnonzero(on)] = ok
    return vis


def visible(point: np.ndarray, frame: Frame,
            tol: float = DEFAULT_OCCLUSION_TOL) -> bool:
    """Scalar form of visible_mask for a single world point."""
    return bool(visible_mask(np.asarray(point, dtype=np.float64)[None, :], frame, tol)[0])
