import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ovseg3d.geometry import CameraIntrinsics, Frame, Pose


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish random rotation via QR with positive determinant."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def random_frame(rng, frame_id: int = 0, width: int = 64, height: int = 48,
                 invalid_fraction: float = 0.1) -> Frame:
    """Frame with a random pose and a random piecewise-smooth depth map."""
    intr = CameraIntrinsics(fx=rng.uniform(60, 120), fy=rng.uniform(60, 120),
                            cx=width / 2 + rng.uniform(-3, 3),
                            cy=height / 2 + rng.uniform(-3, 3),
                            width=width, height=height)
    depth = rng.uniform(0.5, 5.0, size=(height, width))
    mask = rng.random((height, width)) < invalid_fraction
    depth[mask] = 0.0
    rgb = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    pose = Pose(random_rotation(rng), rng.uniform(-2, 2, size=3))
    return Frame(frame_id, rgb, depth, pose, intr)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
