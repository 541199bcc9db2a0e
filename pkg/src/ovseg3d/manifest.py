"""Dataset manifests and run configuration.

A manifest is a JSON document describing one scene: camera intrinsics, the
depth encoding, a pose file (one row-major camera-to-world 4x4 per line),
the per-frame rgb/depth image paths, prompt-embedding files for both
roles, and optionally a ground-truth labeled cloud. All paths are
relative to the manifest's directory and must exist at load time.

RunConfig carries every knob of the pipeline, reads a flat TOML-style
key = value document, and serializes itself back next to the run outputs
for reproducibility.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ManifestError
from .geometry import CameraIntrinsics, Frame, Pose

POSE_CONVENTION = "camera_to_world"


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    stride: int = 50
    pixel_step: int = 4
    voxel: float = 0.01
    neighbors: int = 100
    smoothness: float = 0.05
    curvature_thresh: float = 1.0
    min_size: int = 50
    scales: Tuple[float, ...] = (1.5,)
    strategy: str = "min_entropy"
    temperature: float = 100.0
    occlusion_tol: float = 0.05
    min_visible: int = 20
    max_views: Optional[int] = None
    max_dist: float = 0.05
    seed: int = 0
    workers: int = 1
    direct_entropy_weights: bool = False
    model_spec: Optional[str] = None   # preprocess JSON of an exported backbone

    def validate(self) -> "RunConfig":
        from .fusion import STRATEGIES

        if self.stride < 1 or self.pixel_step < 1:
            raise ValueError("stride and pixel_step must be >= 1")
        if self.voxel <= 0 or self.occlusion_tol <= 0 or self.max_dist <= 0:
            raise ValueError("voxel, occlusion_tol and max_dist must be positive")
        if self.neighbors < 3 or self.min_size < 1 or self.min_visible < 1:
            raise ValueError("neighbors >= 3, min_size >= 1, min_visible >= 1")
        if self.smoothness <= 0 or self.temperature <= 0:
            raise ValueError("smoothness and temperature must be positive")
        if not self.scales or any(s < 1.0 for s in self.scales):
            raise ValueError("scales must be a non-empty list of factors >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        return self

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        values = _parse_flat_toml(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "scales" in values:
            scales = values["scales"]
            values["scales"] = tuple(float(s) for s in (
                scales if isinstance(scales, list) else [scales]))
        return cls(**values).validate()

    def override(self, **kwargs) -> "RunConfig":
        """New config with the given non-None fields replaced."""
        updates = {k: v for k, v in kwargs.items() if v is not None}
        if "scales" in updates:
            updates["scales"] = tuple(float(s) for s in updates["scales"])
        return replace(self, **updates).validate()

    def to_toml(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{f.name} = {_format_toml_value(value)}")
        return "\n".join(lines) + "\n"


def _format_toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_toml_value(v) for v in value) + "]"
    return json.dumps(str(value))


def _parse_flat_toml(text: str) -> Dict:
    """Parse the flat key = value subset of TOML used for run configs."""
    out: Dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        out[key.strip()] = _parse_toml_value(value.strip(), lineno)
    return out


def _parse_toml_value(token: str, lineno: int):
    if not token:
        raise ValueError(f"config line {lineno}: empty value")
    if token.startswith("["):
        if not token.endswith("]"):
            raise ValueError(f"config line {lineno}: unterminated list")
        inner = token[1:-1].strip()
        if not inner:
            return []
        return [_parse_toml_value(part.strip(), lineno)
                for part in inner.split(",")]
    if token.startswith('"') or token.startswith("'"):
        quote = token[0]
        if not token.endswith(quote) or len(token) < 2:
            raise ValueError(f"config line {lineno}: unterminated string")
        return token[1:-1]
    if "#" in token:
        return _parse_toml_value(token.split("#", 1)[0].strip(), lineno)
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ValueError(f"config line {lineno}: cannot parse value {token!r}")


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameEntry:
    id: int
    rgb_path: Path
    depth_path: Path


@dataclass
class Manifest:
    root: Path
    intrinsics: CameraIntrinsics
    depth_scale: float                  # integer units per meter in depth pngs
    pose_file: Path
    frames: List[FrameEntry]
    evaluation_prompts: Path
    entropy_prompts: Path
    ground_truth_cloud: Optional[Path] = None
    mock_concepts: Optional[List[str]] = None
    mock_seed: int = 0
    mock_dimension: int = 64
    _poses: Optional[List[Pose]] = field(default=None, repr=False)

    def poses(self) -> List[Pose]:
        if self._poses is None:
            rows = np.loadtxt(self.pose_file).reshape(-1, 16)
            if len(rows) < len(self.frames):
                raise ManifestError(
                    f"pose file has {len(rows)} poses for {len(self.frames)} frames")
            self._poses = [Pose.from_matrix(r.reshape(4, 4)) for r in rows]
        return self._poses

    def load_frame(self, index: int) -> Frame:
        from PIL import Image

        entry = self.frames[index]
        rgb = np.asarray(Image.open(entry.rgb_path).convert("RGB"), dtype=np.uint8)
        depth_raw = np.asarray(Image.open(entry.depth_path))
        depth = depth_raw.astype(np.float64) / self.depth_scale
        return Frame(entry.id, rgb, depth, self.poses()[index], self.intrinsics)

    def load_frames(self) -> List[Frame]:
        return [self.load_frame(i) for i in range(len(self.frames))]


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    root = path.parent

    def resolve(key, required=True) -> Optional[Path]:
        value = payload.get(key)
        if value is None:
            if required:
                raise ManifestError(f"manifest is missing {key!r}")
            return None
        p = root / value
        if not p.exists():
            raise ManifestError(f"manifest references missing file: {p}")
        return p

    try:
        intr = CameraIntrinsics(**payload["intrinsics"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"bad intrinsics: {exc}") from exc

    convention = payload.get("pose_convention", POSE_CONVENTION)
    if convention != POSE_CONVENTION:
        raise ManifestError(
            f"unsupported pose convention {convention!r}; convert the dataset "
            f"to {POSE_CONVENTION} first")

    frames = []
    last_id = None
    for entry in payload.get("frames", []):
        fid = int(entry["id"])
        if last_id is not None and fid <= last_id:
            raise ManifestError("frame ids must be strictly increasing")
        last_id = fid
        rgb = root / entry["rgb"]
        depth = root / entry["depth"]
        for p in (rgb, depth):
            if not p.exists():
                raise ManifestError(f"manifest references missing file: {p}")
        frames.append(FrameEntry(fid, rgb, depth))
    if not frames:
        raise ManifestError("manifest lists no frames")

    return Manifest(
        root=root,
        intrinsics=intr,
        depth_scale=float(payload.get("depth_scale", 1000.0)),
        pose_file=resolve("pose_file"),
        frames=frames,
        evaluation_prompts=resolve("evaluation_prompts"),
        entropy_prompts=resolve("entropy_prompts"),
        ground_truth_cloud=resolve("ground_truth_cloud", required=False),
        mock_concepts=payload.get("mock_concepts"),
        mock_seed=int(payload.get("mock_seed", 0)),
        mock_dimension=int(payload.get("mock_dimension", 64)),
    )
