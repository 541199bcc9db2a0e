"""Synthetic scenes and planted-concept view bundles.

Everything here exists so the full pipeline and the study harness run with
no dataset and no neural backend:

  * geometric clouds (planes, spheres, boxes) for segmentation tests;
  * rendered RGB-D scenes of colored rectangular cards, one card per
    concept, whose palette color the mock embedder decodes back; cameras
    use identity rotation with translational offsets, which keeps the
    renderer exact (axis-aligned rectangles stay rectangles);
  * randomized view bundles where exactly one view per object carries the
    correct concept and the others carry off-vocabulary distractors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cloud import LabeledCloud, UNASSIGNED
from .embedders import MockEmbedder, concept_color
from .features import (ROLE_ENTROPY, ROLE_EVALUATION, DEFAULT_TEMPERATURE,
                       PromptList, build_prompt_list)
from .fusion import ViewBundle, build_view_bundle
from .geometry import CameraIntrinsics, Frame, Pose

DEFAULT_INTRINSICS = CameraIntrinsics(fx=400.0, fy=400.0, cx=320.0, cy=240.0,
                                      width=640, height=480)


# ---------------------------------------------------------------------------
# geometric clouds
# ---------------------------------------------------------------------------

def plane_cloud(origin, u_axis, v_axis, nu: int, nv: int,
                jitter: float = 0.0, rng=None) -> np.ndarray:
    """Grid of nu*nv points spanning origin + [0,1]*u_axis + [0,1]*v_axis."""
    origin = np.asarray(origin, dtype=np.float64)
    u_axis = np.asarray(u_axis, dtype=np.float64)
    v_axis = np.asarray(v_axis, dtype=np.float64)
    uu, vv = np.meshgrid(np.linspace(0, 1, nu), np.linspace(0, 1, nv))
    pts = origin + uu.ravel()[:, None] * u_axis + vv.ravel()[:, None] * v_axis
    if jitter > 0:
        rng = np.random.default_rng(0) if rng is None else rng
        pts = pts + jitter * rng.standard_normal(pts.shape)
    return pts


def sphere_cloud(center, radius: float, n: int, rng=None) -> np.ndarray:
    """n points distributed over a sphere (area-uniform)."""
    rng = np.random.default_rng(0) if rng is None else rng
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.asarray(center, dtype=np.float64) + radius * d


def box_cloud(center, size, pitch: float) -> np.ndarray:
    """Points sampled on all six faces of an axis-aligned box."""
    center = np.asarray(center, dtype=np.float64)
    size = np.asarray(size, dtype=np.float64)
    half = size / 2.0
    faces = []
    for axis in range(3):
        a, b = (axis + 1) % 3, (axis + 2) % 3
        na = max(2, int(round(size[a] / pitch)) + 1)
        nb = max(2, int(round(size[b] / pitch)) + 1)
        aa, bb = np.meshgrid(np.linspace(-half[a], half[a], na),
                             np.linspace(-half[b], half[b], nb))
        for sign in (-1.0, 1.0):
            pts = np.zeros((aa.size, 3))
            pts[:, axis] = sign * half[axis]
            pts[:, a] = aa.ravel()
            pts[:, b] = bb.ravel()
            faces.append(pts)
    return center + np.concatenate(faces)


# ---------------------------------------------------------------------------
# rendered card scenes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Card:
    """Axis-aligned rectangle at constant world z, painted one color."""

    label: str
    center: np.ndarray        # (3,) world
    width: float
    height: float
    color: np.ndarray         # (3,) uint8

    @property
    def x_range(self) -> Tuple[float, float]:
        return self.center[0] - self.width / 2, self.center[0] + self.width / 2

    @property
    def y_range(self) -> Tuple[float, float]:
        return self.center[1] - self.height / 2, self.center[1] + self.height / 2


@dataclass
class CardScene:
    """A set of labeled cards plus the cameras that observed them."""

    cards: List[Card]
    intrinsics: CameraIntrinsics = DEFAULT_INTRINSICS

    @property
    def labels(self) -> List[str]:
        return [c.label for c in self.cards]

    def render(self, frame_id: int, camera_center) -> Frame:
        """Rasterize the cards from a camera at camera_center (identity
        rotation, looking along +z). Background depth stays 0 (invalid)."""
        intr = self.intrinsics
        cam = np.asarray(camera_center, dtype=np.float64)
        rgb = np.zeros((intr.height, intr.width, 3), dtype=np.uint8)
        depth = np.zeros((intr.height, intr.width), dtype=np.float64)
        order = sorted(self.cards, key=lambda c: -(c.center[2] - cam[2]))
        for card in order:  # far to near; nearer cards overwrite
            z = card.center[2] - cam[2]
            if z <= 0:
                continue
            x0, x1 = card.x_range
            y0, y1 = card.y_range
            u0 = int(np.ceil(intr.fx * (x0 - cam[0]) / z + intr.cx))
            u1 = int(np.floor(intr.fx * (x1 - cam[0]) / z + intr.cx)) + 1
            v0 = int(np.ceil(intr.fy * (y0 - cam[1]) / z + intr.cy))
            v1 = int(np.floor(intr.fy * (y1 - cam[1]) / z + intr.cy)) + 1
            u0, v0 = max(u0, 0), max(v0, 0)
            u1, v1 = min(u1, intr.width), min(v1, intr.height)
            if u0 >= u1 or v0 >= v1:
                continue
            rgb[v0:v1, u0:u1] = card.color
            depth[v0:v1, u0:u1] = z
        pose = Pose(np.eye(3), cam)
        return Frame(frame_id, rgb, depth, pose, intr)

    def frames(self, camera_centers: Sequence) -> List[Frame]:
        return [self.render(i, c) for i, c in enumerate(camera_centers)]

    def ground_truth_cloud(self, pitch: float = 0.01) -> LabeledCloud:
        """Grid-sample every card surface; class_id = card index."""
        pos, cls = [], []
        for idx, card in enumerate(self.cards):
            nu = max(2, int(round(card.width / pitch)) + 1)
            nv = max(2, int(round(card.height / pitch)) + 1)
            x0, _ = card.x_range
            y0, _ = card.y_range
            pts = plane_cloud(np.array([x0, y0, card.center[2]]),
                              np.array([card.width, 0, 0]),
                              np.array([0, card.height, 0]), nu, nv)
            pos.append(pts)
            cls.append(np.full(len(pts), idx, dtype=np.int32))
        positions = np.concatenate(pos)
        return LabeledCloud.from_arrays(positions, class_ids=np.concatenate(cls))


def three_card_scene(labels: Sequence[str] = ("chair", "table", "lamp"),
                     z: float = 2.0, spacing: float = 1.1,
                     size: float = 0.6) -> CardScene:
    """The canonical 3-object scene used by the end-to-end mock pipeline."""
    labels = list(labels)
    if len(labels) != 3:
        raise ValueError("three_card_scene wants exactly 3 labels")
    cards = [Card(label, np.array([(i - 1) * spacing, 0.0, z]), size, size,
                  concept_color(i))
             for i, label in enumerate(labels)]
    return CardScene(cards)


def scene_camera_centers(n: int, radius: float = 0.25) -> List[np.ndarray]:
    """n camera centers on a small circle in the z=0 plane (identity
    rotation keeps every card visible)."""
    angles = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return [np.array([radius * np.cos(a), radius * np.sin(a), 0.0])
            for a in angles]


# ---------------------------------------------------------------------------
# planted-concept view bundles
# ---------------------------------------------------------------------------

@dataclass
class PlantedBundles:
    """Randomized bundles: one correct view per object, distractor rest."""

    bundles: List[ViewBundle]
    gt_labels: List[str]
    embedder: MockEmbedder
    eval_prompts: PromptList
    entropy_prompts: PromptList          # contains the planted concepts
    off_vocab_prompts: PromptList        # entropy-role list without them
    correct_positions: List[int]


def make_planted_bundles(n_objects: int = 60, views_per_object: int = 5,
                         n_concepts: Optional[int] = None,
                         n_distractors: Optional[int] = None,
                         noise: float = 0.05, dimension: int = 64,
                         seed: int = 0,
                         temperature: float = DEFAULT_TEMPERATURE,
                         ) -> PlantedBundles:
    """Build the Study 2/3 mock: per object, exactly one of V views carries
    the object's concept; the other views carry distinct distractor
    concepts that the entropy prompt list does not contain. All views share
    the same noise level, so plain averaging has no way to tell them apart
    while the entropy list does.

    By default every object gets its own concept and every wrong view its
    own distractor, which keeps selection statistics independent across
    objects; pass explicit pool sizes to share them instead.
    """
    if n_concepts is None:
        n_concepts = n_objects
    if n_distractors is None:
        n_distractors = n_objects * (views_per_object - 1)
    n_distractors = max(n_distractors, views_per_object - 1, 1)
    rng = np.random.default_rng(seed)
    concepts = [f"object_{i:03d}" for i in range(n_concepts)]
    distractors = [f"distractor_{i:04d}" for i in range(n_distractors)]
    off_vocab = [f"unrelated_{i:03d}" for i in range(len(concepts))]
    embedder = MockEmbedder(concepts + distractors, dimension=dimension,
                            seed=seed, noise=noise)

    eval_prompts = build_prompt_list(concepts + distractors, embedder,
                                     role=ROLE_EVALUATION)
    entropy_prompts = build_prompt_list(concepts, embedder, role=ROLE_ENTROPY)
    off_vocab_prompts = build_prompt_list(off_vocab, embedder, role=ROLE_ENTROPY)

    unique_pools = (n_concepts >= n_objects
                    and n_distractors >= n_objects * (views_per_object - 1))
    bundles, gt_labels, positions = [], [], []
    for obj in range(n_objects):
        if unique_pools:
            concept = concepts[obj]
            wrong = np.arange(obj * (views_per_object - 1),
                              (obj + 1) * (views_per_object - 1))
        else:
            concept = concepts[int(rng.integers(len(concepts)))]
            wrong = rng.choice(len(distractors), size=views_per_object - 1,
                               replace=False)
        correct_at = int(rng.integers(views_per_object))
        features = []
        w = 0
        for view in range(views_per_object):
            if view == correct_at:
                name = concept
            else:
                name = distractors[int(wrong[w])]
                w += 1
            features.append(embedder.embed_concept(name, noise=noise,
                                                   salt=(obj, view)))
        bundles.append(build_view_bundle(obj, features, entropy_prompts,
                                         eval_prompts, temperature))
        gt_labels.append(concept)
        positions.append(correct_at)
    return PlantedBundles(bundles, gt_labels, embedder, eval_prompts,
                          entropy_prompts, off_vocab_prompts, positions)


def rebundle(bundles: Sequence[ViewBundle], entropy_prompts: PromptList,
             eval_prompts: PromptList,
             temperature: float = DEFAULT_TEMPERATURE) -> List[ViewBundle]:
    """Recompute entropy-side distributions under a different prompt list."""
    return [build_view_bundle(b.segment_id, b.features, entropy_prompts,
                              eval_prompts, temperature) for b in bundles]


# ---------------------------------------------------------------------------
# scene export to a pipeline manifest
# ---------------------------------------------------------------------------

def export_scene_manifest(scene: CardScene, out_dir,
                          camera_centers: Optional[Sequence] = None,
                          extra_labels: Sequence[str] = ("sofa", "rug", "bin"),
                          depth_scale: float = 5000.0,
                          seed: int = 0, dimension: int = 64,
                          gt_pitch: float = 0.01) -> "Path":
    """Write a complete on-disk dataset for a card scene.

    Produces rgb/depth PNGs, the pose file, a ground-truth labeled PLY,
    OVPE prompt files for both roles (evaluation = scene labels plus
    extras, entropy = scene labels), and manifest.json wired for the mock
    embedder. Returns the manifest path.
    """
    from pathlib import Path

    from PIL import Image

    from .artifacts import write_cloud_ply
    from .features import write_prompt_file

    out = Path(out_dir)
    (out / "rgb").mkdir(parents=True, exist_ok=True)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    if camera_centers is None:
        camera_centers = scene_camera_centers(6)

    frames = scene.frames(camera_centers)
    pose_lines = []
    entries = []
    for frame in frames:
        rgb_name = f"rgb/{frame.id:06d}.png"
        depth_name = f"depth/{frame.id:06d}.png"
        Image.fromarray(np.asarray(frame.rgb)).save(out / rgb_name)
        units = np.round(frame.depth * depth_scale)
        if units.max() >= 2 ** 16:
            raise ValueError("depth exceeds 16-bit range at this depth_scale")
        Image.fromarray(units.astype(np.uint16)).save(out / depth_name)
        pose_lines.append(" ".join(f"{v:.17g}" for v in frame.pose.matrix().ravel()))
        entries.append({"id": frame.id, "rgb": rgb_name, "depth": depth_name})
    (out / "poses.txt").write_text("\n".join(pose_lines) + "\n", encoding="utf-8")

    write_cloud_ply(out / "gt_cloud.ply", scene.ground_truth_cloud(gt_pitch))

    labels = scene.labels
    embedder = MockEmbedder(labels, dimension=dimension, seed=seed)
    eval_labels = labels + [x for x in extra_labels if x not in labels]
    eval_rows = np.vstack([embedder.embed_text(lab) for lab in eval_labels])
    ent_rows = np.vstack([embedder.embed_text(lab) for lab in labels])
    write_prompt_file(out / "eval.ovpe", eval_labels, eval_rows)
    write_prompt_file(out / "entropy.ovpe", labels, ent_rows)

    intr = scene.intrinsics
    manifest = {
        "intrinsics": {"fx": intr.fx, "fy": intr.fy, "cx": intr.cx,
                       "cy": intr.cy, "width": intr.width, "height": intr.height},
        "depth_scale": depth_scale,
        "pose_file": "poses.txt",
        "pose_convention": "camera_to_world",
        "frames": entries,
        "ground_truth_cloud": "gt_cloud.ply",
        "evaluation_prompts": "eval.ovpe",
        "entropy_prompts": "entropy.ovpe",
        "mock_concepts": labels,
        "mock_seed": seed,
        "mock_dimension": dimension,
    }
    import json

    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return manifest_path
