"""Convert public RGB-D captures into the pipeline's manifest layout.

Two source layouts are recognized:

  * replica-style: `results/frame%06d.jpg` + `results/depth%06d.png`,
    `traj.txt` (one row-major camera-to-world 4x4 per line), and
    `cam_params.json` holding intrinsics and the depth scale;
  * generic: `rgb/` + `depth/` image directories sorted by name,
    `poses.txt`, and an `intrinsics.json` with fx, fy, cx, cy, width,
    height, depth_scale.

Poses are rewritten to the +z-forward camera-to-world convention (a
`pose_convention` of "opengl" flips the y/z axes); frames are linked (or
copied) into a normalized `rgb/` + `depth/` tree next to the manifest.
Ground-truth labeled meshes are sampled area-weighted into labeled
point-cloud PLYs for the evaluation stage.
"""
from __future__ import annotations

import json
import os
import shutil
import struct
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


class UnsupportedLayoutError(RuntimeError):
    """The source directory does not match any recognizable layout."""


_GL_TO_CV = np.diag([1.0, -1.0, -1.0])


def convert_pose(matrix: np.ndarray, convention: str) -> np.ndarray:
    """Rewrite a camera-to-world pose to the +z-forward convention."""
    matrix = np.asarray(matrix, dtype=np.float64).reshape(4, 4)
    if convention == "camera_to_world":
        return matrix
    if convention == "opengl":
        out = matrix.copy()
        out[:3, :3] = matrix[:3, :3] @ _GL_TO_CV
        return out
    raise ValueError(f"unknown pose convention {convention!r}")


def _link_or_copy(src: Path, dst: Path) -> None:
    dst.parent.mkdir(parents=True, exist_ok=True)
    if dst.exists():
        dst.unlink()
    try:
        os.symlink(src.resolve(), dst)
    except OSError:
        shutil.copy2(src, dst)


def _detect_layout(source: Path) -> str:
    if (source / "cam_params.json").exists() and (source / "traj.txt").exists():
        return "replica"
    if (source / "intrinsics.json").exists() and (source / "poses.txt").exists():
        return "generic"
    raise UnsupportedLayoutError(
        f"{source}: expected replica-style (cam_params.json + traj.txt) or "
        "generic (intrinsics.json + poses.txt) layout")


def _replica_frames(source: Path) -> Tuple[Dict, Path, List[Tuple[Path, Path]]]:
    params = json.loads((source / "cam_params.json").read_text())["camera"]
    intrinsics = {"fx": params["fx"], "fy": params["fy"],
                  "cx": params["cx"], "cy": params["cy"],
                  "width": params["w"], "height": params["h"]}
    depth_scale = float(params.get("scale", 6553.5))
    results = source / "results"
    rgbs = sorted(results.glob("frame*.jpg")) + sorted(results.glob("frame*.png"))
    pairs = []
    for rgb in rgbs:
        stem = rgb.stem.replace("frame", "depth")
        depth = results / f"{stem}.png"
        if depth.exists():
            pairs.append((rgb, depth))
    if not pairs:
        raise UnsupportedLayoutError(f"{source}: no frame/depth pairs in results/")
    return ({"intrinsics": intrinsics, "depth_scale": depth_scale},
            source / "traj.txt", pairs)


def _generic_frames(source: Path) -> Tuple[Dict, Path, List[Tuple[Path, Path]]]:
    meta = json.loads((source / "intrinsics.json").read_text())
    intrinsics = {key: meta[key]
                  for key in ("fx", "fy", "cx", "cy", "width", "height")}
    depth_scale = float(meta.get("depth_scale", 1000.0))
    rgbs = sorted(p for p in (source / "rgb").iterdir()
                  if p.suffix.lower() in (".png", ".jpg", ".jpeg"))
    depths = sorted(p for p in (source / "depth").iterdir()
                    if p.suffix.lower() == ".png")
    if not rgbs or len(rgbs) != len(depths):
        raise UnsupportedLayoutError(
            f"{source}: rgb/ and depth/ must hold matching frame counts")
    return ({"intrinsics": intrinsics, "depth_scale": depth_scale},
            source / "poses.txt", list(zip(rgbs, depths)))


def convert_dataset(source_dir, out_dir, pose_convention: str = "camera_to_world",
                    ground_truth_mesh=None, evaluation_prompts: str = "eval.ovpe",
                    entropy_prompts: str = "entropy.ovpe",
                    gt_samples: int = 200_000, seed: int = 0) -> Path:
    """Build a normalized manifest directory from a recognized source tree.

    Prompt files are referenced by name (they come from export_prompts and
    usually live next to the manifest); a ground-truth mesh, when given,
    is sampled into gt_cloud.ply. Returns the manifest path.
    """
    source = Path(source_dir)
    if not source.is_dir():
        raise UnsupportedLayoutError(f"{source}: not a directory")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    layout = _detect_layout(source)
    meta, pose_file, pairs = (_replica_frames(source) if layout == "replica"
                              else _generic_frames(source))
    if not pose_file.exists():
        raise UnsupportedLayoutError(f"missing pose file {pose_file}")
    poses = np.loadtxt(pose_file).reshape(-1, 16)
    if len(poses) < len(pairs):
        raise ValueError(f"{pose_file}: {len(poses)} poses for "
                         f"{len(pairs)} frames")

    lines = []
    entries = []
    for index, (rgb, depth) in enumerate(pairs):
        rgb_name = f"rgb/{index:06d}{rgb.suffix.lower()}"
        depth_name = f"depth/{index:06d}.png"
        _link_or_copy(rgb, out / rgb_name)
        _link_or_copy(depth, out / depth_name)
        fixed = convert_pose(poses[index].reshape(4, 4), pose_convention)
        lines.append(" ".join(f"{v:.17g}" for v in fixed.ravel()))
        entries.append({"id": index, "rgb": rgb_name, "depth": depth_name})
    (out / "poses.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    manifest = {
        "intrinsics": meta["intrinsics"],
        "depth_scale": meta["depth_scale"],
        "pose_file": "poses.txt",
        "pose_convention": "camera_to_world",
        "frames": entries,
        "evaluation_prompts": evaluation_prompts,
        "entropy_prompts": entropy_prompts,
    }
    if ground_truth_mesh is not None:
        sample_labeled_mesh(ground_truth_mesh, out / "gt_cloud.ply",
                            n_samples=gt_samples, seed=seed)
        manifest["ground_truth_cloud"] = "gt_cloud.ply"

    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                             encoding="utf-8")
    return manifest_path


# ---------------------------------------------------------------------------
# labeled meshes -> sampled ground-truth clouds
# ---------------------------------------------------------------------------

_PLY_TYPES = {"float": ("<f4", 4), "float32": ("<f4", 4),
              "double": ("<f8", 8), "uchar": ("u1", 1), "uint8": ("u1", 1),
              "int": ("<i4", 4), "int32": ("<i4", 4),
              "uint": ("<u4", 4), "short": ("<i2", 2), "ushort": ("<u2", 2)}


def read_labeled_mesh(path) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a PLY triangle mesh with a per-vertex integer label column.

    Returns (vertices (V, 3), faces (F, 3), vertex_labels (V,)); the label
    column may be named class_id, object_id, or label.
    """
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        binary = None
        element = None
        counts: Dict[str, int] = {}
        vertex_props: List[Tuple[str, str]] = []
        face_list = None
        while True:
            parts = f.readline().decode("ascii").strip().split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "format":
                binary = parts[1] == "binary_little_endian"
                if parts[1] == "binary_big_endian":
                    raise ValueError("big-endian PLY not supported")
            elif parts[0] == "element":
                element = parts[1]
                counts[element] = int(parts[2])
            elif parts[0] == "property":
                if element == "vertex":
                    vertex_props.append((parts[-1], parts[1]))
                elif element == "face" and parts[1] == "list":
                    face_list = (parts[2], parts[3])
            elif parts[0] == "end_header":
                break

        n_vertices = counts.get("vertex", 0)
        n_faces = counts.get("face", 0)
        if binary:
            dtype = np.dtype([(name, _PLY_TYPES[t][0]) for name, t in vertex_props])
            raw = f.read(dtype.itemsize * n_vertices)
            rows = np.frombuffer(raw, dtype=dtype, count=n_vertices)
            count_t, index_t = face_list
            faces = np.empty((n_faces, 3), dtype=np.int64)
            count_np = np.dtype(_PLY_TYPES[count_t][0])
            index_np = np.dtype(_PLY_TYPES[index_t][0])
            for i in range(n_faces):
                (k,) = np.frombuffer(f.read(count_np.itemsize), dtype=count_np)
                idx = np.frombuffer(f.read(index_np.itemsize * int(k)),
                                    dtype=index_np)
                if int(k) != 3:
                    raise ValueError("only triangle meshes are supported")
                faces[i] = idx
        else:
            text = f.read().decode("ascii").split("\n")
            vrows = [line.split() for line in text[:n_vertices]]
            rows = {name: np.array([row[i] for row in vrows], dtype=np.float64)
                    for i, (name, _) in enumerate(vertex_props)}
            faces = np.array([line.split()[1:4]
                              for line in text[n_vertices:n_vertices + n_faces]],
                             dtype=np.int64)

    names = [name for name, _ in vertex_props]
    vertices = np.stack([np.asarray(rows["x"], dtype=np.float64),
                         np.asarray(rows["y"], dtype=np.float64),
                         np.asarray(rows["z"], dtype=np.float64)], axis=1)
    label_col = next((c for c in ("class_id", "object_id", "label")
                      if c in names), None)
    if label_col is None:
        raise ValueError(f"{path}: no vertex label column "
                         "(class_id / object_id / label)")
    labels = np.asarray(rows[label_col], dtype=np.int64)
    return vertices, faces, labels


def sample_labeled_mesh(mesh_path, out_path, n_samples: int = 200_000,
                        seed: int = 0) -> int:
    """Area-weighted triangle sampling of a labeled mesh into a PLY cloud.

    Each sample takes the majority label of its triangle's vertices (ties
    go to the smallest label). Returns the number of points written.
    """
    vertices, faces, labels = read_labeled_mesh(mesh_path)
    a = vertices[faces[:, 0]]
    b = vertices[faces[:, 1]]
    c = vertices[faces[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has no area")
    rng = np.random.default_rng(seed)
    per_face = rng.multinomial(n_samples, areas / total)

    # middle of the sorted triple is the majority whenever two labels agree;
    # three distinct labels fall back to the smallest for determinism
    face_labels = np.sort(labels[faces], axis=1)
    majority = face_labels[:, 1].copy()
    distinct = ((face_labels[:, 0] != face_labels[:, 1])
                & (face_labels[:, 1] != face_labels[:, 2]))
    majority[distinct] = face_labels[distinct, 0]

    points = []
    classes = []
    for face_index in np.flatnonzero(per_face):
        count = int(per_face[face_index])
        r1 = np.sqrt(rng.random(count))
        r2 = rng.random(count)
        pts = ((1 - r1)[:, None] * a[face_index]
               + (r1 * (1 - r2))[:, None] * b[face_index]
               + (r1 * r2)[:, None] * c[face_index])
        points.append(pts)
        classes.append(np.full(count, majority[face_index], dtype=np.int32))
    positions = np.concatenate(points)
    class_ids = np.concatenate(classes)
    write_cloud_ply(out_path, positions, class_ids)
    return len(positions)


def write_cloud_ply(path, positions: np.ndarray, class_ids: np.ndarray,
                    colors: Optional[np.ndarray] = None,
                    segment_ids: Optional[np.ndarray] = None) -> None:
    """Binary little-endian PLY in the pipeline's labeled-cloud schema."""
    n = len(positions)
    dtype = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                      ("red", "u1"), ("green", "u1"), ("blue", "u1"),
                      ("segment_id", "<i4"), ("class_id", "<i4")])
    rows = np.empty(n, dtype=dtype)
    rows["x"], rows["y"], rows["z"] = np.asarray(positions, dtype=np.float32).T
    color = (np.zeros((n, 3), dtype=np.uint8) if colors is None
             else np.asarray(colors, dtype=np.uint8))
    rows["red"], rows["green"], rows["blue"] = color.T
    rows["segment_id"] = (np.full(n, -1, dtype=np.int32) if segment_ids is None
                          else np.asarray(segment_ids, dtype=np.int32))
    rows["class_id"] = np.asarray(class_ids, dtype=np.int32)
    header = "\n".join([
        "ply", "format binary_little_endian 1.0", f"element vertex {n}",
        "property float x", "property float y", "property float z",
        "property uchar red", "property uchar green", "property uchar blue",
        "property int segment_id", "property int class_id", "end_header"])
    with open(path, "wb") as f:
        f.write(header.encode("ascii") + b"\n")
        f.write(rows.tobytes())
