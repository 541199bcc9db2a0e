"""On-disk artifact formats for staged pipeline runs.

Everything numeric is little-endian with 32-bit float payloads, so files
are byte-reproducible and cheap to memory-map elsewhere:

  * OVPC: a labeled cloud with full provenance (source pixels, sampling
    stride, per-frame camera centers).
  * OVFT: per-(segment, view) feature vectors with their bbox metadata.
  * PLY:  binary little-endian export of the labeled cloud with
    x,y,z float32, red,green,blue uchar, segment_id,class_id int32.
  * JSON: canonical form (sorted keys, fixed indent) so byte equality
    means semantic equality.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from typing import BinaryIO, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .cloud import LabeledCloud
from .views import BoundingBox

OVPC_MAGIC = b"OVPC"
OVFT_MAGIC = b"OVFT"
FORMAT_VERSION = 1


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ValueError("truncated artifact file")
    return data


# ---------------------------------------------------------------------------
# OVPC labeled clouds
# ---------------------------------------------------------------------------

def write_cloud(path, cloud: LabeledCloud) -> None:
    n = len(cloud)
    centers = sorted(cloud.camera_centers.items())
    with open(path, "wb") as f:
        f.write(OVPC_MAGIC)
        f.write(struct.pack("<HIIII", FORMAT_VERSION, n, cloud.stride,
                            cloud.frame_count, len(centers)))
        for fid, center in centers:
            f.write(struct.pack("<i", int(fid)))
            f.write(np.asarray(center, dtype="<f4").tobytes())
        f.write(cloud.positions.astype("<f4").tobytes())
        f.write(cloud.colors.astype(np.uint8).tobytes())
        f.write(cloud.frame_ids.astype("<i4").tobytes())
        f.write(cloud.pixels.astype("<i4").tobytes())
        f.write(cloud.segment_ids.astype("<i4").tobytes())
        f.write(cloud.class_ids.astype("<i4").tobytes())


def read_cloud(path) -> LabeledCloud:
    with open(path, "rb") as f:
        if f.read(4) != OVPC_MAGIC:
            raise ValueError(f"{path}: not an OVPC cloud file")
        version, n, stride, frame_count, n_centers = struct.unpack(
            "<HIIII", _read_exact(f, 18))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported OVPC version {version}")
        centers = {}
        for _ in range(n_centers):
            (fid,) = struct.unpack("<i", _read_exact(f, 4))
            centers[fid] = np.frombuffer(_read_exact(f, 12), dtype="<f4").astype(np.float64)
        positions = np.frombuffer(_read_exact(f, 12 * n), dtype="<f4").reshape(n, 3)
        colors = np.frombuffer(_read_exact(f, 3 * n), dtype=np.uint8).reshape(n, 3).copy()
        frame_ids = np.frombuffer(_read_exact(f, 4 * n), dtype="<i4").copy()
        pixels = np.frombuffer(_read_exact(f, 8 * n), dtype="<i4").reshape(n, 2).copy()
        segment_ids = np.frombuffer(_read_exact(f, 4 * n), dtype="<i4").copy()
        class_ids = np.frombuffer(_read_exact(f, 4 * n), dtype="<i4").copy()
    return LabeledCloud(positions.astype(np.float64), colors, frame_ids,
                        segment_ids, class_ids, pixels, stride=stride,
                        frame_count=frame_count, camera_centers=centers)


# ---------------------------------------------------------------------------
# OVFT per-view features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ViewFeature:
    """One embedded view of one segment."""

    segment_id: int
    frame_id: int
    bbox: BoundingBox
    visible_points: int
    scale: float
    feature: np.ndarray


def write_features(path, entries: Sequence[ViewFeature], dimension: int) -> None:
    with open(path, "wb") as f:
        f.write(OVFT_MAGIC)
        f.write(struct.pack("<HII", FORMAT_VERSION, dimension, len(entries)))
        for e in entries:
            if e.feature.shape != (dimension,):
                raise ValueError("feature dimension mismatch")
            f.write(struct.pack("<iiiiiiif", e.segment_id, e.frame_id,
                                e.bbox.u_min, e.bbox.v_min, e.bbox.u_max,
                                e.bbox.v_max, e.visible_points, e.scale))
            f.write(e.feature.astype("<f4").tobytes())


def read_features(path) -> Tuple[List[ViewFeature], int]:
    with open(path, "rb") as f:
        if f.read(4) != OVFT_MAGIC:
            raise ValueError(f"{path}: not an OVFT feature file")
        version, dim, count = struct.unpack("<HII", _read_exact(f, 10))
        if version != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported OVFT version {version}")
        entries = []
        for _ in range(count):
            seg, fid, u0, v0, u1, v1, vis, scale = struct.unpack(
                "<iiiiiiif", _read_exact(f, 32))
            feat = np.frombuffer(_read_exact(f, 4 * dim), dtype="<f4").astype(np.float64)
            entries.append(ViewFeature(seg, fid, BoundingBox(u0, v0, u1, v1),
                                       vis, scale, feat))
    return entries, dim


# ---------------------------------------------------------------------------
# PLY labeled-cloud export
# ---------------------------------------------------------------------------

_PLY_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"),
                       ("red", "u1"), ("green", "u1"), ("blue", "u1"),
                       ("segment_id", "<i4"), ("class_id", "<i4")])

_PLY_TYPES = {"float": "<f4", "float32": "<f4", "double": "<f8",
              "uchar": "u1", "uint8": "u1", "char": "i1",
              "short": "<i2", "ushort": "<u2",
              "int": "<i4", "int32": "<i4", "uint": "<u4", "uint32": "<u4"}


def write_cloud_ply(path, cloud: LabeledCloud) -> None:
    """Binary little-endian PLY with segment and class columns."""
    rows = np.empty(len(cloud), dtype=_PLY_DTYPE)
    rows["x"], rows["y"], rows["z"] = cloud.positions.T.astype(np.float32)
    rows["red"], rows["green"], rows["blue"] = cloud.colors.T
    rows["segment_id"] = cloud.segment_ids
    rows["class_id"] = cloud.class_ids
    header = "\n".join([
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property int segment_id",
        "property int class_id",
        "end_header",
    ])
    with open(path, "wb") as f:
        f.write(header.encode("ascii") + b"\n")
        f.write(rows.tobytes())


def read_cloud_ply(path) -> LabeledCloud:
    """Read a binary or ASCII PLY point cloud.

    x/y/z are required; color, segment_id and class_id columns are picked
    up when present (any other properties are skipped).
    """
    with open(path, "rb") as f:
        if f.readline().strip() != b"ply":
            raise ValueError(f"{path}: not a PLY file")
        binary = True
        n = None
        props: List[Tuple[str, str]] = []
        in_vertex = False
        while True:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: unterminated PLY header")
            parts = line.decode("ascii").strip().split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "format":
                binary = parts[1] != "ascii"
                if parts[1] == "binary_big_endian":
                    raise ValueError("big-endian PLY not supported")
            elif parts[0] == "element":
                in_vertex = parts[1] == "vertex"
                if in_vertex:
                    n = int(parts[2])
            elif parts[0] == "property" and in_vertex:
                if parts[1] == "list":
                    raise ValueError("list properties not supported in vertices")
                props.append((parts[2], _PLY_TYPES[parts[1]]))
            elif parts[0] == "end_header":
                break
        if n is None:
            raise ValueError(f"{path}: no vertex element")
        dtype = np.dtype([(name, t) for name, t in props])
        if binary:
            rows = np.frombuffer(_read_exact(f, dtype.itemsize * n), dtype=dtype)
        else:
            text = f.read().decode("ascii").split()
            flat = np.array(text[: n * len(props)])
            rows = np.empty(n, dtype=dtype)
            for j, (name, t) in enumerate(props):
                rows[name] = flat[j::len(props)].astype(np.dtype(t))

    names = {name for name, _ in props}
    for required in ("x", "y", "z"):
        if required not in names:
            raise ValueError(f"{path}: missing vertex property {required}")
    positions = np.stack([rows["x"], rows["y"], rows["z"]], axis=1).astype(np.float64)
    count = len(positions)
    colors = (np.stack([rows["red"], rows["green"], rows["blue"]], axis=1)
              if {"red", "green", "blue"} <= names
              else np.zeros((count, 3), dtype=np.uint8))
    segment_ids = (rows["segment_id"].astype(np.int32) if "segment_id" in names
                   else np.full(count, -1, dtype=np.int32))
    class_ids = (rows["class_id"].astype(np.int32) if "class_id" in names
                 else np.full(count, -1, dtype=np.int32))
    return LabeledCloud(positions, colors,
                        np.full(count, -1, dtype=np.int32),
                        segment_ids, class_ids,
                        np.full((count, 2), -1, dtype=np.int32))


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------

def write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)
