"""Staged pipeline: manifest in, labeled cloud plus metrics and timing out.

Each stage reads the previous stage's artifact file and writes its own, so
expensive stages (embedding, above all) are cached across strategy sweeps;
run_pipeline simply chains the stages in one output directory, which makes
staged and monolithic execution byte-identical by construction.

Stage artifacts, all inside the run directory:

  build      cloud.ovpc            accumulated + voxel-downsampled cloud
  segment    segmented.ovpc        same cloud with segment ids
  associate  views.json            per-(segment, frame) raw boxes + counts
  embed      features.ovft         one feature per qualifying view
  classify   labels.json           per-segment label via the strategy
             labeled_cloud.ply     binary PLY with segment_id / class_id
             labeled_cloud.json    class-id map + per-segment diagnostics
  eval       metrics.json/.csv     mIOU / F-mIOU / mAcc vs ground truth
  (always)   run_config.toml       the resolved configuration
             timing.json           wall-clock per stage + FPS
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import artifacts
from .artifacts import ViewFeature, read_cloud, write_cloud
from .cloud import UNASSIGNED, accumulate, voxel_downsample
from .embedders import Embedder, MockEmbedder, OnnxEmbedder
from .errors import MissingArtifactError, StageError
from .features import (ROLE_ENTROPY, ROLE_EVALUATION, normalize_feature,
                       read_prompt_file)
from .fusion import apply_strategy, build_view_bundle, upper_bound_correct
from .geometry import Frame
from .manifest import Manifest, RunConfig, load_manifest
from .metrics import segmentation_metrics, timing_report, transfer_labels
from .segmentation import apply_segmentation, estimate_geometry, region_grow
from .views import BoundingBox, associate, crop, scale_bbox

MODEL_DIR_ENV = "OVSEG_MODEL_DIR"
STAGE_ORDER = ("build", "segment", "associate", "embed", "classify", "eval")


@dataclass
class RunPaths:
    out_dir: Path

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)

    @property
    def cloud(self) -> Path: return self.out_dir / "cloud.ovpc"

    @property
    def segmented(self) -> Path: return self.out_dir / "segmented.ovpc"

    @property
    def views(self) -> Path: return self.out_dir / "views.json"

    @property
    def features(self) -> Path: return self.out_dir / "features.ovft"

    @property
    def labels(self) -> Path: return self.out_dir / "labels.json"

    @property
    def ply(self) -> Path: return self.out_dir / "labeled_cloud.ply"

    @property
    def sidecar(self) -> Path: return self.out_dir / "labeled_cloud.json"

    @property
    def metrics_json(self) -> Path: return self.out_dir / "metrics.json"

    @property
    def metrics_csv(self) -> Path: return self.out_dir / "metrics.csv"

    @property
    def timing(self) -> Path: return self.out_dir / "timing.json"

    @property
    def config(self) -> Path: return self.out_dir / "run_config.toml"


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(
            f"{path.name} is missing; run the '{producer}' stage first")
    return path


def make_embedder(manifest: Manifest, config: RunConfig) -> Embedder:
    """Pick the backend: exported ONNX encoders when configured, otherwise
    the manifest's mock concept table."""
    spec = config.model_spec
    if spec is None and os.environ.get(MODEL_DIR_ENV):
        candidate = Path(os.environ[MODEL_DIR_ENV]) / "preprocess.json"
        if candidate.exists():
            spec = str(candidate)
    if spec is not None:
        return OnnxEmbedder(spec)
    if manifest.mock_concepts:
        return MockEmbedder(manifest.mock_concepts,
                            dimension=manifest.mock_dimension,
                            seed=manifest.mock_seed)
    raise ValueError("no embedder configured: set model_spec / "
                     f"{MODEL_DIR_ENV} or add mock_concepts to the manifest")


def _sampled_frames(manifest: Manifest, config: RunConfig) -> List[Frame]:
    indices = range(0, len(manifest.frames), config.stride)
    return [manifest.load_frame(i) for i in indices]


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_build(manifest: Manifest, config: RunConfig, paths: RunPaths) -> Dict:
    frames = _sampled_frames(manifest, config)
    cloud = accumulate(frames, stride=1, pixel_step=config.pixel_step)
    cloud.stride = config.stride
    down = voxel_downsample(cloud, config.voxel)
    write_cloud(paths.cloud, down)
    return {"points": len(down), "raw_points": len(cloud),
            "sampled_frames": len(frames)}


def stage_segment(config: RunConfig, paths: RunPaths) -> Dict:
    cloud = read_cloud(_require(paths.cloud, "build"))
    k = min(config.neighbors, len(cloud))
    geometry = estimate_geometry(cloud, k=max(k, 3))
    seg = region_grow(cloud, geometry, k=max(k, 3),
                      smoothness=config.smoothness,
                      curvature_thresh=config.curvature_thresh,
                      min_size=config.min_size)
    apply_segmentation(cloud, seg)
    write_cloud(paths.segmented, cloud)
    return {"segments": seg.count,
            "unassigned": int((seg.segment_ids < 0).sum())}


def stage_associate(manifest: Manifest, config: RunConfig, paths: RunPaths) -> Dict:
    cloud = read_cloud(_require(paths.segmented, "segment"))
    frames = _sampled_frames(manifest, config)
    count = int(cloud.segment_ids.max()) + 1 if len(cloud) else 0

    def entries_for(segment: int):
        pts = cloud.positions[cloud.segment_ids == segment]
        found = associate(pts, frames, tol=config.occlusion_tol,
                          min_visible=config.min_visible)
        if config.max_views is not None and len(found) > config.max_views:
            order = sorted(range(len(found)), key=lambda i: (-found[i][2], i))
            found = [found[i] for i in sorted(order[:config.max_views])]
        return [{"segment_id": segment, "frame_id": fid,
                 "bbox": [b.u_min, b.v_min, b.u_max, b.v_max],
                 "visible_points": visible}
                for fid, b, visible in found]

    per_segment = _map_ordered(entries_for, range(count), config.workers)
    views = [item for sub in per_segment for item in sub]
    artifacts.write_json(paths.views, {"views": views, "segments": count})
    return {"views": len(views), "segments": count}


def stage_embed(manifest: Manifest, config: RunConfig, paths: RunPaths,
                embedder: Optional[Embedder] = None) -> Dict:
    payload = artifacts.read_json(_require(paths.views, "associate"))
    embedder = embedder or make_embedder(manifest, config)
    frames = {f.id: f for f in _sampled_frames(manifest, config)}

    def embed_view(item) -> ViewFeature:
        frame = frames[item["frame_id"]]
        raw = BoundingBox(*item["bbox"])
        per_scale = []
        for factor in config.scales:
            box = scale_bbox(raw, factor, frame.intrinsics.width,
                             frame.intrinsics.height)
            per_scale.append(embedder.embed_image(crop(frame, box)))
        feature = normalize_feature(np.mean(per_scale, axis=0))
        box = scale_bbox(raw, config.scales[0], frame.intrinsics.width,
                         frame.intrinsics.height)
        scale_tag = config.scales[0] if len(config.scales) == 1 else 0.0
        return ViewFeature(item["segment_id"], item["frame_id"], box,
                           item["visible_points"], scale_tag, feature)

    workers = config.workers if getattr(embedder, "concurrent_safe", False) else 1
    entries = _map_ordered(embed_view, payload["views"], workers)
    artifacts.write_features(paths.features, entries, embedder.dimension)
    return {"views": len(entries), "dimension": embedder.dimension}


def stage_classify(manifest: Manifest, config: RunConfig, paths: RunPaths) -> Dict:
    entries, _ = artifacts.read_features(_require(paths.features, "embed"))
    cloud = read_cloud(_require(paths.segmented, "segment"))
    eval_prompts = read_prompt_file(manifest.evaluation_prompts, ROLE_EVALUATION)
    entropy_prompts = read_prompt_file(manifest.entropy_prompts, ROLE_ENTROPY)
    eval_index = {label.casefold(): i for i, label in enumerate(eval_prompts.labels)}

    by_segment: Dict[int, List[ViewFeature]] = {}
    for entry in entries:
        by_segment.setdefault(entry.segment_id, []).append(entry)

    segment_count = int(cloud.segment_ids.max()) + 1 if len(cloud) else 0
    gt_segment_labels = (_segment_gt_labels(cloud, manifest, config, segment_count)
                         if config.strategy == "upper_bound" else None)

    records = []
    class_of_segment = np.full(segment_count, UNASSIGNED, dtype=np.int32)
    for segment in range(segment_count):
        seg_entries = by_segment.get(segment)
        if not seg_entries:
            records.append({"segment_id": segment, "label": None,
                            "class_id": -1, "view_count": 0,
                            "chosen_frame": None, "entropy": None,
                            "score": None})
            continue
        bundle = build_view_bundle(segment, [e.feature for e in seg_entries],
                                   entropy_prompts, eval_prompts,
                                   config.temperature)
        if config.strategy == "upper_bound":
            record = _classify_upper_bound(bundle, seg_entries,
                                           gt_segment_labels[segment],
                                           eval_prompts, eval_index)
        else:
            result = apply_strategy(config.strategy, bundle, entropy_prompts,
                                    eval_prompts, config.temperature,
                                    config.direct_entropy_weights)
            chosen = (seg_entries[result.view_index].frame_id
                      if result.view_index is not None else None)
            record = {"label": result.label,
                      "class_id": eval_index[result.label.casefold()],
                      "chosen_frame": chosen,
                      "entropy": result.entropy, "score": result.score}
        record.update({"segment_id": segment, "view_count": len(seg_entries)})
        class_of_segment[segment] = record["class_id"]
        records.append(record)

    assigned = cloud.segment_ids >= 0
    cloud.class_ids[:] = UNASSIGNED
    cloud.class_ids[assigned] = class_of_segment[cloud.segment_ids[assigned]]

    artifacts.write_json(paths.labels, {"strategy": config.strategy,
                                        "segments": records})
    artifacts.write_cloud_ply(paths.ply, cloud)
    artifacts.write_json(paths.sidecar, {
        "class_labels": {str(i): label
                         for i, label in enumerate(eval_prompts.labels)},
        "strategy": config.strategy,
        "segments": records,
    })
    labeled = sum(1 for r in records if r["class_id"] >= 0)
    return {"segments": segment_count, "labeled": labeled}


def _segment_gt_labels(cloud, manifest: Manifest, config: RunConfig,
                       segment_count: int) -> List[Optional[str]]:
    """Majority ground-truth label per segment via nearest-gt-point lookup.

    Only used by the upper_bound oracle strategy, which needs truth."""
    if manifest.ground_truth_cloud is None:
        raise ValueError("strategy 'upper_bound' needs a ground_truth_cloud "
                         "in the manifest")
    gt = artifacts.read_cloud_ply(manifest.ground_truth_cloud)
    eval_prompts = read_prompt_file(manifest.evaluation_prompts, ROLE_EVALUATION)
    nearest = transfer_labels(gt, cloud, max_dist=config.max_dist)
    out: List[Optional[str]] = []
    for segment in range(segment_count):
        classes = nearest[cloud.segment_ids == segment]
        classes = classes[classes >= 0]
        if classes.size == 0:
            out.append(None)
            continue
        majority = int(np.bincount(classes).argmax())
        out.append(eval_prompts.labels[majority]
                   if majority < len(eval_prompts.labels) else None)
    return out


def _classify_upper_bound(bundle, seg_entries, gt_label, eval_prompts,
                          eval_index) -> Dict:
    if gt_label is not None and upper_bound_correct(bundle, gt_label, eval_prompts):
        labels = bundle.view_labels(eval_prompts)
        view = next(i for i, lab in enumerate(labels)
                    if lab.casefold() == gt_label.casefold())
        return {"label": gt_label,
                "class_id": eval_index[gt_label.casefold()],
                "chosen_frame": seg_entries[view].frame_id,
                "entropy": bundle.entropy_dists[view].entropy,
                "score": bundle.entropy_dists[view].max_score}
    return {"label": None, "class_id": -1, "chosen_frame": None,
            "entropy": None, "score": None}


def stage_eval(manifest: Manifest, config: RunConfig, paths: RunPaths) -> Dict:
    if manifest.ground_truth_cloud is None:
        return {"skipped": "manifest has no ground_truth_cloud"}
    predicted = artifacts.read_cloud_ply(_require(paths.ply, "classify"))
    gt = artifacts.read_cloud_ply(manifest.ground_truth_cloud)
    transferred = transfer_labels(predicted, gt, max_dist=config.max_dist)
    miou, fmiou, macc = segmentation_metrics(gt.class_ids, transferred)
    # report the strategy that actually produced the labels artifact
    strategy = config.strategy
    if paths.labels.exists():
        strategy = artifacts.read_json(paths.labels).get("strategy", strategy)

    from .metrics import confusion_tally

    tally = confusion_tally(gt.class_ids, transferred)
    per_class = [{"class_id": int(c), "tp": int(tp), "fp": int(fp),
                  "fn": int(fn), "points": int(n),
                  "iou": (int(tp) / int(tp + fp + fn)) if tp + fp + fn else 0.0}
                 for c, tp, fp, fn, n in zip(tally.classes, tally.tp,
                                             tally.fp, tally.fn, tally.n)]
    payload = {"miou": miou, "fmiou": fmiou, "macc": macc,
               "strategy": strategy, "per_class": per_class}
    artifacts.write_json(paths.metrics_json, payload)
    scene = manifest.root.name
    with open(paths.metrics_csv, "w", encoding="utf-8") as f:
        f.write("scene,strategy,miou,fmiou,macc\n")
        f.write(f"{scene},{strategy},{miou:.6f},{fmiou:.6f},{macc:.6f}\n")
    return payload


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------

def run_pipeline(manifest_path, config: RunConfig, out_dir,
                 embedder: Optional[Embedder] = None) -> Dict:
    """Run every stage in order, recording wall-clock time per stage."""
    config.validate()
    manifest = load_manifest(manifest_path)
    paths = RunPaths(Path(out_dir))
    paths.out_dir.mkdir(parents=True, exist_ok=True)
    paths.config.write_text(config.to_toml(), encoding="utf-8")

    stage_calls = (
        ("build", lambda: stage_build(manifest, config, paths)),
        ("segment", lambda: stage_segment(config, paths)),
        ("associate", lambda: stage_associate(manifest, config, paths)),
        ("embed", lambda: stage_embed(manifest, config, paths, embedder)),
        ("classify", lambda: stage_classify(manifest, config, paths)),
        ("eval", lambda: stage_eval(manifest, config, paths)),
    )
    results: Dict = {}
    durations: Dict[str, float] = {}
    for name, call in stage_calls:
        start = time.perf_counter()
        try:
            results[name] = call()
        except Exception as exc:
            if isinstance(exc, StageError):
                raise
            raise StageError(name, str(exc)) from exc
        durations[name] = time.perf_counter() - start

    sampled = results["build"]["sampled_frames"]
    report = timing_report(durations, sampled)
    artifacts.write_json(paths.timing, {
        "stages": {name: durations[name] for name in durations},
        "total_seconds": report.total_seconds,
        "sampled_frames": sampled,
        "fps": report.fps,
    })
    results["timing"] = report
    return results


def _map_ordered(fn: Callable, items: Sequence, workers: int) -> List:
    """Map preserving input order; thread pool only when workers > 1."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
