"""Scripted experiments over cached features: crop scaling, fusion vs the
upper bound, and entropy-list sensitivity.

Each study returns plain rows and can dump them as CSV (stable schema,
documented per writer) or as a gnuplot-compatible .dat file. Studies run
off per-view features, so a full strategy x prompt-list sweep embeds each
view exactly once.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cloud import LabeledCloud
from .embedders import Embedder
from .features import (ROLE_ENTROPY, ROLE_EVALUATION, DEFAULT_TEMPERATURE,
                       PromptList, classify, concept_distribution,
                       normalize_feature)
from .fusion import (ViewBundle, apply_strategy, build_view_bundle,
                     classify_mode, fuse_average, upper_bound_correct)
from .geometry import Frame
from .metrics import ClassificationRecord, object_accuracy, view_accuracy
from .views import BoundingBox, associate, crop, scale_bbox


# ---------------------------------------------------------------------------
# study 1: crop scales and multi-scale fusion
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Study1Row:
    scale_set: Tuple[float, ...]
    accuracy: float
    views: int
    embed_ms_per_view: float

    @property
    def name(self) -> str:
        return "+".join(f"{s:g}" for s in self.scale_set)


def study1_crops(gt_cloud: LabeledCloud, labels: Sequence[str],
                 frames: Sequence[Frame], embedder: Embedder,
                 eval_prompts: PromptList,
                 scale_sets: Sequence[Sequence[float]],
                 tol: float = 0.05, min_visible: int = 20,
                 temperature: float = DEFAULT_TEMPERATURE) -> List[Study1Row]:
    """Per-view classification accuracy for each crop scale set.

    Objects come from the ground-truth cloud's class ids (the study design
    uses ground-truth segments, not the region grower). For a scale set
    with several factors, per-view features are averaged across scales
    before classification. Embedding wall time is recorded per view.
    """
    object_ids = np.unique(gt_cloud.class_ids[gt_cloud.class_ids >= 0])
    associations = []
    for obj in object_ids:
        pts = gt_cloud.positions[gt_cloud.class_ids == obj]
        entries = associate(pts, frames, tol=tol, min_visible=min_visible)
        if entries:
            associations.append((int(obj), entries))

    by_id = {f.id: f for f in frames}
    rows = []
    for scale_set in scale_sets:
        scale_set = tuple(float(s) for s in scale_set)
        records = []
        n_views = 0
        embed_seconds = 0.0
        for obj, entries in associations:
            gt_label = labels[obj]
            view_predictions = []
            for frame_id, raw, _count in entries:
                frame = by_id[frame_id]
                per_scale = []
                start = time.perf_counter()
                for factor in scale_set:
                    box = scale_bbox(raw, factor, frame.intrinsics.width,
                                     frame.intrinsics.height)
                    per_scale.append(embedder.embed_image(crop(frame, box)))
                embed_seconds += time.perf_counter() - start
                n_views += 1
                fused = normalize_feature(np.mean(per_scale, axis=0))
                dist = concept_distribution(fused, eval_prompts, temperature)
                view_predictions.append(classify(dist, eval_prompts))
            records.append(ClassificationRecord(obj, tuple(view_predictions),
                                                view_predictions[0], gt_label))
        rows.append(Study1Row(scale_set, view_accuracy(records), n_views,
                              1000.0 * embed_seconds / max(n_views, 1)))
    return rows


def write_study1_csv(rows: Sequence[Study1Row], path) -> None:
    """Schema: scale_set,view_accuracy,views,embed_ms_per_view"""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["scale_set", "view_accuracy", "views", "embed_ms_per_view"])
        for row in rows:
            w.writerow([row.name, f"{row.accuracy:.6f}", row.views,
                        f"{row.embed_ms_per_view:.4f}"])


# ---------------------------------------------------------------------------
# study 2: fusion vs the upper bound
# ---------------------------------------------------------------------------

def study2_fusion(bundles: Sequence[ViewBundle], gt_labels: Sequence[str],
                  eval_prompts: PromptList,
                  temperature: float = DEFAULT_TEMPERATURE) -> Dict[str, float]:
    """Object accuracy of {upper_bound, average, mode}."""
    if not bundles:
        raise ValueError("no bundles")
    upper = float(np.mean([upper_bound_correct(b, gt, eval_prompts)
                           for b, gt in zip(bundles, gt_labels)]))

    def fused_records(label_fn):
        return [ClassificationRecord(b.segment_id,
                                     tuple(b.view_labels(eval_prompts)),
                                     label_fn(b), gt)
                for b, gt in zip(bundles, gt_labels)]

    def average_label(b):
        dist = concept_distribution(fuse_average(b), eval_prompts, temperature)
        return classify(dist, eval_prompts)

    return {
        "upper_bound": upper,
        "average": object_accuracy(fused_records(average_label)),
        "mode": object_accuracy(fused_records(
            lambda b: classify_mode(b, eval_prompts))),
    }


def write_study2_csv(table: Mapping[str, float], path,
                     scene: str = "mock") -> None:
    """Schema: scene,upper_bound,average,mode"""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["scene", "upper_bound", "average", "mode"])
        w.writerow([scene] + [f"{table[k]:.6f}"
                              for k in ("upper_bound", "average", "mode")])


# ---------------------------------------------------------------------------
# study 3: entropy-list sensitivity of selection strategies
# ---------------------------------------------------------------------------

STUDY3_STRATEGIES = ("min_entropy", "max_score", "entropy_weighted",
                     "score_weighted", "average")


def study3_selection(features_per_object: Sequence[Sequence[np.ndarray]],
                     gt_labels: Sequence[str], eval_prompts: PromptList,
                     entropy_lists: Mapping[str, PromptList],
                     temperature: float = DEFAULT_TEMPERATURE,
                     ) -> List[Dict[str, object]]:
    """Accuracy of every selection/fusion strategy under each entropy list.

    Returns one row per entropy list: {"entropy_list": name,
    "<strategy>": accuracy, ...}; the upper_bound column rides along as the
    ceiling."""
    rows = []
    for name, entropy_prompts in entropy_lists.items():
        if entropy_prompts.role != ROLE_ENTROPY:
            raise ValueError(f"entropy list {name!r} lacks the entropy role")
        bundles = [build_view_bundle(i, feats, entropy_prompts, eval_prompts,
                                     temperature)
                   for i, feats in enumerate(features_per_object)]
        row: Dict[str, object] = {"entropy_list": name}
        for strategy in STUDY3_STRATEGIES:
            hits = [apply_strategy(strategy, b, entropy_prompts, eval_prompts,
                                   temperature).label.casefold() == gt.casefold()
                    for b, gt in zip(bundles, gt_labels)]
            row[strategy] = float(np.mean(hits))
        row["upper_bound"] = float(np.mean(
            [upper_bound_correct(b, gt, eval_prompts)
             for b, gt in zip(bundles, gt_labels)]))
        rows.append(row)
    return rows


def write_study3_csv(rows: Sequence[Mapping[str, object]], path) -> None:
    """Schema: entropy_list,<strategy columns>,upper_bound"""
    columns = ["entropy_list", *STUDY3_STRATEGIES, "upper_bound"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow([row["entropy_list"]] +
                       [f"{row[c]:.6f}" for c in columns[1:]])


# ---------------------------------------------------------------------------
# full-pipeline crop-size sweep
# ---------------------------------------------------------------------------

def sweep_crop_scales(manifest_path, config, scales: Sequence[float],
                      out_dir) -> List[Dict[str, float]]:
    """Run the whole pipeline once per crop scale and collect 3D metrics.

    Build, segmentation, and view association are shared across scales
    (the crop factor only enters at the embed stage); embed, classify, and
    eval re-run per scale. Returns one row per scale:
    {"scale", "miou", "fmiou", "macc"}.
    """
    from pathlib import Path

    from .manifest import load_manifest
    from .pipeline import (RunPaths, stage_associate, stage_build,
                           stage_classify, stage_embed, stage_eval,
                           stage_segment)

    manifest = load_manifest(manifest_path)
    paths = RunPaths(Path(out_dir))
    paths.out_dir.mkdir(parents=True, exist_ok=True)
    stage_build(manifest, config, paths)
    stage_segment(config, paths)
    stage_associate(manifest, config, paths)

    rows = []
    for scale in scales:
        cfg = config.override(scales=(float(scale),))
        stage_embed(manifest, cfg, paths)
        stage_classify(manifest, cfg, paths)
        metrics = stage_eval(manifest, cfg, paths)
        if "skipped" in metrics:
            raise ValueError("crop-scale sweep needs a ground_truth_cloud "
                             "in the manifest")
        rows.append({"scale": float(scale), "miou": metrics["miou"],
                     "fmiou": metrics["fmiou"], "macc": metrics["macc"]})
    return rows


def write_sweep_csv(rows: Sequence[Mapping[str, float]], path) -> None:
    """Schema: scale,miou,fmiou,macc"""
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["scale", "miou", "fmiou", "macc"])
        for row in rows:
            w.writerow([f"{row['scale']:g}", f"{row['miou']:.6f}",
                        f"{row['fmiou']:.6f}", f"{row['macc']:.6f}"])


def write_gnuplot_dat(rows: Sequence[Mapping[str, object]], path,
                      columns: Optional[Sequence[str]] = None) -> None:
    """Whitespace-separated table with a commented header row."""
    rows = list(rows)
    if not rows:
        raise ValueError("no rows")
    if columns is None:
        columns = list(rows[0].keys())
    with open(path, "w", encoding="utf-8") as f:
        f.write("# " + " ".join(str(c) for c in columns) + "\n")
        for row in rows:
            f.write(" ".join(_dat_cell(row[c]) for c in columns) + "\n")


def _dat_cell(value) -> str:
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value).replace(" ", "_")
