"""Console entry points: export-backbone, export-prompts, convert-dataset."""
from __future__ import annotations

import argparse
import sys


def main_export_backbone(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export-backbone",
        description="export a CLIP backbone to ONNX encoder files")
    parser.add_argument("model", help="model name or local checkout "
                        "(e.g. laion/CLIP-ViT-H-14-laion2B-s32B-b79K)")
    parser.add_argument("--out-dir", required=True)
    args = parser.parse_args(argv)
    from .clip_export import DownloadError, export_backbone

    try:
        paths = export_backbone(args.model, args.out_dir)
    except DownloadError as exc:
        print(f"download error: {exc}", file=sys.stderr)
        return 1
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0


def main_export_prompts(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="export-prompts",
        description="precompute an OVPE prompt-embedding file")
    parser.add_argument("labels", help="text file, one label per line")
    parser.add_argument("model", help="backbone name or local checkout")
    parser.add_argument("--out", required=True, help="output .ovpe path")
    args = parser.parse_args(argv)
    from .clip_export import DownloadError
    from .prompts import export_prompts

    try:
        count = export_prompts(args.labels, args.model, args.out)
    except DownloadError as exc:
        print(f"download error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {count} prompts to {args.out}")
    return 0


def main_convert_dataset(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="convert-dataset",
        description="convert an RGB-D capture into a pipeline manifest")
    parser.add_argument("source", help="dataset directory (replica-style "
                        "or generic rgb/depth/poses layout)")
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--pose-convention", default="camera_to_world",
                        choices=["camera_to_world", "opengl"])
    parser.add_argument("--ground-truth-mesh",
                        help="labeled PLY mesh to sample into gt_cloud.ply")
    parser.add_argument("--gt-samples", type=int, default=200_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    from .datasets import UnsupportedLayoutError, convert_dataset

    try:
        manifest = convert_dataset(
            args.source, args.out_dir, pose_convention=args.pose_convention,
            ground_truth_mesh=args.ground_truth_mesh,
            gt_samples=args.gt_samples, seed=args.seed)
    except (UnsupportedLayoutError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"manifest: {manifest}")
    return 0
