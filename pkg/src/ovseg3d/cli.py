"""Command-line entry point exposing every pipeline stage.

Stages read the previous stage's artifact from --out-dir and write their
own, so an expensive `embed` runs once while `classify` sweeps strategies:

    ovseg3d run       --manifest scene/manifest.json --out-dir out/
    ovseg3d build     --manifest ... --out-dir out/
    ovseg3d segment   --manifest ... --out-dir out/
    ovseg3d associate --manifest ... --out-dir out/
    ovseg3d embed     --manifest ... --out-dir out/
    ovseg3d classify  --manifest ... --out-dir out/ --strategy average
    ovseg3d eval      --manifest ... --out-dir out/
    ovseg3d bench     --manifest ... --out-dir out/

Every flag overrides its key in the optional --config TOML file.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ManifestError, MissingArtifactError, OvsegError, StageError
from .manifest import RunConfig, load_manifest
from .pipeline import (RunPaths, run_pipeline, stage_associate, stage_build,
                       stage_classify, stage_embed, stage_eval, stage_segment)

_SUBCOMMANDS = ("run", "build", "segment", "associate", "embed", "classify",
                "eval", "bench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ovseg3d",
        description="open-vocabulary 3D segmentation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--manifest", required=True, help="scene manifest JSON")
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--out-dir", default="ovseg3d_out",
                       help="artifact directory (default: ovseg3d_out)")
        p.add_argument("--strategy", help="fusion/selection strategy token")
        p.add_argument("--scale", action="append", type=float, dest="scales",
                       help="crop scale factor; repeat for multi-scale fusion")
        p.add_argument("--stride", type=int, help="frame sampling stride")
        p.add_argument("--voxel", type=float, help="downsampling voxel (m)")
        p.add_argument("--temperature", type=float, help="softmax logit scale")
        p.add_argument("--workers", type=int, help="worker threads")
        p.add_argument("--seed", type=int, help="run seed")
    return parser


def _config_from_args(args) -> RunConfig:
    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    return config.override(strategy=args.strategy, scales=args.scales,
                           stride=args.stride, voxel=args.voxel,
                           temperature=args.temperature,
                           workers=args.workers, seed=args.seed)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config_from_args(args)
        command = args.command
        if command in ("run", "bench"):
            results = run_pipeline(args.manifest, config, args.out_dir)
            report = results["timing"]
            if command == "bench":
                print(report.format_table())
            else:
                for stage in ("build", "segment", "associate", "embed",
                              "classify", "eval"):
                    print(f"{stage}: {results[stage]}")
                print(f"FPS: {report.fps:.3f}")
            return 0

        manifest = load_manifest(args.manifest)
        paths = RunPaths(Path(args.out_dir))
        paths.out_dir.mkdir(parents=True, exist_ok=True)
        stage_fns = {
            "build": lambda: stage_build(manifest, config, paths),
            "segment": lambda: stage_segment(config, paths),
            "associate": lambda: stage_associate(manifest, config, paths),
            "embed": lambda: stage_embed(manifest, config, paths),
            "classify": lambda: stage_classify(manifest, config, paths),
            "eval": lambda: stage_eval(manifest, config, paths),
        }
        try:
            info = stage_fns[command]()
        except (MissingArtifactError, OvsegError, ValueError):
            raise
        except Exception as exc:
            raise StageError(command, str(exc)) from exc
        print(f"{command}: {info}")
        return 0
    except MissingArtifactError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error in {exc}", file=sys.stderr)
        return 1
    except (ManifestError, OvsegError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
