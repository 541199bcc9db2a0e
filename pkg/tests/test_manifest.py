"""Manifest loading and run configuration."""
import json

import numpy as np
import pytest

from ovseg3d.errors import ManifestError
from ovseg3d.manifest import RunConfig, load_manifest
from ovseg3d.synthetic import export_scene_manifest, three_card_scene


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("scene")
    export_scene_manifest(three_card_scene(), out)
    return out


class TestRunConfig:
    def test_defaults_match_reference_settings(self):
        cfg = RunConfig()
        assert cfg.stride == 50
        assert cfg.neighbors == 100
        assert cfg.smoothness == 0.05
        assert cfg.curvature_thresh == 1.0
        assert cfg.scales == (1.5,)
        assert cfg.strategy == "min_entropy"
        assert cfg.temperature == 100.0
        cfg.validate()

    def test_toml_round_trip(self, tmp_path):
        cfg = RunConfig(stride=10, scales=(1.0, 1.5), strategy="average",
                        direct_entropy_weights=True, workers=4)
        path = tmp_path / "run.toml"
        path.write_text(cfg.to_toml())
        back = RunConfig.from_file(path)
        assert back == cfg

    def test_parses_comments_and_strings(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("# a comment\nstride = 5  # trailing\n"
                        'strategy = "mode"\nscales = [1.0, 2.0]\n'
                        "direct_entropy_weights = false\n")
        cfg = RunConfig.from_file(path)
        assert cfg.stride == 5 and cfg.strategy == "mode"
        assert cfg.scales == (1.0, 2.0)
        assert cfg.direct_entropy_weights is False

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text("warp_drive = 9\n")
        with pytest.raises(ValueError, match="warp_drive"):
            RunConfig.from_file(path)

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError):
            RunConfig(stride=0).validate()
        with pytest.raises(ValueError):
            RunConfig(strategy="guess").validate()
        with pytest.raises(ValueError):
            RunConfig(scales=(0.5,)).validate()

    def test_override_ignores_none(self):
        cfg = RunConfig().override(strategy=None, stride=7)
        assert cfg.stride == 7 and cfg.strategy == "min_entropy"


class TestManifest:
    def test_loads_synthetic_scene(self, scene_dir):
        manifest = load_manifest(scene_dir / "manifest.json")
        assert len(manifest.frames) == 6
        assert manifest.mock_concepts == ["chair", "table", "lamp"]
        frame = manifest.load_frame(0)
        assert frame.rgb.shape == (480, 640, 3)
        assert frame.depth.shape == (480, 640)
        # cards sit at z = 2; background depth is invalid
        valid = frame.depth[frame.depth > 0]
        np.testing.assert_allclose(valid, 2.0, atol=1e-3)

    def test_frame_ids_strictly_increasing(self, scene_dir, tmp_path):
        payload = json.loads((scene_dir / "manifest.json").read_text())
        payload["frames"] = payload["frames"] + [payload["frames"][0]]
        bad = scene_dir / "bad_manifest.json"
        bad.write_text(json.dumps(payload))
        with pytest.raises(ManifestError, match="strictly increasing"):
            load_manifest(bad)

    def test_missing_file_reported_by_name(self, scene_dir):
        payload = json.loads((scene_dir / "manifest.json").read_text())
        payload["frames"][0]["depth"] = "depth/does_not_exist.png"
        bad = scene_dir / "missing_manifest.json"
        bad.write_text(json.dumps(payload))
        with pytest.raises(ManifestError, match="does_not_exist.png"):
            load_manifest(bad)

    def test_unsupported_pose_convention(self, scene_dir):
        payload = json.loads((scene_dir / "manifest.json").read_text())
        payload["pose_convention"] = "world_to_camera"
        bad = scene_dir / "conv_manifest.json"
        bad.write_text(json.dumps(payload))
        with pytest.raises(ManifestError, match="convention"):
            load_manifest(bad)

    def test_missing_prompts_rejected(self, scene_dir):
        payload = json.loads((scene_dir / "manifest.json").read_text())
        del payload["evaluation_prompts"]
        bad = scene_dir / "noprompt_manifest.json"
        bad.write_text(json.dumps(payload))
        with pytest.raises(ManifestError, match="evaluation_prompts"):
            load_manifest(bad)

    def test_depth_png_round_trip_preserves_scale(self, scene_dir):
        manifest = load_manifest(scene_dir / "manifest.json")
        assert manifest.depth_scale == 5000.0
