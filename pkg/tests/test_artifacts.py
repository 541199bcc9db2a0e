"""Binary artifact formats: OVPC clouds, OVFT features, PLY export."""
import numpy as np
import pytest

from ovseg3d.artifacts import (ViewFeature, read_cloud, read_cloud_ply,
                               read_features, write_cloud, write_cloud_ply,
                               write_features, write_json)
from ovseg3d.cloud import LabeledCloud
from ovseg3d.views import BoundingBox


def sample_cloud(rng, n=50) -> LabeledCloud:
    cloud = LabeledCloud(
        rng.uniform(-5, 5, size=(n, 3)),
        rng.integers(0, 256, size=(n, 3)).astype(np.uint8),
        rng.integers(0, 4, size=n).astype(np.int32),
        rng.integers(-1, 3, size=n).astype(np.int32),
        rng.integers(-1, 5, size=n).astype(np.int32),
        rng.integers(0, 640, size=(n, 2)).astype(np.int32),
        stride=50, frame_count=4,
        camera_centers={0: np.array([0.0, 0, 0]), 2: np.array([1.0, 2, 3])})
    return cloud


class TestOvpc:
    def test_round_trip(self, tmp_path, rng):
        cloud = sample_cloud(rng)
        path = tmp_path / "c.ovpc"
        write_cloud(path, cloud)
        back = read_cloud(path)
        np.testing.assert_allclose(back.positions, cloud.positions, atol=1e-5)
        np.testing.assert_array_equal(back.colors, cloud.colors)
        np.testing.assert_array_equal(back.frame_ids, cloud.frame_ids)
        np.testing.assert_array_equal(back.pixels, cloud.pixels)
        np.testing.assert_array_equal(back.segment_ids, cloud.segment_ids)
        np.testing.assert_array_equal(back.class_ids, cloud.class_ids)
        assert back.stride == 50 and back.frame_count == 4
        assert set(back.camera_centers) == {0, 2}
        np.testing.assert_allclose(back.camera_centers[2], [1, 2, 3], atol=1e-6)

    def test_round_trip_is_byte_stable(self, tmp_path, rng):
        cloud = sample_cloud(rng)
        p1, p2 = tmp_path / "a.ovpc", tmp_path / "b.ovpc"
        write_cloud(p1, cloud)
        write_cloud(p2, read_cloud(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_columns_writable_after_read(self, tmp_path, rng):
        path = tmp_path / "c.ovpc"
        write_cloud(path, sample_cloud(rng))
        back = read_cloud(path)
        back.segment_ids[:] = 7  # must not raise

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ovpc"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(ValueError, match="OVPC"):
            read_cloud(path)


class TestOvft:
    def test_round_trip(self, tmp_path, rng):
        dim = 16
        entries = [ViewFeature(i % 3, 10 + i, BoundingBox(0, 0, 4 + i, 6),
                               20 + i, 1.5,
                               rng.standard_normal(dim))
                   for i in range(7)]
        path = tmp_path / "f.ovft"
        write_features(path, entries, dim)
        back, back_dim = read_features(path)
        assert back_dim == dim and len(back) == 7
        for a, b in zip(entries, back):
            assert (a.segment_id, a.frame_id, a.bbox, a.visible_points) == \
                   (b.segment_id, b.frame_id, b.bbox, b.visible_points)
            np.testing.assert_allclose(a.feature, b.feature, atol=1e-6)

    def test_dimension_mismatch_rejected(self, tmp_path, rng):
        entry = ViewFeature(0, 0, BoundingBox(0, 0, 2, 2), 5, 1.0,
                            rng.standard_normal(8))
        with pytest.raises(ValueError):
            write_features(tmp_path / "f.ovft", [entry], 16)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ovft"
        path.write_bytes(b"NOPE" + b"\x00" * 10)
        with pytest.raises(ValueError, match="OVFT"):
            read_features(path)


class TestPly:
    def test_round_trip(self, tmp_path, rng):
        cloud = sample_cloud(rng)
        path = tmp_path / "c.ply"
        write_cloud_ply(path, cloud)
        back = read_cloud_ply(path)
        np.testing.assert_allclose(back.positions, cloud.positions, atol=1e-5)
        np.testing.assert_array_equal(back.colors, cloud.colors)
        np.testing.assert_array_equal(back.segment_ids, cloud.segment_ids)
        np.testing.assert_array_equal(back.class_ids, cloud.class_ids)

    def test_header_declares_binary_little_endian(self, tmp_path, rng):
        path = tmp_path / "c.ply"
        write_cloud_ply(path, sample_cloud(rng, n=3))
        head = path.read_bytes()[:400].decode("ascii", "replace")
        assert "format binary_little_endian 1.0" in head
        assert "property int segment_id" in head
        assert "property int class_id" in head

    def test_reads_ascii_ply(self, tmp_path):
        text = "\n".join([
            "ply", "format ascii 1.0", "element vertex 2",
            "property float x", "property float y", "property float z",
            "end_header", "0 0 1", "2 3 4", ""])
        path = tmp_path / "a.ply"
        path.write_text(text)
        cloud = read_cloud_ply(path)
        np.testing.assert_allclose(cloud.positions,
                                   [[0, 0, 1], [2, 3, 4]], atol=1e-6)
        assert (cloud.class_ids == -1).all()

    def test_rejects_non_ply(self, tmp_path):
        path = tmp_path / "b.ply"
        path.write_bytes(b"hello")
        with pytest.raises(ValueError):
            read_cloud_ply(path)

    def test_write_deterministic(self, tmp_path, rng):
        cloud = sample_cloud(rng)
        p1, p2 = tmp_path / "a.ply", tmp_path / "b.ply"
        write_cloud_ply(p1, cloud)
        write_cloud_ply(p2, cloud)
        assert p1.read_bytes() == p2.read_bytes()


class TestJson:
    def test_canonical_and_deterministic(self, tmp_path):
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        write_json(p1, {"b": 1, "a": [1.5, 2.25]})
        write_json(p2, {"a": [1.5, 2.25], "b": 1})
        assert p1.read_bytes() == p2.read_bytes()
        assert p1.read_text().endswith("\n")
