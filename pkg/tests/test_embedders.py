"""ONNX-backed embedder: preprocessing and session wiring, hermetically.

A stub session stands in for onnxruntime so the primary suite verifies
the resize/normalize/NCHW pipeline and tokenizer plumbing without any
exported model or the secondary package.
"""
import json

import numpy as np
import pytest
from PIL import Image

from ovseg3d.embedders import OnnxEmbedder


class _StubInput:
    name = "x"


class _StubSession:
    """Records the arrays it is fed; returns a fixed-direction feature."""

    def __init__(self):
        self.received = []

    def get_inputs(self):
        return [_StubInput()]

    def run(self, names, feeds):
        value = feeds["x"]
        self.received.append(np.array(value))
        if value.dtype == np.int64:           # text path: ids
            out = np.arange(1, 9, dtype=np.float32) + float(value.sum() % 7)
        else:                                 # image path: pixels
            out = np.full(8, 1.0, dtype=np.float32) + float(value.mean())
        return [out[None]]


def make_spec(tmp_path, mean=(0.5, 0.5, 0.5), std=(0.25, 0.25, 0.25),
              size=16):
    # minimal byte-level vocab understood by the tokenizer
    units = "abcdefghijklmnopqrstuvwxyz "
    vocab = {c: i for i, c in enumerate(units)}
    for c in units:
        vocab[c + "</w>"] = len(vocab)
    vocab["<|startoftext|>"] = len(vocab)
    vocab["<|endoftext|>"] = len(vocab)
    (tmp_path / "vocab.json").write_text(json.dumps(vocab))
    (tmp_path / "merges.txt").write_text("#version: 0.2\n")
    (tmp_path / "image.onnx").write_bytes(b"")
    (tmp_path / "text.onnx").write_bytes(b"")
    spec = {"image_model": "image.onnx", "text_model": "text.onnx",
            "dimension": 8, "image_size": size, "context_length": 12,
            "mean": list(mean), "std": list(std),
            "interpolation": "bicubic", "batch_size": 1,
            "tokenizer": {"vocab": "vocab.json", "merges": "merges.txt"}}
    path = tmp_path / "preprocess.json"
    path.write_text(json.dumps(spec))
    return path


class TestPreprocess:
    def test_resize_normalize_layout(self, tmp_path):
        sessions = []

        def factory(path):
            sessions.append(_StubSession())
            return sessions[-1]

        embedder = OnnxEmbedder(make_spec(tmp_path), session_factory=factory)
        crop = np.zeros((7, 5, 3), dtype=np.uint8)
        crop[..., 0] = 255   # pure red
        out = embedder.preprocess(crop)
        assert out.shape == (1, 3, 16, 16)
        assert out.dtype == np.float32
        # red channel: (1.0 - 0.5) / 0.25 = 2, others (0 - 0.5)/0.25 = -2
        np.testing.assert_allclose(out[0, 0], 2.0, atol=1e-6)
        np.testing.assert_allclose(out[0, 1], -2.0, atol=1e-6)
        np.testing.assert_allclose(out[0, 2], -2.0, atol=1e-6)

    def test_resize_is_bicubic(self, tmp_path):
        embedder = OnnxEmbedder(make_spec(tmp_path, mean=(0, 0, 0),
                                          std=(1, 1, 1)),
                                session_factory=lambda p: _StubSession())
        rng = np.random.default_rng(0)
        crop = rng.integers(0, 256, size=(11, 9, 3), dtype=np.uint8)
        got = embedder.preprocess(crop)[0].transpose(1, 2, 0)
        want = np.asarray(Image.fromarray(crop).resize((16, 16), Image.BICUBIC),
                          dtype=np.float32) / 255.0
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_embed_image_runs_session_and_normalizes(self, tmp_path):
        session = _StubSession()
        embedder = OnnxEmbedder(make_spec(tmp_path),
                                session_factory=lambda p: session)
        crop = np.full((4, 4, 3), 128, dtype=np.uint8)
        feature = embedder.embed_image(crop)
        assert feature.shape == (8,)
        np.testing.assert_allclose(np.linalg.norm(feature), 1.0, atol=1e-9)
        assert session.received and session.received[-1].shape == (1, 3, 16, 16)

    def test_embed_text_tokenizes_with_sentinels(self, tmp_path):
        session = _StubSession()
        embedder = OnnxEmbedder(make_spec(tmp_path),
                                session_factory=lambda p: session)
        feature = embedder.embed_text("cab")
        np.testing.assert_allclose(np.linalg.norm(feature), 1.0, atol=1e-9)
        ids = session.received[-1]
        assert ids.shape == (1, 12) and ids.dtype == np.int64
        # <|startoftext|> c a b</w> ... wait: c,a then b</w>; end then padding
        assert ids[0, 0] == 54          # start sentinel
        assert ids[0, -1] == 55         # padded with the end token

    def test_missing_runtime_reports_clearly(self, tmp_path):
        spec = make_spec(tmp_path)
        with pytest.raises(ImportError, match="onnxruntime"):
            OnnxEmbedder(spec)   # default factory needs onnxruntime
