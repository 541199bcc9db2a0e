"""Embedding backends behind one small interface.

The pipeline only ever needs ``embed_image`` / ``embed_text`` returning
unit-norm vectors, a dimension, and a flag saying whether the backend may
be called from several workers at once. Two backends ship here:

  * MockEmbedder: deterministic, dataset-free. Concepts are fixed unit
    vectors; crops rendered by the synthetic scene generator carry their
    concept as a palette color which the mock decodes back. Used by the
    test suite and the study harness.
  * OnnxEmbedder: runs exported image/text encoders in the ONNX
    interchange format with the preprocessing constants from their
    sidecar spec. Execution defaults to onnxruntime but any session-like
    object can be injected.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Callable, Dict, Optional, Protocol, Sequence

import numpy as np

from .features import normalize_feature
from .tokenizer import ClipTokenizer


class Embedder(Protocol):
    """Minimal contract the pipeline relies on."""

    dimension: int
    concurrent_safe: bool

    def embed_image(self, crop: np.ndarray) -> np.ndarray: ...

    def embed_text(self, label: str) -> np.ndarray: ...


def _digest_ints(*parts) -> np.ndarray:
    """Stable 64-bit words from arbitrary inputs, for seeding generators."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, bytes):
            h.update(part)
        else:
            h.update(str(part).encode("utf-8"))
        h.update(b"\x00")
    return np.frombuffer(h.digest(), dtype=np.uint64)


def concept_color(index: int) -> np.ndarray:
    """Palette color tagging concept `index` in synthetic renders.

    Spread over hue so nearest-color decoding is unambiguous for dozens of
    concepts; black is reserved for background.
    """
    golden = 0.6180339887498949
    h = (index * golden) % 1.0
    # plain HSV -> RGB at full saturation, value 0.55 + 0.45 * alternation
    v = 0.55 + 0.45 * ((index % 3) / 2.0)
    i = int(h * 6) % 6
    f = h * 6 - int(h * 6)
    p, q, t = 0.0, v * (1 - f), v * f
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.clip(np.round(np.array(rgb) * 255), 40, 255).astype(np.uint8)


class MockEmbedder:
    """Deterministic test backend over a fixed concept table.

    Each concept gets a random unit vector drawn once from the seed. Image
    crops are mapped to the concept whose palette color dominates the crop,
    then perturbed by seeded noise; unknown labels/colors hash to stable
    random directions. Identical inputs always produce identical outputs.
    """

    concurrent_safe = True

    def __init__(self, concepts: Sequence[str], dimension: int = 64,
                 seed: int = 0, noise: float = 0.05,
                 work_iterations: int = 2):
        self.concepts = [c.casefold() for c in concepts]
        if len(set(self.concepts)) != len(self.concepts):
            raise ValueError("concept names must be unique (case-folded)")
        self.dimension = dimension
        self.seed = seed
        self.noise = noise
        self._index = {name: i for i, name in enumerate(self.concepts)}
        rng = np.random.default_rng([seed, 0xC0FFEE])
        self._vectors = rng.standard_normal((len(self.concepts), dimension))
        self._vectors /= np.linalg.norm(self._vectors, axis=1, keepdims=True)
        self._palette = (np.stack([concept_color(i) for i in range(len(self.concepts))])
                         if self.concepts else np.zeros((0, 3), dtype=np.uint8))
        # fixed busy-work buffer so per-call cost is stable and size-independent
        self._work = rng.integers(0, 256, size=1 << 18, dtype=np.uint8).tobytes()
        self._work_iterations = work_iterations

    def concept_vector(self, name: str) -> np.ndarray:
        return self._vectors[self._index[name.casefold()]].copy()

    def embed_concept(self, name: str, noise: Optional[float] = None,
                      salt=0) -> np.ndarray:
        """Concept vector plus seeded Gaussian noise, renormalized."""
        sigma = self.noise if noise is None else noise
        base = self.concept_vector(name)
        if sigma > 0:
            rng = np.random.default_rng(_digest_ints(self.seed, name.casefold(), salt))
            base = base + sigma * rng.standard_normal(self.dimension)
        return normalize_feature(base)

    def embed_text(self, label: str) -> np.ndarray:
        folded = label.casefold()
        if folded in self._index:
            return self.concept_vector(folded)
        rng = np.random.default_rng(_digest_ints(self.seed, "text", folded))
        return normalize_feature(rng.standard_normal(self.dimension))

    def embed_image(self, crop: np.ndarray) -> np.ndarray:
        crop = np.asarray(crop)
        if crop.ndim != 3 or crop.shape[2] != 3:
            raise ValueError("crop must be an HxWx3 array")
        for _ in range(self._work_iterations):
            hashlib.sha256(self._work).digest()
        idx = self._dominant_concept(crop)
        salt = _digest_ints(self._sample_bytes(crop))[0]
        if idx is None:
            rng = np.random.default_rng(_digest_ints(self.seed, "unknown", salt))
            return normalize_feature(rng.standard_normal(self.dimension))
        return self.embed_concept(self.concepts[idx], salt=salt)

    def _dominant_concept(self, crop: np.ndarray) -> Optional[int]:
        if not self.concepts:
            return None
        h, w = crop.shape[:2]
        # bounded subsample keeps the per-call cost independent of crop size
        sample = crop[:: max(1, h // 48), :: max(1, w // 48)]
        px = sample.reshape(-1, 3).astype(np.int32)
        px = px[px.sum(axis=1) > 60]            # drop (near-)black background
        if len(px) == 0:
            return None
        d2 = ((px[:, None, :] - self._palette[None, :, :].astype(np.int32)) ** 2).sum(axis=2)
        nearest = np.argmin(d2, axis=1)
        close = d2[np.arange(len(px)), nearest] < 3 * 40 ** 2
        if not close.any():
            return None
        return int(np.bincount(nearest[close], minlength=len(self.concepts)).argmax())

    @staticmethod
    def _sample_bytes(crop: np.ndarray) -> bytes:
        h, w = crop.shape[:2]
        return crop[:: max(1, h // 8), :: max(1, w // 8)].tobytes()


def _onnxruntime_session(path: str):
    try:
        import onnxruntime  # type: ignore
    except ImportError as exc:
        raise ImportError(
            "onnxruntime is required to run exported models; install the "
            "'onnx' extra or inject a session_factory") from exc
    return onnxruntime.InferenceSession(str(path), providers=["CPUExecutionProvider"])


class OnnxEmbedder:
    """Vision/text encoders in ONNX interchange format.

    `spec_path` points at the preprocessing JSON written at export time
    (input resolution, normalization constants, tokenizer files, feature
    dimension). Crops are resized to the model resolution with bicubic
    interpolation before normalization.
    """

    concurrent_safe = True

    def __init__(self, spec_path,
                 session_factory: Callable[[str], object] = _onnxruntime_session):
        spec_path = Path(spec_path)
        with open(spec_path, encoding="utf-8") as f:
            self.spec: Dict = json.load(f)
        base = spec_path.parent
        self.dimension = int(self.spec["dimension"])
        self._mean = np.asarray(self.spec["mean"], dtype=np.float32)
        self._std = np.asarray(self.spec["std"], dtype=np.float32)
        self._size = int(self.spec["image_size"])
        self._image = session_factory(base / self.spec["image_model"])
        self._text = session_factory(base / self.spec["text_model"])
        tok = self.spec["tokenizer"]
        self._tokenizer = ClipTokenizer(base / tok["vocab"], base / tok["merges"],
                                        context_length=int(self.spec["context_length"]))

    def preprocess(self, crop: np.ndarray) -> np.ndarray:
        """Bicubic resize to model resolution, rescale, normalize, NCHW."""
        from PIL import Image

        img = Image.fromarray(np.asarray(crop, dtype=np.uint8))
        img = img.resize((self._size, self._size), Image.BICUBIC)
        arr = np.asarray(img, dtype=np.float32) / 255.0
        arr = (arr - self._mean) / self._std
        return arr.transpose(2, 0, 1)[None]

    def embed_image(self, crop: np.ndarray) -> np.ndarray:
        inputs = {self._input_name(self._image): self.preprocess(crop)}
        (out,) = self._image.run(None, inputs)
        return normalize_feature(out[0])

    def embed_text(self, label: str) -> np.ndarray:
        ids = self._tokenizer([label])
        (out,) = self._text.run(None, {self._input_name(self._text): ids})
        return normalize_feature(out[0])

    @staticmethod
    def _input_name(session) -> str:
        return session.get_inputs()[0].name
