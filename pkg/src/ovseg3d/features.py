"""Shared image/text feature space: prompt lists, inter-concept similarity
distributions, and their entropy.

A feature is a unit-norm numpy vector. Comparing one feature against every
label embedding of a prompt list by cosine similarity and passing the
scaled cosines through a softmax yields the inter-concept similarity: a
probability distribution over the label space whose Shannon entropy
H = -sum_i s(i) ln s(i) measures how ambiguous the view is.

Two prompt-list roles exist and are deliberately kept apart: the
"entropy" list drives per-view uncertainty scoring, the "evaluation" list
drives final classification.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, List, Sequence, Tuple

import numpy as np

from .errors import DuplicateLabelError

DEFAULT_TEMPERATURE = 100.0   # conventional logit scale of the backbone
UNIT_NORM_TOL = 1e-4

OVPE_MAGIC = b"OVPE"
OVPE_VERSION = 1

ROLE_EVALUATION = "evaluation"
ROLE_ENTROPY = "entropy"
_ROLES = (ROLE_EVALUATION, ROLE_ENTROPY)


def normalize_feature(values: np.ndarray) -> np.ndarray:
    """Return values scaled to unit L2 norm."""
    values = np.asarray(values, dtype=np.float64)
    norm = np.linalg.norm(values)
    if norm <= 0 or not np.isfinite(norm):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return values / norm


def entropy(probs: np.ndarray) -> float:
    """Shannon entropy in nats, with 0 * ln 0 taken as 0."""
    probs = np.asarray(probs, dtype=np.float64)
    nz = probs[probs > 0]
    return float(-(nz * np.log(nz)).sum())


@dataclass(frozen=True)
class PromptList:
    """Ordered labels plus their unit-norm embedding matrix."""

    labels: Tuple[str, ...]
    embeddings: np.ndarray   # n x D, unit-norm rows
    role: str

    def __post_init__(self):
        if self.role not in _ROLES:
            raise ValueError(f"role must be one of {_ROLES}, got {self.role!r}")
        emb = np.ascontiguousarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != len(self.labels):
            raise ValueError("embedding row count must equal label count")
        norms = np.linalg.norm(emb, axis=1)
        if np.abs(norms - 1.0).max() > UNIT_NORM_TOL:
            raise ValueError("prompt embeddings must have unit-norm rows")
        _check_unique(self.labels)
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dimension(self) -> int:
        return self.embeddings.shape[1]

    def with_role(self, role: str) -> "PromptList":
        return PromptList(self.labels, self.embeddings, role)


def _check_unique(labels: Sequence[str]) -> None:
    seen = {}
    for label in labels:
        folded = label.casefold()
        if folded in seen:
            raise DuplicateLabelError(
                f"duplicate label after case-folding: {label!r} vs {seen[folded]!r}")
        seen[folded] = label


def build_prompt_list(labels: Sequence[str], embedder,
                      role: str = ROLE_EVALUATION,
                      template: str = "{}") -> PromptList:
    """Embed labels (verbatim by default) into a PromptList.

    The template, when given, wraps each label before embedding; the stored
    labels stay as passed in.
    """
    labels = list(labels)
    if not labels:
        raise ValueError("label list is empty")
    _check_unique(labels)
    rows = [normalize_feature(embedder.embed_text(template.format(label)))
            for label in labels]
    return PromptList(tuple(labels), np.vstack(rows), role)


@dataclass(frozen=True)
class ConceptDistribution:
    """Softmax over scaled cosines of one feature against a prompt list."""

    probs: np.ndarray
    entropy: float
    argmax_index: int
    max_score: float   # best pre-softmax cosine

    def __post_init__(self):
        p = np.ascontiguousarray(self.probs, dtype=np.float64)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)


def concept_distribution(feature: np.ndarray, prompts: PromptList,
                         temperature: float = DEFAULT_TEMPERATURE,
                         ) -> ConceptDistribution:
    """Inter-concept similarity of a feature under a prompt list.

    probs = softmax(temperature * cosines); entropy is reported in nats.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    feature = np.asarray(feature, dtype=np.float64)
    if feature.shape != (prompts.dimension,):
        raise ValueError(
            f"feature dimension {feature.shape} does not match prompt "
            f"dimension ({prompts.dimension},)")
    cosines = prompts.embeddings @ feature
    logits = temperature * cosines
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    return ConceptDistribution(p, entropy(p), int(np.argmax(p)),
                               float(cosines.max()))


def classify(dist: ConceptDistribution, prompts: PromptList) -> str:
    """Label at the distribution's argmax (ties go to the lowest index)."""
    if len(dist.probs) != len(prompts):
        raise ValueError("distribution length does not match prompt list")
    return prompts.labels[dist.argmax_index]


# ---------------------------------------------------------------------------
# OVPE prompt-embedding files
#
# Layout (all little-endian): magic "OVPE", version u16, D u32, n u32,
# then n labels each as u32 byte-length + UTF-8 bytes, then n*D float32
# embedding values, row-major.
# ---------------------------------------------------------------------------

def write_prompt_file(path, labels: Sequence[str], embeddings: np.ndarray) -> None:
    embeddings = np.ascontiguousarray(embeddings, dtype=np.float32)
    n, dim = embeddings.shape
    if n != len(labels):
        raise ValueError("label count does not match embedding rows")
    _check_unique(labels)
    with open(path, "wb") as f:
        f.write(OVPE_MAGIC)
        f.write(struct.pack("<HII", OVPE_VERSION, dim, n))
        for label in labels:
            raw = label.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        f.write(embeddings.astype("<f4").tobytes())


def read_prompt_file(path, role: str = ROLE_EVALUATION) -> PromptList:
    """Load an OVPE file; rows must be unit-norm within 1e-3."""
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != OVPE_MAGIC:
            raise ValueError(f"{path}: not an OVPE file (magic {magic!r})")
        version, dim, n = struct.unpack("<HII", _read_exact(f, 10))
        if version != OVPE_VERSION:
            raise ValueError(f"{path}: unsupported OVPE version {version}")
        labels = []
        for _ in range(n):
            (length,) = struct.unpack("<I", _read_exact(f, 4))
            labels.append(_read_exact(f, length).decode("utf-8"))
        data = np.frombuffer(_read_exact(f, 4 * n * dim), dtype="<f4")
    emb = data.reshape(n, dim).astype(np.float64)
    norms = np.linalg.norm(emb, axis=1)
    if n and np.abs(norms - 1.0).max() > 1e-3:
        raise ValueError(f"{path}: embedding rows are not unit-norm")
    emb /= norms[:, None]
    return PromptList(tuple(labels), emb, role)


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ValueError("truncated OVPE file")
    return data
