"""Precompute prompt-embedding (OVPE) files from a text backbone.

The OVPE layout is little-endian: magic "OVPE", version u16, D u32,
n u32, then n labels (u32 byte length + UTF-8 bytes), then n*D float32
embedding values row-major, rows unit-norm. It is written here without
any dependency on the consuming pipeline so the round trip genuinely
crosses an implementation boundary.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import List, Sequence

import numpy as np

OVPE_MAGIC = b"OVPE"
OVPE_VERSION = 1


def read_label_file(path) -> List[str]:
    """One label per line; blank lines and #-comments are skipped."""
    labels = []
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if line and not line.startswith("#"):
            labels.append(line)
    if not labels:
        raise ValueError(f"{path}: no labels found")
    return labels


def check_unique(labels: Sequence[str]) -> None:
    seen = {}
    duplicates = []
    for label in labels:
        folded = label.casefold()
        if folded in seen:
            duplicates.append(f"{label!r} vs {seen[folded]!r}")
        seen[folded] = label
    if duplicates:
        raise ValueError("duplicate labels after case-folding: "
                         + ", ".join(duplicates))


def write_ovpe(path, labels: Sequence[str], embeddings: np.ndarray) -> None:
    embeddings = np.ascontiguousarray(embeddings, dtype=np.float32)
    n, dim = embeddings.shape
    if n != len(labels):
        raise ValueError("label count does not match embedding rows")
    check_unique(labels)
    norms = np.linalg.norm(embeddings, axis=1)
    if n and np.abs(norms - 1.0).max() > 1e-3:
        raise ValueError("embedding rows must be unit-norm")
    with open(path, "wb") as f:
        f.write(OVPE_MAGIC)
        f.write(struct.pack("<HII", OVPE_VERSION, dim, n))
        for label in labels:
            raw = label.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        f.write(embeddings.astype("<f4").tobytes())


def projected_features(output):
    """Feature tensor from get_text/image_features across transformers
    generations (plain tensor before v5, an output object after)."""
    if hasattr(output, "pooler_output"):
        return output.pooler_output
    return output


def embed_labels(model, tokenizer, labels: Sequence[str],
                 batch_size: int = 64) -> np.ndarray:
    """Unit-norm text embeddings from a torch CLIP model."""
    import torch

    rows = []
    with torch.no_grad():
        for start in range(0, len(labels), batch_size):
            chunk = list(labels[start:start + batch_size])
            tokens = tokenizer(chunk, padding="max_length",
                               max_length=model.config.text_config.max_position_embeddings,
                               truncation=True, return_tensors="pt")
            feats = projected_features(
                model.get_text_features(input_ids=tokens["input_ids"]))
            rows.append(feats.cpu().numpy().astype(np.float32))
    out = np.concatenate(rows)
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out


def export_prompts(label_file, model_name_or_model, out_path,
                   tokenizer=None) -> int:
    """Embed a label file into an OVPE prompt file; returns the row count.

    Accepts either a backbone name (fetched via transformers) or an
    in-memory (model, tokenizer) pair.
    """
    labels = read_label_file(label_file)
    check_unique(labels)
    if isinstance(model_name_or_model, str):
        from transformers import CLIPModel, CLIPTokenizer

        from .clip_export import DownloadError

        try:
            model = CLIPModel.from_pretrained(model_name_or_model)
            tokenizer = CLIPTokenizer.from_pretrained(model_name_or_model)
        except (OSError, ValueError) as exc:
            raise DownloadError(
                f"cannot fetch backbone {model_name_or_model!r}: {exc}") from exc
        model.eval()
    else:
        model = model_name_or_model
        if tokenizer is None:
            raise ValueError("pass a tokenizer along with an in-memory model")
    embeddings = embed_labels(model, tokenizer, labels)
    write_ovpe(out_path, labels, embeddings)
    return len(labels)
