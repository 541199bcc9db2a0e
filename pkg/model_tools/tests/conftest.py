import json
import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", category=UserWarning)
warnings.filterwarnings("ignore", category=FutureWarning)


def _bytes_to_unicode():
    bs = (list(range(ord("!"), ord("~") + 1))
          + list(range(0xA1, 0xAC + 1)) + list(range(0xAE, 0xFF + 1)))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


TINY_MERGES = [("c h", "ch"), ("a i", "ai"), ("ch ai", "chai"),
               ("t a", "ta"), ("l a", "la"), ("s o", "so")]


def write_tiny_vocab(out_dir):
    """Byte-level CLIP vocab small enough for unit tests.

    The end-of-text token deliberately gets the highest id so pooling at
    argmax(input_ids) finds it, matching the full-size vocabulary layout.
    """
    units = list(_bytes_to_unicode().values())
    vocab = {}
    for unit in units:
        vocab[unit] = len(vocab)
    for unit in units:
        vocab[unit + "</w>"] = len(vocab)
    for _, merged in TINY_MERGES:
        vocab[merged] = len(vocab)
    vocab["<|startoftext|>"] = len(vocab)
    vocab["<|endoftext|>"] = len(vocab)
    vocab_path = out_dir / "vocab.json"
    merges_path = out_dir / "merges.txt"
    vocab_path.write_text(json.dumps(vocab), encoding="utf-8")
    merges_path.write_text(
        "#version: 0.2\n" + "\n".join(m for m, _ in TINY_MERGES) + "\n",
        encoding="utf-8")
    return vocab, vocab_path, merges_path


@pytest.fixture(scope="session")
def tiny_clip(tmp_path_factory):
    """(model, tokenizer, vocab) with random weights and a tiny vocab."""
    import torch
    from transformers import CLIPConfig, CLIPModel, CLIPTokenizer

    out = tmp_path_factory.mktemp("tiny_tok")
    vocab, vocab_path, merges_path = write_tiny_vocab(out)
    tokenizer = CLIPTokenizer(str(vocab_path), str(merges_path))
    config = CLIPConfig(
        text_config=dict(hidden_size=32, intermediate_size=64,
                         num_hidden_layers=2, num_attention_heads=4,
                         max_position_embeddings=16, vocab_size=len(vocab),
                         hidden_act="quick_gelu",
                         eos_token_id=vocab["<|endoftext|>"],
                         bos_token_id=vocab["<|startoftext|>"],
                         pad_token_id=vocab["<|endoftext|>"]),
        vision_config=dict(hidden_size=32, intermediate_size=64,
                           num_hidden_layers=2, num_attention_heads=4,
                           image_size=32, patch_size=16,
                           hidden_act="quick_gelu"),
        projection_dim=24)
    torch.manual_seed(0)
    model = CLIPModel(config).eval()
    return model, tokenizer, vocab


@pytest.fixture(scope="session")
def exported_tiny_clip(tiny_clip, tmp_path_factory):
    from model_tools.clip_export import export_model

    model, tokenizer, _ = tiny_clip
    out = tmp_path_factory.mktemp("export")
    export_model(model, tokenizer, out)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(7)
