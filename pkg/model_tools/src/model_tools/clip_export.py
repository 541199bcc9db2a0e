"""Export a CLIP-style vision/text backbone to ONNX interchange files.

The graphs are built directly from the model's weights (fixed batch size
of 1, fixed text context length), mirroring the reference forward pass
op for op: patch/token embeddings, pre-LN transformer blocks with scaled
queries, CLS pooling + post-layernorm + projection on the vision side,
first-end-token pooling + projection on the text side. A preprocessing
spec (resolution, normalization constants, tokenizer files, feature
dimension) is written alongside as JSON.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .onnx_proto import FLOAT, INT64, Graph, Node, save_model

DEFAULT_IMAGE_MEAN = (0.48145466, 0.4578275, 0.40821073)
DEFAULT_IMAGE_STD = (0.26862954, 0.26130258, 0.27577711)

IMAGE_MODEL_FILE = "image_encoder.onnx"
TEXT_MODEL_FILE = "text_encoder.onnx"
SPEC_FILE = "preprocess.json"


class DownloadError(RuntimeError):
    """The named backbone could not be fetched or found locally."""


class GraphBuilder:
    def __init__(self, name: str):
        self.graph = Graph(name)
        self._n = 0

    def _fresh(self, hint: str) -> str:
        self._n += 1
        return f"{hint}_{self._n}"

    def init(self, hint: str, array: np.ndarray) -> str:
        name = self._fresh(hint)
        self.graph.initializers[name] = np.asarray(array)
        return name

    def node(self, op: str, inputs: Sequence[str], hint: str = "",
             **attributes) -> str:
        out = self._fresh(hint or op.lower())
        self.graph.nodes.append(Node(op, list(inputs), [out],
                                     name=out, attributes=dict(attributes)))
        return out

    def const(self, value: float) -> str:
        return self.init("const", np.array(value, dtype=np.float32))

    def linear(self, x: str, weight: np.ndarray, bias: Optional[np.ndarray],
               hint: str) -> str:
        """y = x @ weight.T + bias for a [out, in] weight matrix."""
        y = self.node("MatMul", [x, self.init(hint + "_w", weight.T.copy())])
        if bias is not None:
            y = self.node("Add", [y, self.init(hint + "_b", bias)])
        return y

    def layer_norm(self, x: str, gamma: np.ndarray, beta: np.ndarray,
                   eps: float, hint: str) -> str:
        mean = self.node("ReduceMean", [x], axes=[-1], keepdims=1)
        centered = self.node("Sub", [x, mean])
        var = self.node("ReduceMean", [self.node("Mul", [centered, centered])],
                        axes=[-1], keepdims=1)
        denom = self.node("Sqrt", [self.node("Add", [var, self.const(eps)])])
        normed = self.node("Div", [centered, denom])
        scaled = self.node("Mul", [normed, self.init(hint + "_g", gamma)])
        return self.node("Add", [scaled, self.init(hint + "_b", beta)])

    def activation(self, x: str, kind: str) -> str:
        if kind == "quick_gelu":
            return self.node("Mul", [x, self.node(
                "Sigmoid", [self.node("Mul", [x, self.const(1.702)])])])
        if kind in ("gelu", "gelu_new", "gelu_pytorch_tanh"):
            # erf form; the tanh approximations differ by < 1e-3 which is
            # far inside the parity tolerance
            half = self.node("Mul", [x, self.const(0.5)])
            e = self.node("Erf", [self.node("Div", [x, self.const(math.sqrt(2.0))])])
            return self.node("Mul", [half, self.node("Add", [e, self.const(1.0)])])
        raise ValueError(f"unsupported activation {kind!r}")

    def reshape(self, x: str, shape: Sequence[int]) -> str:
        return self.node("Reshape", [x, self.init(
            "shape", np.asarray(shape, dtype=np.int64))])

    def attention(self, x: str, w: Dict[str, np.ndarray], heads: int,
                  seq: int, width: int, mask: Optional[str], hint: str) -> str:
        head_dim = width // heads
        scale = head_dim ** -0.5

        def split_heads(y: str) -> str:
            y = self.reshape(y, [1, seq, heads, head_dim])
            return self.node("Transpose", [y], perm=[0, 2, 1, 3])

        q = self.linear(x, w["q_w"], w["q_b"], hint + "_q")
        q = self.node("Mul", [q, self.const(scale)])
        q = split_heads(q)
        k = split_heads(self.linear(x, w["k_w"], w["k_b"], hint + "_k"))
        v = split_heads(self.linear(x, w["v_w"], w["v_b"], hint + "_v"))

        kt = self.node("Transpose", [k], perm=[0, 1, 3, 2])
        scores = self.node("MatMul", [q, kt])
        if mask is not None:
            scores = self.node("Add", [scores, mask])
        probs = self.node("Softmax", [scores], axis=-1)
        ctx = self.node("MatMul", [probs, v])
        ctx = self.node("Transpose", [ctx], perm=[0, 2, 1, 3])
        ctx = self.reshape(ctx, [1, seq, width])
        return self.linear(ctx, w["o_w"], w["o_b"], hint + "_o")

    def encoder_layer(self, x: str, layer: Dict[str, np.ndarray], heads: int,
                      seq: int, width: int, eps: float, act: str,
                      mask: Optional[str], hint: str) -> str:
        attn_in = self.layer_norm(x, layer["ln1_g"], layer["ln1_b"], eps,
                                  hint + "_ln1")
        attn = self.attention(attn_in, layer, heads, seq, width, mask,
                              hint + "_attn")
        x = self.node("Add", [x, attn])
        mlp_in = self.layer_norm(x, layer["ln2_g"], layer["ln2_b"], eps,
                                 hint + "_ln2")
        h = self.linear(mlp_in, layer["fc1_w"], layer["fc1_b"], hint + "_fc1")
        h = self.activation(h, act)
        h = self.linear(h, layer["fc2_w"], layer["fc2_b"], hint + "_fc2")
        return self.node("Add", [x, h])


def _layer_weights(weights: Dict[str, np.ndarray], prefix: str,
                   index: int) -> Dict[str, np.ndarray]:
    base = f"{prefix}.encoder.layers.{index}"
    return {
        "ln1_g": weights[f"{base}.layer_norm1.weight"],
        "ln1_b": weights[f"{base}.layer_norm1.bias"],
        "ln2_g": weights[f"{base}.layer_norm2.weight"],
        "ln2_b": weights[f"{base}.layer_norm2.bias"],
        "q_w": weights[f"{base}.self_attn.q_proj.weight"],
        "q_b": weights[f"{base}.self_attn.q_proj.bias"],
        "k_w": weights[f"{base}.self_attn.k_proj.weight"],
        "k_b": weights[f"{base}.self_attn.k_proj.bias"],
        "v_w": weights[f"{base}.self_attn.v_proj.weight"],
        "v_b": weights[f"{base}.self_attn.v_proj.bias"],
        "o_w": weights[f"{base}.self_attn.out_proj.weight"],
        "o_b": weights[f"{base}.self_attn.out_proj.bias"],
        "fc1_w": weights[f"{base}.mlp.fc1.weight"],
        "fc1_b": weights[f"{base}.mlp.fc1.bias"],
        "fc2_w": weights[f"{base}.mlp.fc2.weight"],
        "fc2_b": weights[f"{base}.mlp.fc2.bias"],
    }


def build_image_encoder(weights: Dict[str, np.ndarray], vision_cfg,
                        projection_dim: int) -> Graph:
    width = vision_cfg.hidden_size
    patch = vision_cfg.patch_size
    size = vision_cfg.image_size
    grid = size // patch
    seq = grid * grid + 1
    eps = vision_cfg.layer_norm_eps

    b = GraphBuilder("clip_image_encoder")
    b.graph.inputs.append(("pixel_values", FLOAT, [1, 3, size, size]))

    patches = b.node("Conv",
                     ["pixel_values",
                      b.init("patch_w",
                             weights["vision_model.embeddings.patch_embedding.weight"])],
                     strides=[patch, patch], kernel_shape=[patch, patch])
    patches = b.reshape(patches, [1, width, grid * grid])
    patches = b.node("Transpose", [patches], perm=[0, 2, 1])
    cls = b.init("class_embedding",
                 weights["vision_model.embeddings.class_embedding"]
                 .reshape(1, 1, width))
    x = b.node("Concat", [cls, patches], axis=1)
    x = b.node("Add", [x, b.init(
        "pos_embedding",
        weights["vision_model.embeddings.position_embedding.weight"]
        .reshape(1, seq, width))])
    x = b.layer_norm(x, weights["vision_model.pre_layrnorm.weight"],
                     weights["vision_model.pre_layrnorm.bias"], eps, "pre_ln")
    for i in range(vision_cfg.num_hidden_layers):
        x = b.encoder_layer(x, _layer_weights(weights, "vision_model", i),
                            vision_cfg.num_attention_heads, seq, width, eps,
                            vision_cfg.hidden_act, None, f"v{i}")
    pooled = b.node("Gather", [x, b.init("cls_index",
                                         np.array(0, dtype=np.int64))], axis=1)
    pooled = b.layer_norm(pooled, weights["vision_model.post_layernorm.weight"],
                          weights["vision_model.post_layernorm.bias"], eps,
                          "post_ln")
    out = b.node("MatMul", [pooled, b.init(
        "visual_projection", weights["visual_projection.weight"].T.copy())])
    b.graph.nodes[-1].outputs[-1] = "image_embeds"
    b.graph.outputs.append(("image_embeds", FLOAT, [1, projection_dim]))
    return b.graph


def build_text_encoder(weights: Dict[str, np.ndarray], text_cfg,
                       projection_dim: int) -> Graph:
    width = text_cfg.hidden_size
    seq = text_cfg.max_position_embeddings
    eps = text_cfg.layer_norm_eps

    b = GraphBuilder("clip_text_encoder")
    b.graph.inputs.append(("input_ids", INT64, [1, seq]))

    x = b.node("Gather",
               [b.init("token_embedding",
                       weights["text_model.embeddings.token_embedding.weight"]),
                "input_ids"], axis=0)
    x = b.node("Add", [x, b.init(
        "pos_embedding",
        weights["text_model.embeddings.position_embedding.weight"]
        .reshape(1, seq, width))])

    causal = np.triu(np.full((seq, seq), np.finfo(np.float32).min,
                             dtype=np.float32), k=1).reshape(1, 1, seq, seq)
    mask = b.init("causal_mask", causal)
    for i in range(text_cfg.num_hidden_layers):
        x = b.encoder_layer(x, _layer_weights(weights, "text_model", i),
                            text_cfg.num_attention_heads, seq, width, eps,
                            text_cfg.hidden_act, mask, f"t{i}")
    x = b.layer_norm(x, weights["text_model.final_layer_norm.weight"],
                     weights["text_model.final_layer_norm.bias"], eps,
                     "final_ln")

    # pool at the first end token = first position holding the max id
    eot = b.node("ArgMax", ["input_ids"], axis=1, keepdims=0)
    eot = b.reshape(eot, [1, 1])
    positions = b.init("positions", np.arange(seq, dtype=np.int64).reshape(1, seq))
    onehot = b.node("Cast", [b.node("Equal", [positions, eot])], to=FLOAT)
    onehot = b.node("Unsqueeze", [onehot, b.init(
        "unsq_axes", np.array([2], dtype=np.int64))])
    pooled = b.node("ReduceSum", [b.node("Mul", [x, onehot]), b.init(
        "sum_axes", np.array([1], dtype=np.int64))], keepdims=0)
    out = b.node("MatMul", [pooled, b.init(
        "text_projection", weights["text_projection.weight"].T.copy())])
    b.graph.nodes[-1].outputs[-1] = "text_embeds"
    b.graph.outputs.append(("text_embeds", FLOAT, [1, projection_dim]))
    return b.graph


def _save_tokenizer_files(tokenizer, out: Path) -> tuple:
    """Write vocab.json + merges.txt regardless of tokenizer generation.

    Older transformers expose save_vocabulary; tokenizers-backed ones keep
    vocab and merges inside the backend JSON instead.
    """
    try:
        paths = tokenizer.save_vocabulary(str(out))
        if paths and all(p and Path(p).exists() for p in paths[:2]):
            return tuple(Path(p).name for p in paths[:2])
    except Exception:
        pass
    backend = getattr(tokenizer, "backend_tokenizer", None)
    if backend is None:
        raise ValueError("tokenizer exposes neither save_vocabulary nor a "
                         "fast backend; cannot export vocab/merges")
    data = json.loads(backend.to_str())
    model = data["model"]
    vocab = dict(model["vocab"])
    for added in data.get("added_tokens", []):
        vocab.setdefault(added["content"], added["id"])
    merges = model["merges"]
    lines = [" ".join(m) if isinstance(m, (list, tuple)) else m for m in merges]
    with open(out / "vocab.json", "w", encoding="utf-8") as f:
        json.dump(vocab, f, ensure_ascii=False)
    (out / "merges.txt").write_text("#version: 0.2\n" + "\n".join(lines) + "\n",
                                    encoding="utf-8")
    return "vocab.json", "merges.txt"


def export_model(model, tokenizer, out_dir, image_mean=None, image_std=None,
                 image_size: Optional[int] = None) -> Dict[str, str]:
    """Export an in-memory CLIP model plus its tokenizer files.

    `image_size`, when given, must match the vision tower's configured
    resolution (a mismatched spec would silently degrade every embedding).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = model.config
    if image_size is not None and image_size != config.vision_config.image_size:
        raise ValueError(
            f"resolution spec {image_size} does not match the vision tower's "
            f"{config.vision_config.image_size}")

    weights = {key: value.detach().cpu().numpy().astype(np.float32)
               for key, value in model.state_dict().items()}
    save_model(build_image_encoder(weights, config.vision_config,
                                   config.projection_dim),
               out / IMAGE_MODEL_FILE)
    save_model(build_text_encoder(weights, config.text_config,
                                  config.projection_dim),
               out / TEXT_MODEL_FILE)

    vocab_file, merges_file = _save_tokenizer_files(tokenizer, out)
    spec = {
        "image_model": IMAGE_MODEL_FILE,
        "text_model": TEXT_MODEL_FILE,
        "dimension": config.projection_dim,
        "image_size": config.vision_config.image_size,
        "context_length": config.text_config.max_position_embeddings,
        "mean": list(image_mean or DEFAULT_IMAGE_MEAN),
        "std": list(image_std or DEFAULT_IMAGE_STD),
        "interpolation": "bicubic",
        "batch_size": 1,
        "tokenizer": {"vocab": vocab_file, "merges": merges_file},
    }
    with open(out / SPEC_FILE, "w", encoding="utf-8") as f:
        json.dump(spec, f, indent=2, sort_keys=True)
        f.write("\n")
    return {"image_model": str(out / IMAGE_MODEL_FILE),
            "text_model": str(out / TEXT_MODEL_FILE),
            "spec": str(out / SPEC_FILE)}


def export_backbone(model_name: str, out_dir) -> Dict[str, str]:
    """Fetch a named CLIP backbone and export it.

    Needs network access or a local checkout of the weights; failures to
    fetch raise DownloadError.
    """
    import torch
    from transformers import CLIPModel, CLIPProcessor

    try:
        model = CLIPModel.from_pretrained(model_name)
        processor = CLIPProcessor.from_pretrained(model_name)
    except (OSError, ValueError) as exc:
        raise DownloadError(f"cannot fetch backbone {model_name!r}: {exc}") from exc
    model.eval()
    with torch.no_grad():
        image_processor = processor.image_processor
        return export_model(model, processor.tokenizer, out_dir,
                            image_mean=list(image_processor.image_mean),
                            image_std=list(image_processor.image_std))
