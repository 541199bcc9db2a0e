"""Numpy reference evaluator for the exported encoder graphs.

Executes the op subset the exporters emit (standard ONNX semantics,
opset 17). It exists so exports can be validated, and run, without
onnxruntime; sessions expose the same `run`/`get_inputs` surface, so the
primary pipeline can inject one wherever an onnxruntime session fits.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.special import erf

from .onnx_proto import _ONNX_TO_NP, Graph, Node, load_model


@dataclass
class _IoSpec:
    name: str
    elem_type: int
    shape: List


class ReferenceSession:
    """Drop-in single-threaded executor for our exported graphs."""

    def __init__(self, model_path):
        self.graph: Graph = load_model(model_path)
        self._order = self.graph.nodes
        self._inputs = [_IoSpec(*io) for io in self.graph.inputs]
        self._outputs = [_IoSpec(*io) for io in self.graph.outputs]

    def get_inputs(self) -> List[_IoSpec]:
        return self._inputs

    def get_outputs(self) -> List[_IoSpec]:
        return self._outputs

    def run(self, output_names: Optional[Sequence[str]],
            feeds: Dict[str, np.ndarray]) -> List[np.ndarray]:
        values: Dict[str, np.ndarray] = dict(self.graph.initializers)
        for spec in self._inputs:
            if spec.name not in feeds:
                raise ValueError(f"missing input {spec.name!r}")
            expected = _ONNX_TO_NP[spec.elem_type]
            values[spec.name] = np.asarray(feeds[spec.name], dtype=expected)
        for node in self._order:
            outs = _OPS[node.op_type](node, [values[name] for name in node.inputs])
            for name, value in zip(node.outputs, outs):
                values[name] = value
        names = output_names or [spec.name for spec in self._outputs]
        return [values[name] for name in names]


def _attr(node: Node, name: str, default=None):
    return node.attributes.get(name, default)


def _op_conv(node: Node, inputs):
    x, w = inputs[:2]
    strides = _attr(node, "strides", [1, 1])
    n, c, h, width = x.shape
    f, _, kh, kw = w.shape
    sh, sw = strides
    oh = (h - kh) // sh + 1
    ow = (width - kw) // sw + 1
    if (kh, kw) == (sh, sw) and h % kh == 0 and width % kw == 0:
        # non-overlapping patches (the ViT patch embedding)
        patches = x.reshape(n, c, oh, kh, ow, kw)
        out = np.einsum("nchpwq,fcpq->nfhw", patches, w)
    else:
        out = np.zeros((n, f, oh, ow), dtype=np.float32)
        for i in range(oh):
            for j in range(ow):
                patch = x[:, :, i * sh:i * sh + kh, j * sw:j * sw + kw]
                out[:, :, i, j] = np.einsum("nchw,fchw->nf", patch, w)
    if len(inputs) == 3:
        out = out + inputs[2].reshape(1, f, 1, 1)
    return [out.astype(np.float32)]


def _op_matmul(node: Node, inputs):
    return [np.matmul(inputs[0], inputs[1]).astype(inputs[0].dtype)]


def _op_softmax(node: Node, inputs):
    axis = _attr(node, "axis", -1)
    x = inputs[0]
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return [(e / e.sum(axis=axis, keepdims=True)).astype(x.dtype)]


def _op_gather(node: Node, inputs):
    data, indices = inputs
    axis = _attr(node, "axis", 0)
    return [np.take(data, indices.astype(np.int64), axis=axis)]


def _op_reduce_mean(node: Node, inputs):
    axes = tuple(_attr(node, "axes"))
    keep = bool(_attr(node, "keepdims", 1))
    return [inputs[0].mean(axis=axes, keepdims=keep).astype(inputs[0].dtype)]


def _op_reduce_sum(node: Node, inputs):
    # opset 13+: axes arrive as the second input
    axes = tuple(int(a) for a in inputs[1]) if len(inputs) > 1 else None
    keep = bool(_attr(node, "keepdims", 1))
    return [inputs[0].sum(axis=axes, keepdims=keep).astype(inputs[0].dtype)]


def _op_argmax(node: Node, inputs):
    axis = _attr(node, "axis", 0)
    keep = bool(_attr(node, "keepdims", 1))
    if _attr(node, "select_last_index", 0):
        raise NotImplementedError("select_last_index is not used by our graphs")
    out = np.argmax(inputs[0], axis=axis)
    if keep:
        out = np.expand_dims(out, axis)
    return [out.astype(np.int64)]


def _op_cast(node: Node, inputs):
    return [inputs[0].astype(_ONNX_TO_NP[_attr(node, "to")])]


def _op_transpose(node: Node, inputs):
    return [np.transpose(inputs[0], axes=_attr(node, "perm"))]


def _op_reshape(node: Node, inputs):
    shape = [int(v) for v in inputs[1]]
    return [inputs[0].reshape(shape)]


def _op_concat(node: Node, inputs):
    return [np.concatenate(inputs, axis=_attr(node, "axis"))]


def _op_unsqueeze(node: Node, inputs):
    out = inputs[0]
    for axis in sorted(int(a) for a in inputs[1]):
        out = np.expand_dims(out, axis)
    return [out]


_OPS = {
    "Conv": _op_conv,
    "MatMul": _op_matmul,
    "Softmax": _op_softmax,
    "Gather": _op_gather,
    "ReduceMean": _op_reduce_mean,
    "ReduceSum": _op_reduce_sum,
    "ArgMax": _op_argmax,
    "Cast": _op_cast,
    "Transpose": _op_transpose,
    "Reshape": _op_reshape,
    "Concat": _op_concat,
    "Unsqueeze": _op_unsqueeze,
    "Add": lambda n, i: [np.add(i[0], i[1])],
    "Sub": lambda n, i: [np.subtract(i[0], i[1])],
    "Mul": lambda n, i: [np.multiply(i[0], i[1])],
    "Div": lambda n, i: [np.divide(i[0], i[1])],
    "Sqrt": lambda n, i: [np.sqrt(i[0])],
    "Erf": lambda n, i: [erf(i[0]).astype(i[0].dtype)],
    "Sigmoid": lambda n, i: [(1.0 / (1.0 + np.exp(-i[0]))).astype(i[0].dtype)],
    "Equal": lambda n, i: [np.equal(i[0], i[1])],
}


def make_session(model_path):
    """onnxruntime session when importable, reference session otherwise."""
    try:
        import onnxruntime  # type: ignore

        return onnxruntime.InferenceSession(str(model_path),
                                            providers=["CPUExecutionProvider"])
    except ImportError:
        return ReferenceSession(model_path)
