"""Self-contained ONNX serialization: the protobuf wire format plus the
slice of the ONNX schema the exporters emit.

Only the fields used by our graphs are modeled (ModelProto, GraphProto,
NodeProto, AttributeProto, TensorProto, ValueInfoProto and friends); the
files produced are standard ONNX (ir_version 8, one default-domain opset)
and load in onnxruntime unchanged. The reader accepts what the writer
emits, which is enough to round-trip and execute our own exports without
the onnx package installed.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

IR_VERSION = 8
OPSET_VERSION = 17

# TensorProto.DataType values
FLOAT = 1
UINT8 = 2
INT32 = 6
INT64 = 7
BOOL = 9
DOUBLE = 11

_NP_TO_ONNX = {np.dtype(np.float32): FLOAT, np.dtype(np.uint8): UINT8,
               np.dtype(np.int32): INT32, np.dtype(np.int64): INT64,
               np.dtype(np.bool_): BOOL, np.dtype(np.float64): DOUBLE}
_ONNX_TO_NP = {v: k for k, v in _NP_TO_ONNX.items()}

# AttributeProto.AttributeType values
ATTR_FLOAT = 1
ATTR_INT = 2
ATTR_STRING = 3
ATTR_FLOATS = 6
ATTR_INTS = 7


# ---------------------------------------------------------------------------
# wire primitives
# ---------------------------------------------------------------------------

def _varint(value: int) -> bytes:
    if value < 0:
        value &= (1 << 64) - 1  # two's complement, 64-bit
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def _tag(field_number: int, wire_type: int) -> bytes:
    return _varint((field_number << 3) | wire_type)


def _len_field(field_number: int, payload: bytes) -> bytes:
    return _tag(field_number, 2) + _varint(len(payload)) + payload


def _varint_field(field_number: int, value: int) -> bytes:
    return _tag(field_number, 0) + _varint(value)


def _string_field(field_number: int, value: str) -> bytes:
    return _len_field(field_number, value.encode("utf-8"))


def _float_field(field_number: int, value: float) -> bytes:
    return _tag(field_number, 5) + struct.pack("<f", value)


def _packed_varints(field_number: int, values: Sequence[int]) -> bytes:
    payload = b"".join(_varint(v) for v in values)
    return _len_field(field_number, payload)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def done(self) -> bool:
        return self.pos >= len(self.data)

    def varint(self) -> int:
        shift = 0
        value = 0
        while True:
            byte = self.data[self.pos]
            self.pos += 1
            value |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return value
            shift += 7

    def signed_varint(self) -> int:
        value = self.varint()
        if value >= 1 << 63:
            value -= 1 << 64
        return value

    def tag(self) -> Tuple[int, int]:
        t = self.varint()
        return t >> 3, t & 0x07

    def bytes_field(self) -> bytes:
        length = self.varint()
        out = self.data[self.pos:self.pos + length]
        if len(out) != length:
            raise ValueError("truncated protobuf payload")
        self.pos += length
        return out

    def fixed32(self) -> bytes:
        out = self.data[self.pos:self.pos + 4]
        self.pos += 4
        return out

    def fixed64(self) -> bytes:
        out = self.data[self.pos:self.pos + 8]
        self.pos += 8
        return out

    def skip(self, wire_type: int) -> None:
        if wire_type == 0:
            self.varint()
        elif wire_type == 1:
            self.fixed64()
        elif wire_type == 2:
            self.bytes_field()
        elif wire_type == 5:
            self.fixed32()
        else:
            raise ValueError(f"unsupported wire type {wire_type}")


def _read_packed_varints(payload: bytes, signed: bool = True) -> List[int]:
    r = _Reader(payload)
    out = []
    while not r.done():
        out.append(r.signed_varint() if signed else r.varint())
    return out


# ---------------------------------------------------------------------------
# schema subset
# ---------------------------------------------------------------------------

@dataclass
class Attribute:
    name: str
    value: Union[int, float, str, List[int], List[float]]

    def encode(self) -> bytes:
        out = _string_field(1, self.name)
        if isinstance(self.value, bool):
            raise TypeError("use int attributes, not bool")
        if isinstance(self.value, int):
            out += _varint_field(3, self.value) + _varint_field(20, ATTR_INT)
        elif isinstance(self.value, float):
            out += _float_field(2, self.value) + _varint_field(20, ATTR_FLOAT)
        elif isinstance(self.value, str):
            out += _len_field(4, self.value.encode("utf-8"))
            out += _varint_field(20, ATTR_STRING)
        elif isinstance(self.value, (list, tuple)):
            if all(isinstance(v, int) for v in self.value):
                out += _packed_varints(8, list(self.value))
                out += _varint_field(20, ATTR_INTS)
            else:
                payload = b"".join(struct.pack("<f", float(v)) for v in self.value)
                out += _len_field(7, payload) + _varint_field(20, ATTR_FLOATS)
        else:
            raise TypeError(f"unsupported attribute value {self.value!r}")
        return out

    @classmethod
    def decode(cls, data: bytes) -> "Attribute":
        r = _Reader(data)
        name = ""
        int_value: Optional[int] = None
        float_value: Optional[float] = None
        string_value: Optional[str] = None
        ints: Optional[List[int]] = None
        floats: Optional[List[float]] = None
        attr_type = ATTR_INT
        while not r.done():
            num, wt = r.tag()
            if num == 1:
                name = r.bytes_field().decode("utf-8")
            elif num == 2:
                float_value = struct.unpack("<f", r.fixed32())[0]
            elif num == 3:
                int_value = r.signed_varint()
            elif num == 4:
                string_value = r.bytes_field().decode("utf-8")
            elif num == 7:
                payload = r.bytes_field()
                floats = [struct.unpack("<f", payload[i:i + 4])[0]
                          for i in range(0, len(payload), 4)]
            elif num == 8:
                ints = _read_packed_varints(r.bytes_field())
            elif num == 20:
                attr_type = r.varint()
            else:
                r.skip(wt)
        if attr_type == ATTR_INT:
            return cls(name, int_value or 0)
        if attr_type == ATTR_FLOAT:
            return cls(name, float_value or 0.0)
        if attr_type == ATTR_STRING:
            return cls(name, string_value or "")
        if attr_type == ATTR_INTS:
            return cls(name, ints or [])
        if attr_type == ATTR_FLOATS:
            return cls(name, floats or [])
        raise ValueError(f"unsupported attribute type {attr_type}")


@dataclass
class Node:
    op_type: str
    inputs: List[str]
    outputs: List[str]
    name: str = ""
    attributes: Dict[str, Union[int, float, str, List[int], List[float]]] = field(
        default_factory=dict)

    def encode(self) -> bytes:
        out = b""
        for value in self.inputs:
            out += _string_field(1, value)
        for value in self.outputs:
            out += _string_field(2, value)
        if self.name:
            out += _string_field(3, self.name)
        out += _string_field(4, self.op_type)
        for key, value in self.attributes.items():
            out += _len_field(5, Attribute(key, value).encode())
        return out

    @classmethod
    def decode(cls, data: bytes) -> "Node":
        r = _Reader(data)
        node = cls("", [], [])
        while not r.done():
            num, wt = r.tag()
            if num == 1:
                node.inputs.append(r.bytes_field().decode("utf-8"))
            elif num == 2:
                node.outputs.append(r.bytes_field().decode("utf-8"))
            elif num == 3:
                node.name = r.bytes_field().decode("utf-8")
            elif num == 4:
                node.op_type = r.bytes_field().decode("utf-8")
            elif num == 5:
                attr = Attribute.decode(r.bytes_field())
                node.attributes[attr.name] = attr.value
            else:
                r.skip(wt)
        return node


def encode_tensor(name: str, array: np.ndarray) -> bytes:
    # np.asarray keeps 0-d shapes (ascontiguousarray would promote them to
    # 1-d and change Gather semantics); tobytes() C-orders on its own
    array = np.asarray(array)
    if array.dtype == np.float64:
        array = array.astype(np.float32)
    if array.dtype not in _NP_TO_ONNX:
        raise TypeError(f"unsupported tensor dtype {array.dtype}")
    out = _packed_varints(1, list(array.shape))
    out += _varint_field(2, _NP_TO_ONNX[array.dtype])
    out += _string_field(8, name)
    out += _len_field(9, array.tobytes())
    return out


def decode_tensor(data: bytes) -> Tuple[str, np.ndarray]:
    r = _Reader(data)
    dims: List[int] = []
    dtype = FLOAT
    name = ""
    raw = b""
    while not r.done():
        num, wt = r.tag()
        if num == 1:
            if wt == 2:
                dims = _read_packed_varints(r.bytes_field())
            else:
                dims.append(r.signed_varint())
        elif num == 2:
            dtype = r.varint()
        elif num == 8:
            name = r.bytes_field().decode("utf-8")
        elif num == 9:
            raw = r.bytes_field()
        else:
            r.skip(wt)
    array = np.frombuffer(raw, dtype=_ONNX_TO_NP[dtype]).reshape(dims).copy()
    return name, array


def _encode_value_info(name: str, elem_type: int,
                       shape: Sequence[Union[int, str]]) -> bytes:
    dims = b""
    for dim in shape:
        if isinstance(dim, str):
            dims += _len_field(1, _string_field(2, dim))
        else:
            dims += _len_field(1, _varint_field(1, int(dim)))
    tensor_type = _varint_field(1, elem_type) + _len_field(2, dims)
    type_proto = _len_field(1, tensor_type)
    return _string_field(1, name) + _len_field(2, type_proto)


def _decode_value_info(data: bytes) -> Tuple[str, int, List[Union[int, str]]]:
    r = _Reader(data)
    name = ""
    elem_type = FLOAT
    shape: List[Union[int, str]] = []
    while not r.done():
        num, wt = r.tag()
        if num == 1:
            name = r.bytes_field().decode("utf-8")
        elif num == 2:
            tr = _Reader(r.bytes_field())
            while not tr.done():
                tnum, twt = tr.tag()
                if tnum != 1:
                    tr.skip(twt)
                    continue
                tt = _Reader(tr.bytes_field())
                while not tt.done():
                    ttnum, ttwt = tt.tag()
                    if ttnum == 1:
                        elem_type = tt.varint()
                    elif ttnum == 2:
                        sr = _Reader(tt.bytes_field())
                        while not sr.done():
                            snum, swt = sr.tag()
                            if snum != 1:
                                sr.skip(swt)
                                continue
                            dr = _Reader(sr.bytes_field())
                            while not dr.done():
                                dnum, dwt = dr.tag()
                                if dnum == 1:
                                    shape.append(dr.signed_varint())
                                elif dnum == 2:
                                    shape.append(dr.bytes_field().decode("utf-8"))
                                else:
                                    dr.skip(dwt)
                    else:
                        tt.skip(ttwt)
        else:
            r.skip(wt)
    return name, elem_type, shape


@dataclass
class Graph:
    name: str
    nodes: List[Node] = field(default_factory=list)
    initializers: Dict[str, np.ndarray] = field(default_factory=dict)
    inputs: List[Tuple[str, int, List[Union[int, str]]]] = field(default_factory=list)
    outputs: List[Tuple[str, int, List[Union[int, str]]]] = field(default_factory=list)

    def encode(self) -> bytes:
        out = b""
        for node in self.nodes:
            out += _len_field(1, node.encode())
        out += _string_field(2, self.name)
        for name, array in self.initializers.items():
            out += _len_field(5, encode_tensor(name, array))
        for name, elem, shape in self.inputs:
            out += _len_field(11, _encode_value_info(name, elem, shape))
        for name, elem, shape in self.outputs:
            out += _len_field(12, _encode_value_info(name, elem, shape))
        return out

    @classmethod
    def decode(cls, data: bytes) -> "Graph":
        r = _Reader(data)
        graph = cls("")
        while not r.done():
            num, wt = r.tag()
            if num == 1:
                graph.nodes.append(Node.decode(r.bytes_field()))
            elif num == 2:
                graph.name = r.bytes_field().decode("utf-8")
            elif num == 5:
                name, array = decode_tensor(r.bytes_field())
                graph.initializers[name] = array
            elif num == 11:
                graph.inputs.append(_decode_value_info(r.bytes_field()))
            elif num == 12:
                graph.outputs.append(_decode_value_info(r.bytes_field()))
            else:
                r.skip(wt)
        return graph


def encode_model(graph: Graph, producer: str = "model-tools") -> bytes:
    out = _varint_field(1, IR_VERSION)
    out += _string_field(2, producer)
    out += _len_field(7, graph.encode())
    out += _len_field(8, _varint_field(2, OPSET_VERSION))
    return out


def decode_model(data: bytes) -> Graph:
    r = _Reader(data)
    graph: Optional[Graph] = None
    while not r.done():
        num, wt = r.tag()
        if num == 7:
            graph = Graph.decode(r.bytes_field())
        else:
            r.skip(wt)
    if graph is None:
        raise ValueError("no graph in model file")
    return graph


def save_model(graph: Graph, path) -> None:
    with open(path, "wb") as f:
        f.write(encode_model(graph))


def load_model(path) -> Graph:
    with open(path, "rb") as f:
        return decode_model(f.read())
