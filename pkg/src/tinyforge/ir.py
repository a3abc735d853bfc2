"""Model intermediate representation.

Graphs are chains/DAGs of 1-D operators with explicit tensors.  Activation
layouts: conv1d/maxpool1d work on ``[length, channels]``, dense and softmax
on flat ``[n]`` vectors; flatten bridges the two (row-major).  Weight
layouts: dense ``[in, units]`` + bias ``[units]``; conv1d
``[filters, kernel, in_channels]`` + bias ``[filters]``; kmeans_distance
carries its centroids as a ``[k, dim]`` weight tensor.

Quantized (i8) graphs additionally use dtype ``i32`` for bias tensors
(int32 accumulator scale) and keep the softmax output tensor in f32, since
softmax is always evaluated in floating point.

The on-disk format is a JSON envelope with base64 little-endian weight
blobs and a CRC32 over the canonical payload.
"""

from __future__ import annotations

import base64
import binascii
import copy
import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import GraphError, ModelFormatError

MODEL_FILE_VERSION = 1

OP_KINDS = ("dense", "conv1d", "relu", "softmax", "maxpool1d", "flatten", "kmeans_distance")

_NP_DTYPES = {"f32": "<f4", "i8": "<i1", "i32": "<i4"}
DTYPE_SIZES = {"f32": 4, "i8": 1, "i32": 4}


@dataclass
class QuantParams:
    """Affine quantization: real = (q - zero_point) * scale.

    Per-channel params carry one scale per output channel and a zero point
    of 0 (symmetric); per-tensor params have a scalar scale.
    """

    scale: Union[float, np.ndarray]
    zero_point: int = 0
    granularity: str = "per_tensor"  # per_tensor | per_channel

    def __post_init__(self):
        if self.granularity == "per_channel":
            self.scale = np.asarray(self.scale, dtype=np.float64)
            if self.zero_point != 0:
                raise GraphError("per-channel quant params must have zero_point 0")
            if np.any(self.scale <= 0):
                raise GraphError("quant scale must be positive")
        else:
            self.scale = float(self.scale)
            if self.scale <= 0:
                raise GraphError("quant scale must be positive")
            if not -128 <= self.zero_point <= 127:
                raise GraphError(f"zero_point {self.zero_point} outside [-128,127]")

    def to_dict(self) -> dict:
        scale = self.scale.tolist() if isinstance(self.scale, np.ndarray) else self.scale
        return {"scale": scale, "zero_point": self.zero_point, "granularity": self.granularity}

    @classmethod
    def from_dict(cls, d: dict) -> "QuantParams":
        return cls(scale=d["scale"], zero_point=d["zero_point"], granularity=d["granularity"])


@dataclass
class TensorSpec:
    id: str
    shape: Optional[tuple] = None  # None until shape inference
    dtype: str = "f32"
    quant: Optional[QuantParams] = None

    def __post_init__(self):
        if self.dtype not in _NP_DTYPES:
            raise GraphError(f"tensor {self.id}: unknown dtype {self.dtype!r}")
        if self.shape is not None:
            self.shape = tuple(int(v) for v in self.shape)
            if any(v < 1 for v in self.shape):
                raise GraphError(f"tensor {self.id}: non-positive dimension in {self.shape}")

    @property
    def numel(self) -> int:
        if self.shape is None:
            raise GraphError(f"tensor {self.id}: shape not inferred yet")
        return int(np.prod(self.shape))

    @property
    def nbytes(self) -> int:
        return self.numel * DTYPE_SIZES[self.dtype]


@dataclass
class OpNode:
    kind: str
    inputs: list
    output: str
    attrs: dict = field(default_factory=dict)
    fused_activation: str = "none"  # none | relu

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise GraphError(f"unknown op kind {self.kind!r}")
        if self.fused_activation not in ("none", "relu"):
            raise GraphError(f"bad fused_activation {self.fused_activation!r}")

    @property
    def id(self) -> str:
        return f"{self.kind}->{self.output}"


@dataclass
class ModelGraph:
    tensors: dict  # id -> TensorSpec, insertion-ordered
    nodes: list  # topological order
    weights: dict  # id -> np.ndarray
    input_id: str
    output_id: str

    def tensor(self, tid: str) -> TensorSpec:
        try:
            return self.tensors[tid]
        except KeyError:
            raise GraphError(f"dangling tensor reference {tid!r}") from None

    def is_weight(self, tid: str) -> bool:
        return tid in self.weights

    def activation_ids(self) -> list:
        return [t for t in self.tensors if t not in self.weights]

    def producer_index(self) -> dict:
        return {n.output: i for i, n in enumerate(self.nodes)}

    def consumers(self, tid: str) -> list:
        return [n for n in self.nodes if tid in n.inputs]

    @property
    def dtype(self) -> str:
        return self.tensor(self.input_id).dtype

    def copy(self) -> "ModelGraph":
        g = ModelGraph(
            tensors={k: copy.deepcopy(v) for k, v in self.tensors.items()},
            nodes=[copy.deepcopy(n) for n in self.nodes],
            weights={k: v.copy() for k, v in self.weights.items()},
            input_id=self.input_id,
            output_id=self.output_id,
        )
        return g


def _infer_node(node: OpNode, g: ModelGraph) -> tuple:
    """Output shape of one node given already-inferred input shapes."""
    x = g.tensor(node.inputs[0])
    shape = x.shape
    k = node.kind
    if k == "dense":
        if len(shape) != 1:
            raise GraphError(f"{node.id}: dense needs a flat input, got {shape}")
        units = int(node.attrs["units"])
        w = g.tensor(node.inputs[1])
        b = g.tensor(node.inputs[2])
        expect_w = (shape[0], units)
        if w.shape != expect_w:
            raise GraphError(f"{node.id}: weight shape {w.shape} != required {expect_w}")
        if b.shape != (units,):
            raise GraphError(f"{node.id}: bias shape {b.shape} != ({units},)")
        return (units,)
    if k == "conv1d":
        if len(shape) != 2:
            raise GraphError(f"{node.id}: conv1d needs [length, channels], got {shape}")
        filters = int(node.attrs["filters"])
        ksz = int(node.attrs["kernel_size"])
        stride = int(node.attrs["stride"])
        if ksz < 1 or stride < 1:
            raise GraphError(f"{node.id}: kernel_size and stride must be >= 1")
        in_len, in_ch = shape
        if in_len < ksz:
            raise GraphError(f"{node.id}: input length {in_len} shorter than kernel {ksz}")
        w = g.tensor(node.inputs[1])
        b = g.tensor(node.inputs[2])
        expect_w = (filters, ksz, in_ch)
        if w.shape != expect_w:
            raise GraphError(f"{node.id}: weight shape {w.shape} != required {expect_w}")
        if b.shape != (filters,):
            raise GraphError(f"{node.id}: bias shape {b.shape} != ({filters},)")
        return ((in_len - ksz) // stride + 1, filters)
    if k == "maxpool1d":
        if len(shape) != 2:
            raise GraphError(f"{node.id}: maxpool1d needs [length, channels], got {shape}")
        pool = int(node.attrs["pool"])
        stride = int(node.attrs["stride"])
        if pool < 1 or stride < 1:
            raise GraphError(f"{node.id}: pool and stride must be >= 1")
        in_len, in_ch = shape
        if in_len < pool:
            raise GraphError(f"{node.id}: input length {in_len} shorter than pool {pool}")
        return ((in_len - pool) // stride + 1, in_ch)
    if k == "relu":
        return shape
    if k == "flatten":
        return (int(np.prod(shape)),)
    if k == "softmax":
        if len(shape) != 1:
            raise GraphError(f"{node.id}: softmax needs a flat input, got {shape}")
        return shape
    if k == "kmeans_distance":
        cent = g.tensor(node.inputs[1])
        if len(cent.shape) != 2:
            raise GraphError(f"{node.id}: centroids must be [k, dim], got {cent.shape}")
        kk, dim = cent.shape
        if int(node.attrs.get("k", kk)) != kk:
            raise GraphError(f"{node.id}: attr k={node.attrs['k']} != centroid rows {kk}")
        if shape != (dim,):
            raise GraphError(f"{node.id}: input shape {shape} != centroid dim ({dim},)")
        return (1,)
    raise GraphError(f"unknown op kind {k!r}")


def shape_infer_validate(g: ModelGraph) -> ModelGraph:
    """Check structure and fill every activation tensor's shape.

    Errors name the offending node.  Guarantees afterwards: topological
    order, single input and output, all shapes concrete, each weight tensor
    consumed exactly once, no dangling tensors.
    """
    g = g.copy()
    if g.input_id not in g.tensors:
        raise GraphError(f"input tensor {g.input_id!r} not declared")
    if g.output_id not in g.tensors:
        raise GraphError(f"output tensor {g.output_id!r} not declared")
    if g.input_id in g.weights:
        raise GraphError("graph input may not be a weight tensor")
    if g.tensor(g.input_id).shape is None:
        raise GraphError("input tensor must have a concrete shape")

    for wid, data in g.weights.items():
        spec = g.tensor(wid)
        if spec.shape is None:
            spec.shape = tuple(data.shape)
        elif spec.shape != tuple(data.shape):
            raise GraphError(f"weight {wid}: declared {spec.shape} != data {data.shape}")

    produced = {g.input_id}
    producers = {}
    for node in g.nodes:
        for tid in node.inputs:
            if tid not in g.tensors:
                raise GraphError(f"{node.id}: undeclared input tensor {tid!r}")
            if tid not in produced and tid not in g.weights:
                raise GraphError(
                    f"{node.id}: input {tid!r} not yet produced (nodes not topologically ordered?)"
                )
        if node.output in produced or node.output in g.weights:
            raise GraphError(f"{node.id}: output {node.output!r} already produced")
        if node.output not in g.tensors:
            raise GraphError(f"{node.id}: undeclared output tensor {node.output!r}")
        out_shape = _infer_node(node, g)
        spec = g.tensor(node.output)
        if spec.shape is None:
            spec.shape = out_shape
        elif spec.shape != out_shape:
            raise GraphError(f"{node.id}: declared shape {spec.shape} != inferred {out_shape}")
        produced.add(node.output)
        producers[node.output] = node

    if g.output_id not in produced:
        raise GraphError(f"output tensor {g.output_id!r} is never produced")
    use_counts = {}
    for node in g.nodes:
        for tid in node.inputs:
            use_counts[tid] = use_counts.get(tid, 0) + 1
    for wid in g.weights:
        if use_counts.get(wid, 0) != 1:
            raise GraphError(f"weight tensor {wid!r} referenced {use_counts.get(wid, 0)} times, expected 1")
    for tid in g.tensors:
        if tid in g.weights or tid == g.input_id:
            continue
        if tid not in produced:
            raise GraphError(f"tensor {tid!r} is declared but never produced")
        if tid != g.output_id and use_counts.get(tid, 0) == 0:
            raise GraphError(f"tensor {tid!r} is produced but never consumed")
    return g


def fuse_activations(g: ModelGraph) -> ModelGraph:
    """Fold relu nodes into a preceding dense/conv1d with no other consumer.

    Idempotent; preserves topological order and semantics.
    """
    g = g.copy()
    out_nodes = []
    consumers = {}
    for node in g.nodes:
        for tid in node.inputs:
            consumers.setdefault(tid, []).append(node)
    fused_away = set()
    for node in g.nodes:
        if node.kind == "relu":
            src = node.inputs[0]
            producer = next((n for n in out_nodes if n.output == src), None)
            if (
                producer is not None
                and producer.kind in ("dense", "conv1d")
                and producer.fused_activation == "none"
                and len(consumers.get(src, [])) == 1
            ):
                producer.fused_activation = "relu"
                producer.output = node.output
                fused_away.add(src)
                continue
        out_nodes.append(node)
    g.nodes = out_nodes
    for tid in fused_away:
        del g.tensors[tid]
    return g


# ------------------------------------------------------------ serialization

def _payload_dict(g: ModelGraph) -> dict:
    return {
        "version": MODEL_FILE_VERSION,
        "input": g.input_id,
        "output": g.output_id,
        "tensors": [
            {
                "id": t.id,
                "shape": list(t.shape) if t.shape is not None else None,
                "dtype": t.dtype,
                "quant": t.quant.to_dict() if t.quant else None,
            }
            for t in g.tensors.values()
        ],
        "nodes": [
            {
                "kind": n.kind,
                "inputs": n.inputs,
                "output": n.output,
                "attrs": n.attrs,
                "fused_activation": n.fused_activation,
            }
            for n in g.nodes
        ],
        "weights": {
            wid: {
                "dtype": g.tensor(wid).dtype,
                "data": base64.b64encode(
                    np.ascontiguousarray(arr).astype(_NP_DTYPES[g.tensor(wid).dtype]).tobytes()
                ).decode("ascii"),
            }
            for wid, arr in g.weights.items()
        },
    }


def _payload_crc(payload: dict) -> int:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return zlib.crc32(blob) & 0xFFFFFFFF


def save_model(g: ModelGraph, path) -> None:
    payload = _payload_dict(g)
    payload["crc32"] = _payload_crc(payload)
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True))


def load_model(path) -> ModelGraph:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ModelFormatError(f"{path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ModelFormatError(f"{path}: not a text model file (binary byte at {e.start})") from e
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{path}: not valid JSON (truncated or corrupt): {e.msg}") from e
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{path}: expected a JSON object")
    if obj.get("version") != MODEL_FILE_VERSION:
        raise ModelFormatError(
            f"{path}: version {obj.get('version')!r} unsupported (expected {MODEL_FILE_VERSION})"
        )
    stored_crc = obj.pop("crc32", None)
    if stored_crc is None:
        raise ModelFormatError(f"{path}: missing crc32")
    if _payload_crc(obj) != stored_crc:
        raise ModelFormatError(f"{path}: checksum mismatch (file truncated or edited)")
    try:
        tensors = {}
        for td in obj["tensors"]:
            tensors[td["id"]] = TensorSpec(
                id=td["id"],
                shape=tuple(td["shape"]) if td["shape"] is not None else None,
                dtype=td["dtype"],
                quant=QuantParams.from_dict(td["quant"]) if td.get("quant") else None,
            )
        nodes = [
            OpNode(
                kind=nd["kind"],
                inputs=list(nd["inputs"]),
                output=nd["output"],
                attrs=dict(nd["attrs"]),
                fused_activation=nd.get("fused_activation", "none"),
            )
            for nd in obj["nodes"]
        ]
        weights = {}
        for wid, wd in obj["weights"].items():
            raw = base64.b64decode(wd["data"], validate=True)
            arr = np.frombuffer(raw, dtype=_NP_DTYPES[wd["dtype"]])
            shape = tensors[wid].shape
            weights[wid] = arr.reshape(shape).copy() if shape else arr.copy()
        g = ModelGraph(
            tensors=tensors,
            nodes=nodes,
            weights=weights,
            input_id=obj["input"],
            output_id=obj["output"],
        )
    except (KeyError, TypeError, ValueError, binascii.Error, GraphError) as e:
        raise ModelFormatError(f"{path}: malformed model structure: {e}") from e
    return shape_infer_validate(g)


# ------------------------------------------------------------ construction

class GraphBuilder:
    """Chain-style builder; weight values are supplied by the caller."""

    def __init__(self, input_shape, input_id: str = "input", dtype: str = "f32"):
        self._tensors = {input_id: TensorSpec(id=input_id, shape=tuple(input_shape), dtype=dtype)}
        self._nodes = []
        self._weights = {}
        self._input_id = input_id
        self._head = input_id
        self._counter = 0
        self._dtype = dtype

    def _new_tensor(self, stem: str) -> str:
        tid = f"{stem}{self._counter}"
        self._counter += 1
        self._tensors[tid] = TensorSpec(id=tid, dtype=self._dtype)
        return tid

    def _add_weight(self, stem: str, data: np.ndarray) -> str:
        wid = f"{stem}{self._counter}"
        self._counter += 1
        self._tensors[wid] = TensorSpec(id=wid, shape=tuple(data.shape), dtype="f32")
        self._weights[wid] = np.asarray(data, dtype=np.float32)
        return wid

    def dense(self, w: np.ndarray, b: np.ndarray) -> "GraphBuilder":
        wid = self._add_weight("w_dense", w)
        bid = self._add_weight("b_dense", b)
        out = self._new_tensor("t")
        self._nodes.append(
            OpNode("dense", [self._head, wid, bid], out, {"units": int(w.shape[1])})
        )
        self._head = out
        return self

    def conv1d(self, w: np.ndarray, b: np.ndarray, stride: int = 1) -> "GraphBuilder":
        wid = self._add_weight("w_conv", w)
        bid = self._add_weight("b_conv", b)
        out = self._new_tensor("t")
        self._nodes.append(
            OpNode(
                "conv1d",
                [self._head, wid, bid],
                out,
                {"filters": int(w.shape[0]), "kernel_size": int(w.shape[1]), "stride": stride},
            )
        )
        self._head = out
        return self

    def relu(self) -> "GraphBuilder":
        out = self._new_tensor("t")
        self._nodes.append(OpNode("relu", [self._head], out))
        self._head = out
        return self

    def maxpool1d(self, pool: int, stride: int) -> "GraphBuilder":
        out = self._new_tensor("t")
        self._nodes.append(OpNode("maxpool1d", [self._head], out, {"pool": pool, "stride": stride}))
        self._head = out
        return self

    def flatten(self) -> "GraphBuilder":
        out = self._new_tensor("t")
        self._nodes.append(OpNode("flatten", [self._head], out))
        self._head = out
        return self

    def softmax(self) -> "GraphBuilder":
        out = self._new_tensor("t")
        self._nodes.append(OpNode("softmax", [self._head], out))
        self._head = out
        return self

    def kmeans_distance(self, centroids: np.ndarray) -> "GraphBuilder":
        cid = self._add_weight("w_centroids", centroids)
        out = self._new_tensor("t")
        self._nodes.append(
            OpNode("kmeans_distance", [self._head, cid], out, {"k": int(centroids.shape[0])})
        )
        self._head = out
        return self

    def build(self) -> ModelGraph:
        g = ModelGraph(
            tensors=self._tensors,
            nodes=self._nodes,
            weights=self._weights,
            input_id=self._input_id,
            output_id=self._head,
        )
        return shape_infer_validate(g)
