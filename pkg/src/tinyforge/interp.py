"""Reference interpreter and static arena planner.

The interpreter is the conformance oracle for generated C.  The float path
runs in float64 (tolerance-checked against C); the int8 path mirrors the
generated kernels operation for operation (int32 accumulation, double
requantization with one rounding rule, and a scalar libm-``exp`` softmax),
so its outputs are bit-identical to the compiled model on the same host.

The arena planner assigns every activation tensor a byte offset in a single
static buffer using greedy first-fit by decreasing size over tensor live
ranges.  Offsets are 16-byte aligned.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import qmath
from .errors import GraphError
from .ir import ModelGraph, OpNode

ARENA_ALIGNMENT = 16
_INT32_MIN, _INT32_MAX = -(2 ** 31), 2 ** 31 - 1


def _align(n: int, a: int = ARENA_ALIGNMENT) -> int:
    return (n + a - 1) // a * a


# ------------------------------------------------------------ arena planner

@dataclass
class ArenaPlan:
    offsets: dict  # tensor id -> byte offset
    peak_bytes: int
    alignment: int = ARENA_ALIGNMENT


def tensor_live_ranges(g: ModelGraph) -> dict:
    """tensor id -> (birth step, death step) over node indices.

    The graph input is born at -1; the graph output dies at len(nodes) so it
    outlives the last step.  Two tensors may share arena space iff their
    ranges are disjoint.
    """
    ranges = {}
    producer = g.producer_index()
    for tid in g.activation_ids():
        birth = -1 if tid == g.input_id else producer.get(tid)
        if birth is None:
            raise GraphError(f"tensor {tid!r} has no producer (graph not validated?)")
        last_use = max(
            (i for i, n in enumerate(g.nodes) if tid in n.inputs),
            default=birth,
        )
        if tid == g.output_id:
            last_use = len(g.nodes)
        ranges[tid] = (birth, last_use)
    return ranges


def plan_arena(g: ModelGraph) -> ArenaPlan:
    ranges = tensor_live_ranges(g)
    sizes = {tid: g.tensor(tid).nbytes for tid in ranges}
    # decreasing size; ties resolved by birth step so equal-size chain
    # neighbors alternate between two slots instead of fragmenting
    order = sorted(ranges, key=lambda t: (-sizes[t], ranges[t][0], t))
    placed = []  # (tid, offset, size)
    offsets = {}
    for tid in order:
        b, d = ranges[tid]
        conflicts = sorted(
            (off, off + sz)
            for other, off, sz in placed
            if ranges[other][0] <= d and b <= ranges[other][1]
        )
        size = sizes[tid]
        offset = 0
        for lo, hi in conflicts:
            if offset + size <= lo:
                break
            offset = max(offset, _align(hi))
        offsets[tid] = offset
        placed.append((tid, offset, size))
    peak = max((off + sizes[tid] for tid, off, _ in placed), default=0)
    return ArenaPlan(offsets=offsets, peak_bytes=peak)


# ------------------------------------------------------------ kernels (f32)

def _dense_f32(x, w, b, fused_relu):
    y = x @ w + b
    return np.maximum(y, 0.0) if fused_relu else y


def _conv1d_f32(x, w, b, stride, fused_relu):
    ksz = w.shape[1]
    win = np.lib.stride_tricks.sliding_window_view(x, ksz, axis=0)[::stride]  # [L', C, K]
    y = np.einsum("lck,fkc->lf", win, w) + b
    return np.maximum(y, 0.0) if fused_relu else y


def _maxpool1d(x, pool, stride):
    win = np.lib.stride_tricks.sliding_window_view(x, pool, axis=0)[::stride]  # [L', C, P]
    return win.max(axis=2)


def _softmax_f64(x):
    e = np.exp(x - x.max())
    return e / e.sum()


# ------------------------------------------------------------ kernels (i8)

def _check_i32(acc):
    if acc.min(initial=0) < _INT32_MIN or acc.max(initial=0) > _INT32_MAX:
        raise GraphError("int32 accumulator overflow; layer too large for the i8 kernels")


def _dense_i8(q, w_q, bias, x_zp, mult, y_zp, fused_relu):
    acc = (q.astype(np.int64) - x_zp) @ w_q.astype(np.int64) + bias.astype(np.int64)
    _check_i32(acc)
    return qmath.requantize(acc, mult, y_zp, fused_relu)


def _conv1d_i8(q, w_q, bias, x_zp, mult, y_zp, stride, fused_relu):
    ksz = w_q.shape[1]
    win = np.lib.stride_tricks.sliding_window_view(q, ksz, axis=0)[::stride]  # [L', C, K]
    acc = np.einsum(
        "lck,fkc->lf", win.astype(np.int64) - x_zp, w_q.astype(np.int64)
    ) + bias.astype(np.int64)
    _check_i32(acc)
    return qmath.requantize(acc, mult, y_zp, fused_relu)


def _softmax_i8_exact(q, scale, zp):
    """Scalar three-pass softmax on dequantized logits; mirrors the C kernel."""
    xs = [(float(int(v) - zp)) * scale for v in q.reshape(-1)]
    m = xs[0]
    for v in xs[1:]:
        if v > m:
            m = v
    total = 0.0
    for v in xs:
        total += math.exp(v - m)
    return np.array([math.exp(v - m) / total for v in xs], dtype=np.float64)


def _kmeans_f32(x, cent):
    d = np.sqrt(((x[None, :] - cent) ** 2).sum(axis=1))
    return np.array([d.min()])


def _kmeans_exact(xs, cent):
    """Scalar nearest-centroid distance; mirrors the C kernel's loop order."""
    best = -1.0
    for j in range(cent.shape[0]):
        s = 0.0
        for i in range(cent.shape[1]):
            d = xs[i] - float(cent[j, i])
            s += d * d
        r = math.sqrt(s)
        if best < 0.0 or r < best:
            best = r
    return np.array([best])


# ------------------------------------------------------------ execution

def _prepare_input(g: ModelGraph, x) -> np.ndarray:
    values = getattr(x, "values", x)
    arr = np.asarray(values, dtype=np.float64).reshape(-1)
    spec = g.tensor(g.input_id)
    if arr.size != spec.numel:
        raise GraphError(
            f"input has {arr.size} values, graph expects {spec.numel} {spec.shape}"
        )
    return arr.reshape(spec.shape)


def run_graph(g: ModelGraph, x, trace: bool = False):
    """Execute the graph on one feature vector; returns a float64 vector.

    Float graphs run in float64.  Int8 graphs quantize the input with the
    input tensor's QuantParams, run exact integer kernels, and return float
    probabilities (softmax, or dequantized values if the output tensor is
    int8).  Pass ``trace=True`` for ``(output, [(tensor_id, dtype, array)])``.
    """
    if g.dtype == "i8":
        out, entries = _run_i8(g, _prepare_input(g, x))
    else:
        out, entries = _run_f32(g, _prepare_input(g, x))
    return (out, entries) if trace else out


def _run_f32(g, x):
    vals = {g.input_id: x}
    entries = [(g.input_id, "f32", x)]
    for node in g.nodes:
        a = vals[node.inputs[0]]
        fused = node.fused_activation == "relu"
        k = node.kind
        if k == "dense":
            y = _dense_f32(a, _w64(g, node, 1), _w64(g, node, 2), fused)
        elif k == "conv1d":
            y = _conv1d_f32(a, _w64(g, node, 1), _w64(g, node, 2), node.attrs["stride"], fused)
        elif k == "relu":
            y = np.maximum(a, 0.0)
        elif k == "maxpool1d":
            y = _maxpool1d(a, node.attrs["pool"], node.attrs["stride"])
        elif k == "flatten":
            y = a.reshape(-1)
        elif k == "softmax":
            y = _softmax_f64(a)
        elif k == "kmeans_distance":
            y = _kmeans_f32(a, _w64(g, node, 1))
        else:
            raise GraphError(f"unsupported op kind {k!r}")
        vals[node.output] = y
        entries.append((node.output, "f32", y))
    return vals[g.output_id].reshape(-1), entries


def _w64(g, node, idx):
    return g.weights[node.inputs[idx]].astype(np.float64)


def _run_i8(g, x):
    in_spec = g.tensor(g.input_id)
    if in_spec.quant is None:
        raise GraphError("i8 graph input tensor lacks quant params")
    q = qmath.quantize(x, in_spec.quant.scale, in_spec.quant.zero_point)
    vals = {g.input_id: q}
    entries = [(g.input_id, "i8", q.astype(np.int8))]
    for node in g.nodes:
        a = vals[node.inputs[0]]
        in_q = g.tensor(node.inputs[0]).quant
        out_spec = g.tensor(node.output)
        fused = node.fused_activation == "relu"
        k = node.kind
        if k in ("dense", "conv1d"):
            w_spec = g.tensor(node.inputs[1])
            if out_spec.quant is None or w_spec.quant is None:
                raise GraphError(f"{node.id}: missing quant params on the i8 path")
            mult = qmath.requant_multipliers(
                in_q.scale, w_spec.quant.scale, out_spec.quant.scale
            )
            bias = g.weights[node.inputs[2]]
            if k == "dense":
                y = _dense_i8(a, g.weights[node.inputs[1]], bias, in_q.zero_point,
                              mult, out_spec.quant.zero_point, fused)
            else:
                y = _conv1d_i8(a, g.weights[node.inputs[1]], bias, in_q.zero_point,
                               mult, out_spec.quant.zero_point, node.attrs["stride"], fused)
        elif k == "relu":
            y = np.maximum(a, in_q.zero_point)
        elif k == "maxpool1d":
            y = _maxpool1d(a, node.attrs["pool"], node.attrs["stride"])
        elif k == "flatten":
            y = a.reshape(-1)
        elif k == "softmax":
            y = _softmax_i8_exact(a, in_q.scale, in_q.zero_point)
        elif k == "kmeans_distance":
            xs = [float(int(v) - in_q.zero_point) * in_q.scale for v in a.reshape(-1)]
            y = _kmeans_exact(xs, g.weights[node.inputs[1]].astype(np.float64))
        else:
            raise GraphError(f"unsupported op kind {k!r}")
        vals[node.output] = y
        dtype = g.tensor(node.output).dtype
        entries.append((node.output, dtype, y.astype(np.int8) if dtype == "i8" else y))
    out = vals[g.output_id].reshape(-1)
    out_spec = g.tensor(g.output_id)
    if out_spec.dtype == "i8":
        out = qmath.dequantize(out, out_spec.quant.scale, out_spec.quant.zero_point)
    return out, entries


# ------------------------------------------------------------ trace files

_TRACE_DTYPES = {"f32": 0, "i8": 1}
_TRACE_NP = {0: "<f4", 1: "<i1"}


def write_trace(path, entries) -> None:
    """Per-tensor dump: u32 id-length, id bytes, u8 dtype code, u32 len, payload."""
    with open(path, "wb") as f:
        for tid, dtype, arr in entries:
            ident = tid.encode("utf-8")
            flat = np.asarray(arr).reshape(-1)
            payload = flat.astype(_TRACE_NP[_TRACE_DTYPES[dtype]]).tobytes()
            f.write(struct.pack("<I", len(ident)))
            f.write(ident)
            f.write(struct.pack("<BI", _TRACE_DTYPES[dtype], flat.size))
            f.write(payload)


def read_trace(path) -> list:
    entries = []
    raw = open(path, "rb").read()
    pos = 0
    while pos < len(raw):
        (id_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        tid = raw[pos : pos + id_len].decode("utf-8")
        pos += id_len
        code, n = struct.unpack_from("<BI", raw, pos)
        pos += 5
        dt = np.dtype(_TRACE_NP[code])
        arr = np.frombuffer(raw, dtype=dt, count=n, offset=pos).copy()
        pos += n * dt.itemsize
        entries.append((tid, "f32" if code == 0 else "i8", arr))
    return entries
