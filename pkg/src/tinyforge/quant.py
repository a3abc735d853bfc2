"""Post-training full int8 quantization with range calibration.

Scheme: asymmetric per-tensor activations, symmetric per-channel weights,
int32 biases at scale ``input_scale * weight_scale``.  Activation ranges are
recorded by running the float interpreter over a representative set; ranges
are widened to include zero before deriving scale/zero-point so that real
0.0 is exactly representable and the round-trip bound |x - dq(q(x))| <=
scale/2 holds over the calibrated range.

The softmax output tensor stays f32 (softmax is always evaluated in float),
as does a kmeans_distance output.  Zero-point derivation rounds half up;
value quantization everywhere else uses the shared round-half-away rule
from qmath.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import qmath
from .errors import QuantError
from .interp import run_graph
from .ir import ModelGraph, QuantParams

__all__ = ["QuantParams", "calibrate_ranges", "quantize_graph", "activation_qparams"]


def calibrate_ranges(g: ModelGraph, representative_features) -> dict:
    """tensor id -> (min, max) observed over the representative set.

    Activation ranges come from float execution traces; weight ranges are
    per-output-channel (min_c, max_c) arrays taken from the stored values.
    """
    if g.dtype != "f32":
        raise QuantError("calibration requires a float graph")
    reps = list(representative_features)
    if not reps:
        raise QuantError("representative set is empty")
    ranges = {}
    for x in reps:
        _, entries = run_graph(g, x, trace=True)
        for tid, _, arr in entries:
            arr = np.asarray(arr, dtype=np.float64)
            lo, hi = float(arr.min()), float(arr.max())
            if tid in ranges:
                plo, phi = ranges[tid]
                ranges[tid] = (min(plo, lo), max(phi, hi))
            else:
                ranges[tid] = (lo, hi)
    for node in g.nodes:
        if node.kind in ("dense", "conv1d"):
            w = g.weights[node.inputs[1]].astype(np.float64)
            axis = tuple(range(1, w.ndim)) if node.kind == "conv1d" else (0,)
            ranges[node.inputs[1]] = (w.min(axis=axis), w.max(axis=axis))
    return ranges


def activation_qparams(lo: float, hi: float) -> QuantParams:
    """Per-tensor asymmetric params from an observed range.

    The range is first widened to include 0.  Degenerate ranges (max == min)
    get scale 1 with a warning.  Zero point uses round-half-up so a
    symmetric range maps to zero point 0.
    """
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    scale = (hi - lo) / 255.0
    if scale <= 0.0:
        warnings.warn(f"degenerate activation range [{lo}, {hi}]; using scale 1")
        scale = 1.0
    zp = int(min(max(math.floor(-128.0 - lo / scale + 0.5), -128), 127))
    return QuantParams(scale=scale, zero_point=zp, granularity="per_tensor")


def weight_qparams(w: np.ndarray, per_channel_axis: int = 0) -> QuantParams:
    """Symmetric per-channel weight params: scale_c = max|w_c| / 127."""
    axes = tuple(i for i in range(w.ndim) if i != per_channel_axis)
    absmax = np.abs(w.astype(np.float64)).max(axis=axes)
    degenerate = absmax == 0.0
    if np.any(degenerate):
        warnings.warn("weight channel with all zeros; using scale 1 for it")
    scale = np.where(degenerate, 1.0, absmax / 127.0)
    return QuantParams(scale=scale, zero_point=0, granularity="per_channel")


def quantize_graph(g: ModelGraph, ranges: dict) -> ModelGraph:
    """Produce the int8 twin of a calibrated float graph.

    Activations become i8 except softmax/kmeans outputs (kept f32); dense
    and conv1d weights become per-channel symmetric i8 with int32 biases.
    Inherited-range ops (relu, maxpool, flatten) reuse their input tensor's
    params so the integer kernels are pure max/copy.
    """
    if g.dtype == "i8":
        raise QuantError("graph is already int8; quantizing twice is not supported")
    q = g.copy()

    float_outputs = {n.output for n in q.nodes if n.kind in ("softmax", "kmeans_distance")}
    for tid in q.activation_ids():
        if tid in float_outputs:
            continue
        if tid not in ranges:
            raise QuantError(f"no calibrated range for tensor {tid!r}")
        spec = q.tensor(tid)
        spec.dtype = "i8"
        spec.quant = activation_qparams(*ranges[tid])

    # inherited-params ops share their input's quantization
    for node in q.nodes:
        if node.kind in ("relu", "maxpool1d", "flatten"):
            src = q.tensor(node.inputs[0])
            dst = q.tensor(node.output)
            if dst.dtype == "i8":
                dst.quant = src.quant

    for node in q.nodes:
        if node.kind not in ("dense", "conv1d"):
            continue
        wid, bid = node.inputs[1], node.inputs[2]
        w = g.weights[wid].astype(np.float64)
        axis = 0 if node.kind == "conv1d" else 1  # output-channel axis
        wq_params = weight_qparams(np.moveaxis(w, axis, 0), per_channel_axis=0)
        w_spec = q.tensor(wid)
        w_spec.dtype = "i8"
        w_spec.quant = wq_params
        scale_shape = [1] * w.ndim
        scale_shape[axis] = -1
        per_chan = np.asarray(wq_params.scale).reshape(scale_shape)
        q.weights[wid] = np.clip(
            qmath.round_half_away(w / per_chan), -128, 127
        ).astype(np.int8)

        in_scale = q.tensor(node.inputs[0]).quant.scale
        bias_scale = qmath.requant_multipliers(in_scale, wq_params.scale, 1.0)
        b = g.weights[bid].astype(np.float64)
        q.weights[bid] = qmath.round_half_away(b / bias_scale).astype(np.int32)
        b_spec = q.tensor(bid)
        b_spec.dtype = "i32"
        b_spec.quant = QuantParams(scale=bias_scale, zero_point=0, granularity="per_channel")
    return q
