"""Shared rounding and (de)quantization arithmetic.

One rounding rule everywhere values are quantized: round half away from
zero.  The generated C implements the identical expression
``v >= 0 ? floor(v + 0.5) : ceil(v - 0.5)`` in double precision, which is
what makes interpreter and generated-code int8 outputs bit-identical.
"""

from __future__ import annotations

import numpy as np

I8_MIN, I8_MAX = -128, 127


def round_half_away(v):
    v = np.asarray(v, dtype=np.float64)
    return np.where(v >= 0.0, np.floor(v + 0.5), np.ceil(v - 0.5))


def quantize(x, scale, zero_point: int):
    """q = clamp(round(x/scale) + zp, -128, 127), returned as int64."""
    v = np.asarray(x, dtype=np.float64) / scale
    q = round_half_away(v).astype(np.int64) + int(zero_point)
    return np.clip(q, I8_MIN, I8_MAX)


def dequantize(q, scale, zero_point: int):
    return (np.asarray(q, dtype=np.float64) - float(zero_point)) * scale


def requant_multipliers(input_scale: float, weight_scale, output_scale: float) -> np.ndarray:
    """Per-output-channel double multiplier (s_in * s_w) / s_out.

    Computed once here so the interpreter and the constants baked into
    generated C are the same IEEE doubles.
    """
    w = np.atleast_1d(np.asarray(weight_scale, dtype=np.float64))
    return (float(input_scale) * w) / float(output_scale)


def requantize(acc, multipliers, zero_point: int, fused_relu: bool = False):
    """int32 accumulator -> int8 value, per-channel multiplier on last axis."""
    v = np.asarray(acc, dtype=np.float64) * multipliers
    q = round_half_away(v).astype(np.int64) + int(zero_point)
    if fused_relu:
        q = np.maximum(q, int(zero_point))
    return np.clip(q, I8_MIN, I8_MAX)
