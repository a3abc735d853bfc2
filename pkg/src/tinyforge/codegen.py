"""Interpreter-free C code generation.

Emits a self-contained C99 translation unit for one model: weights as
``static const`` arrays, one static arena sized by the memory plan, a
straight-line sequence of direct kernel calls, and definitions for only the
kernel routines the graph actually uses.  The public surface is three
functions (init / input / invoke); input and output are float buffers for
both f32 and i8 models (i8 models quantize on entry and produce float
probabilities, matching the reference interpreter bit for bit).

The only headers used are stdint.h/stddef.h and, when the graph needs
exp/sqrt/floor/ceil, math.h.  No heap allocation, no function pointers, no
interpreter loop.  Generation is deterministic: the same graph and options
produce byte-identical files.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import qmath
from .errors import CodegenError
from .interp import ArenaPlan
from .ir import ModelGraph

SUPPORTED_KINDS = ("dense", "conv1d", "relu", "softmax", "maxpool1d", "flatten", "kmeans_distance")

_IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass
class CodegenOptions:
    symbol_prefix: str = "model"
    dtype: str = "f32"
    emit_trace_hooks: bool = False

    def __post_init__(self):
        if not _IDENT_RE.match(self.symbol_prefix):
            raise CodegenError(f"symbol_prefix {self.symbol_prefix!r} is not a valid C identifier")
        if self.dtype not in ("f32", "i8"):
            raise CodegenError(f"dtype must be f32 or i8, got {self.dtype!r}")


def _f32_lit(v: float) -> str:
    # 9 significant digits round-trip any float32
    s = f"{float(np.float32(v)):.9g}"
    if "." not in s and "e" not in s and "E" not in s and "inf" not in s and "nan" not in s:
        s += ".0"
    return s + "f"


def _f64_lit(v: float) -> str:
    s = f"{float(v):.17g}"
    if "." not in s and "e" not in s and "E" not in s:
        s += ".0"
    return s


def _array_lines(values, fmt, per_line=12):
    out = []
    vals = [fmt(v) for v in values]
    for i in range(0, len(vals), per_line):
        out.append("    " + ", ".join(vals[i : i + per_line]) + ("," if i + per_line < len(vals) else ""))
    return "\n".join(out)


def _sym(prefix: str, tensor_id: str) -> str:
    return f"{prefix}_{re.sub(r'[^A-Za-z0-9_]', '_', tensor_id)}"


# ------------------------------------------------------------ kernel bodies

_KERNELS_F32 = {
    "copy": """
static void {p}_k_copy_f32(const float *x, float *y, int n)
{{
    int i;
    for (i = 0; i < n; ++i) {{
        y[i] = x[i];
    }}
}}
""",
    "dense": """
static void {p}_k_dense_f32(const float *x, const float *w, const float *b,
                            float *y, int in_n, int out_n, int relu)
{{
    int i, j;
    for (j = 0; j < out_n; ++j) {{
        double acc = (double)b[j];
        for (i = 0; i < in_n; ++i) {{
            acc += (double)x[i] * (double)w[(size_t)i * (size_t)out_n + (size_t)j];
        }}
        if (relu && acc < 0.0) {{
            acc = 0.0;
        }}
        y[j] = (float)acc;
    }}
}}
""",
    "conv1d": """
static void {p}_k_conv1d_f32(const float *x, const float *w, const float *b,
                             float *y, int in_len, int in_ch, int filters,
                             int kernel, int stride, int relu)
{{
    int out_len = (in_len - kernel) / stride + 1;
    int o, f, i, c;
    for (o = 0; o < out_len; ++o) {{
        for (f = 0; f < filters; ++f) {{
            double acc = (double)b[f];
            for (i = 0; i < kernel; ++i) {{
                for (c = 0; c < in_ch; ++c) {{
                    acc += (double)x[(size_t)(o * stride + i) * (size_t)in_ch + (size_t)c]
                         * (double)w[((size_t)f * (size_t)kernel + (size_t)i) * (size_t)in_ch + (size_t)c];
                }}
            }}
            if (relu && acc < 0.0) {{
                acc = 0.0;
            }}
            y[(size_t)o * (size_t)filters + (size_t)f] = (float)acc;
        }}
    }}
}}
""",
    "relu": """
static void {p}_k_relu_f32(const float *x, float *y, int n)
{{
    int i;
    for (i = 0; i < n; ++i) {{
        y[i] = (x[i] > 0.0f) ? x[i] : 0.0f;
    }}
}}
""",
    "maxpool1d": """
static void {p}_k_maxpool1d_f32(const float *x, float *y, int in_len, int ch,
                                int pool, int stride)
{{
    int out_len = (in_len - pool) / stride + 1;
    int o, c, i;
    for (o = 0; o < out_len; ++o) {{
        for (c = 0; c < ch; ++c) {{
            float m = x[(size_t)(o * stride) * (size_t)ch + (size_t)c];
            for (i = 1; i < pool; ++i) {{
                float v = x[(size_t)(o * stride + i) * (size_t)ch + (size_t)c];
                if (v > m) {{
                    m = v;
                }}
            }}
            y[(size_t)o * (size_t)ch + (size_t)c] = m;
        }}
    }}
}}
""",
    "softmax": """
static void {p}_k_softmax_f32(const float *x, float *y, int n)
{{
    int i;
    double m = (double)x[0];
    double s = 0.0;
    for (i = 1; i < n; ++i) {{
        if ((double)x[i] > m) {{
            m = (double)x[i];
        }}
    }}
    for (i = 0; i < n; ++i) {{
        s += exp((double)x[i] - m);
    }}
    for (i = 0; i < n; ++i) {{
        y[i] = (float)(exp((double)x[i] - m) / s);
    }}
}}
""",
    "kmeans_distance": """
static void {p}_k_kmeans_distance_f32(const float *x, const float *cent,
                                      float *y, int k, int dim)
{{
    int j, i;
    double best = -1.0;
    for (j = 0; j < k; ++j) {{
        double s = 0.0;
        for (i = 0; i < dim; ++i) {{
            double d = (double)x[i] - (double)cent[(size_t)j * (size_t)dim + (size_t)i];
            s += d * d;
        }}
        s = sqrt(s);
        if (best < 0.0 || s < best) {{
            best = s;
        }}
    }}
    y[0] = (float)best;
}}
""",
}

_KERNELS_I8 = {
    "quant_in": """
static void {p}_k_quant_in(const float *x, int8_t *y, int n, double scale, int zp)
{{
    int i;
    for (i = 0; i < n; ++i) {{
        double v = (double)x[i] / scale;
        v = (v >= 0.0) ? floor(v + 0.5) : ceil(v - 0.5);
        v += (double)zp;
        if (v < -128.0) {{
            v = -128.0;
        }}
        if (v > 127.0) {{
            v = 127.0;
        }}
        y[i] = (int8_t)v;
    }}
}}
""",
    "copy": """
static void {p}_k_copy_i8(const int8_t *x, int8_t *y, int n)
{{
    int i;
    for (i = 0; i < n; ++i) {{
        y[i] = x[i];
    }}
}}
""",
    "copy_f32": _KERNELS_F32["copy"],
    "dequant_out": """
static void {p}_k_dequant_out(const int8_t *x, float *y, int n, double scale, int zp)
{{
    int i;
    for (i = 0; i < n; ++i) {{
        y[i] = (float)(((double)x[i] - (double)zp) * scale);
    }}
}}
""",
    "dense": """
static void {p}_k_dense_i8(const int8_t *x, const int8_t *w, const int32_t *b,
                           const double *m, int8_t *y, int in_n, int out_n,
                           int x_zp, int y_zp, int relu)
{{
    int i, j;
    for (j = 0; j < out_n; ++j) {{
        int32_t acc = b[j];
        for (i = 0; i < in_n; ++i) {{
            acc += ((int32_t)x[i] - x_zp) * (int32_t)w[(size_t)i * (size_t)out_n + (size_t)j];
        }}
        {{
            double v = (double)acc * m[j];
            v = (v >= 0.0) ? floor(v + 0.5) : ceil(v - 0.5);
            v += (double)y_zp;
            if (relu && v < (double)y_zp) {{
                v = (double)y_zp;
            }}
            if (v < -128.0) {{
                v = -128.0;
            }}
            if (v > 127.0) {{
                v = 127.0;
            }}
            y[j] = (int8_t)v;
        }}
    }}
}}
""",
    "conv1d": """
static void {p}_k_conv1d_i8(const int8_t *x, const int8_t *w, const int32_t *b,
                            const double *m, int8_t *y, int in_len, int in_ch,
                            int filters, int kernel, int stride,
                            int x_zp, int y_zp, int relu)
{{
    int out_len = (in_len - kernel) / stride + 1;
    int o, f, i, c;
    for (o = 0; o < out_len; ++o) {{
        for (f = 0; f < filters; ++f) {{
            int32_t acc = b[f];
            for (i = 0; i < kernel; ++i) {{
                for (c = 0; c < in_ch; ++c) {{
                    acc += ((int32_t)x[(size_t)(o * stride + i) * (size_t)in_ch + (size_t)c] - x_zp)
                         * (int32_t)w[((size_t)f * (size_t)kernel + (size_t)i) * (size_t)in_ch + (size_t)c];
                }}
            }}
            {{
                double v = (double)acc * m[f];
                v = (v >= 0.0) ? floor(v + 0.5) : ceil(v - 0.5);
                v += (double)y_zp;
                if (relu && v < (double)y_zp) {{
                    v = (double)y_zp;
                }}
                if (v < -128.0) {{
                    v = -128.0;
                }}
                if (v > 127.0) {{
                    v = 127.0;
                }}
                y[(size_t)o * (size_t)filters + (size_t)f] = (int8_t)v;
            }}
        }}
    }}
}}
""",
    "relu": """
static void {p}_k_relu_i8(const int8_t *x, int8_t *y, int n, int zp)
{{
    int i;
    for (i = 0; i < n; ++i) {{
        y[i] = (x[i] > zp) ? x[i] : (int8_t)zp;
    }}
}}
""",
    "maxpool1d": """
static void {p}_k_maxpool1d_i8(const int8_t *x, int8_t *y, int in_len, int ch,
                               int pool, int stride)
{{
    int out_len = (in_len - pool) / stride + 1;
    int o, c, i;
    for (o = 0; o < out_len; ++o) {{
        for (c = 0; c < ch; ++c) {{
            int8_t m = x[(size_t)(o * stride) * (size_t)ch + (size_t)c];
            for (i = 1; i < pool; ++i) {{
                int8_t v = x[(size_t)(o * stride + i) * (size_t)ch + (size_t)c];
                if (v > m) {{
                    m = v;
                }}
            }}
            y[(size_t)o * (size_t)ch + (size_t)c] = m;
        }}
    }}
}}
""",
    "softmax": """
static void {p}_k_softmax_i8(const int8_t *x, float *y, int n, double scale, int zp)
{{
    int i;
    double m = ((double)x[0] - (double)zp) * scale;
    double s = 0.0;
    for (i = 1; i < n; ++i) {{
        double v = ((double)x[i] - (double)zp) * scale;
        if (v > m) {{
            m = v;
        }}
    }}
    for (i = 0; i < n; ++i) {{
        s += exp((((double)x[i] - (double)zp) * scale) - m);
    }}
    for (i = 0; i < n; ++i) {{
        y[i] = (float)(exp((((double)x[i] - (double)zp) * scale) - m) / s);
    }}
}}
""",
    "kmeans_distance": """
static void {p}_k_kmeans_distance_i8(const int8_t *x, const float *cent,
                                     float *y, int k, int dim, double scale, int zp)
{{
    int j, i;
    double best = -1.0;
    for (j = 0; j < k; ++j) {{
        double s = 0.0;
        for (i = 0; i < dim; ++i) {{
            double xv = ((double)x[i] - (double)zp) * scale;
            double d = xv - (double)cent[(size_t)j * (size_t)dim + (size_t)i];
            s += d * d;
        }}
        s = sqrt(s);
        if (best < 0.0 || s < best) {{
            best = s;
        }}
    }}
    y[0] = (float)best;
}}
""",
}


def _needs_math(g: ModelGraph) -> bool:
    if g.dtype == "i8":
        return True  # requant floor/ceil
    return any(n.kind in ("softmax", "kmeans_distance") for n in g.nodes)


def _used_kinds(g: ModelGraph):
    return sorted({n.kind for n in g.nodes})


def _check_supported(g: ModelGraph):
    for n in g.nodes:
        if n.kind not in SUPPORTED_KINDS:
            raise CodegenError(f"op kind {n.kind!r} has no C kernel")


# ------------------------------------------------------------ emission

def emit_c(g: ModelGraph, plan: ArenaPlan, opts: CodegenOptions):
    """Returns ``(c_source, h_source)`` for the given validated graph."""
    _check_supported(g)
    if opts.dtype != g.dtype:
        raise CodegenError(f"options request {opts.dtype} but the graph is {g.dtype}")
    for tid in g.activation_ids():
        if tid not in plan.offsets:
            raise CodegenError(f"arena plan is missing tensor {tid!r}")

    p = opts.symbol_prefix
    up = p.upper()
    in_spec = g.tensor(g.input_id)
    out_spec = g.tensor(g.output_id)
    in_len, out_len = in_spec.numel, out_spec.numel
    i8 = g.dtype == "i8"

    h = []
    h.append(f"/* {p}_model.h - generated model interface. Do not edit. */")
    h.append("/*")
    h.append(" * ABI:")
    h.append(f" *   void {p}_init(void);")
    h.append(f" *       Resets internal state. Call once before the first invoke.")
    h.append(f" *   float *{p}_input(void);")
    h.append(f" *       Caller-writable buffer of {up}_INPUT_LEN float32 features.")
    h.append(f" *   const float *{p}_invoke(size_t *out_len);")
    h.append(f" *       Runs inference; returns {up}_OUTPUT_LEN float32 values and")
    h.append(" *       stores the count into *out_len.")
    h.append(" *")
    h.append(" * One static arena: at most one concurrent caller per model.")
    h.append(" */")
    h.append(f"#ifndef TF_{up}_MODEL_H")
    h.append(f"#define TF_{up}_MODEL_H")
    h.append("")
    h.append("#include <stddef.h>")
    h.append("#include <stdint.h>")
    h.append("")
    h.append(f"#define {up}_INPUT_LEN {in_len}")
    h.append(f"#define {up}_OUTPUT_LEN {out_len}")
    h.append("")
    h.append(f"void {p}_init(void);")
    h.append(f"float *{p}_input(void);")
    h.append(f"const float *{p}_invoke(size_t *out_len);")
    h.append("")
    h.append(f"#endif /* TF_{up}_MODEL_H */")
    header = "\n".join(h) + "\n"

    c = []
    c.append(f"/* {p}_model.c - generated model implementation. Do not edit. */")
    c.append(f'#include "{p}_model.h"')
    if _needs_math(g):
        c.append("#include <math.h>")
    c.append("")

    # ---- constant data
    for wid, arr in g.weights.items():
        spec = g.tensor(wid)
        sym = _sym(p, wid)
        flat = np.ascontiguousarray(arr).reshape(-1)
        if spec.dtype == "f32":
            ctype, fmt = "float", _f32_lit
        elif spec.dtype == "i8":
            ctype, fmt = "int8_t", lambda v: str(int(v))
        else:
            ctype, fmt = "int32_t", lambda v: str(int(v))
        c.append(f"static const {ctype} {sym}[{flat.size}] = {{")
        c.append(_array_lines(flat, fmt))
        c.append("};")
    if i8:
        for idx, node in enumerate(g.nodes):
            if node.kind in ("dense", "conv1d"):
                mult = qmath.requant_multipliers(
                    g.tensor(node.inputs[0]).quant.scale,
                    g.tensor(node.inputs[1]).quant.scale,
                    g.tensor(node.output).quant.scale,
                )
                c.append(f"static const double {p}_mult_{idx}[{mult.size}] = {{")
                c.append(_array_lines(mult, _f64_lit, per_line=4))
                c.append("};")
    c.append("")

    # ---- arena and io buffers
    c.append(f"static union {{ uint8_t bytes[{max(plan.peak_bytes, 1)}]; double force_align; }} {p}_arena;")
    c.append(f"static float {p}_in_buf[{up}_INPUT_LEN];")
    c.append(f"static float {p}_out_buf[{up}_OUTPUT_LEN];")
    c.append("")

    if opts.emit_trace_hooks:
        c.append(f"extern void {p}_trace(const char *tensor, int is_i8, const void *data, size_t len);")
        c.append("")

    # ---- kernels actually used
    used = _used_kinds(g)
    table = _KERNELS_I8 if i8 else _KERNELS_F32
    emitted = []
    if i8:
        emitted.append(table["quant_in"])
        if "flatten" in used:
            emitted.append(table["copy"])
        if out_spec.dtype == "i8":
            emitted.append(table["dequant_out"])
        else:
            emitted.append(table["copy_f32"])
        for kind in used:
            if kind == "flatten":
                continue
            emitted.append(table[kind])
    else:
        emitted.append(table["copy"])  # input staging and flatten
        for kind in used:
            if kind == "flatten":
                continue
            emitted.append(table[kind])
    for text in emitted:
        c.append(text.format(p=p).strip())
        c.append("")

    # ---- public functions
    c.append(f"void {p}_init(void)")
    c.append("{")
    c.append("    /* weights and arena are static; nothing to set up */")
    c.append("}")
    c.append("")
    c.append(f"float *{p}_input(void)")
    c.append("{")
    c.append(f"    return {p}_in_buf;")
    c.append("}")
    c.append("")
    c.append(f"const float *{p}_invoke(size_t *out_len)")
    c.append("{")

    def arena_ptr(tid):
        spec = g.tensor(tid)
        ctype = {"f32": "float", "i8": "int8_t", "i32": "int32_t"}[spec.dtype]
        return f"({ctype} *)({p}_arena.bytes + {plan.offsets[tid]})"

    body = []
    trace_calls = []

    def trace(tid):
        if not opts.emit_trace_hooks:
            return
        spec = g.tensor(tid)
        is_i8 = 1 if spec.dtype == "i8" else 0
        body.append(
            f'    {p}_trace("{tid}", {is_i8}, {p}_arena.bytes + {plan.offsets[tid]}, {spec.numel}u);'
        )

    if i8:
        q = in_spec.quant
        body.append(
            f"    {p}_k_quant_in({p}_in_buf, {arena_ptr(g.input_id)}, {in_len}, "
            f"{_f64_lit(q.scale)}, {q.zero_point});"
        )
    else:
        body.append(f"    {p}_k_copy_f32({p}_in_buf, {arena_ptr(g.input_id)}, {in_len});")
    trace(g.input_id)

    for idx, node in enumerate(g.nodes):
        a_id, out_id = node.inputs[0], node.output
        a_spec = g.tensor(a_id)
        o_spec = g.tensor(out_id)
        relu_flag = 1 if node.fused_activation == "relu" else 0
        k = node.kind
        if k == "dense":
            w, b = _sym(p, node.inputs[1]), _sym(p, node.inputs[2])
            if i8:
                body.append(
                    f"    {p}_k_dense_i8({arena_ptr(a_id)}, {w}, {b}, {p}_mult_{idx}, "
                    f"{arena_ptr(out_id)}, {a_spec.numel}, {o_spec.numel}, "
                    f"{a_spec.quant.zero_point}, {o_spec.quant.zero_point}, {relu_flag});"
                )
            else:
                body.append(
                    f"    {p}_k_dense_f32({arena_ptr(a_id)}, {w}, {b}, {arena_ptr(out_id)}, "
                    f"{a_spec.numel}, {o_spec.numel}, {relu_flag});"
                )
        elif k == "conv1d":
            w, b = _sym(p, node.inputs[1]), _sym(p, node.inputs[2])
            in_l, in_c = a_spec.shape
            filt = node.attrs["filters"]
            ksz = node.attrs["kernel_size"]
            stride = node.attrs["stride"]
            if i8:
                body.append(
                    f"    {p}_k_conv1d_i8({arena_ptr(a_id)}, {w}, {b}, {p}_mult_{idx}, "
                    f"{arena_ptr(out_id)}, {in_l}, {in_c}, {filt}, {ksz}, {stride}, "
                    f"{a_spec.quant.zero_point}, {o_spec.quant.zero_point}, {relu_flag});"
                )
            else:
                body.append(
                    f"    {p}_k_conv1d_f32({arena_ptr(a_id)}, {w}, {b}, {arena_ptr(out_id)}, "
                    f"{in_l}, {in_c}, {filt}, {ksz}, {stride}, {relu_flag});"
                )
        elif k == "relu":
            if i8:
                body.append(
                    f"    {p}_k_relu_i8({arena_ptr(a_id)}, {arena_ptr(out_id)}, "
                    f"{a_spec.numel}, {a_spec.quant.zero_point});"
                )
            else:
                body.append(f"    {p}_k_relu_f32({arena_ptr(a_id)}, {arena_ptr(out_id)}, {a_spec.numel});")
        elif k == "maxpool1d":
            in_l, in_c = a_spec.shape
            pool, stride = node.attrs["pool"], node.attrs["stride"]
            fn = f"{p}_k_maxpool1d_i8" if i8 else f"{p}_k_maxpool1d_f32"
            body.append(
                f"    {fn}({arena_ptr(a_id)}, {arena_ptr(out_id)}, {in_l}, {in_c}, {pool}, {stride});"
            )
        elif k == "flatten":
            fn = f"{p}_k_copy_i8" if i8 else f"{p}_k_copy_f32"
            body.append(f"    {fn}({arena_ptr(a_id)}, {arena_ptr(out_id)}, {a_spec.numel});")
        elif k == "softmax":
            if i8:
                q = a_spec.quant
                body.append(
                    f"    {p}_k_softmax_i8({arena_ptr(a_id)}, {arena_ptr(out_id)}, "
                    f"{a_spec.numel}, {_f64_lit(q.scale)}, {q.zero_point});"
                )
            else:
                body.append(f"    {p}_k_softmax_f32({arena_ptr(a_id)}, {arena_ptr(out_id)}, {a_spec.numel});")
        elif k == "kmeans_distance":
            cent = _sym(p, node.inputs[1])
            kk, dim = g.tensor(node.inputs[1]).shape
            if i8:
                q = a_spec.quant
                body.append(
                    f"    {p}_k_kmeans_distance_i8({arena_ptr(a_id)}, {cent}, {arena_ptr(out_id)}, "
                    f"{kk}, {dim}, {_f64_lit(q.scale)}, {q.zero_point});"
                )
            else:
                body.append(
                    f"    {p}_k_kmeans_distance_f32({arena_ptr(a_id)}, {cent}, {arena_ptr(out_id)}, {kk}, {dim});"
                )
        trace(out_id)

    # stage the result into the public output buffer
    if out_spec.dtype == "i8":
        q = out_spec.quant
        body.append(
            f"    {p}_k_dequant_out({arena_ptr(g.output_id)}, {p}_out_buf, {out_len}, "
            f"{_f64_lit(q.scale)}, {q.zero_point});"
        )
    else:
        body.append(f"    {p}_k_copy_f32({arena_ptr(g.output_id)}, {p}_out_buf, {out_len});")

    c.extend(body)
    c.append(f"    *out_len = {up}_OUTPUT_LEN;")
    c.append(f"    return {p}_out_buf;")
    c.append("}")
    source = "\n".join(c) + "\n"
    return source, header


def write_c_files(g: ModelGraph, plan: ArenaPlan, opts: CodegenOptions, deploy_dir):
    source, header = emit_c(g, plan, opts)
    deploy = Path(deploy_dir)
    deploy.mkdir(parents=True, exist_ok=True)
    c_path = deploy / f"{opts.symbol_prefix}_model.c"
    h_path = deploy / f"{opts.symbol_prefix}_model.h"
    c_path.write_text(source)
    h_path.write_text(header)
    return c_path, h_path


# ------------------------------------------------------------ memory report

def flash_ram_report(g: ModelGraph, plan: ArenaPlan, opts: CodegenOptions, profile) -> dict:
    """Flash/RAM byte estimates for generated code vs an interpreter baseline.

    generated: weights + code for used kernels + generated scaffold; RAM is
    the arena peak + float io staging + the generated runtime constant.
    interpreter_baseline: weights + code for the full kernel library + the
    interpreter scaffold; RAM adds the interpreter runtime constant instead.
    Code-size and scaffold constants come from the device profile.
    """
    _check_supported(g)
    weight_bytes = sum(int(np.ascontiguousarray(a).nbytes) for a in g.weights.values())
    if g.dtype == "i8":
        # per-channel requant multipliers are baked constants too
        for node in g.nodes:
            if node.kind in ("dense", "conv1d"):
                weight_bytes += 8 * int(np.atleast_1d(g.tensor(node.inputs[1]).quant.scale).size)
    io_bytes = 4 * (g.tensor(g.input_id).numel + g.tensor(g.output_id).numel)
    used = _used_kinds(g)
    code_used = sum(profile.kernel_code_bytes[k] for k in used)
    code_all = sum(profile.kernel_code_bytes.values())
    return {
        "generated": {
            "flash_bytes": weight_bytes + code_used + profile.generated_scaffold_bytes,
            "ram_bytes": plan.peak_bytes + io_bytes + profile.generated_ram_bytes,
            "weight_bytes": weight_bytes,
            "kernel_code_bytes": code_used,
            "scaffold_bytes": profile.generated_scaffold_bytes,
            "arena_bytes": plan.peak_bytes,
            "io_bytes": io_bytes,
            "scaffold_ram_bytes": profile.generated_ram_bytes,
        },
        "interpreter_baseline": {
            "flash_bytes": weight_bytes + code_all + profile.interpreter_scaffold_bytes,
            "ram_bytes": plan.peak_bytes + io_bytes + profile.interpreter_ram_bytes,
            "weight_bytes": weight_bytes,
            "kernel_code_bytes": code_all,
            "scaffold_bytes": profile.interpreter_scaffold_bytes,
            "arena_bytes": plan.peak_bytes,
            "io_bytes": io_bytes,
            "scaffold_ram_bytes": profile.interpreter_ram_bytes,
        },
    }
