"""Feature-vector files and golden-data generation for conformance runs.

File layout (little endian): u32 vector count, u32 vector length, then
count x length float32 values.  File size is exactly 8 + 4*count*length
bytes.  The C harness reads one of these, pushes every vector through the
compiled model, and writes its outputs in the same layout; comparison
policy (bit-exact for i8 models, relative tolerance for f32) lives here on
the Python side.

Usable as a script::

    python3 -m tinyforge.conformance golden MODEL.json N SEED IN.fvf EXPECTED.fvf
    python3 -m tinyforge.conformance compare GOT.fvf EXPECTED.fvf {i8,f32}
"""

from __future__ import annotations

import struct
import sys
from pathlib import Path

import numpy as np

from .errors import TinyForgeError
from .interp import run_graph
from .ir import ModelGraph, load_model


def write_fvf(path, vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise TinyForgeError("feature vector file payload must be [count, len]")
    with open(path, "wb") as f:
        f.write(struct.pack("<II", vectors.shape[0], vectors.shape[1]))
        f.write(vectors.astype("<f4").tobytes())


def read_fvf(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise TinyForgeError(f"{path}: too short for a feature vector file")
    count, length = struct.unpack_from("<II", raw, 0)
    expect = 8 + 4 * count * length
    if len(raw) != expect:
        raise TinyForgeError(f"{path}: size {len(raw)} != expected {expect}")
    return np.frombuffer(raw, dtype="<f4", offset=8).reshape(count, length).copy()


def random_inputs(g: ModelGraph, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = g.tensor(g.input_id).numel
    scale = 1.0
    if g.dtype == "i8":
        q = g.tensor(g.input_id).quant
        scale = max(abs(q.scale * (-128 - q.zero_point)), abs(q.scale * (127 - q.zero_point)))
    return (rng.normal(size=(count, n)) * 0.5 * scale).astype(np.float32)


def expected_outputs(g: ModelGraph, inputs: np.ndarray) -> np.ndarray:
    outs = [np.asarray(run_graph(g, x.astype(np.float64)), dtype=np.float32) for x in inputs]
    return np.stack(outs)


def golden_pair(model_path, count: int, seed: int, in_path, expected_path) -> None:
    g = load_model(model_path)
    inputs = random_inputs(g, count, seed)
    write_fvf(in_path, inputs)
    write_fvf(expected_path, expected_outputs(g, inputs))


def compare_fvf(got_path, expected_path, dtype: str) -> str:
    """Empty string when conforming, else a human-readable mismatch report."""
    got = read_fvf(got_path)
    want = read_fvf(expected_path)
    if got.shape != want.shape:
        return f"shape mismatch: got {got.shape}, expected {want.shape}"
    if dtype == "i8":
        if got.tobytes() != want.tobytes():
            bad = int(np.flatnonzero((got != want).any(axis=1))[0])
            return f"bit mismatch at vector {bad}: got {got[bad]!r}, expected {want[bad]!r}"
        return ""
    denom = np.maximum(np.abs(want), 1e-6)
    rel = float((np.abs(got - want) / denom).max(initial=0.0))
    if rel > 1e-5:
        return f"f32 relative error {rel:.3g} exceeds 1e-5"
    return ""


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        if argv and argv[0] == "golden" and len(argv) == 6:
            golden_pair(argv[1], int(argv[2]), int(argv[3]), argv[4], argv[5])
            return 0
        if argv and argv[0] == "compare" and len(argv) == 4:
            msg = compare_fvf(argv[1], argv[2], argv[3])
            if msg:
                print(msg, file=sys.stderr)
                return 1
            return 0
    except TinyForgeError as e:
        print(str(e), file=sys.stderr)
        return 1
    print(__doc__, file=sys.stderr)
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
