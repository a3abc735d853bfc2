import itertools
import math

import numpy as np
import pytest

from tinyforge.interp import (
    ARENA_ALIGNMENT,
    ArenaPlan,
    plan_arena,
    read_trace,
    run_graph,
    tensor_live_ranges,
    write_trace,
)
from tinyforge.ir import GraphBuilder, OpNode, TensorSpec, ModelGraph, shape_infer_validate
from tinyforge.errors import GraphError


def _align(n, a=ARENA_ALIGNMENT):
    return (n + a - 1) // a * a


# ------------------------------------------------------------ oracles

def brute_force_optimal_peak(sizes, ranges):
    """Minimum peak over all placement orders with first-fit, 16B aligned."""
    ids = list(sizes)
    best = None
    for perm in itertools.permutations(ids):
        placed = []
        peak = 0
        for tid in perm:
            b, d = ranges[tid]
            conflicts = sorted(
                (off, off + sizes[o])
                for o, off in placed
                if ranges[o][0] <= d and b <= ranges[o][1]
            )
            off = 0
            for lo, hi in conflicts:
                if off + sizes[tid] <= lo:
                    break
                off = max(off, _align(hi))
            placed.append((tid, off))
            peak = max(peak, off + sizes[tid])
        best = peak if best is None else min(best, peak)
    return best


def live_set_lower_bound(sizes, ranges):
    steps = set()
    for b, d in ranges.values():
        steps.update((b, d))
    best = 0
    for s in steps:
        total = sum(sizes[t] for t, (b, d) in ranges.items() if b <= s <= d)
        best = max(best, total)
    return best


def naive_forward(g, x):
    """Independent plain-loop implementation of the float kernels."""
    vals = {g.input_id: np.asarray(x, dtype=np.float64)}
    for node in g.nodes:
        a = vals[node.inputs[0]]
        k = node.kind
        if k == "dense":
            w = g.weights[node.inputs[1]].astype(np.float64)
            b = g.weights[node.inputs[2]].astype(np.float64)
            y = np.zeros(w.shape[1])
            for j in range(w.shape[1]):
                s = b[j]
                for i in range(w.shape[0]):
                    s += a[i] * w[i, j]
                y[j] = s
        elif k == "conv1d":
            w = g.weights[node.inputs[1]].astype(np.float64)
            b = g.weights[node.inputs[2]].astype(np.float64)
            f, ksz, c = w.shape
            stride = node.attrs["stride"]
            out_len = (a.shape[0] - ksz) // stride + 1
            y = np.zeros((out_len, f))
            for o in range(out_len):
                for fi in range(f):
                    s = b[fi]
                    for i in range(ksz):
                        for ci in range(c):
                            s += a[o * stride + i, ci] * w[fi, i, ci]
                    y[o, fi] = s
        elif k == "maxpool1d":
            pool, stride = node.attrs["pool"], node.attrs["stride"]
            out_len = (a.shape[0] - pool) // stride + 1
            y = np.zeros((out_len, a.shape[1]))
            for o in range(out_len):
                for ci in range(a.shape[1]):
                    y[o, ci] = max(a[o * stride + i, ci] for i in range(pool))
        elif k == "relu":
            y = np.where(a > 0, a, 0.0)
        elif k == "flatten":
            y = a.reshape(-1)
        elif k == "softmax":
            m = max(a)
            e = np.array([math.exp(v - m) for v in a])
            y = e / sum(e)
        elif k == "kmeans_distance":
            cent = g.weights[node.inputs[1]].astype(np.float64)
            y = np.array([min(math.sqrt(((a - cent[j]) ** 2).sum()) for j in range(cent.shape[0]))])
        else:
            raise AssertionError(k)
        if node.fused_activation == "relu":
            y = np.where(y > 0, y, 0.0)
        vals[node.output] = y
    return vals[g.output_id].reshape(-1)


def chain_graph(sizes_bytes):
    """A dense chain whose activation tensors have the requested byte sizes."""
    dims = [max(1, s // 4) for s in sizes_bytes]
    rng = np.random.default_rng(0)
    b = GraphBuilder((dims[0],))
    for d in dims[1:]:
        prev = dims[dims.index(d) - 1] if False else None
    cur = dims[0]
    for d in dims[1:]:
        b = b.dense(rng.normal(size=(cur, d)).astype(np.float32), np.zeros(d, dtype=np.float32))
        cur = d
    return b.build()


def random_graph(rng, dtype_choices=("mlp", "conv")):
    kind = rng.choice(dtype_choices)
    if kind == "mlp":
        dims = [int(rng.integers(2, 40)) for _ in range(int(rng.integers(2, 6)))]
        b = GraphBuilder((dims[0],))
        cur = dims[0]
        for d in dims[1:]:
            b = b.dense(rng.normal(size=(cur, d)), rng.normal(size=d))
            if rng.random() < 0.5:
                b = b.relu()
            cur = d
        b = b.softmax()
        return b.build()
    length = int(rng.integers(12, 40))
    ch = int(rng.integers(1, 5))
    b = GraphBuilder((length, ch))
    filters = int(rng.integers(2, 9))
    b = b.conv1d(rng.normal(size=(filters, 3, ch)), rng.normal(size=filters))
    b = b.relu()
    if rng.random() < 0.5:
        b = b.maxpool1d(2, 2)
    b = b.flatten()
    flat = np.prod(b._tensors[b._head].shape) if b._tensors[b._head].shape else None
    # shapes not inferred yet inside the builder; finish via a probe build
    g = b.build()
    flat_n = g.tensor(g.output_id).shape[0]
    out = int(rng.integers(2, 6))
    b2 = GraphBuilder((length, ch))
    b2._tensors = g.tensors
    b2._nodes = g.nodes
    b2._weights = g.weights
    b2._head = g.output_id
    b2._counter = 1000
    b2 = b2.dense(rng.normal(size=(flat_n, out)), rng.normal(size=out)).softmax()
    return b2.build()


# ------------------------------------------------------------ planner

def test_chain_example_peak():
    # A(100) -> B(50) -> C(80): live sets {A,B} then {B,C}; ideal peak 150,
    # 162 after 16-byte offset alignment.
    g = chain_graph([100, 48, 80])
    # force exact byte sizes by overriding tensor shapes' product: use f32 dims 25,12,20
    plan = plan_arena(g)
    ranges = tensor_live_ranges(g)
    sizes = {t: g.tensor(t).nbytes for t in ranges}
    assert plan.peak_bytes >= live_set_lower_bound(sizes, ranges)
    assert plan.peak_bytes == 160  # 100B at 0, 48B at align(100)=112 -> 160


def test_single_tensor_peak():
    g = GraphBuilder((16,)).flatten().build()
    plan = plan_arena(g)
    assert plan.peak_bytes == _align(64) + 64 or plan.peak_bytes >= 64
    # input(64B) live (-1..0), output(64B) live (0..1): both live at step 0
    assert plan.peak_bytes == 64 + _align(64)


def test_offsets_aligned():
    rng = np.random.default_rng(1)
    for _ in range(20):
        g = random_graph(rng)
        plan = plan_arena(g)
        assert all(off % ARENA_ALIGNMENT == 0 for off in plan.offsets.values())


def test_planner_deterministic():
    rng = np.random.default_rng(2)
    g = random_graph(rng)
    p1, p2 = plan_arena(g), plan_arena(g)
    assert p1.offsets == p2.offsets and p1.peak_bytes == p2.peak_bytes


def test_planner_vs_bruteforce_chains():
    # exhaustive over chain lengths 2..5 and a representative size family
    size_family = [16, 40, 96]
    for length in range(2, 6):
        for combo in itertools.product(size_family, repeat=length):
            g = chain_graph(list(combo))
            ranges = tensor_live_ranges(g)
            sizes = {t: g.tensor(t).nbytes for t in ranges}
            plan = plan_arena(g)
            lb = live_set_lower_bound(sizes, ranges)
            opt = brute_force_optimal_peak(sizes, ranges)
            assert lb <= plan.peak_bytes <= 1.5 * opt, (combo, lb, plan.peak_bytes, opt)


def test_planner_never_exceeds_sum():
    rng = np.random.default_rng(3)
    for _ in range(50):
        g = random_graph(rng)
        plan = plan_arena(g)
        total = sum(_align(g.tensor(t).nbytes) for t in g.activation_ids())
        assert plan.peak_bytes <= total
        assert plan.peak_bytes >= max(g.tensor(t).nbytes for t in g.activation_ids())


def test_canary_no_cross_tensor_corruption():
    rng = np.random.default_rng(4)
    for trial in range(200):
        g = random_graph(rng)
        plan = plan_arena(g)
        ranges = tensor_live_ranges(g)
        arena = bytearray(plan.peak_bytes)
        canary = {tid: (i % 251 + 1) for i, tid in enumerate(plan.offsets)}

        def fill(tid):
            off, n = plan.offsets[tid], g.tensor(tid).nbytes
            arena[off : off + n] = bytes([canary[tid]]) * n

        def check(tid):
            off, n = plan.offsets[tid], g.tensor(tid).nbytes
            assert arena[off : off + n] == bytes([canary[tid]]) * n, (
                f"trial {trial}: tensor {tid} clobbered"
            )

        fill(g.input_id)
        for i, node in enumerate(g.nodes):
            for tid in node.inputs:
                if tid in plan.offsets:
                    check(tid)
            fill(node.output)
        check(g.output_id)


# ------------------------------------------------------------ f32 execution

def test_dense_identity():
    g = GraphBuilder((2,)).dense(np.eye(2, dtype=np.float32), np.zeros(2, dtype=np.float32)).build()
    np.testing.assert_allclose(run_graph(g, np.array([1.0, 2.0])), [1.0, 2.0])


def test_softmax_uniform():
    rng = np.random.default_rng(0)
    g = GraphBuilder((3,)).softmax().build()
    np.testing.assert_allclose(run_graph(g, np.zeros(3)), [1 / 3] * 3)


def test_softmax_sums_to_one_and_equivariant():
    g = GraphBuilder((5,)).softmax().build()
    rng = np.random.default_rng(5)
    x = rng.normal(size=5)
    p = run_graph(g, x)
    assert abs(p.sum() - 1.0) < 1e-6
    perm = rng.permutation(5)
    np.testing.assert_allclose(run_graph(g, x[perm]), p[perm], rtol=1e-12)


def test_f32_graphs_match_naive_loops():
    rng = np.random.default_rng(6)
    for _ in range(15):
        g = random_graph(rng)
        x = rng.normal(size=g.tensor(g.input_id).shape)
        got = run_graph(g, x)
        want = naive_forward(g, x)
        np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-10)


def test_relu_nonnegative_and_maxpool_dominates():
    rng = np.random.default_rng(7)
    g = (
        GraphBuilder((12, 2))
        .conv1d(rng.normal(size=(4, 3, 2)), rng.normal(size=4))
        .relu()
        .maxpool1d(2, 2)
        .flatten()
        .build()
    )
    x = rng.normal(size=(12, 2))
    out, entries = run_graph(g, x, trace=True)
    by_id = {tid: arr for tid, _, arr in entries}
    relu_out = by_id[g.nodes[1].output]
    pool_out = by_id[g.nodes[2].output]
    assert (relu_out >= 0).all()
    for o in range(pool_out.shape[0]):
        for c in range(pool_out.shape[1]):
            assert pool_out[o, c] >= relu_out[2 * o, c] - 1e-15
            assert pool_out[o, c] >= relu_out[2 * o + 1, c] - 1e-15


def test_input_shape_mismatch():
    g = GraphBuilder((4,)).softmax().build()
    with pytest.raises(GraphError, match="expects"):
        run_graph(g, np.zeros(5))


def test_i8_requires_quant_params():
    g = GraphBuilder((4,)).softmax().build()
    g.tensor(g.input_id).dtype = "i8"
    with pytest.raises(GraphError, match="quant"):
        run_graph(g, np.zeros(4))


def test_i8_bit_deterministic():
    from tinyforge.quant import calibrate_ranges, quantize_graph

    rng = np.random.default_rng(8)
    g = random_graph(rng, dtype_choices=("mlp",))
    reps = [rng.normal(size=g.tensor(g.input_id).shape) for _ in range(4)]
    qg = quantize_graph(g, calibrate_ranges(g, reps))
    x = rng.normal(size=g.tensor(g.input_id).shape)
    a = run_graph(qg, x)
    b = run_graph(qg, x)
    assert a.tobytes() == b.tobytes()


def test_trace_roundtrip(tmp_path):
    rng = np.random.default_rng(9)
    g = random_graph(rng)
    x = rng.normal(size=g.tensor(g.input_id).shape)
    _, entries = run_graph(g, x, trace=True)
    p = tmp_path / "trace.bin"
    write_trace(p, entries)
    back = read_trace(p)
    assert [tid for tid, _, _ in back] == [tid for tid, _, _ in entries]
    for (t1, d1, a1), (t2, d2, a2) in zip(entries, back):
        np.testing.assert_allclose(a2, np.asarray(a1).reshape(-1).astype(np.float32), rtol=1e-6)
