"""Acceptance suite: one test per acceptance criterion, each printing a
PASS line with its measured numbers when it holds.

The codegen conformance criterion runs harness-free here (interpreter
self-conformance, textual dead-kernel and arena checks, generation
idempotence); the bit-exact compiled check lives with the C harness under
charness/ and in test_charness.py.
"""

import itertools
import math
import time

import numpy as np
import pytest

from tinyforge.codegen import CodegenOptions, emit_c, flash_ram_report
from tinyforge.dsp import DspConfig, fft_power_spectrum, frame_signal, num_frames
from tinyforge.estimate import load_profile
from tinyforge.interp import plan_arena, run_graph, tensor_live_ranges
from tinyforge.ir import GraphBuilder, fuse_activations
from tinyforge.quant import calibrate_ranges, quantize_graph
from tinyforge.synth import make_tone_dataset
from tinyforge.trainer import TrainConfig, evaluate, loss_and_grads, train
from tinyforge.tuner import (
    Constraints,
    default_audio_space,
    heuristic_filter,
    instantiate_model,
    rank_trials,
    run_trials,
    sample_configs,
    trial_table,
)
from tinyforge import calibrate as calib

HEAP_TOKENS = ("malloc", "calloc", "realloc", "free(", "alloca")


# ---------------------------------------------------------------- fixtures

def random_supported_graph(rng):
    """A random graph over the supported operator family."""
    style = rng.choice(["mlp", "conv", "convpool", "kmeans"])
    if style == "mlp":
        dims = [int(rng.integers(3, 24)) for _ in range(int(rng.integers(2, 5)))]
        b = GraphBuilder((dims[0],))
        cur = dims[0]
        for d in dims[1:]:
            b = b.dense(rng.normal(size=(cur, d)).astype(np.float32),
                        rng.normal(size=d).astype(np.float32))
            if rng.random() < 0.6:
                b = b.relu()
            cur = d
        return b.softmax().build()
    if style == "kmeans":
        dim = int(rng.integers(2, 10))
        cents = rng.normal(size=(int(rng.integers(2, 5)), dim)).astype(np.float32)
        return GraphBuilder((dim,)).kmeans_distance(cents).build()
    length = int(rng.integers(16, 48))
    ch = int(rng.integers(1, 4))
    filters = int(rng.integers(2, 8))
    b = GraphBuilder((length, ch)).conv1d(
        rng.normal(size=(filters, 3, ch)).astype(np.float32),
        rng.normal(size=filters).astype(np.float32),
    ).relu()
    length -= 2
    if style == "convpool":
        b = b.maxpool1d(2, 2)
        length = (length - 2) // 2 + 1
    b = b.flatten()
    out = int(rng.integers(2, 5))
    b = b.dense(rng.normal(size=(length * filters, out)).astype(np.float32),
                rng.normal(size=out).astype(np.float32))
    return b.softmax().build()


@pytest.fixture(scope="module")
def tone_dataset():
    return make_tone_dataset(n_per_class=16, seed=11)


@pytest.fixture(scope="module")
def kws_model(tone_dataset):
    """Table-3-style KWS pipeline: MFCC features + 2x conv1d, trained."""
    from tinyforge.dsp import dsp_process

    cfg = DspConfig(block="mfcc", frame_length_s=0.02, frame_stride_s=0.01,
                    num_mel_filters=32, num_cepstral_coeffs=13, fft_size=512)
    ds = tone_dataset
    Xtr = np.stack([dsp_process(s, cfg).values for s in ds.by_split("train")])
    ytr = np.array([ds.classes.index(s.label) for s in ds.by_split("train")])
    Xte = np.stack([dsp_process(s, cfg).values for s in ds.by_split("test")])
    yte = np.array([ds.classes.index(s.label) for s in ds.by_split("test")])
    g = instantiate_model("2x conv1d (8 to 16)", Xtr.shape[1:], len(ds.classes), seed=4)
    trained, _ = train(g, Xtr, ytr, TrainConfig(epochs=30, batch_size=12,
                                                learning_rate=0.05, seed=4))
    qg = quantize_graph(trained, calibrate_ranges(trained, list(Xtr)))
    return {"cfg": cfg, "f32": trained, "i8": qg,
            "Xtr": Xtr, "ytr": ytr, "Xte": Xte, "yte": yte, "classes": ds.classes}


# ---------------------------------------------------------------- criteria

def test_codegen_conformance_harness_free(kws_model):
    """Criterion: codegen conformance (harness-free variant).

    >= 20 random graphs + the KWS model: i8 interpreter bit-deterministic on
    100 inputs, f32 interpreter matches an independent naive-loop oracle
    within 1e-6, generated C passes textual dead-kernel/arena/no-heap checks,
    generation is byte-idempotent.  Runtime < 2 min.
    """
    from test_interp import naive_forward  # the independent loop oracle

    t0 = time.time()
    rng = np.random.default_rng(42)
    graphs = [random_supported_graph(rng) for _ in range(20)]
    graphs.append(kws_model["f32"])

    for idx, g in enumerate(graphs):
        shape = g.tensor(g.input_id).shape
        xs = rng.normal(size=(8,) + shape)
        for x in xs[:4]:
            got = run_graph(g, x)
            want = naive_forward(g, x)
            np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-10,
                                       err_msg=f"graph {idx} f32 oracle mismatch")
        reps = [rng.normal(size=shape) for _ in range(4)]
        qg = quantize_graph(g, calibrate_ranges(g, reps))
        inputs = rng.normal(size=(100,) + shape)
        run1 = np.stack([np.asarray(run_graph(qg, x), dtype=np.float32) for x in inputs])
        run2 = np.stack([np.asarray(run_graph(qg, x), dtype=np.float32) for x in inputs])
        assert run1.tobytes() == run2.tobytes(), f"graph {idx} i8 not bit-deterministic"

        for graph, dtype in ((g, "f32"), (qg, "i8")):
            plan = plan_arena(graph)
            opts = CodegenOptions(symbol_prefix="m", dtype=dtype)
            src, hdr = emit_c(graph, plan, opts)
            src2, hdr2 = emit_c(graph, plan, opts)
            assert (src, hdr) == (src2, hdr2), f"graph {idx} emission not idempotent"
            used = {n.kind for n in graph.nodes}
            for kind in ("conv1d", "maxpool1d", "kmeans_distance", "dense"):
                if kind not in used:
                    assert kind not in src, f"graph {idx}: dead kernel {kind} emitted"
            assert f"uint8_t bytes[{plan.peak_bytes}]" in src
            low = src.lower()
            assert not any(tok in low for tok in HEAP_TOKENS)
    elapsed = time.time() - t0
    assert elapsed < 120.0
    print(f"\nPASS codegen conformance (harness-free): {len(graphs)} graphs, "
          f"{elapsed:.1f} s")


def test_memory_reduction_direction(kws_model):
    """Criterion: generated flash/RAM below interpreter baseline for every
    strict-kernel-subset model (Table-4 direction, no absolute values)."""
    profile = load_profile("nano33")
    rng = np.random.default_rng(7)
    graphs = [random_supported_graph(rng) for _ in range(10)]
    graphs += [kws_model["f32"], kws_model["i8"]]
    checked = 0
    for g in graphs:
        used = {n.kind for n in g.nodes}
        if len(used) >= len(profile.kernel_code_bytes):
            continue
        rpt = flash_ram_report(g, plan_arena(g), CodegenOptions(dtype=g.dtype), profile)
        gen, base = rpt["generated"], rpt["interpreter_baseline"]
        assert gen["flash_bytes"] < base["flash_bytes"]
        assert gen["ram_bytes"] < base["ram_bytes"]
        assert gen["scaffold_ram_bytes"] < base["scaffold_ram_bytes"]
        checked += 1
    assert checked >= 10
    rpt = flash_ram_report(kws_model["i8"], plan_arena(kws_model["i8"]),
                           CodegenOptions(dtype="i8"), profile)
    print(f"\nPASS memory reduction: {checked} models; KWS i8 flash "
          f"{rpt['generated']['flash_bytes']} < {rpt['interpreter_baseline']['flash_bytes']} B")


def test_quantization_fidelity(kws_model):
    """Criterion: f32 accuracy >= 85% on the tone dataset; |i8 - f32| <= 3 pp."""
    t0 = time.time()
    f32_acc = evaluate(kws_model["f32"], kws_model["Xte"], kws_model["yte"]).accuracy
    qg = kws_model["i8"]
    probs = np.stack([run_graph(qg, x) for x in kws_model["Xte"]])
    i8_acc = float(np.mean(probs.argmax(axis=1) == kws_model["yte"]))
    elapsed = time.time() - t0
    assert f32_acc >= 0.85, f"f32 accuracy {f32_acc:.3f} < 0.85"
    assert abs(i8_acc - f32_acc) <= 0.03 + 1e-9, (
        f"i8 {i8_acc:.3f} vs f32 {f32_acc:.3f} differ by more than 3 pp"
    )
    assert elapsed < 300.0
    print(f"\nPASS quantization fidelity: f32 {f32_acc:.3f}, i8 {i8_acc:.3f}")


def test_dsp_correctness():
    """Criterion: FFT vs naive DFT <= 1e-9 over sizes 4..512; MFCC pipeline vs
    direct-formula oracle <= 1e-6; frame counts exact for the published
    (frame, stride) tuples."""
    from test_dsp import direct_dct2_ortho, direct_mel_energies, naive_dft_power

    rng = np.random.default_rng(3)
    for size in (4, 8, 16, 32, 64, 128, 256, 512):
        for _ in range(50):
            frame = rng.normal(size=size)
            got = fft_power_spectrum(frame, size, window=False)
            want = naive_dft_power(frame, size)
            np.testing.assert_allclose(got, want, rtol=1e-9, atol=1e-12)

    sr = 16000
    cfg = DspConfig(block="mfcc", frame_length_s=0.02, frame_stride_s=0.01,
                    num_mel_filters=20, num_cepstral_coeffs=10, fft_size=512)
    from tinyforge.dsp import block_features, hann_window

    x = rng.normal(size=sr)
    got = block_features(x, cfg, sr)
    win = hann_window(320)
    floor = 10.0 ** (cfg.noise_floor_db / 10.0)
    for i in (0, 42, 98):
        frame = x[i * 160 : i * 160 + 320] * win
        power = naive_dft_power(frame, 512)
        want = direct_dct2_ortho(
            10.0 * np.log10(np.maximum(direct_mel_energies(power, cfg, sr), floor))
        )[:10]
        np.testing.assert_allclose(got[i], want, rtol=1e-6, atol=1e-9)

    tuples = [(0.02, 0.01, 99), (0.02, 0.02, 50), (0.05, 0.025, 39), (0.032, 0.016, 61)]
    for frame_s, stride_s, expect in tuples:
        c = DspConfig(block="mfe", frame_length_s=frame_s, frame_stride_s=stride_s)
        frames = frame_signal(np.zeros(sr), c, sr)
        assert frames.shape[0] == expect == num_frames(sr, c.frame_samples(sr), c.stride_samples(sr))
    print("\nPASS dsp correctness: fft<=1e-9, mfcc<=1e-6, frame counts exact")


def test_gradient_checks():
    """Criterion: analytic gradients within 1e-4 relative of central finite
    differences for every trainable op kind."""
    from test_trainer import grad_check_graph

    rng = np.random.default_rng(5)
    cases = {
        "dense+softmax": GraphBuilder((5,)).dense(rng.normal(size=(5, 4)), rng.normal(size=4)).softmax().build(),
        "relu": GraphBuilder((6,)).dense(rng.normal(size=(6, 5)), rng.normal(size=5)).relu()
                  .dense(rng.normal(size=(5, 3)), rng.normal(size=3)).softmax().build(),
        "conv1d": GraphBuilder((10, 2)).conv1d(rng.normal(size=(3, 3, 2)), rng.normal(size=3), stride=2)
                  .flatten().dense(rng.normal(size=(12, 3)), rng.normal(size=3)).softmax().build(),
        "maxpool+flatten": GraphBuilder((12, 2)).conv1d(rng.normal(size=(4, 3, 2)), rng.normal(size=4))
                  .relu().maxpool1d(2, 2).flatten()
                  .dense(rng.normal(size=(20, 2)), rng.normal(size=2)).softmax().build(),
    }
    cases["fused relu"] = fuse_activations(cases["relu"])
    for name, g in cases.items():
        grad_check_graph(g, seed=1)
    print(f"\nPASS gradient checks: {', '.join(cases)}")


def test_arena_planner():
    """Criterion: on exhaustive small chains, planner peak <= 1.5x brute-force
    optimal and >= the live-set lower bound; 200-graph canary run clean."""
    from test_interp import (
        brute_force_optimal_peak,
        chain_graph,
        live_set_lower_bound,
        random_graph,
    )

    worst_ratio = 0.0
    for length in range(2, 7):
        for combo in itertools.product([16, 48, 112], repeat=length):
            g = chain_graph(list(combo))
            ranges = tensor_live_ranges(g)
            sizes = {t: g.tensor(t).nbytes for t in ranges}
            plan = plan_arena(g)
            lb = live_set_lower_bound(sizes, ranges)
            opt = brute_force_optimal_peak(sizes, ranges)
            assert lb <= plan.peak_bytes <= 1.5 * opt, (combo, lb, plan.peak_bytes, opt)
            worst_ratio = max(worst_ratio, plan.peak_bytes / opt)

    rng = np.random.default_rng(6)
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
                f"canary corruption on graph {trial}, tensor {tid}"
            )

        fill(g.input_id)
        for node in g.nodes:
            for tid in node.inputs:
                if tid in plan.offsets:
                    check(tid)
            fill(node.output)
        check(g.output_id)
    print(f"\nPASS arena planner: exhaustive chains (worst peak/opt {worst_ratio:.3f}), "
          f"200 canary graphs clean")


def test_tuner_acceptance(tone_dataset):
    """Criterion: 8 sampled trials from the default space under a 256 kB RAM
    constraint; every reported trial fits; totals = dsp+nn; accuracy ordering
    descending; < 10 min."""
    t0 = time.time()
    profile = load_profile("nano33")
    constraints = Constraints(ram_bytes=256 * 1024)
    space = default_audio_space()
    configs = sample_configs(space, 8, seed=2)
    outcome = heuristic_filter(configs, profile, constraints,
                               num_classes=3, sample_rate_hz=16000)
    assert outcome.kept, "the resource filter removed every sampled config"
    trials = run_trials(outcome.kept, tone_dataset, profile,
                        TrainConfig(epochs=12, batch_size=12, learning_rate=0.05),
                        batch_seed=2)
    ranked = rank_trials(trials, "accuracy")
    rows = trial_table(ranked)
    assert rows, "no trained trials"
    for row in rows:
        assert row["ram_total_bytes"] <= 256 * 1024, f"trial {row['trial_id']} violates RAM"
        assert row["ram_total_bytes"] == row["ram_dsp_bytes"] + row["ram_nn_bytes"]
        assert row["latency_total_ms"] == pytest.approx(
            row["latency_dsp_ms"] + row["latency_nn_ms"], abs=2e-3
        )
    accs = [row["accuracy"] for row in rows]
    assert accs == sorted(accs, reverse=True)
    elapsed = time.time() - t0
    assert elapsed < 600.0
    print(f"\nPASS tuner: {len(rows)} fitting trials, accuracies {accs}, {elapsed:.0f} s")


def test_calibration_ga(tone_dataset, kws_model):
    """Criterion: GA best (FAR+FRR) within 0.05 of the exhaustive optimum on a
    <= 500-cell grid; returned set has no dominated pair; < 3 min."""
    t0 = time.time()
    stream = calib.synth_stream(
        tone_dataset, kws_model["cfg"], duration_s=25.0, event_rate_per_min=12.0,
        noise_db=-40.0, seed=13, positive_label="mid",
    )
    column = kws_model["classes"].index("mid")
    probs = calib.stream_probabilities(kws_model["f32"], stream)

    windows = [1, 3, 6, 12, 20]
    thresholds = np.linspace(0.15, 0.9, 10)
    suppressions = [0, 15, 30, 60, 90, 120, 160, 200, 250, 300]
    grid = calib.grid_search_probs(probs, stream, windows, thresholds, suppressions,
                                   tolerance_frames=25, positive_class="mid")
    assert len(grid) == 500
    grid_best = min(r.far + r.frr for r in grid)

    front = calib.ga_search_probs(
        probs, stream,
        calib.SpaceBounds(window=(1, 20), threshold=(0.15, 0.9), suppression=(0, 300)),
        calib.GaParams(population=24, generations=15, seed=13, tolerance_frames=25),
        positive_class="mid", column=column,
    )
    ga_best = min(r.far + r.frr for r in front)
    assert ga_best <= grid_best + 0.05, f"GA best {ga_best:.3f} vs grid {grid_best:.3f}"
    for a in front:
        for b in front:
            if a is not b:
                assert not (b.far <= a.far and b.frr <= a.frr
                            and (b.far < a.far or b.frr < a.frr))
    elapsed = time.time() - t0
    assert elapsed < 180.0
    print(f"\nPASS calibration GA: best {ga_best:.3f} vs grid {grid_best:.3f}, "
          f"{len(front)} front configs, {elapsed:.0f} s")
