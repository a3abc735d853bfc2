"""Command-line workflow over a project directory.

One subcommand per pipeline stage::

    init      create the project skeleton (--demo seeds the tone dataset)
    ingest    add sample files (or a directory tree) to the dataset
    split     stratified train/test re-split
    stats     dataset summary
    dsp       configure the preprocessing block + model template
    train     extract features and train the float model
    eval      confusion matrix / accuracy / F1 on a split
    quantize  post-training int8 quantization
    build     generate deploy/<prefix>_model.{c,h}
    estimate  latency/RAM/flash against a device profile
    tune      random search with constraint filtering
    calibrate GA search over streaming post-processing configs
    run       single-file inference with the current model

Exit codes: 0 success, 1 domain error, 2 usage error.  ``--json`` prints a
machine-readable result object on stdout and moves human text to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import calibrate as calib
from . import codegen, conformance, estimate as est_mod, report as report_mod, tuner as tuner_mod
from .dsp import DspConfig, dsp_process
from .errors import ProjectError, TinyForgeError
from .interp import plan_arena, run_graph
from .ir import load_model, save_model
from .project import Project, dataset_stats, ingest, split_dataset
from .quant import calibrate_ranges, quantize_graph
from .synth import write_demo_wavs
from .trainer import TrainConfig, evaluate, init_preset, train
from .tuner import instantiate_model

LOCK_NAME = ".tinyforge.lock"

DEFAULT_IMPULSE = {
    "dsp": DspConfig(block="mfcc", fft_size=512).to_dict(),
    "model": "preset:audio",
    "profile": "nano33",
    "constraints": {},
}


class _Out:
    """Human text vs machine JSON never share a stream."""

    def __init__(self, as_json: bool):
        self.as_json = as_json
        self.payload = {}

    def say(self, text: str = "") -> None:
        print(text, file=sys.stderr if self.as_json else sys.stdout)

    def emit(self, **kv) -> None:
        self.payload.update(kv)

    def flush(self) -> None:
        if self.as_json:
            print(json.dumps(self.payload, indent=2, sort_keys=True))


@contextmanager
def project_lock(root: Path):
    root.mkdir(parents=True, exist_ok=True)
    lock = root / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ProjectError(
            f"{lock} exists: another command is running on this project "
            f"(delete the file if that command crashed)"
        ) from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_impulse(proj: Project) -> dict:
    impulse = dict(DEFAULT_IMPULSE)
    path = proj.root / "impulse.json"
    if path.is_file():
        impulse.update(json.loads(path.read_text()))
    return impulse


def _dsp_from_impulse(impulse: dict) -> DspConfig:
    return DspConfig.from_dict(impulse["dsp"])


def _features_for_split(proj: Project, cfg: DspConfig, split: str):
    ds = proj.load_dataset()
    feats, labels = [], []
    for s in ds.by_split(split):
        feats.append(dsp_process(s, cfg).values)
        labels.append(ds.classes.index(s.label))
    if not feats:
        raise ProjectError(f"no samples in the {split} split; run split first")
    return np.stack(feats), np.array(labels, dtype=int), ds.classes


def _model_path(proj: Project, dtype: str) -> Path:
    return proj.root / "artifacts" / f"model.{dtype}.json"


def _require_model(proj: Project, dtype: str):
    path = _model_path(proj, dtype)
    if not path.is_file():
        hint = "run train first" if dtype == "f32" else "run quantize first"
        raise ProjectError(f"missing {path}; {hint}")
    return load_model(path)


def _parse_bytes(text: str) -> int:
    text = text.strip().lower()
    mult = 1
    for suffix, m in (("k", 1024), ("m", 1024 * 1024)):
        if text.endswith(suffix):
            text, mult = text[: -len(suffix)], m
            break
    return int(float(text) * mult)


def _parse_constraints(items) -> tuner_mod.Constraints:
    c = tuner_mod.Constraints()
    for item in items or []:
        if "=" not in item:
            raise ProjectError(f"constraint {item!r} must look like ram=256k")
        key, val = item.split("=", 1)
        key = key.strip().lower()
        if key == "ram":
            c.ram_bytes = _parse_bytes(val)
        elif key == "flash":
            c.flash_bytes = _parse_bytes(val)
        elif key in ("latency", "latency_ms"):
            c.latency_ms = float(val.rstrip("ms"))
        else:
            raise ProjectError(f"unknown constraint {key!r} (ram, flash, latency)")
    return c


def _profile(args, proj: Project):
    name = args.profile
    if name is None:
        name = _load_impulse(proj).get("profile", "nano33")
    return est_mod.load_profile(name, extra_dirs=[proj.root / "profiles"])


# ------------------------------------------------------------ subcommands

def cmd_init(args, out: _Out):
    proj = Project.init(args.project, classes=args.classes or [], seed=args.seed or 0)
    proj.write_impulse(dict(DEFAULT_IMPULSE))
    msg = f"initialized project at {proj.root}"
    if args.demo:
        raw = write_demo_wavs(proj.root / "raw", n_per_class=args.demo_per_class, seed=args.seed or 0)
        msg += f"; demo WAVs in {raw} (ingest with: tinyforge ingest --dir {raw})"
    out.say(msg)
    out.emit(project=str(proj.root), demo=bool(args.demo))


def cmd_ingest(args, out: _Out):
    proj = Project.open(args.project)
    added = []
    if args.dir:
        base = Path(args.dir)
        if not base.is_dir():
            raise ProjectError(f"{base}: not a directory")
        for label_dir in sorted(p for p in base.iterdir() if p.is_dir()):
            for f in sorted(label_dir.iterdir()):
                fmt = f.suffix.lstrip(".").lower()
                if fmt not in ("wav", "csv", "json"):
                    continue
                s = ingest(f, fmt, label_dir.name, args.split, sample_rate_hz=args.rate)
                proj.add_sample(s, f.read_bytes())
                added.append(s.id)
    else:
        if not args.files:
            raise ProjectError("give sample files or --dir")
        if not args.label:
            raise ProjectError("--label is required when ingesting files")
        for f in args.files:
            fmt = args.format or Path(f).suffix.lstrip(".").lower()
            s = ingest(f, fmt, args.label, args.split, sample_rate_hz=args.rate)
            proj.add_sample(s, Path(f).read_bytes())
            added.append(s.id)
    out.say(f"ingested {len(added)} sample(s)")
    out.emit(ingested=added)


def cmd_split(args, out: _Out):
    proj = Project.open(args.project)
    seed = args.seed if args.seed is not None else proj.read_config().get("seed", 0)
    ds = split_dataset(proj.load_dataset(), args.test_fraction, seed)
    proj.save_dataset(ds)
    st = dataset_stats(ds)
    out.say(f"split {st['total']} samples -> train {st['per_split']['train']}, "
            f"test {st['per_split']['test']}")
    out.emit(stats=st)


def cmd_stats(args, out: _Out):
    proj = Project.open(args.project)
    st = dataset_stats(proj.load_dataset())
    out.say(f"{st['total']} samples, {st['duration_s']:.1f} s total")
    for c, n in sorted(st["per_class"].items()):
        per = st["per_class_split"][c]
        out.say(f"  {c:12s} {n:4d}  (train {per['train']}, test {per['test']})")
    out.emit(stats=st)


def cmd_dsp(args, out: _Out):
    proj = Project.open(args.project)
    impulse = _load_impulse(proj)
    cfg = DspConfig.from_dict(impulse["dsp"])
    updates = {
        "block": args.block, "frame_length_s": args.frame_length,
        "frame_stride_s": args.frame_stride, "fft_size": args.fft_size,
        "num_mel_filters": args.mel_filters, "num_cepstral_coeffs": args.cepstral_coeffs,
        "low_freq_hz": args.low_freq, "high_freq_hz": args.high_freq,
        "noise_floor_db": args.noise_floor_db, "window_size_s": args.window_size,
    }
    d = cfg.to_dict()
    d.update({k: v for k, v in updates.items() if v is not None})
    cfg = DspConfig.from_dict(d)
    if args.model:
        impulse["model"] = args.model
    impulse["dsp"] = cfg.to_dict()
    if args.profile:
        impulse["profile"] = args.profile

    ds = proj.load_dataset()
    sr = ds.samples[0].sample_rate_hz
    cfg.validate(sr)
    fm = dsp_process(ds.samples[0], cfg)
    proj.write_impulse(impulse)
    fm.to_csv(proj.root / "reports" / "features_preview.csv")
    out.say(f"impulse: {cfg.block} -> {fm.rows}x{fm.cols} features per window "
            f"(preview in reports/features_preview.csv)")
    out.emit(impulse=impulse, feature_shape=[fm.rows, fm.cols])


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.lr,
        seed=seed,
        validation_fraction=args.val_fraction,
    )


def cmd_train(args, out: _Out):
    proj = Project.open(args.project)
    impulse = _load_impulse(proj)
    cfg = _dsp_from_impulse(impulse)
    seed = args.seed if args.seed is not None else proj.read_config().get("seed", 0)
    X, y, classes = _features_for_split(proj, cfg, "train")
    template = impulse.get("model", "preset:audio")
    if template.startswith("preset:"):
        g = init_preset(template.split(":", 1)[1], X.shape[1:], len(classes), seed=seed)
    else:
        g = instantiate_model(template, X.shape[1:], len(classes), seed=seed)
    trained, history = train(g, X, y, _train_config(args, seed))
    save_model(trained, _model_path(proj, "f32"))
    files = report_mod.write_train_report(history, proj.root / "reports")
    out.say(f"trained {template} for {args.epochs} epochs (lr {history['lr']:g}); "
            f"best epoch {history['best_epoch'] + 1}, "
            f"val accuracy {max(history['val_accuracy']):.3f}")
    out.say(f"model -> {_model_path(proj, 'f32')}")
    out.emit(history=history, model=str(_model_path(proj, "f32")),
             reports=[str(f) for f in files])


def cmd_eval(args, out: _Out):
    proj = Project.open(args.project)
    g = _require_model(proj, args.dtype)
    cfg = _dsp_from_impulse(_load_impulse(proj))
    X, y, classes = _features_for_split(proj, cfg, args.split)
    if g.dtype == "i8":
        probs = np.stack([run_graph(g, x) for x in X])
        preds = probs.argmax(axis=1)
        k = len(classes)
        confusion = np.zeros((k, k), dtype=int)
        for t, p in zip(y, preds):
            confusion[t, p] += 1
        from .trainer import EvalReport

        acc = float(np.trace(confusion) / max(1, confusion.sum()))
        f1 = np.zeros(k)
        for c in range(k):
            tp = confusion[c, c]
            prec = tp / confusion[:, c].sum() if confusion[:, c].sum() else 0.0
            rec = tp / confusion[c, :].sum() if confusion[c, :].sum() else 0.0
            f1[c] = 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)
        rpt = EvalReport(confusion=confusion, accuracy=acc, per_class_f1=f1)
    else:
        rpt = evaluate(g, X, y)
    stem = f"eval_{args.dtype}_{args.split}"
    files = report_mod.write_eval_report(rpt, classes, proj.root / "reports", stem=stem)
    out.say(f"{args.dtype} accuracy on {args.split}: {rpt.accuracy:.3f}")
    for c, f1v in zip(classes, rpt.per_class_f1):
        out.say(f"  F1[{c}] = {f1v:.3f}")
    out.emit(report=rpt.to_dict(), classes=classes, files=[str(f) for f in files])


def cmd_quantize(args, out: _Out):
    proj = Project.open(args.project)
    g = _require_model(proj, "f32")
    cfg = _dsp_from_impulse(_load_impulse(proj))
    X, _, _ = _features_for_split(proj, cfg, "train")
    qg = quantize_graph(g, calibrate_ranges(g, list(X)))
    save_model(qg, _model_path(proj, "i8"))
    f32_size = _model_path(proj, "f32").stat().st_size
    i8_size = _model_path(proj, "i8").stat().st_size
    out.say(f"quantized model -> {_model_path(proj, 'i8')} "
            f"({i8_size} B vs {f32_size} B float)")
    out.emit(model=str(_model_path(proj, "i8")), i8_bytes=i8_size, f32_bytes=f32_size)


def _pick_build_dtype(proj: Project, requested) -> str:
    if requested:
        return requested
    return "i8" if _model_path(proj, "i8").is_file() else "f32"


def cmd_build(args, out: _Out):
    proj = Project.open(args.project)
    dtype = _pick_build_dtype(proj, args.dtype)
    g = _require_model(proj, dtype)
    plan = plan_arena(g)
    opts = codegen.CodegenOptions(symbol_prefix=args.prefix, dtype=dtype,
                                  emit_trace_hooks=args.trace_hooks)
    c_path, h_path = codegen.write_c_files(g, plan, opts, proj.root / "deploy")
    plan_file = proj.root / "deploy" / "arena_plan.json"
    plan_file.write_text(json.dumps(
        {"peak_bytes": plan.peak_bytes, "alignment": plan.alignment, "offsets": plan.offsets},
        indent=2, sort_keys=True) + "\n")
    out.say(f"generated {c_path} and {h_path} (arena {plan.peak_bytes} B)")
    out.emit(c=str(c_path), h=str(h_path), arena_bytes=plan.peak_bytes, dtype=dtype)


def cmd_estimate(args, out: _Out):
    proj = Project.open(args.project)
    dtype = _pick_build_dtype(proj, args.dtype)
    g = _require_model(proj, dtype)
    impulse = _load_impulse(proj)
    cfg = _dsp_from_impulse(impulse)
    profile = _profile(args, proj)
    ds = proj.load_dataset()
    sr = ds.samples[0].sample_rate_hz
    est = est_mod.estimate(g, cfg, profile, mode=args.mode, sample_rate_hz=sr)
    fit = est_mod.fits_device(est, profile)
    files = report_mod.write_estimate_report(est, fit, profile.name, args.mode,
                                             proj.root / "reports")
    out.say(f"profile {profile.name} ({args.mode}, {dtype}):")
    out.say(f"  latency  {est.total_latency_ms:9.2f} ms  (dsp {est.dsp_latency_ms:.2f} + nn {est.nn_latency_ms:.2f})")
    out.say(f"  ram      {est.ram_bytes:9d} B   (dsp {est.dsp_ram_bytes} + nn {est.nn_ram_bytes})")
    out.say(f"  flash    {est.flash_bytes:9d} B")
    out.say("  fits: " + ("yes" if fit.fits else "NO: " + "; ".join(fit.violations)))
    out.emit(estimate=est.to_dict(), fit=fit.to_dict(), profile=profile.name,
             files=[str(f) for f in files])


def cmd_tune(args, out: _Out):
    proj = Project.open(args.project)
    impulse = _load_impulse(proj)
    seed = args.seed if args.seed is not None else proj.read_config().get("seed", 0)

    if args.apply is not None:
        path = proj.require("reports/tuner.json", "run tune first")
        records = json.loads(path.read_text())["trials"]
        match = [t for t in records if t["trial_id"] == args.apply]
        if not match:
            raise ProjectError(f"trial {args.apply} not found in {path}")
        t = match[0]
        impulse["dsp"] = t["dsp"]
        impulse["model"] = t["model"]
        proj.write_impulse(impulse)
        out.say(f"applied trial {args.apply}: {t['model']} on {t['dsp']['block']}")
        out.emit(applied=t)
        return

    ds = proj.load_dataset()
    profile = _profile(args, proj)
    constraints = _parse_constraints(args.constraint)
    space = tuner_mod.default_audio_space(dtypes=tuple(args.dtypes.split(",")))
    configs = tuner_mod.sample_configs(space, args.trials, seed)
    outcome = tuner_mod.heuristic_filter(
        configs, profile, constraints, num_classes=len(ds.classes),
        sample_rate_hz=ds.samples[0].sample_rate_hz,
    )
    out.say(f"sampled {len(configs)} configs; {len(outcome.kept)} pass the resource filter")
    for config, violations in outcome.filtered:
        out.say(f"  filtered {config.model} + {tuner_mod.describe_dsp(config.dsp)}: "
                + "; ".join(violations))
    trials = tuner_mod.run_trials(outcome.kept, ds, profile,
                                  _train_config(args, seed), batch_seed=seed)
    ranked = tuner_mod.rank_trials(trials, args.objective)
    rows = tuner_mod.trial_table(ranked)
    files = report_mod.write_tuner_report(trials, rows, proj.root / "reports")
    out.say(f"{len(ranked)} trials trained; top by {args.objective}:")
    for row in rows[:5]:
        out.say(f"  #{row['trial_id']} acc {row['accuracy']:.3f} "
                f"{row['dsp']} + {row['model']} [{row['dtype']}] "
                f"lat {row['latency_total_ms']:.0f} ms ram {row['ram_total_bytes']} B")
    out.say("apply one with: tinyforge tune --apply <trial_id>")
    out.emit(rows=rows, files=[str(f) for f in files])


def cmd_calibrate(args, out: _Out):
    proj = Project.open(args.project)
    g = _require_model(proj, "f32")
    impulse = _load_impulse(proj)
    cfg = _dsp_from_impulse(impulse)
    ds = proj.load_dataset()
    seed = args.seed if args.seed is not None else proj.read_config().get("seed", 0)
    stream = calib.synth_stream(
        ds, cfg, duration_s=args.duration, event_rate_per_min=args.event_rate,
        noise_db=args.noise_db, seed=seed, positive_label=args.positive_label,
    )
    positive = stream.intervals[0][0] if stream.intervals else (
        args.positive_label or ds.classes[0]
    )
    column = ds.classes.index(positive)
    params = calib.GaParams(
        population=args.population, generations=args.generations,
        crossover_rate=0.9, mutation_rate=0.3, seed=seed,
        tolerance_frames=args.tolerance,
    )
    evaluated = []
    front = calib.ga_search(stream, g, calib.SpaceBounds(), params,
                            positive_class=positive, column=column,
                            evaluated_log=evaluated)
    ga_params = {
        "population": params.population, "generations": params.generations,
        "crossover_rate": params.crossover_rate, "mutation_rate": params.mutation_rate,
        "seed": params.seed, "tolerance_frames": params.tolerance_frames,
        "positive_class": str(positive), "duration_s": args.duration,
        "event_rate_per_min": args.event_rate, "noise_db": args.noise_db,
    }
    files = report_mod.write_calibration_report(front, ga_params, proj.root / "reports",
                                                 evaluated=evaluated)
    out.say(f"stream: {stream.num_frames} frames, {len(stream.intervals)} events "
            f"of class {positive!r}")
    out.say("non-dominated post-processing configs:")
    for r in front:
        out.say(f"  window {r.config.averaging_window_frames:3d}  "
                f"threshold {r.config.threshold:.2f}  "
                f"suppression {r.config.suppression_frames:3d}  "
                f"FAR {r.far:.3f}  FRR {r.frr:.3f}")
    out.emit(front=[r.to_dict() for r in front], ga_params=ga_params,
             files=[str(f) for f in files])


def cmd_run(args, out: _Out):
    proj = Project.open(args.project)
    dtype = _pick_build_dtype(proj, args.dtype)
    g = _require_model(proj, dtype)
    impulse = _load_impulse(proj)
    cfg = _dsp_from_impulse(impulse)
    fmt = args.format or Path(args.input).suffix.lstrip(".").lower()
    sample = ingest(args.input, fmt, label="?", split="test", sample_rate_hz=args.rate)
    fm = dsp_process(sample, cfg)
    probs = run_graph(g, fm)
    classes = proj.read_config().get("classes") or [str(i) for i in range(len(probs))]
    order = np.argsort(probs)[::-1]
    out.say(f"{args.input} ({dtype} model):")
    for i in order:
        name = classes[i] if i < len(classes) else str(i)
        out.say(f"  {name:12s} {probs[i]:.4f}")
    out.emit(probabilities={
        (classes[i] if i < len(classes) else str(i)): float(probs[i]) for i in range(len(probs))
    }, dtype=dtype)


# ------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="tinyforge",
        description="Desk-scale TinyML pipeline: data, DSP, training, int8, C codegen.",
    )
    p.add_argument("--project", default=".", help="project directory (default: cwd)")
    p.add_argument("--seed", type=int, default=None, help="override the project seed")
    p.add_argument("--profile", default=None, help="device profile name")
    p.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("init", help="create the project skeleton")
    sp.add_argument("--classes", nargs="*", default=None)
    sp.add_argument("--demo", action="store_true", help="write the synthetic tone dataset")
    sp.add_argument("--demo-per-class", type=int, default=20)
    sp.set_defaults(func=cmd_init)

    sp = sub.add_parser("ingest", help="add samples to the dataset")
    sp.add_argument("files", nargs="*", help="sample files")
    sp.add_argument("--dir", default=None, help="directory tree with <label>/ subdirs")
    sp.add_argument("--label", default=None)
    sp.add_argument("--format", choices=["wav", "csv", "json"], default=None)
    sp.add_argument("--split", choices=["train", "test"], default="train")
    sp.add_argument("--rate", type=int, default=None, help="sample rate for CSV files")
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("split", help="stratified train/test split")
    sp.add_argument("--test-fraction", type=float, default=0.25)
    sp.set_defaults(func=cmd_split)

    sp = sub.add_parser("stats", help="dataset summary")
    sp.set_defaults(func=cmd_stats)

    sp = sub.add_parser("dsp", help="configure the preprocessing block")
    sp.add_argument("--block", choices=["raw", "mfe", "mfcc"], default=None)
    sp.add_argument("--frame-length", type=float, default=None)
    sp.add_argument("--frame-stride", type=float, default=None)
    sp.add_argument("--fft-size", type=int, default=None)
    sp.add_argument("--mel-filters", type=int, default=None)
    sp.add_argument("--cepstral-coeffs", type=int, default=None)
    sp.add_argument("--low-freq", type=float, default=None)
    sp.add_argument("--high-freq", type=float, default=None)
    sp.add_argument("--noise-floor-db", type=float, default=None)
    sp.add_argument("--window-size", type=float, default=None)
    sp.add_argument("--model", default=None, help="model template or preset:audio/timeseries")
    sp.set_defaults(func=cmd_dsp)

    def add_train_flags(sp, epochs=30):
        sp.add_argument("--epochs", type=int, default=epochs)
        sp.add_argument("--batch-size", type=int, default=16)
        sp.add_argument("--lr", type=float, default=0.05)
        sp.add_argument("--val-fraction", type=float, default=0.25)

    sp = sub.add_parser("train", help="train the float model")
    add_train_flags(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a model on a split")
    sp.add_argument("--split", choices=["train", "test"], default="test")
    sp.add_argument("--dtype", choices=["f32", "i8"], default="f32")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("quantize", help="post-training int8 quantization")
    sp.set_defaults(func=cmd_quantize)

    sp = sub.add_parser("build", help="generate C sources")
    sp.add_argument("--dtype", choices=["f32", "i8"], default=None)
    sp.add_argument("--prefix", default="model")
    sp.add_argument("--trace-hooks", action="store_true")
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("estimate", help="resource estimate for a device profile")
    sp.add_argument("--dtype", choices=["f32", "i8"], default=None)
    sp.add_argument("--mode", choices=["generated", "interpreter_baseline"],
                    default="generated")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("tune", help="random search over DSP x model configs")
    sp.add_argument("--trials", type=int, default=8)
    sp.add_argument("--constraint", action="append", default=None,
                    help="ram=256k / flash=1m / latency=300ms (repeatable)")
    sp.add_argument("--objective", choices=["accuracy", "latency", "ram", "flash"],
                    default="accuracy")
    sp.add_argument("--dtypes", default="f32", help="comma list of dtypes to search")
    sp.add_argument("--apply", type=int, default=None,
                    help="write this trial id's config into impulse.json")
    add_train_flags(sp, epochs=15)
    sp.set_defaults(func=cmd_tune)

    sp = sub.add_parser("calibrate", help="GA search over post-processing configs")
    sp.add_argument("--duration", type=float, default=30.0, help="stream seconds")
    sp.add_argument("--event-rate", type=float, default=6.0, help="events per minute")
    sp.add_argument("--noise-db", type=float, default=-40.0)
    sp.add_argument("--positive-label", default=None)
    sp.add_argument("--population", type=int, default=24)
    sp.add_argument("--generations", type=int, default=12)
    sp.add_argument("--tolerance", type=int, default=25, help="match window in frames")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("run", help="classify one input file")
    sp.add_argument("input")
    sp.add_argument("--format", choices=["wav", "csv", "json"], default=None)
    sp.add_argument("--dtype", choices=["f32", "i8"], default=None)
    sp.add_argument("--rate", type=int, default=None)
    sp.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = _Out(args.json)
    root = Path(args.project)
    try:
        if args.command == "init":
            args.func(args, out)
        else:
            with project_lock(root):
                args.func(args, out)
    except TinyForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    out.flush()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
