"""Constraint-aware random search over joint DSP x model x dtype configs.

The search space is a cross product of DSP configuration templates, model
descriptors (compact strings like ``"2x conv1d (32 to 64)"`` or
``"mlp (32, 16)"``), and dtypes.  Candidate configs are pre-filtered by the
resource estimator on randomly initialized graphs (no training), surviving
configs are trained and evaluated on the test split, and trials are ranked
by accuracy or by a resource objective.

The default audio space enumerates the keyword-spotting design points the
tuner is meant to explore; its largest row is deliberately heavy enough to
violate a 256 kB RAM budget so constraint filtering has teeth.
"""

from __future__ import annotations

import re
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dsp import DspConfig, dsp_process, num_frames
from .errors import TinyForgeError, TunerError
from .estimate import DeviceProfile, ResourceEstimate, estimate, fits_device
from .ir import ModelGraph
from .project import Dataset
from .quant import calibrate_ranges, quantize_graph
from .trainer import EvalReport, TrainConfig, build_conv_stack, build_mlp, evaluate, train

_CONV_RE = re.compile(r"^(\d+)x conv1d \((\d+) to (\d+)\)( nopool)?$")
_MLP_RE = re.compile(r"^mlp \((\d+(?:,\s*\d+)*)\)$")


@dataclass(frozen=True)
class CandidateConfig:
    dsp: DspConfig
    model: str
    dtype: str


@dataclass
class SearchSpace:
    dsp_choices: list
    model_templates: list
    dtypes: list = field(default_factory=lambda: ["f32"])

    def __post_init__(self):
        if not self.dsp_choices or not self.model_templates or not self.dtypes:
            raise TunerError("search space must have at least one choice on every axis")
        for tpl in self.model_templates:
            parse_model_descriptor(tpl)

    def enumerate(self) -> list:
        return [
            CandidateConfig(dsp=d, model=m, dtype=t)
            for d in self.dsp_choices
            for m in self.model_templates
            for t in self.dtypes
        ]


def parse_model_descriptor(descriptor: str):
    """Returns ("conv", widths) / ("conv_nopool", widths) / ("mlp", widths).

    Conv widths double geometrically from A to B; the ``nopool`` variant
    keeps full temporal resolution between layers.
    """
    m = _CONV_RE.match(descriptor.strip())
    if m:
        n, lo, hi = int(m.group(1)), int(m.group(2)), int(m.group(3))
        kind = "conv_nopool" if m.group(4) else "conv"
        if n == 1:
            return kind, [lo]
        ratio = (hi / lo) ** (1.0 / (n - 1))
        widths = [int(round(lo * ratio ** i)) for i in range(n)]
        return kind, widths
    m = _MLP_RE.match(descriptor.strip())
    if m:
        return "mlp", [int(v) for v in m.group(1).split(",")]
    raise TunerError(
        f"unknown model descriptor {descriptor!r} "
        "(expected 'Nx conv1d (A to B)[ nopool]' or 'mlp (w1, w2, ...)')"
    )


def instantiate_model(descriptor: str, feature_shape, num_classes: int, seed: int = 0) -> ModelGraph:
    kind, widths = parse_model_descriptor(descriptor)
    if kind in ("conv", "conv_nopool"):
        if len(feature_shape) != 2:
            raise TunerError(f"conv descriptor needs 2-D features, got {feature_shape}")
        pool = 0 if kind == "conv_nopool" else 2
        return build_conv_stack(tuple(feature_shape), widths, num_classes, seed=seed, pool=pool)
    flat = int(np.prod(feature_shape))
    return build_mlp(flat, widths, num_classes, seed=seed)


def default_audio_space(dtypes=("f32",)) -> SearchSpace:
    rows = [
        ("mfe", 0.02, 0.01, 40), ("mfcc", 0.02, 0.01, 40), ("mfcc", 0.02, 0.01, 32),
        ("mfe", 0.02, 0.01, 32), ("mfe", 0.02, 0.02, 32), ("mfcc", 0.05, 0.025, 40),
        ("mfe", 0.05, 0.025, 32), ("mfe", 0.032, 0.016, 32),
    ]
    dsp_choices = [
        DspConfig(block=b, frame_length_s=fl, frame_stride_s=fs, num_mel_filters=nm,
                  num_cepstral_coeffs=min(13, nm), fft_size=None)
        for b, fl, fs, nm in rows
    ]
    model_templates = [
        "4x conv1d (64 to 512) nopool",  # oversized row; exists to exercise RAM constraints
        "4x conv1d (32 to 256)",
        "4x conv1d (16 to 128)",
        "3x conv1d (32 to 128)",
        "2x conv1d (32 to 64)",
        "3x conv1d (16 to 64)",
        "2x conv1d (16 to 32)",
    ]
    return SearchSpace(dsp_choices=dsp_choices, model_templates=model_templates, dtypes=list(dtypes))


# ------------------------------------------------------------ sampling

def sample_configs(space: SearchSpace, n: int, seed: int) -> list:
    """n distinct uniform draws from the cross product, deterministic per seed."""
    if n < 1:
        raise TunerError("n must be >= 1")
    pool = space.enumerate()
    rng = np.random.default_rng(seed)
    if n >= len(pool):
        if n > len(pool):
            warnings.warn(
                f"requested {n} configs but the space has only {len(pool)} distinct; returning all"
            )
        order = rng.permutation(len(pool))
        return [pool[i] for i in order]
    picked = []
    seen = set()
    retries = 0
    while len(picked) < n and retries < 50 * n:
        idx = int(rng.integers(len(pool)))
        if idx in seen:
            retries += 1
            continue
        seen.add(idx)
        picked.append(pool[idx])
    return picked


# ------------------------------------------------------------ filtering

@dataclass
class Constraints:
    ram_bytes: Optional[int] = None
    flash_bytes: Optional[int] = None
    latency_ms: Optional[float] = None

    def violations(self, est: ResourceEstimate, profile: DeviceProfile) -> list:
        out = list(fits_device(est, profile).violations)
        if self.ram_bytes is not None and est.ram_bytes > self.ram_bytes:
            out.append(f"RAM {est.ram_bytes} B exceeds constraint {self.ram_bytes} B")
        if self.flash_bytes is not None and est.flash_bytes > self.flash_bytes:
            out.append(f"flash {est.flash_bytes} B exceeds constraint {self.flash_bytes} B")
        if self.latency_ms is not None and est.total_latency_ms > self.latency_ms:
            out.append(
                f"latency {est.total_latency_ms:.1f} ms exceeds constraint {self.latency_ms:.1f} ms"
            )
        return out


def config_feature_shape(cfg: DspConfig, sample_rate_hz: int):
    if cfg.block == "raw":
        raise TunerError("the tuner search space does not cover raw-block models")
    rows = num_frames(
        cfg.window_samples(sample_rate_hz),
        cfg.frame_samples(sample_rate_hz),
        cfg.stride_samples(sample_rate_hz),
    )
    return (rows, cfg.num_output_coeffs())


def candidate_estimate(
    config: CandidateConfig, profile: DeviceProfile, num_classes: int, sample_rate_hz: int
) -> ResourceEstimate:
    """Estimate a config without training: random weights, real shapes."""
    shape = config_feature_shape(config.dsp, sample_rate_hz)
    g = instantiate_model(config.model, shape, num_classes, seed=0)
    if config.dtype == "i8":
        rng = np.random.default_rng(0)
        g = quantize_graph(g, calibrate_ranges(g, [rng.normal(size=shape) for _ in range(2)]))
    return estimate(g, config.dsp, profile, sample_rate_hz=sample_rate_hz)


@dataclass
class FilterOutcome:
    kept: list
    filtered: list  # (config, violations)


def heuristic_filter(
    configs,
    profile: DeviceProfile,
    constraints: Constraints,
    num_classes: int = 3,
    sample_rate_hz: int = 16000,
) -> FilterOutcome:
    kept, filtered = [], []
    for config in configs:
        est = candidate_estimate(config, profile, num_classes, sample_rate_hz)
        bad = constraints.violations(est, profile)
        if bad:
            filtered.append((config, bad))
        else:
            kept.append(config)
    return FilterOutcome(kept=kept, filtered=filtered)


# ------------------------------------------------------------ trials

@dataclass
class Trial:
    trial_id: int
    dsp_config: DspConfig
    model_descriptor: str
    dtype: str
    status: str  # filtered | trained | failed
    seed: int
    accuracy: Optional[float] = None
    eval: Optional[EvalReport] = None
    estimate: Optional[ResourceEstimate] = None
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "trial_id": self.trial_id,
            "dsp": self.dsp_config.to_dict(),
            "model": self.model_descriptor,
            "dtype": self.dtype,
            "status": self.status,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "eval": self.eval.to_dict() if self.eval else None,
            "estimate": self.estimate.to_dict() if self.estimate else None,
            "error": self.error,
        }


def trial_seed(batch_seed: int, trial_id: int) -> int:
    return zlib.crc32(f"{batch_seed}:{trial_id}".encode())


def _dataset_features(ds: Dataset, cfg: DspConfig, split: str, classes):
    feats, labels = [], []
    for s in ds.by_split(split):
        feats.append(dsp_process(s, cfg).values)
        labels.append(classes.index(s.label))
    return np.stack(feats), np.array(labels, dtype=int)


def run_trials(
    kept,
    dataset: Dataset,
    profile: DeviceProfile,
    trainer_cfg: TrainConfig,
    batch_seed: int = 0,
) -> list:
    """Train and score every kept config; failures never abort the batch."""
    if not dataset.by_split("train") or not dataset.by_split("test"):
        raise TunerError("dataset needs both train and test splits")
    classes = list(dataset.classes)
    sample_rate = dataset.samples[0].sample_rate_hz
    trials = []
    for tid, config in enumerate(kept):
        seed = trial_seed(batch_seed, tid)
        trial = Trial(
            trial_id=tid, dsp_config=config.dsp, model_descriptor=config.model,
            dtype=config.dtype, status="failed", seed=seed,
        )
        try:
            Xtr, ytr = _dataset_features(dataset, config.dsp, "train", classes)
            Xte, yte = _dataset_features(dataset, config.dsp, "test", classes)
            g = instantiate_model(config.model, Xtr.shape[1:], len(classes), seed=seed)
            cfg = TrainConfig(
                epochs=trainer_cfg.epochs, batch_size=trainer_cfg.batch_size,
                learning_rate=trainer_cfg.learning_rate, seed=seed,
                validation_fraction=trainer_cfg.validation_fraction,
            )
            trained, _ = train(g, Xtr, ytr, cfg)
            if config.dtype == "i8":
                trained = quantize_graph(trained, calibrate_ranges(trained, list(Xtr)))
            report = evaluate(trained, Xte, yte)
            trial.eval = report
            trial.accuracy = report.accuracy
            trial.estimate = estimate(trained, config.dsp, profile, sample_rate_hz=sample_rate)
            trial.status = "trained"
        except TinyForgeError as e:
            trial.error = str(e)
        trials.append(trial)
    if trials and all(t.status == "failed" for t in trials):
        raise TunerError(
            "every trial failed; first error: " + (trials[0].error or "unknown")
        )
    return trials


# ------------------------------------------------------------ ranking

_OBJECTIVES = {
    "accuracy": (lambda t: t.accuracy, True),
    "latency": (lambda t: t.estimate.total_latency_ms, False),
    "ram": (lambda t: t.estimate.ram_bytes, False),
    "flash": (lambda t: t.estimate.flash_bytes, False),
}


def rank_trials(trials, objective: str = "accuracy"):
    """Stable sort of trained trials; ties by lower latency then trial id."""
    if objective not in _OBJECTIVES:
        raise TunerError(f"unknown objective {objective!r}; one of {sorted(_OBJECTIVES)}")
    trained = [t for t in trials if t.status == "trained"]
    if not trained:
        raise TunerError("no trained trials to rank")
    key, descending = _OBJECTIVES[objective]
    ranked = sorted(
        trained,
        key=lambda t: (
            -key(t) if descending else key(t),
            t.estimate.total_latency_ms,
            t.trial_id,
        ),
    )
    return ranked


def describe_dsp(cfg: DspConfig) -> str:
    return (
        f"{cfg.block.upper()} ({cfg.frame_length_s:g}, {cfg.frame_stride_s:g}, "
        f"{cfg.num_mel_filters})"
    )


def trial_table(ranked) -> list:
    """Rows shaped like the tuner's published table: dsp/nn/total splits."""
    rows = []
    for t in ranked:
        e = t.estimate
        rows.append(
            {
                "trial_id": t.trial_id,
                "dsp": describe_dsp(t.dsp_config),
                "model": t.model_descriptor,
                "dtype": t.dtype,
                "accuracy": round(t.accuracy, 4),
                "latency_dsp_ms": round(e.dsp_latency_ms, 3),
                "latency_nn_ms": round(e.nn_latency_ms, 3),
                "latency_total_ms": round(e.dsp_latency_ms + e.nn_latency_ms, 3),
                "ram_dsp_bytes": e.dsp_ram_bytes,
                "ram_nn_bytes": e.nn_ram_bytes,
                "ram_total_bytes": e.dsp_ram_bytes + e.nn_ram_bytes,
                "flash_bytes": e.flash_bytes,
            }
        )
    return rows
