"""Parametric resource estimation against device profiles.

Latency is a linear cost model: MAC counts times per-MAC cycle constants
plus an elementwise term for activations, and for the DSP stage a radix-2
butterfly count (fft_size/2 * log2(fft_size) per frame) plus filterbank and
DCT MACs.  The cycle constants shipped with the built-in profiles are
uncalibrated defaults, deliberately overridable per profile file; no
hardware-timing fidelity is claimed.  Flash/RAM reuse the codegen memory
report plus DSP buffer terms.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field, asdict
from importlib import resources
from pathlib import Path

import numpy as np

from .codegen import CodegenOptions, flash_ram_report
from .dsp import DspConfig, mel_filter_matrix, num_frames
from .errors import EstimateError
from .interp import plan_arena
from .ir import ModelGraph

PROFILE_DIR_ENV = "TINYFORGE_PROFILE_DIR"
BUILTIN_PROFILES = ("nano33", "esp_eye", "pi_pico")


@dataclass
class DeviceProfile:
    name: str
    clock_hz: int
    flash_capacity_bytes: int
    ram_capacity_bytes: int
    cycles_per_mac_f32: float = 8.0
    cycles_per_mac_i8: float = 2.0
    cycles_per_elementwise: float = 4.0
    cycles_per_fft_butterfly: float = 10.0
    kernel_code_bytes: dict = field(
        default_factory=lambda: {
            "dense": 600,
            "conv1d": 1400,
            "relu": 64,
            "softmax": 480,
            "maxpool1d": 320,
            "flatten": 48,
            "kmeans_distance": 520,
        }
    )
    interpreter_scaffold_bytes: int = 24576
    generated_scaffold_bytes: int = 1024
    interpreter_ram_bytes: int = 8192
    generated_ram_bytes: int = 256

    def __post_init__(self):
        numeric = [
            self.clock_hz,
            self.flash_capacity_bytes,
            self.ram_capacity_bytes,
            self.cycles_per_mac_f32,
            self.cycles_per_mac_i8,
            self.cycles_per_elementwise,
            self.cycles_per_fft_butterfly,
            self.interpreter_scaffold_bytes,
            self.generated_scaffold_bytes,
            self.interpreter_ram_bytes,
            self.generated_ram_bytes,
        ]
        if any(v <= 0 for v in numeric) or any(v <= 0 for v in self.kernel_code_bytes.values()):
            raise EstimateError(f"profile {self.name!r}: all cost constants must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "DeviceProfile":
        return cls(**d)


def load_profile(name: str, extra_dirs=()) -> DeviceProfile:
    """Resolve a profile by name: TINYFORGE_PROFILE_DIR, extra dirs, built-ins."""
    candidates = []
    env = os.environ.get(PROFILE_DIR_ENV)
    if env:
        candidates.append(Path(env) / f"{name}.json")
    for d in extra_dirs:
        candidates.append(Path(d) / f"{name}.json")
    for path in candidates:
        if path.is_file():
            try:
                return DeviceProfile.from_dict(json.loads(path.read_text()))
            except (json.JSONDecodeError, TypeError) as e:
                raise EstimateError(f"{path}: bad profile file: {e}") from e
    try:
        text = resources.files("tinyforge").joinpath(f"profiles/{name}.json").read_text()
    except FileNotFoundError:
        raise EstimateError(
            f"unknown device profile {name!r}; built-ins: {', '.join(BUILTIN_PROFILES)}"
        ) from None
    return DeviceProfile.from_dict(json.loads(text))


@dataclass
class ResourceEstimate:
    dsp_latency_ms: float
    nn_latency_ms: float
    total_latency_ms: float
    ram_bytes: int
    flash_bytes: int
    dsp_ram_bytes: int
    nn_ram_bytes: int

    def to_dict(self) -> dict:
        return asdict(self)


def count_macs(g: ModelGraph):
    """Returns (per-node MACs, total MACs, total elementwise ops)."""
    per_node = {}
    elementwise = 0
    for node in g.nodes:
        out = g.tensor(node.output)
        if node.kind == "dense":
            macs = g.tensor(node.inputs[0]).numel * out.numel
        elif node.kind == "conv1d":
            out_len, filters = out.shape
            macs = out_len * filters * node.attrs["kernel_size"] * g.tensor(node.inputs[0]).shape[1]
        elif node.kind == "kmeans_distance":
            kk, dim = g.tensor(node.inputs[1]).shape
            macs = kk * dim
        else:
            macs = 0
            elementwise += out.numel
        per_node[node.id] = macs
        if node.fused_activation == "relu":
            elementwise += out.numel
    return per_node, sum(per_node.values()), elementwise


def dsp_cost(cfg: DspConfig, sample_rate_hz: int):
    """(butterflies, macs, output rows, output cols) for one impulse window."""
    if cfg.block == "raw":
        return 0, 0, 0, 0
    frame = cfg.frame_samples(sample_rate_hz)
    stride = cfg.stride_samples(sample_rate_hz)
    window = cfg.window_samples(sample_rate_hz)
    frames = num_frames(window, frame, stride)
    fft = cfg.effective_fft_size(sample_rate_hz)
    butterflies = frames * (fft // 2) * int(math.log2(fft))
    weights = mel_filter_matrix(cfg, sample_rate_hz)
    filter_macs = int(np.count_nonzero(weights))
    macs = frames * filter_macs
    cols = cfg.num_mel_filters
    if cfg.block == "mfcc":
        macs += frames * cfg.num_mel_filters * cfg.num_cepstral_coeffs
        cols = cfg.num_cepstral_coeffs
    return butterflies, macs, frames, cols


def estimate(
    g: ModelGraph,
    cfg: DspConfig,
    profile: DeviceProfile,
    mode: str = "generated",
    sample_rate_hz: int = 16000,
) -> ResourceEstimate:
    """Latency/RAM/flash estimate of the whole impulse on one device."""
    if mode not in ("generated", "interpreter_baseline"):
        raise EstimateError(f"unknown estimate mode {mode!r}")
    _, total_macs, elementwise = count_macs(g)
    per_mac = profile.cycles_per_mac_i8 if g.dtype == "i8" else profile.cycles_per_mac_f32
    nn_cycles = total_macs * per_mac + elementwise * profile.cycles_per_elementwise
    nn_ms = nn_cycles / profile.clock_hz * 1e3

    butterflies, dsp_macs, rows, cols = dsp_cost(cfg, sample_rate_hz)
    dsp_cycles = butterflies * profile.cycles_per_fft_butterfly + dsp_macs * profile.cycles_per_mac_f32
    dsp_ms = dsp_cycles / profile.clock_hz * 1e3

    plan = plan_arena(g)
    report = flash_ram_report(g, plan, CodegenOptions(dtype=g.dtype), profile)[mode]
    fft = cfg.effective_fft_size(sample_rate_hz) if cfg.block != "raw" else 0
    dsp_ram = fft * 4 * 2 + rows * cols * 4
    return ResourceEstimate(
        dsp_latency_ms=dsp_ms,
        nn_latency_ms=nn_ms,
        total_latency_ms=dsp_ms + nn_ms,
        ram_bytes=report["ram_bytes"] + dsp_ram,
        flash_bytes=report["flash_bytes"],
        dsp_ram_bytes=dsp_ram,
        nn_ram_bytes=report["ram_bytes"],
    )


@dataclass
class FitResult:
    fits: bool
    violations: list

    def to_dict(self) -> dict:
        return {"fits": self.fits, "violations": self.violations}


def fits_device(est: ResourceEstimate, profile: DeviceProfile) -> FitResult:
    """Inclusive capacity check (usage == capacity still fits)."""
    violations = []
    if est.ram_bytes > profile.ram_capacity_bytes:
        violations.append(
            f"RAM {est.ram_bytes} B exceeds {profile.name} capacity "
            f"{profile.ram_capacity_bytes} B by {est.ram_bytes - profile.ram_capacity_bytes} B"
        )
    if est.flash_bytes > profile.flash_capacity_bytes:
        violations.append(
            f"flash {est.flash_bytes} B exceeds {profile.name} capacity "
            f"{profile.flash_capacity_bytes} B by {est.flash_bytes - profile.flash_capacity_bytes} B"
        )
    return FitResult(fits=not violations, violations=violations)
