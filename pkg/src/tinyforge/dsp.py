"""Preprocessing blocks: raw passthrough, mel-filterbank energies (MFE), and MFCC.

All blocks share the same framing front end.  Conventions, fixed so that
feature extraction is reproducible bit for bit:

* Hann window ``0.5 - 0.5*cos(2*pi*n/(N-1))`` applied over the frame length
  before zero padding.
* Power spectrum element ``k`` is ``|X_k|**2 / fft_size`` for the one-sided
  real transform (``k = 0 .. fft_size/2``).  With windowing disabled this
  satisfies Parseval as ``sum(x**2) == P[0] + P[-1] + 2*sum(P[1:-1])``.
* Mel scale ``mel(f) = 2595 * log10(1 + f/700)``; triangular filters with
  centers uniformly spaced in mel between ``low_freq_hz`` and
  ``high_freq_hz``.
* Filter outputs are floored at ``10**(noise_floor_db/10)`` before the
  ``10*log10`` compression, so silence maps to exactly ``noise_floor_db``.
* MFCC is the orthonormal DCT-II of the log-mel vector, truncated.

No pre-emphasis is applied anywhere in the pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
import scipy.fft

from .errors import ConfigError, DspError


MEL_BREAK_HZ = 700.0
MEL_SCALE = 2595.0


def hz_to_mel(f):
    return MEL_SCALE * np.log10(1.0 + np.asarray(f, dtype=float) / MEL_BREAK_HZ)


def mel_to_hz(m):
    return MEL_BREAK_HZ * (10.0 ** (np.asarray(m, dtype=float) / MEL_SCALE) - 1.0)


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


@dataclass(frozen=True)
class DspConfig:
    """Hyperparameters of one preprocessing block.

    ``fft_size=None`` means "next power of two >= frame samples", resolved
    against the sample rate at processing time.  ``high_freq_hz=None`` means
    the Nyquist frequency.
    """

    block: str = "mfcc"  # raw | mfe | mfcc
    frame_length_s: float = 0.02
    frame_stride_s: float = 0.01
    fft_size: Optional[int] = None
    num_mel_filters: int = 40
    num_cepstral_coeffs: int = 13
    low_freq_hz: float = 0.0
    high_freq_hz: Optional[float] = None
    noise_floor_db: float = -52.0
    window_size_s: float = 1.0

    def frame_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_length_s * sample_rate_hz))

    def stride_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.frame_stride_s * sample_rate_hz))

    def window_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.window_size_s * sample_rate_hz))

    def effective_fft_size(self, sample_rate_hz: int) -> int:
        if self.fft_size is not None:
            return self.fft_size
        return next_pow2(self.frame_samples(sample_rate_hz))

    def effective_high_freq(self, sample_rate_hz: int) -> float:
        if self.high_freq_hz is not None:
            return self.high_freq_hz
        return sample_rate_hz / 2.0

    def num_output_coeffs(self) -> int:
        if self.block == "mfe":
            return self.num_mel_filters
        if self.block == "mfcc":
            return self.num_cepstral_coeffs
        raise ConfigError(f"block {self.block!r} has no fixed coefficient count")

    def validate(self, sample_rate_hz: int) -> None:
        if self.block not in ("raw", "mfe", "mfcc"):
            raise ConfigError(f"unknown dsp block {self.block!r}")
        if self.frame_length_s <= 0 or self.frame_stride_s <= 0:
            raise ConfigError("frame length and stride must be positive")
        if self.window_size_s <= 0:
            raise ConfigError("window_size_s must be positive")
        if self.block == "raw":
            return
        fft = self.effective_fft_size(sample_rate_hz)
        if fft & (fft - 1) or fft < 1:
            raise ConfigError(f"fft_size {fft} is not a power of two")
        if self.frame_samples(sample_rate_hz) > fft:
            raise ConfigError(
                f"frame of {self.frame_samples(sample_rate_hz)} samples exceeds fft_size {fft}"
            )
        if self.num_mel_filters < 2:
            raise ConfigError("num_mel_filters must be >= 2")
        if self.block == "mfcc":
            if self.num_cepstral_coeffs < 1:
                raise ConfigError("num_cepstral_coeffs must be >= 1")
            if self.num_cepstral_coeffs > self.num_mel_filters:
                raise ConfigError("num_cepstral_coeffs must be <= num_mel_filters")
        high = self.effective_high_freq(sample_rate_hz)
        if not (0 <= self.low_freq_hz < high <= sample_rate_hz / 2.0):
            raise ConfigError(
                f"need 0 <= low ({self.low_freq_hz}) < high ({high}) <= Nyquist"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DspConfig":
        return cls(**d)


@dataclass
class FeatureMatrix:
    """frames x coefficients feature block produced by one DSP pass."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DspError("feature matrix must be 2-D (frames x coefficients)")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    def flatten(self) -> np.ndarray:
        return self.values.reshape(-1)

    def to_csv(self, path) -> None:
        np.savetxt(path, self.values, delimiter=",", fmt="%.9g")

    def to_f32_bin(self, path) -> None:
        """Little-endian float32 row-major dump, for the C harness."""
        self.values.astype("<f4").tofile(path)


def frame_signal(x: np.ndarray, cfg: DspConfig, sample_rate_hz: int) -> np.ndarray:
    """Slice a 1-D signal into overlapping frames.

    Returns ``[num_frames, frame_samples]`` where
    ``num_frames = 1 + (len(x) - frame) // stride``.  Frames are contiguous
    views, never padded; a trailing remainder shorter than one frame is
    dropped.
    """
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    frame = cfg.frame_samples(sample_rate_hz)
    stride = cfg.stride_samples(sample_rate_hz)
    if frame < 1 or stride < 1:
        raise ConfigError("frame and stride must each cover at least one sample")
    if len(x) < frame:
        raise DspError(f"signal of {len(x)} samples is shorter than one {frame}-sample frame")
    windows = np.lib.stride_tricks.sliding_window_view(x, frame)
    return windows[::stride].copy()


def hann_window(n: int) -> np.ndarray:
    if n == 1:
        return np.ones(1)
    k = np.arange(n)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * k / (n - 1))


def fft_power_spectrum(frame: np.ndarray, fft_size: int, window: bool = True) -> np.ndarray:
    """One-sided power spectrum ``|X_k|**2 / fft_size`` of a real frame.

    The frame is Hann-windowed over its own length (unless ``window`` is
    False) and zero-padded to ``fft_size``.
    """
    if fft_size < 1 or fft_size & (fft_size - 1):
        raise ConfigError(f"fft_size {fft_size} is not a power of two")
    frame = np.asarray(frame, dtype=np.float64).reshape(-1)
    if len(frame) > fft_size:
        raise DspError(f"frame of {len(frame)} samples exceeds fft_size {fft_size}")
    if window:
        frame = frame * hann_window(len(frame))
    spec = np.fft.rfft(frame, n=fft_size)
    return (spec.real ** 2 + spec.imag ** 2) / fft_size


def mel_filter_matrix(cfg: DspConfig, sample_rate_hz: int) -> np.ndarray:
    """Triangular filter weights, shape ``[num_mel_filters, fft_size//2+1]``."""
    fft_size = cfg.effective_fft_size(sample_rate_hz)
    low = cfg.low_freq_hz
    high = cfg.effective_high_freq(sample_rate_hz)
    edges_hz = mel_to_hz(np.linspace(hz_to_mel(low), hz_to_mel(high), cfg.num_mel_filters + 2))
    bin_hz = np.arange(fft_size // 2 + 1) * (sample_rate_hz / fft_size)
    weights = np.zeros((cfg.num_mel_filters, fft_size // 2 + 1))
    for i in range(cfg.num_mel_filters):
        left, center, right = edges_hz[i], edges_hz[i + 1], edges_hz[i + 2]
        rising = (bin_hz - left) / (center - left)
        falling = (right - bin_hz) / (right - center)
        weights[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    if np.any(weights.sum(axis=1) == 0.0):
        raise ConfigError(
            f"{cfg.num_mel_filters} mel filters exceed the resolution of a "
            f"{fft_size}-point fft at {sample_rate_hz} Hz (a filter spans no bin)"
        )
    return weights


def mel_filterbank(power: np.ndarray, cfg: DspConfig, sample_rate_hz: int) -> np.ndarray:
    """Log-energies of the triangular mel filters over one power spectrum."""
    weights = mel_filter_matrix(cfg, sample_rate_hz)
    energies = weights @ np.asarray(power, dtype=np.float64)
    floor = 10.0 ** (cfg.noise_floor_db / 10.0)
    return 10.0 * np.log10(np.maximum(energies, floor))


def mfcc(log_mel: np.ndarray, num_cepstral_coeffs: int) -> np.ndarray:
    """Orthonormal DCT-II of log-mel energies, truncated to the first coefficients."""
    log_mel = np.asarray(log_mel, dtype=np.float64)
    if num_cepstral_coeffs > log_mel.shape[-1]:
        raise ConfigError("num_cepstral_coeffs exceeds the number of mel filters")
    return scipy.fft.dct(log_mel, type=2, norm="ortho", axis=-1)[..., :num_cepstral_coeffs]


def block_features(x: np.ndarray, cfg: DspConfig, sample_rate_hz: int) -> np.ndarray:
    """mfe/mfcc features for an arbitrary-length single-channel signal."""
    frames = frame_signal(x, cfg, sample_rate_hz)
    fft_size = cfg.effective_fft_size(sample_rate_hz)
    win = hann_window(frames.shape[1])
    spec = np.fft.rfft(frames * win, n=fft_size, axis=1)
    power = (spec.real ** 2 + spec.imag ** 2) / fft_size
    weights = mel_filter_matrix(cfg, sample_rate_hz)
    floor = 10.0 ** (cfg.noise_floor_db / 10.0)
    log_mel = 10.0 * np.log10(np.maximum(power @ weights.T, floor))
    if cfg.block == "mfe":
        return log_mel
    return mfcc(log_mel, cfg.num_cepstral_coeffs)


def dsp_process(sample, cfg: DspConfig) -> FeatureMatrix:
    """Run one preprocessing block over a sample.

    raw: row-major flatten of the full data matrix into a single row.
    mfe/mfcc: single-channel only; processes the first ``window_size_s``
    of signal and errors if the sample is shorter than that.
    """
    cfg.validate(sample.sample_rate_hz)
    if cfg.block == "raw":
        return FeatureMatrix(sample.data.reshape(1, -1))
    if sample.channels != 1:
        raise DspError(
            f"{cfg.block} block requires a single-channel sample, got {sample.channels} channels"
        )
    window = cfg.window_samples(sample.sample_rate_hz)
    x = sample.data[:, 0]
    if len(x) < window:
        raise DspError(
            f"sample {sample.id} has {len(x)} samples but the impulse window needs {window}"
        )
    return FeatureMatrix(block_features(x[:window], cfg, sample.sample_rate_hz))


def num_frames(window_samples: int, frame_samples: int, stride_samples: int) -> int:
    return 1 + (window_samples - frame_samples) // stride_samples
