"""Bundled synthetic dataset: three tone classes over a noise floor.

Each sample is one second of a jittered sine (frequency, amplitude, and
phase vary per draw, plus a quieter second harmonic and white noise), so the
classes are separable by any spectral front end but not byte-identical
across samples.  Used by the demo project, the tuner acceptance run, and
the quantization-fidelity acceptance criterion.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .project import Dataset, Sample, content_id, write_sample_wav

TONE_CLASSES = {"low": 440.0, "mid": 1200.0, "high": 2600.0}
SAMPLE_RATE = 16000
DURATION_S = 1.0


def make_tone(label: str, rng: np.random.Generator, sample_rate_hz: int = SAMPLE_RATE,
              duration_s: float = DURATION_S) -> np.ndarray:
    base = TONE_CLASSES[label]
    freq = base * rng.uniform(0.96, 1.04)
    amp = rng.uniform(0.25, 0.8)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    t = np.arange(int(round(duration_s * sample_rate_hz))) / sample_rate_hz
    x = amp * np.sin(2.0 * np.pi * freq * t + phase)
    x += 0.15 * amp * np.sin(2.0 * np.pi * 2.0 * freq * t + rng.uniform(0, 2 * np.pi))
    noise_db = rng.uniform(-40.0, -30.0)
    x += 10.0 ** (noise_db / 20.0) * rng.normal(size=len(t))
    return np.clip(x, -1.0, 1.0)


def make_tone_dataset(n_per_class: int = 20, seed: int = 0,
                      sample_rate_hz: int = SAMPLE_RATE) -> Dataset:
    """In-memory dataset with a deterministic stratified 75/25 split."""
    rng = np.random.default_rng(seed)
    samples = []
    for label in TONE_CLASSES:
        for i in range(n_per_class):
            x = make_tone(label, rng, sample_rate_hz)
            split = "test" if i % 4 == 3 else "train"
            samples.append(
                Sample(
                    id=content_id(f"{label}:{seed}:{i}".encode()) ,
                    label=label,
                    split=split,
                    sample_rate_hz=sample_rate_hz,
                    channels=1,
                    data=x.reshape(-1, 1),
                    metadata={"format": "wav", "source": f"synth:{label}:{i}"},
                )
            )
    return Dataset(samples=samples, classes=list(TONE_CLASSES))


def write_demo_wavs(out_dir, n_per_class: int = 20, seed: int = 0) -> Path:
    """Write the tone dataset as raw WAV files, one subdirectory per label."""
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    for label in TONE_CLASSES:
        d = out / label
        d.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            x = make_tone(label, rng)
            s = Sample(
                id=f"{label}{i:03d}", label=label, split="train",
                sample_rate_hz=SAMPLE_RATE, channels=1, data=x.reshape(-1, 1),
            )
            write_sample_wav(s, d / f"{label}{i:03d}.wav")
    return out
