"""Dataset ingestion, persistence, and split management.

A project is a plain directory::

    project.json                      classes, seed
    impulse.json                      DSP config + model template + target
    dataset/{train,test}/<label>/<id>.(wav|json)
    artifacts/                        model.f32.json, model.i8.json
    deploy/                           generated C
    reports/                          json/md/csv reports and figures

WAV samples are stored verbatim (the header is self-describing); CSV and
JSON ingests are persisted in the canonical JSON sample format
``{"sample_rate_hz": int, "channels": int, "data": [[...], ...]}`` so a
reload needs no out-of-band metadata.  Sample ids are content-hash prefixes
of the source bytes, so re-ingesting identical bytes is a no-op.
"""

from __future__ import annotations

import csv as csv_mod
import hashlib
import io
import json
import struct
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DatasetError, ParseError, ProjectError, UnsupportedFormatError

TIME_COLUMN_NAMES = ("t", "time", "timestamp")
PCM16_SCALE = 32768.0  # symmetric int16 range; 32767 -> 0.99997


@dataclass
class Sample:
    """One labeled recording: ``data`` is ``[num_frames, channels]``."""

    id: str
    label: str
    split: str  # train | test
    sample_rate_hz: int
    channels: int
    data: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise DatasetError(f"sample {self.id}: data must be 2-D [frames, channels]")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise DatasetError(f"sample {self.id}: needs at least one frame and one channel")
        if self.data.shape[1] != self.channels:
            raise DatasetError(
                f"sample {self.id}: channel count {self.channels} does not match data "
                f"width {self.data.shape[1]}"
            )
        if self.sample_rate_hz <= 0:
            raise DatasetError(f"sample {self.id}: sample rate must be positive")
        if self.split not in ("train", "test"):
            raise DatasetError(f"sample {self.id}: split must be train or test")
        if not np.all(np.isfinite(self.data)):
            raise DatasetError(f"sample {self.id}: data contains NaN or Inf")

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def duration_s(self) -> float:
        return self.num_frames / self.sample_rate_hz


@dataclass
class Dataset:
    samples: list
    classes: list

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.classes:
            raise DatasetError("dataset has no classes")
        if len(set(self.classes)) != len(self.classes):
            raise DatasetError("duplicate class labels")
        seen = set()
        for s in self.samples:
            if s.label not in self.classes:
                raise DatasetError(f"sample {s.id} has unknown label {s.label!r}")
            if s.id in seen:
                raise DatasetError(f"duplicate sample id {s.id}")
            seen.add(s.id)
        for c in self.classes:
            if not any(s.label == c and s.split == "train" for s in self.samples):
                raise DatasetError(f"class {c!r} has no train samples")

    def by_split(self, split: str) -> list:
        return [s for s in self.samples if s.split == split]

    def by_class(self, label: str) -> list:
        return [s for s in self.samples if s.label == label]


def content_id(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()[:12]


def _read_wav(raw: bytes, path: str) -> tuple[int, np.ndarray]:
    try:
        with wave.open(io.BytesIO(raw)) as w:
            channels = w.getnchannels()
            width = w.getsampwidth()
            rate = w.getframerate()
            n = w.getnframes()
            payload = w.readframes(n)
    except (wave.Error, EOFError, struct.error) as e:
        raise ParseError(f"{path}: not a readable WAV file ({e})") from e
    if channels != 1:
        raise UnsupportedFormatError(f"{path}: {channels}-channel WAV unsupported, expected mono")
    if width != 2:
        raise UnsupportedFormatError(f"{path}: only 16-bit PCM WAV supported, got {8 * width}-bit")
    pcm = np.frombuffer(payload, dtype="<i2")
    if len(pcm) == 0:
        raise ParseError(f"{path}: WAV contains no frames")
    return rate, (pcm.astype(np.float64) / PCM16_SCALE).reshape(-1, 1)


def _read_csv(raw: bytes, path: str) -> np.ndarray:
    text = raw.decode("utf-8", errors="replace")
    reader = csv_mod.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError(f"{path}: empty CSV") from None
    keep = [i for i, name in enumerate(header) if name.strip().lower() not in TIME_COLUMN_NAMES]
    if not keep:
        raise ParseError(f"{path}: no data columns after dropping time columns")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}")
        try:
            rows.append([float(row[i]) for i in keep])
        except ValueError as e:
            raise ParseError(f"{path}:{lineno}: {e}") from e
    if not rows:
        raise ParseError(f"{path}: CSV has a header but no data rows")
    return np.asarray(rows, dtype=np.float64)


def _read_json(raw: bytes, path: str) -> tuple[int, np.ndarray]:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    for key in ("sample_rate_hz", "channels", "data"):
        if key not in obj:
            raise ParseError(f"{path}: missing key {key!r}")
    try:
        data = np.asarray(obj["data"], dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise ParseError(f"{path}: data is not a numeric matrix ({e})") from e
    if data.ndim == 1:
        data = data.reshape(-1, 1)
    if data.ndim != 2 or data.shape[1] != int(obj["channels"]):
        raise ParseError(
            f"{path}: data shape {data.shape} inconsistent with channels={obj['channels']}"
        )
    return int(obj["sample_rate_hz"]), data


def ingest(
    path,
    format: str,
    label: str,
    split: str = "train",
    sample_rate_hz: Optional[int] = None,
) -> Sample:
    """Read one file into a Sample.

    ``sample_rate_hz`` is required for CSV (the format carries none), ignored
    for WAV (header wins), and a fallback for JSON files missing the field.
    """
    path = Path(path)
    if format in ("cbor", "jpg", "png"):
        raise UnsupportedFormatError(f"{format} ingestion is unsupported in this artifact")
    if format not in ("csv", "wav", "json"):
        raise UnsupportedFormatError(f"unknown ingest format {format!r}")
    if not path.is_file():
        raise ParseError(f"{path}: no such file")
    raw = path.read_bytes()

    if format == "wav":
        rate, data = _read_wav(raw, str(path))
    elif format == "csv":
        if sample_rate_hz is None:
            raise ParseError(f"{path}: CSV ingestion requires an explicit sample rate")
        rate, data = sample_rate_hz, _read_csv(raw, str(path))
    else:
        rate, data = _read_json(raw, str(path))
        if sample_rate_hz is not None and "sample_rate_hz" not in json.loads(raw):
            rate = sample_rate_hz

    return Sample(
        id=content_id(raw),
        label=label,
        split=split,
        sample_rate_hz=rate,
        channels=data.shape[1],
        data=data,
        metadata={"source": path.name, "format": format},
    )


def split_dataset(ds: Dataset, test_fraction: float, seed: int) -> Dataset:
    """Stratified reassignment of every sample's split field.

    Per class, ``round(test_fraction * n)`` samples go to test (clamped so at
    least one train sample remains).  Deterministic for a fixed seed; the
    sample multiset is untouched.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction must be in (0,1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    assignment = {}
    for label in ds.classes:
        members = sorted(ds.by_class(label), key=lambda s: s.id)
        if len(members) < 2:
            raise DatasetError(f"class {label!r} has {len(members)} sample(s); need >= 2 to split")
        n_test = min(int(round(test_fraction * len(members))), len(members) - 1)
        order = rng.permutation(len(members))
        for rank, idx in enumerate(order):
            assignment[members[idx].id] = "test" if rank < n_test else "train"
    samples = [
        Sample(s.id, s.label, assignment[s.id], s.sample_rate_hz, s.channels, s.data, dict(s.metadata))
        for s in ds.samples
    ]
    return Dataset(samples=samples, classes=list(ds.classes))


def dataset_stats(ds: Dataset) -> dict:
    if not ds.samples:
        raise DatasetError("dataset is empty")
    per_class = {c: len(ds.by_class(c)) for c in ds.classes}
    per_split = {sp: len(ds.by_split(sp)) for sp in ("train", "test")}
    per_class_split = {
        c: {sp: sum(1 for s in ds.samples if s.label == c and s.split == sp) for sp in ("train", "test")}
        for c in ds.classes
    }
    return {
        "total": len(ds.samples),
        "per_class": per_class,
        "per_split": per_split,
        "per_class_split": per_class_split,
        "duration_s": float(sum(s.duration_s for s in ds.samples)),
    }


# ------------------------------------------------------------ persistence

def write_sample_json(sample: Sample, path) -> None:
    obj = {
        "sample_rate_hz": sample.sample_rate_hz,
        "channels": sample.channels,
        "data": sample.data.tolist(),
    }
    Path(path).write_text(json.dumps(obj))


def write_sample_wav(sample: Sample, path) -> None:
    if sample.channels != 1:
        raise DatasetError("WAV persistence supports mono only")
    pcm = np.clip(np.round(sample.data[:, 0] * PCM16_SCALE), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample.sample_rate_hz)
        w.writeframes(pcm.tobytes())


class Project:
    """Handle to a project directory tree."""

    SUBDIRS = ("dataset", "artifacts", "deploy", "reports", "profiles")

    def __init__(self, root):
        self.root = Path(root)

    @classmethod
    def init(cls, root, classes=None, seed: int = 0) -> "Project":
        p = cls(root)
        p.root.mkdir(parents=True, exist_ok=True)
        for d in cls.SUBDIRS:
            (p.root / d).mkdir(exist_ok=True)
        for split in ("train", "test"):
            (p.root / "dataset" / split).mkdir(exist_ok=True)
        p.write_config({"classes": classes or [], "seed": seed})
        return p

    @classmethod
    def open(cls, root) -> "Project":
        p = cls(root)
        if not (p.root / "project.json").is_file():
            raise ProjectError(f"{p.root}: not a project (missing project.json; run init first)")
        return p

    # -- project.json

    def read_config(self) -> dict:
        return json.loads((self.root / "project.json").read_text())

    def write_config(self, cfg: dict) -> None:
        (self.root / "project.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")

    # -- impulse.json

    def read_impulse(self) -> dict:
        path = self.root / "impulse.json"
        if not path.is_file():
            raise ProjectError(f"missing {path}; configure the impulse first (dsp or tune)")
        return json.loads(path.read_text())

    def write_impulse(self, impulse: dict) -> None:
        (self.root / "impulse.json").write_text(json.dumps(impulse, indent=2, sort_keys=True) + "\n")

    # -- dataset tree

    def add_sample(self, sample: Sample, source_bytes: Optional[bytes] = None) -> Path:
        d = self.root / "dataset" / sample.split / sample.label
        d.mkdir(parents=True, exist_ok=True)
        if sample.metadata.get("format") == "wav" and source_bytes is not None:
            out = d / f"{sample.id}.wav"
            out.write_bytes(source_bytes)
        else:
            out = d / f"{sample.id}.json"
            write_sample_json(sample, out)
        cfg = self.read_config()
        if sample.label not in cfg["classes"]:
            cfg["classes"].append(sample.label)
            self.write_config(cfg)
        return out

    def load_dataset(self) -> Dataset:
        cfg = self.read_config()
        samples = []
        for split in ("train", "test"):
            base = self.root / "dataset" / split
            if not base.is_dir():
                continue
            for label_dir in sorted(p for p in base.iterdir() if p.is_dir()):
                for f in sorted(label_dir.iterdir()):
                    if f.suffix == ".wav":
                        s = ingest(f, "wav", label_dir.name, split)
                    elif f.suffix == ".json":
                        s = ingest(f, "json", label_dir.name, split)
                    else:
                        continue
                    s.id = f.stem  # id was assigned at original ingest time
                    samples.append(s)
        if not samples:
            raise ProjectError(f"{self.root}: dataset is empty; ingest samples first")
        classes = [c for c in cfg["classes"] if any(s.label == c for s in samples)]
        return Dataset(samples=samples, classes=classes)

    def save_dataset(self, ds: Dataset) -> None:
        """Rewrite the dataset tree to match the samples' split fields."""
        import shutil

        base = self.root / "dataset"
        if base.exists():
            shutil.rmtree(base)
        for split in ("train", "test"):
            (base / split).mkdir(parents=True)
        for s in ds.samples:
            d = base / s.split / s.label
            d.mkdir(parents=True, exist_ok=True)
            if s.metadata.get("format") == "wav" and s.channels == 1:
                write_sample_wav(s, d / f"{s.id}.wav")
            else:
                write_sample_json(s, d / f"{s.id}.json")
        cfg = self.read_config()
        cfg["classes"] = list(ds.classes)
        self.write_config(cfg)

    def require(self, relpath: str, hint: str) -> Path:
        p = self.root / relpath
        if not p.exists():
            raise ProjectError(f"missing {p}; {hint}")
        return p
