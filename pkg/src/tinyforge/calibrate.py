"""Streaming-detection calibration.

Synthesizes labeled event streams (positive samples dropped onto a noise
bed at Poisson-spaced positions), applies post-processing (trailing moving
average, inclusive upward threshold crossing, refractory suppression),
scores false-acceptance/false-rejection rates, and searches post-processing
configurations with an NSGA-style genetic algorithm that returns the final
non-dominated front.

Scoring definitions (fixed so results are comparable across runs):

* a truth interval is HIT when at least one same-class detection lands in
  ``[start - tol, end + tol]`` frames; FRR = missed / total (0 without
  intervals);
* detections matching no interval are false accepts; FAR = false accepts
  divided by decision windows, where decision windows = total frames /
  averaging window, clamped to 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dsp import DspConfig, block_features
from .errors import CalibrationError
from .ir import ModelGraph
from .project import Dataset
from .trainer import predict

BACKGROUND_LABELS = ("noise", "background", "silence", "_background")


@dataclass(frozen=True)
class PostProcessConfig:
    averaging_window_frames: int = 1
    threshold: float = 0.5
    suppression_frames: int = 0

    def __post_init__(self):
        if self.averaging_window_frames < 1:
            raise CalibrationError("averaging_window_frames must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise CalibrationError("threshold must lie in (0, 1)")
        if self.suppression_frames < 0:
            raise CalibrationError("suppression_frames must be >= 0")


@dataclass
class CalibrationResult:
    config: PostProcessConfig
    far: float
    frr: float

    def to_dict(self) -> dict:
        return {
            "averaging_window_frames": self.config.averaging_window_frames,
            "threshold": self.config.threshold,
            "suppression_frames": self.config.suppression_frames,
            "far": self.far,
            "frr": self.frr,
        }


@dataclass
class LabeledStream:
    features: np.ndarray  # [frames, coeffs]
    intervals: list  # (class label, start frame, end frame), sorted, disjoint
    sample_rate_hz: int
    frame_stride_s: float

    def __post_init__(self):
        starts = [iv[1] for iv in self.intervals]
        if starts != sorted(starts):
            raise CalibrationError("ground-truth intervals must be sorted")
        for (_, s1, e1), (_, s2, _) in zip(self.intervals, self.intervals[1:]):
            if s2 <= e1:
                raise CalibrationError("ground-truth intervals must not overlap")

    @property
    def num_frames(self) -> int:
        return self.features.shape[0]


# ------------------------------------------------------------ synthesis

def synth_stream(
    ds: Dataset,
    cfg: DspConfig,
    duration_s: float,
    event_rate_per_min: float,
    noise_db: float,
    seed: int,
    positive_label: Optional[str] = None,
) -> LabeledStream:
    """Noise bed plus Poisson-placed positive events, DSP-processed.

    Events are whole samples of the positive class drawn from the train
    split.  Overlapping placements are re-drawn up to a bound.  Ground
    truth is recorded in feature-frame indices.
    """
    if positive_label is None:
        positive_label = next(
            (c for c in ds.classes if c.lower() not in BACKGROUND_LABELS), ds.classes[0]
        )
    pool = [s for s in ds.by_split("train") if s.label == positive_label]
    if not pool:
        raise CalibrationError(f"no train samples with label {positive_label!r}")
    sr = pool[0].sample_rate_hz
    rng = np.random.default_rng(seed)
    total = int(round(duration_s * sr))
    x = 10.0 ** (noise_db / 20.0) * rng.normal(size=total)

    mean_events = event_rate_per_min * duration_s / 60.0
    n_events = int(rng.poisson(mean_events))
    placed = []  # (start sample, end sample)
    events = []
    for _ in range(n_events):
        s = pool[int(rng.integers(len(pool)))]
        dur = s.num_frames
        if dur >= total:
            raise CalibrationError("positive samples are longer than the stream")
        ok = False
        for _try in range(100):
            start = int(rng.integers(0, total - dur))
            if all(start + dur <= ps or pe <= start for ps, pe in placed):
                ok = True
                break
        if not ok:
            raise CalibrationError(
                f"could not place {n_events} events of {dur} samples in a "
                f"{total}-sample stream without overlap"
            )
        placed.append((start, start + dur))
        events.append((start, start + dur))
        x[start : start + dur] += s.data[:, 0]

    feats = block_features(x, cfg, sr)
    stride = cfg.stride_samples(sr)
    intervals = []
    for start, end in sorted(events):
        f0 = min(start // stride, feats.shape[0] - 1)
        f1 = min((end - 1) // stride, feats.shape[0] - 1)
        intervals.append((positive_label, int(f0), int(f1)))
    return LabeledStream(
        features=feats,
        intervals=intervals,
        sample_rate_hz=sr,
        frame_stride_s=cfg.frame_stride_s,
    )


def stream_probabilities(
    g: ModelGraph, stream: LabeledStream, hop_frames: int = 1, batch: int = 256
) -> np.ndarray:
    """Slide the model window over the stream; per-frame class probabilities.

    The model input must be [window_frames, coeffs].  Frame ``t`` gets the
    probabilities of the window ending at ``t``; frames before the first
    full window repeat the first available probability row.
    """
    win, coeffs = g.tensor(g.input_id).shape
    T = stream.num_frames
    if stream.features.shape[1] != coeffs:
        raise CalibrationError(
            f"stream has {stream.features.shape[1]} coefficients, model wants {coeffs}"
        )
    if T < win:
        raise CalibrationError(f"stream of {T} frames shorter than the {win}-frame model window")
    k = g.tensor(g.output_id).shape[0]
    probs = np.zeros((T, k))
    ts = list(range(win - 1, T, hop_frames))
    for i in range(0, len(ts), batch):
        chunk = ts[i : i + batch]
        X = np.stack([stream.features[t - win + 1 : t + 1] for t in chunk])
        probs[chunk] = predict(g, X)
    if hop_frames > 1:  # hold the last computed row between hops
        last = probs[ts[0]].copy()
        for t in range(ts[0], T):
            if t in set(ts):
                last = probs[t].copy()
            else:
                probs[t] = last
    probs[: win - 1] = probs[win - 1]
    return probs


# ------------------------------------------------------------ post-processing

def apply_postprocess(probs_over_time: np.ndarray, cfg: PostProcessConfig,
                      positive_class=1, column: Optional[int] = None) -> list:
    """Detections from per-frame probabilities.

    Trailing moving average over ``averaging_window_frames`` (partial at the
    start), a detection on every inclusive upward crossing of ``threshold``,
    then ``suppression_frames`` of refractory time.  ``positive_class`` tags
    the emitted detections; ``column`` selects the probability column
    (defaults to ``positive_class`` when that is an integer, else 1).
    """
    probs = np.asarray(probs_over_time, dtype=np.float64)
    if probs.ndim != 2:
        raise CalibrationError("probs_over_time must be [frames, classes]")
    if not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise CalibrationError("probability rows must sum to 1")
    if column is None:
        column = positive_class if isinstance(positive_class, int) else 1
    p = probs[:, column]
    w = cfg.averaging_window_frames
    csum = np.concatenate([[0.0], np.cumsum(p)])
    avg = np.array([
        (csum[t + 1] - csum[max(0, t + 1 - w)]) / min(w, t + 1) for t in range(len(p))
    ])
    detections = []
    below = True  # stream implicitly starts below threshold
    suppress_until = -1
    for t in range(len(avg)):
        crossed = avg[t] >= cfg.threshold
        if crossed and below and t > suppress_until:
            detections.append((positive_class, t))
            suppress_until = t + cfg.suppression_frames
        below = not crossed
    return detections


def score_far_frr(
    detections,
    truth: LabeledStream,
    tolerance_frames: int,
    averaging_window_frames: int,
) -> tuple:
    """(FAR, FRR) per the module's scoring definitions."""
    intervals = truth.intervals
    hit = [False] * len(intervals)
    false_accepts = 0
    for cls, frame in detections:
        matched = False
        for i, (icls, start, end) in enumerate(intervals):
            if icls == cls and start - tolerance_frames <= frame <= end + tolerance_frames:
                hit[i] = True
                matched = True
        if not matched:
            false_accepts += 1
    frr = 0.0 if not intervals else (len(intervals) - sum(hit)) / len(intervals)
    decision_windows = truth.num_frames / averaging_window_frames
    far = min(1.0, false_accepts / decision_windows) if decision_windows > 0 else 0.0
    return far, frr


def evaluate_config(
    probs: np.ndarray,
    truth: LabeledStream,
    cfg: PostProcessConfig,
    tolerance_frames: int,
    positive_class,
    column: Optional[int] = None,
) -> CalibrationResult:
    dets = apply_postprocess(probs, cfg, positive_class=positive_class, column=column)
    far, frr = score_far_frr(dets, truth, tolerance_frames, cfg.averaging_window_frames)
    return CalibrationResult(config=cfg, far=far, frr=frr)


# ------------------------------------------------------------ GA search

@dataclass
class SpaceBounds:
    window: tuple = (1, 50)
    threshold: tuple = (0.05, 0.95)
    suppression: tuple = (0, 100)

    def degenerate(self) -> bool:
        return (
            self.window[0] == self.window[1]
            and self.threshold[0] == self.threshold[1]
            and self.suppression[0] == self.suppression[1]
        )


@dataclass
class GaParams:
    population: int = 24
    generations: int = 20
    crossover_rate: float = 0.9
    mutation_rate: float = 0.3
    seed: int = 0
    tolerance_frames: int = 10
    seeds: list = field(default_factory=list)  # PostProcessConfigs injected into gen 0

    def __post_init__(self):
        if self.population < 4:
            raise CalibrationError("population must be >= 4")


def _dominates(a: CalibrationResult, b: CalibrationResult) -> bool:
    return (a.far <= b.far and a.frr <= b.frr) and (a.far < b.far or a.frr < b.frr)


def non_dominated_sort(results) -> list:
    """List of fronts (lists of indices); front 0 is non-dominated."""
    n = len(results)
    dominated_by = [[] for _ in range(n)]
    counts = [0] * n
    fronts = [[]]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if _dominates(results[i], results[j]):
                dominated_by[i].append(j)
            elif _dominates(results[j], results[i]):
                counts[i] += 1
        if counts[i] == 0:
            fronts[0].append(i)
    k = 0
    while fronts[k]:
        nxt = []
        for i in fronts[k]:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        k += 1
        fronts.append(nxt)
    return [f for f in fronts if f]


def crowding_distance(results, front) -> dict:
    dist = {i: 0.0 for i in front}
    for attr in ("far", "frr"):
        vals = sorted(front, key=lambda i: getattr(results[i], attr))
        lo = getattr(results[vals[0]], attr)
        hi = getattr(results[vals[-1]], attr)
        dist[vals[0]] = dist[vals[-1]] = math.inf
        if hi == lo:
            continue
        for a, b, c in zip(vals, vals[1:], vals[2:]):
            dist[b] += (getattr(results[c], attr) - getattr(results[a], attr)) / (hi - lo)
    return dist


def _random_config(bounds: SpaceBounds, rng) -> PostProcessConfig:
    return PostProcessConfig(
        averaging_window_frames=int(rng.integers(bounds.window[0], bounds.window[1] + 1)),
        threshold=float(rng.uniform(*bounds.threshold)),
        suppression_frames=int(rng.integers(bounds.suppression[0], bounds.suppression[1] + 1)),
    )


def _clamp_config(w, th, sup, bounds: SpaceBounds) -> PostProcessConfig:
    return PostProcessConfig(
        averaging_window_frames=int(min(max(w, bounds.window[0]), bounds.window[1])),
        threshold=float(min(max(th, bounds.threshold[0]), bounds.threshold[1])),
        suppression_frames=int(min(max(sup, bounds.suppression[0]), bounds.suppression[1])),
    )


def _mutate(cfg: PostProcessConfig, bounds: SpaceBounds, rng) -> PostProcessConfig:
    w_span = max(1, bounds.window[1] - bounds.window[0])
    s_span = max(1, bounds.suppression[1] - bounds.suppression[0])
    t_span = bounds.threshold[1] - bounds.threshold[0]
    w = cfg.averaging_window_frames + int(round(rng.normal(0, w_span / 10.0 + 0.5)))
    th = cfg.threshold + rng.normal(0, t_span / 10.0 + 1e-9)
    sup = cfg.suppression_frames + int(round(rng.normal(0, s_span / 10.0 + 0.5)))
    return _clamp_config(w, th, sup, bounds)


def _crossover(a: PostProcessConfig, b: PostProcessConfig, rng) -> PostProcessConfig:
    pick = lambda x, y: x if rng.random() < 0.5 else y
    return PostProcessConfig(
        averaging_window_frames=pick(a.averaging_window_frames, b.averaging_window_frames),
        threshold=pick(a.threshold, b.threshold),
        suppression_frames=pick(a.suppression_frames, b.suppression_frames),
    )


def ga_search_probs(
    probs: np.ndarray,
    truth: LabeledStream,
    bounds: SpaceBounds,
    params: GaParams,
    positive_class,
    column: Optional[int] = None,
    evaluated_log: Optional[list] = None,
) -> list:
    """NSGA-style search over (window, threshold, suppression).

    mu+lambda elitism: parents and offspring compete by non-dominated rank
    and crowding distance, so the incumbent front never regresses.  Returns
    the final front sorted by FAR (deduplicated).  When ``evaluated_log`` is
    given, every distinct configuration evaluated is appended to it.
    """
    rng = np.random.default_rng(params.seed)
    cache = {}

    def fitness(cfg: PostProcessConfig) -> CalibrationResult:
        key = (cfg.averaging_window_frames, round(cfg.threshold, 12), cfg.suppression_frames)
        if key not in cache:
            cache[key] = evaluate_config(
                probs, truth, cfg, params.tolerance_frames, positive_class, column=column
            )
            if evaluated_log is not None:
                evaluated_log.append(cache[key])
        return cache[key]

    if bounds.degenerate():
        only = _clamp_config(bounds.window[0], bounds.threshold[0], bounds.suppression[0], bounds)
        return [fitness(only)]

    pop = [fitness(c) for c in params.seeds]
    while len(pop) < params.population:
        pop.append(fitness(_random_config(bounds, rng)))
    pop = pop[: params.population]

    for _gen in range(params.generations):
        fronts = non_dominated_sort(pop)
        rank = {}
        crowd = {}
        for r, front in enumerate(fronts):
            d = crowding_distance(pop, front)
            for i in front:
                rank[i] = r
                crowd[i] = d[i]

        def tournament():
            i, j = int(rng.integers(len(pop))), int(rng.integers(len(pop)))
            if rank[i] != rank[j]:
                return pop[i] if rank[i] < rank[j] else pop[j]
            return pop[i] if crowd[i] >= crowd[j] else pop[j]

        offspring = []
        while len(offspring) < params.population:
            pa, pb = tournament().config, tournament().config
            child = _crossover(pa, pb, rng) if rng.random() < params.crossover_rate else pa
            if rng.random() < params.mutation_rate:
                child = _mutate(child, bounds, rng)
            offspring.append(fitness(child))

        union = pop + offspring
        fronts = non_dominated_sort(union)
        nxt = []
        for front in fronts:
            if len(nxt) + len(front) <= params.population:
                nxt.extend(front)
            else:
                d = crowding_distance(union, front)
                rest = sorted(front, key=lambda i: -d[i])[: params.population - len(nxt)]
                nxt.extend(rest)
                break
        pop = [union[i] for i in nxt]

    final = [pop[i] for i in non_dominated_sort(pop)[0]]
    seen = set()
    unique = []
    for r in sorted(final, key=lambda r: (r.far, r.frr, r.config.averaging_window_frames)):
        key = (r.config.averaging_window_frames, r.config.threshold, r.config.suppression_frames)
        if key not in seen:
            seen.add(key)
            unique.append(r)
    return unique


def ga_search(
    stream: LabeledStream,
    model: ModelGraph,
    bounds: SpaceBounds,
    params: GaParams,
    positive_class,
    column: Optional[int] = None,
    evaluated_log: Optional[list] = None,
) -> list:
    """Full pipeline: model probabilities over the stream, then GA search."""
    probs = stream_probabilities(model, stream)
    return ga_search_probs(probs, stream, bounds, params, positive_class,
                           column=column, evaluated_log=evaluated_log)


def grid_search_probs(
    probs: np.ndarray,
    truth: LabeledStream,
    windows,
    thresholds,
    suppressions,
    tolerance_frames: int,
    positive_class,
) -> list:
    """Exhaustive evaluation over an explicit grid (the GA's test oracle)."""
    out = []
    for w in windows:
        for th in thresholds:
            for sup in suppressions:
                cfg = PostProcessConfig(
                    averaging_window_frames=int(w), threshold=float(th),
                    suppression_frames=int(sup),
                )
                out.append(evaluate_config(probs, truth, cfg, tolerance_frames, positive_class))
    return out
