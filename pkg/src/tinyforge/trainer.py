"""Supervised training on the operator IR, plus K-means anomaly scoring.

Plain mini-batch SGD on softmax cross-entropy with hand-written
backpropagation through dense / conv1d / relu / maxpool1d / flatten.
Stabilizers: geometric learning-rate sweep, classifier bias initialized to
log class priors, and best-validation-checkpoint restoration.  Training
math runs in float64 on master weights; checkpoints are cast to float32
(the deployed precision).  Runs are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import TrainError
from .ir import GraphBuilder, ModelGraph

LR_SWEEP_CANDIDATES = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1e0)
LR_DIVERGENCE_FACTOR = 4.0


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: Optional[float] = None  # None -> lr_find
    seed: int = 0
    validation_fraction: float = 0.2

    def __post_init__(self):
        if self.epochs < 1:
            raise TrainError("epochs must be >= 1")
        if not 0.0 < self.validation_fraction < 0.5:
            raise TrainError("validation_fraction must be in (0, 0.5)")
        if self.batch_size < 1:
            raise TrainError("batch_size must be >= 1")


@dataclass
class EvalReport:
    confusion: np.ndarray  # [k, k], rows = true class
    accuracy: float
    per_class_f1: np.ndarray

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "per_class_f1": self.per_class_f1.tolist(),
        }


# ------------------------------------------------------------ presets

def glorot_uniform(rng, shape):
    fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
    fan_out = shape[-1]
    if len(shape) == 3:  # conv [filters, kernel, in_ch]
        fan_in = shape[1] * shape[2]
        fan_out = shape[0]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def build_conv_stack(feature_shape, widths, num_classes, seed=0, kernel_size=3, pool=2):
    """Conv1d stack over [frames, coeffs] with a softmax head.

    ``pool > 0`` inserts a maxpool after each conv where the length allows;
    ``pool = 0`` keeps full temporal resolution.
    """
    rng = np.random.default_rng(seed)
    frames, coeffs = feature_shape
    b = GraphBuilder((frames, coeffs))
    length, ch = frames, coeffs
    for w in widths:
        if length < kernel_size:
            raise TrainError(
                f"feature length {length} too short for another conv layer (kernel {kernel_size})"
            )
        b = b.conv1d(glorot_uniform(rng, (w, kernel_size, ch)), np.zeros(w))
        b = b.relu()
        length = length - kernel_size + 1
        ch = w
        if pool > 0 and length >= pool:
            b = b.maxpool1d(pool, pool)
            length = (length - pool) // pool + 1
    b = b.flatten()
    b = b.dense(
        glorot_uniform(rng, (length * ch, num_classes)),
        np.full(num_classes, math.log(1.0 / num_classes)),
    )
    return b.softmax().build()


def build_mlp(input_dim, hidden, num_classes, seed=0):
    rng = np.random.default_rng(seed)
    b = GraphBuilder((input_dim,))
    cur = input_dim
    for h in hidden:
        b = b.dense(glorot_uniform(rng, (cur, h)), np.zeros(h)).relu()
        cur = h
    b = b.dense(
        glorot_uniform(rng, (cur, num_classes)),
        np.full(num_classes, math.log(1.0 / num_classes)),
    )
    return b.softmax().build()


def init_preset(data_kind: str, feature_shape, num_classes: int, seed: int = 0) -> ModelGraph:
    """Template network for a data kind: conv stack for audio features,
    MLP for flat time-series windows.  Classifier bias starts at the log of
    uniform class priors."""
    if num_classes < 2:
        raise TrainError(f"need at least 2 classes, got {num_classes}")
    shape = tuple(int(v) for v in np.atleast_1d(feature_shape))
    if data_kind == "audio":
        if len(shape) != 2:
            raise TrainError(f"audio preset expects [frames, coeffs], got {shape}")
        return build_conv_stack(shape, (16, 32), num_classes, seed=seed)
    if data_kind == "timeseries":
        if len(shape) == 2 and shape[0] == 1:
            shape = (shape[1],)
        if len(shape) != 1:
            raise TrainError(f"timeseries preset expects a flat window, got {shape}")
        return build_mlp(shape[0], (32,), num_classes, seed=seed)
    raise TrainError(f"unknown data kind {data_kind!r}")


# ------------------------------------------------------------ forward/backward

def _trainable_ids(g: ModelGraph):
    out = []
    for node in g.nodes:
        if node.kind in ("dense", "conv1d"):
            out.extend(node.inputs[1:3])
    return out


def _batch_input(g: ModelGraph, features) -> np.ndarray:
    """[N, ...] features coerced to the graph's input shape."""
    X = np.asarray(features, dtype=np.float64)
    spec = g.tensor(g.input_id)
    per = int(np.prod(X.shape[1:])) if X.ndim > 1 else 0
    if per != spec.numel:
        raise TrainError(f"features carry {per} values per sample, graph expects {spec.numel}")
    return X.reshape((X.shape[0],) + spec.shape)


def _forward(g, weights, X):
    """Batched forward; returns final activations and per-node caches."""
    a = X
    caches = []
    for node in g.nodes:
        k = node.kind
        if k == "dense":
            w, b = weights[node.inputs[1]], weights[node.inputs[2]]
            z = a @ w + b
            y = np.maximum(z, 0.0) if node.fused_activation == "relu" else z
            caches.append(("dense", a, w, z))
        elif k == "conv1d":
            w, b = weights[node.inputs[1]], weights[node.inputs[2]]
            stride = node.attrs["stride"]
            win = np.lib.stride_tricks.sliding_window_view(a, w.shape[1], axis=1)[:, ::stride]
            z = np.einsum("blck,fkc->blf", win, w) + b
            y = np.maximum(z, 0.0) if node.fused_activation == "relu" else z
            caches.append(("conv1d", a, win, w, z))
        elif k == "relu":
            y = np.maximum(a, 0.0)
            caches.append(("relu", a))
        elif k == "maxpool1d":
            pool, stride = node.attrs["pool"], node.attrs["stride"]
            win = np.lib.stride_tricks.sliding_window_view(a, pool, axis=1)[:, ::stride]
            idx = win.argmax(axis=3)
            y = win.max(axis=3)
            caches.append(("maxpool1d", a.shape, idx, pool, stride))
        elif k == "flatten":
            caches.append(("flatten", a.shape))
            y = a.reshape(a.shape[0], -1)
        elif k == "softmax":
            m = a.max(axis=1, keepdims=True)
            e = np.exp(a - m)
            y = e / e.sum(axis=1, keepdims=True)
            caches.append(("softmax",))
        else:
            raise TrainError(f"op kind {k!r} is not trainable")
        a = y
    return a, caches


def loss_and_grads(g, weights, X, labels):
    """Cross-entropy loss plus gradients for every trainable weight and X.

    The graph must end with softmax; the softmax+cross-entropy pair is
    differentiated jointly (dlogits = probs - onehot).
    """
    if g.nodes[-1].kind != "softmax":
        raise TrainError("training requires a softmax output head")
    probs, caches = _forward(g, weights, X)
    n = X.shape[0]
    onehot = np.zeros_like(probs)
    onehot[np.arange(n), labels] = 1.0
    # floor only guards log(0) on full underflow; it never distorts the loss
    # of a representable probability, keeping finite differences consistent
    loss = float(-np.mean(np.log(np.maximum(probs[np.arange(n), labels], 1e-300))))

    grads = {}
    d = (probs - onehot) / n
    for node, cache in zip(reversed(g.nodes), reversed(caches)):
        k = node.kind
        if k == "softmax":
            continue  # folded into the initial delta
        if k == "dense":
            _, a, w, z = cache
            if node.fused_activation == "relu":
                d = d * (z > 0.0)
            grads[node.inputs[1]] = a.T @ d
            grads[node.inputs[2]] = d.sum(axis=0)
            d = d @ w.T
        elif k == "conv1d":
            _, a, win, w, z = cache
            if node.fused_activation == "relu":
                d = d * (z > 0.0)
            stride = node.attrs["stride"]
            ksz = w.shape[1]
            grads[node.inputs[1]] = np.einsum("blck,blf->fkc", win, d)
            grads[node.inputs[2]] = d.sum(axis=(0, 1))
            da = np.zeros_like(a)
            out_len = d.shape[1]
            for i in range(ksz):
                da[:, i : i + out_len * stride : stride, :] += np.einsum("blf,fc->blc", d, w[:, i, :])
            d = da
        elif k == "relu":
            (_, a) = cache
            d = d * (a > 0.0)
        elif k == "maxpool1d":
            _, a_shape, idx, pool, stride = cache
            da = np.zeros(a_shape)
            out_len = idx.shape[1]
            for p in range(pool):
                mask = idx == p
                da[:, p : p + out_len * stride : stride, :] += d * mask
            d = da
        elif k == "flatten":
            (_, a_shape) = cache
            d = d.reshape(a_shape)
    return loss, grads, d


def predict(g: ModelGraph, features: np.ndarray) -> np.ndarray:
    """Batched class probabilities for [N, ...] float features."""
    weights = {wid: g.weights[wid].astype(np.float64) for wid in g.weights}
    probs, _ = _forward(g, weights, _batch_input(g, features))
    return probs


# ------------------------------------------------------------ lr finder

def sweep_learning_rates(run_epoch, candidates=LR_SWEEP_CANDIDATES):
    """Generic divergence sweep.

    ``run_epoch(lr)`` returns the loss sequence of one mini-epoch trained at
    ``lr`` from the same initial state.  A candidate diverges when any loss
    is non-finite or exceeds ``LR_DIVERGENCE_FACTOR`` times the first loss of
    the smallest candidate's sweep.  Returns the candidate one grid decade
    below the smallest diverging one, or the largest candidate when nothing
    diverges.
    """
    candidates = sorted(candidates)
    initial = None
    for i, lr in enumerate(candidates):
        losses = run_epoch(lr)
        if initial is None:
            initial = losses[0]
        diverged = any(
            (not math.isfinite(l)) or l > LR_DIVERGENCE_FACTOR * initial for l in losses
        )
        if diverged:
            if i == 0:
                raise TrainError(
                    "loss diverges even at the smallest learning rate; inspect the data"
                )
            return candidates[i - 1]
    return candidates[-1]


def lr_find(g: ModelGraph, features, labels, cfg: TrainConfig) -> float:
    features = _batch_input(g, features)
    labels = np.asarray(labels)
    if len(features) < 1:
        raise TrainError("lr_find needs at least one batch of data")
    max_batches = 20

    def run_epoch(lr):
        weights = {wid: g.weights[wid].astype(np.float64) for wid in g.weights}
        order = np.random.default_rng(cfg.seed).permutation(len(features))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            if len(losses) >= max_batches:
                break
            sel = order[start : start + cfg.batch_size]
            loss, grads, _ = loss_and_grads(g, weights, features[sel], labels[sel])
            losses.append(loss)
            if not math.isfinite(loss):
                break
            for wid, grad in grads.items():
                weights[wid] = weights[wid] - lr * grad
        return losses

    return sweep_learning_rates(run_epoch)


# ------------------------------------------------------------ training

def best_checkpoint_index(val_accuracies) -> int:
    """Index of the checkpoint to restore: first epoch reaching the max."""
    best, best_i = -1.0, 0
    for i, acc in enumerate(val_accuracies):
        if acc > best:
            best, best_i = acc, i
    return best_i


def _norm_fold_target(g: ModelGraph):
    """First affine node that input standardization can be folded into.

    Returns (node, flatten_first) or (None, False) when the graph starts
    with something non-foldable and training must run on raw features.
    """
    first = g.nodes[0]
    if first.kind in ("dense", "conv1d"):
        return first, False
    if first.kind == "flatten" and len(g.nodes) > 1 and g.nodes[1].kind == "dense":
        return g.nodes[1], True
    return None, False


def _input_norm_stats(g: ModelGraph, X: np.ndarray, node, flatten_first):
    """Per-feature standardization constants shaped like the graph input.

    conv1d inputs are standardized per channel (one mean/std per
    coefficient column); dense inputs per element.
    """
    if node.kind == "conv1d" and not flatten_first:
        mu = X.mean(axis=(0, 1))
        sd = np.maximum(X.std(axis=(0, 1)), 1e-6)
        shape = (1,) + (1,) * (X.ndim - 2) + (-1,)
        return mu.reshape(shape[1:]), sd.reshape(shape[1:])
    flat = X.reshape(X.shape[0], -1)
    mu = flat.mean(axis=0)
    sd = np.maximum(flat.std(axis=0), 1e-6)
    in_shape = g.tensor(g.input_id).shape
    return mu.reshape(in_shape), sd.reshape(in_shape)


def _fold_normalization(g: ModelGraph, node, mu, sd):
    """Rewrite the first affine layer so the graph consumes raw features.

    Exact: conv/dense are linear in x, so scaling columns by 1/sd and
    shifting the bias reproduces the normalized-input function.
    """
    w = g.weights[node.inputs[1]].astype(np.float64)
    b = g.weights[node.inputs[2]].astype(np.float64)
    if node.kind == "conv1d":
        ch_sd = np.asarray(sd).reshape(-1)
        ch_mu = np.asarray(mu).reshape(-1)
        wf = w / ch_sd[None, None, :]
        bf = b - np.einsum("fkc,c->f", wf, ch_mu)
    else:
        el_sd = np.asarray(sd).reshape(-1)
        el_mu = np.asarray(mu).reshape(-1)
        wf = w / el_sd[:, None]
        bf = b - wf.T @ el_mu
    g.weights[node.inputs[1]] = wf.astype(np.float32)
    g.weights[node.inputs[2]] = bf.astype(np.float32)


def _stratified_validation(labels, fraction, rng):
    labels = np.asarray(labels)
    val_idx = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        n_val = int(round(fraction * len(members)))
        n_val = min(n_val, len(members) - 1)
        perm = rng.permutation(len(members))
        val_idx.extend(members[perm[:n_val]])
    val = np.array(sorted(val_idx), dtype=int)
    train = np.array([i for i in range(len(labels)) if i not in set(val.tolist())], dtype=int)
    return train, val


def train(g: ModelGraph, features, labels, cfg: TrainConfig):
    """SGD with best-validation-checkpoint restore.

    Returns ``(trained ModelGraph with float32 weights, history dict)``.
    History carries per-epoch mean loss and validation accuracy, the
    learning rate used, and the restored epoch index.

    Features are standardized per input channel for conditioning; the
    standardization is folded exactly into the first affine layer of the
    returned graph, which therefore consumes raw features.
    """
    features = _batch_input(g, features)
    labels = np.asarray(labels, dtype=int)
    out_n = g.tensor(g.output_id).shape[0]
    if labels.max(initial=0) >= out_n:
        raise TrainError(f"label {labels.max()} out of range for {out_n} outputs")
    if len(features) != len(labels):
        raise TrainError("features and labels disagree in length")

    fold_node, flatten_first = _norm_fold_target(g)
    mu = sd = None
    if fold_node is not None:
        mu, sd = _input_norm_stats(g, features, fold_node, flatten_first)
        features = (features - mu) / sd

    rng = np.random.default_rng(cfg.seed)
    train_idx, val_idx = _stratified_validation(labels, cfg.validation_fraction, rng)
    if len(val_idx) == 0:
        train_idx = np.arange(len(labels))
        val_idx = np.arange(len(labels))  # degenerate: validate on train data

    lr = cfg.learning_rate
    if lr is None:
        lr = lr_find(g, features[train_idx], labels[train_idx], cfg)

    weights = {wid: g.weights[wid].astype(np.float64) for wid in g.weights}
    trainable = set(_trainable_ids(g))
    history = {"loss": [], "val_accuracy": [], "lr": lr}
    checkpoints = []
    # overflow on a diverging run is reported via the non-finite-loss abort,
    # not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = rng.permutation(len(train_idx))
            epoch_losses = []
            for start in range(0, len(order), cfg.batch_size):
                sel = train_idx[order[start : start + cfg.batch_size]]
                loss, grads, _ = loss_and_grads(g, weights, features[sel], labels[sel])
                if not math.isfinite(loss):
                    raise TrainError(
                        f"loss became non-finite at epoch {epoch}; lower the learning rate "
                        f"(current {lr:g}) or inspect the features for outliers"
                    )
                epoch_losses.append(loss)
                for wid, grad in grads.items():
                    if wid in trainable:
                        weights[wid] = weights[wid] - lr * grad
            probs, _ = _forward(g, weights, features[val_idx])
            val_acc = float(np.mean(probs.argmax(axis=1) == labels[val_idx]))
            history["loss"].append(float(np.mean(epoch_losses)))
            history["val_accuracy"].append(val_acc)
            checkpoints.append({wid: w.astype(np.float32) for wid, w in weights.items()})

    best = best_checkpoint_index(history["val_accuracy"])
    history["best_epoch"] = best
    out = g.copy()
    out.weights = checkpoints[best]
    if fold_node is not None:
        _fold_normalization(out, next(n for n in out.nodes if n.output == fold_node.output), mu, sd)
    return out, history


def evaluate(g: ModelGraph, features, labels) -> EvalReport:
    """Argmax evaluation: confusion matrix (rows = true), accuracy, per-class F1."""
    labels = np.asarray(labels, dtype=int)
    k = g.tensor(g.output_id).shape[0]
    preds = predict(g, np.asarray(features, dtype=np.float64)).argmax(axis=1)
    confusion = np.zeros((k, k), dtype=int)
    for t, p in zip(labels, preds):
        confusion[t, p] += 1
    accuracy = float(np.trace(confusion) / max(1, confusion.sum()))
    f1 = np.zeros(k)
    for c in range(k):
        tp = confusion[c, c]
        precision = tp / confusion[:, c].sum() if confusion[:, c].sum() else 0.0
        recall = tp / confusion[c, :].sum() if confusion[c, :].sum() else 0.0
        f1[c] = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return EvalReport(confusion=confusion, accuracy=accuracy, per_class_f1=f1)


# ------------------------------------------------------------ k-means

def kmeans_fit(features, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6):
    """Lloyd's algorithm with k-means++ seeding.

    Empty clusters are re-seeded from the point farthest from its assigned
    centroid.  Stops after ``max_iter`` iterations or once the largest
    centroid shift drops below ``tol``.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        X = X.reshape(len(X), -1)
    n = len(X)
    if k > n:
        raise TrainError(f"k={k} exceeds the {n} available samples")
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centroids[j] = X[rng.integers(n)]
        else:
            centroids[j] = X[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))

    for _ in range(max_iter):
        dist = np.linalg.norm(X[:, None, :] - centroids[None, :, :], axis=2)
        assign = dist.argmin(axis=1)
        new = centroids.copy()
        for j in range(k):
            members = X[assign == j]
            if len(members) == 0:
                farthest = int(np.argmax(dist[np.arange(n), assign]))
                new[j] = X[farthest]
                assign[farthest] = j
            else:
                new[j] = members.mean(axis=0)
        shift = np.linalg.norm(new - centroids, axis=1).max()
        centroids = new
        if shift < tol:
            break
    return centroids


def kmeans_score(x, centroids) -> float:
    """Anomaly score: Euclidean distance to the nearest centroid."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    return float(np.linalg.norm(np.asarray(centroids) - x, axis=1).min())


def within_cluster_ss(X, centroids) -> float:
    X = np.asarray(X, dtype=np.float64)
    dist = np.linalg.norm(X[:, None, :] - centroids[None, :, :], axis=2)
    return float((dist.min(axis=1) ** 2).sum())
