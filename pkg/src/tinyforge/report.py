"""Report sinks: JSON/markdown/CSV plus rendered matplotlib figures.

Every report-producing stage writes its machine-readable file and, where a
picture helps (training curves, confusion matrix, tuner scatter, FAR/FRR
front), a PNG next to it.  Figures are rendered headlessly.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def write_train_report(history: dict, report_dir) -> list:
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    out = [_write_json(report_dir / "train.json", history)]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    epochs = np.arange(1, len(history["loss"]) + 1)
    ax1.plot(epochs, history["loss"], marker="o", ms=3)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("training loss")
    ax2.plot(epochs, history["val_accuracy"], marker="o", ms=3, color="tab:green")
    ax2.axvline(history.get("best_epoch", 0) + 1, ls="--", color="gray", lw=1)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation accuracy")
    ax2.set_ylim(0, 1.05)
    fig.tight_layout()
    png = report_dir / "train.png"
    fig.savefig(png, dpi=120)
    plt.close(fig)
    out.append(png)
    return out


def write_eval_report(report, classes, report_dir, stem: str = "eval") -> list:
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    payload = dict(report.to_dict())
    payload["classes"] = list(classes)
    out = [_write_json(report_dir / f"{stem}.json", payload)]

    cm = np.asarray(report.confusion)
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(cm, cmap="Blues")
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(cm[i, j]), ha="center", va="center",
                    color="black" if cm[i, j] < cm.max() * 0.6 else "white")
    ax.set_xticks(range(len(classes)), classes, rotation=45, ha="right")
    ax.set_yticks(range(len(classes)), classes)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title(f"accuracy {report.accuracy:.3f}")
    fig.colorbar(im, shrink=0.8)
    fig.tight_layout()
    png = report_dir / f"{stem}.png"
    fig.savefig(png, dpi=120)
    plt.close(fig)
    out.append(png)
    return out


_TUNER_COLUMNS = [
    "trial_id", "dsp", "model", "dtype", "accuracy",
    "latency_dsp_ms", "latency_nn_ms", "latency_total_ms",
    "ram_dsp_bytes", "ram_nn_bytes", "ram_total_bytes", "flash_bytes",
]


def write_tuner_report(trials, table_rows, report_dir) -> list:
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    out = [
        _write_json(
            report_dir / "tuner.json",
            {"trials": [t.to_dict() for t in trials], "ranking": table_rows},
        )
    ]

    md = ["| " + " | ".join(_TUNER_COLUMNS) + " |",
          "|" + "|".join("---" for _ in _TUNER_COLUMNS) + "|"]
    for row in table_rows:
        md.append("| " + " | ".join(str(row[c]) for c in _TUNER_COLUMNS) + " |")
    md_path = report_dir / "tuner.md"
    md_path.write_text("\n".join(md) + "\n")
    out.append(md_path)

    csv_path = report_dir / "tuner.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=_TUNER_COLUMNS)
        writer.writeheader()
        writer.writerows({c: row[c] for c in _TUNER_COLUMNS} for row in table_rows)
    out.append(csv_path)

    if table_rows:
        fig, ax = plt.subplots(figsize=(5.5, 4))
        xs = [r["latency_total_ms"] for r in table_rows]
        ys = [r["accuracy"] for r in table_rows]
        sizes = [max(20, r["ram_total_bytes"] / 1024) for r in table_rows]
        ax.scatter(xs, ys, s=sizes, alpha=0.7)
        for r in table_rows:
            ax.annotate(str(r["trial_id"]), (r["latency_total_ms"], r["accuracy"]),
                        fontsize=7, xytext=(3, 3), textcoords="offset points")
        ax.set_xlabel("estimated total latency (ms)")
        ax.set_ylabel("test accuracy")
        ax.set_title("trials (marker size ~ RAM)")
        fig.tight_layout()
        png = report_dir / "tuner.png"
        fig.savefig(png, dpi=120)
        plt.close(fig)
        out.append(png)
    return out


def write_calibration_report(results, ga_params: dict, report_dir, evaluated=None) -> list:
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    out = [
        _write_json(
            report_dir / "calibration.json",
            {
                "front": [r.to_dict() for r in results],
                "evaluated": [r.to_dict() for r in (evaluated or [])],
                "ga_params": ga_params,
            },
        )
    ]
    fig, ax = plt.subplots(figsize=(4.8, 4))
    fars = [r.far for r in results]
    frrs = [r.frr for r in results]
    ax.plot(fars, frrs, "o-", color="tab:red")
    for r in results:
        ax.annotate(
            f"w{r.config.averaging_window_frames} t{r.config.threshold:.2f}",
            (r.far, r.frr), fontsize=7, xytext=(4, 4), textcoords="offset points",
        )
    ax.set_xlabel("false acceptance rate")
    ax.set_ylabel("false rejection rate")
    ax.set_title("post-processing trade-off front")
    fig.tight_layout()
    png = report_dir / "calibration.png"
    fig.savefig(png, dpi=120)
    plt.close(fig)
    out.append(png)
    return out


def write_estimate_report(est, fit, profile_name: str, mode: str, report_dir) -> list:
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    payload = {"estimate": est.to_dict(), "fit": fit.to_dict(),
               "profile": profile_name, "mode": mode}
    return [_write_json(report_dir / "estimate.json", payload)]
