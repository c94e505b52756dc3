"""CSV tables and matplotlib figures for optimization and evaluation runs."""

from __future__ import annotations

import csv
from fractions import Fraction
from pathlib import Path
from typing import List, Mapping, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ltlprompt.trainer import OptimizationRun, SampleResult, dec, summary_rows  # noqa: E402

PathLike = Union[str, Path]


def plot_safety_scores(run: OptimizationRun, path: PathLike) -> Path:
    """Batch mean and validation safety score per optimization step."""
    rows = summary_rows(run)
    steps = [r["step"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(steps, [float(r.mean_safety_score) for r in run.records], marker="o", label="batch mean")
    ax.plot(steps, [float(r.validation_score) for r in run.records], marker="s", linestyle="--",
            label="validation (accepted prompts)")
    ax.set_xlabel("optimization step")
    ax.set_ylabel("safety score")
    ax.set_ylim(-0.02, 1.02)
    ax.set_xticks(steps)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_evaluation(scores: Sequence[Tuple[str, Fraction]], path: PathLike) -> Path:
    """Bar chart of mean safety score per evaluated prompt set."""
    labels = [k for k, _ in scores]
    values = [float(v) for _, v in scores]
    fig, ax = plt.subplots(figsize=(1.6 + 1.2 * len(labels), 3.5))
    bars = ax.bar(labels, values, color="#4c72b0")
    for b, v in zip(bars, values):
        ax.text(b.get_x() + b.get_width() / 2, v + 0.02, f"{v:.3f}", ha="center", va="bottom")
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("mean safety score")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def write_evaluation_csv(results: Mapping[str, Tuple[Fraction, List[SampleResult]]], path: PathLike) -> Path:
    """One row per (prompt set, task) plus a ``mean`` row per prompt set."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["prompts", "task", "safety_score", "violated", "flagged"])
        for label, (mean, samples) in results.items():
            for s in samples:
                w.writerow([label, s.task_id, dec(s.score), " ".join(s.report.violated), int(s.flagged)])
            w.writerow([label, "mean", dec(mean), "", ""])
    return path
