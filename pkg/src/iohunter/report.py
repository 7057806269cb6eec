"""Report rendering: delimited outputs plus matplotlib figures.

Every figure lands next to the CSV/JSON it visualizes so a run directory
is self-contained. The Agg backend keeps rendering headless.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

FIG_DPI = 150

plt.rcParams.update(
    {
        "figure.figsize": (6.4, 4.0),
        "axes.grid": True,
        "grid.alpha": 0.3,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "font.size": 10,
    }
)


def write_json(path: str | Path, obj: Any) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_csv(path: str | Path) -> list[dict]:
    with Path(path).open("r", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def save_sparsity_curve(rows: Sequence[dict], path: str | Path, title: str = "") -> None:
    """Fraction-of-labels vs Macro-F1 with a band of one std across seeds."""
    by_model: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        model = str(row.get("model", "iohunter"))
        by_model.setdefault(model, {}).setdefault(float(row["fraction"]), []).append(float(row["test_f1"]))
    fig, ax = plt.subplots()
    for model, curve in sorted(by_model.items()):
        fractions = sorted(curve)
        means = [sum(curve[f]) / len(curve[f]) for f in fractions]
        stds = [
            (sum((v - m) ** 2 for v in curve[f]) / max(1, len(curve[f]) - 1)) ** 0.5
            for f, m in zip(fractions, means)
        ]
        ax.errorbar([f * 100 for f in fractions], means, yerr=stds, marker="o", capsize=3, label=model)
    ax.set_xscale("log")
    ax.set_xlabel("training labels kept (%)")
    ax.set_ylabel("test Macro-F1")
    ax.set_ylim(0.0, 1.05)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.savefig(path, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)


def save_ablation_bars(scores: dict[str, tuple[float, float]], path: str | Path, title: str = "") -> None:
    """Mean Macro-F1 with std whiskers per model variant."""
    names = list(scores)
    means = [scores[n][0] for n in names]
    stds = [scores[n][1] for n in names]
    fig, ax = plt.subplots()
    ax.bar(range(len(names)), means, yerr=stds, capsize=4, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylabel("test Macro-F1")
    ax.set_ylim(0.0, 1.05)
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)


def save_transfer_bars(rows: Sequence[dict], path: str | Path, title: str = "") -> None:
    """Scratch vs only-pretrain vs fine-tuned, one cluster per seed."""
    seeds = [str(r["seed"]) for r in rows]
    strategies = ["scratch", "only_pretrain", "finetuned"]
    width = 0.27
    fig, ax = plt.subplots()
    for k, strategy in enumerate(strategies):
        xs = [i + (k - 1) * width for i in range(len(rows))]
        ax.bar(xs, [float(r[strategy]) for r in rows], width=width, label=strategy)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels([f"seed {s}" for s in seeds])
    ax.set_ylabel("test Macro-F1")
    ax.set_ylim(0.0, 1.05)
    if title:
        ax.set_title(title)
    ax.legend(loc="lower right")
    fig.savefig(path, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)


def save_seed_scatter(reports: dict[str, Sequence[float]], path: str | Path, title: str = "") -> None:
    """Per-seed test scores for each experiment in one panel."""
    fig, ax = plt.subplots()
    for idx, (name, scores) in enumerate(sorted(reports.items())):
        ax.scatter([idx] * len(scores), scores, alpha=0.8)
    names = sorted(reports)
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylabel("test Macro-F1")
    ax.set_ylim(0.0, 1.05)
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=FIG_DPI, bbox_inches="tight")
    plt.close(fig)
