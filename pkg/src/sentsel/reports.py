"""Figures for the report commands.

Rendered with the Agg canvas directly (no pyplot state) and saved without
software metadata so repeated runs produce identical bytes.
"""

from __future__ import annotations

import csv
import math
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .corpus import ImpactCategory
from .evaluation import STAGES, AgreementMatrix, BenchmarkReport, EvalReport

_METADATA = {"Software": None}


def _save(fig: Figure, path) -> None:
    FigureCanvasAgg(fig)
    fig.savefig(path, format="png", dpi=100, metadata=_METADATA)


def _annotate(ax, values: np.ndarray, fmt: str) -> None:
    finite = values[np.isfinite(values)]
    mid = (finite.max() + finite.min()) / 2 if finite.size else 0.0
    for (r, c), v in np.ndenumerate(values):
        text = "n/a" if not math.isfinite(v) else format(v, fmt)
        ax.text(c, r, text, ha="center", va="center", fontsize=8,
                color="white" if math.isfinite(v) and v < mid else "black")


def plot_agreement(matrix: AgreementMatrix, path) -> None:
    values = np.asarray(matrix.values, dtype=np.float64)
    fig = Figure(figsize=(1.6 + 1.2 * len(matrix.truths), 1.2 + 0.6 * len(matrix.selectors)))
    ax = fig.add_subplot()
    im = ax.imshow(np.ma.masked_invalid(values), cmap="viridis", vmin=0.0, vmax=1.0, aspect="auto")
    ax.set_xticks(range(len(matrix.truths)), matrix.truths, rotation=30, ha="right")
    ax.set_yticks(range(len(matrix.selectors)), matrix.selectors)
    ax.set_xlabel("ground truth")
    ax.set_ylabel("selector")
    _annotate(ax, values, ".3f")
    fig.colorbar(im, ax=ax, label="mean NDCG")
    fig.tight_layout()
    _save(fig, path)


def plot_confusion(report: EvalReport, path) -> None:
    cm = np.asarray(report.confusion, dtype=np.float64)
    labels = ImpactCategory.labels()
    fig = Figure(figsize=(6.4, 5.4))
    ax = fig.add_subplot()
    ax.imshow(cm, cmap="Blues", aspect="equal")
    ax.set_xticks(range(len(labels)), labels, rotation=35, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("gold")
    ax.set_title(f"macro F1 {report.macro_f1:.3f}, micro F1 {report.micro_f1:.3f}")
    _annotate(ax, cm, ".0f")
    fig.tight_layout()
    _save(fig, path)


def plot_benchmark(reports: Sequence[BenchmarkReport], path) -> None:
    fig = Figure(figsize=(1.8 + 1.4 * len(reports), 4.2))
    ax = fig.add_subplot()
    x = np.arange(len(reports))
    bottom = np.zeros(len(reports))
    for stage in STAGES:
        h = np.array([r.stage_seconds[stage] for r in reports])
        ax.bar(x, h, bottom=bottom, label=stage, width=0.6)
        bottom += h
    ax.set_xticks(x, [r.variant for r in reports], rotation=20, ha="right")
    ax.set_ylabel("median seconds")
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def write_benchmark_csv(path, reports: Sequence[BenchmarkReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["variant", *(f"{s}_seconds" for s in STAGES), "total_seconds",
                    *(f"{s}_tokens" for s in STAGES), "documents_per_second", "reduction_ratio"])
        for r in reports:
            w.writerow([r.variant, *(f"{r.stage_seconds[s]:.6f}" for s in STAGES), f"{r.total_seconds:.6f}",
                        *(r.tokens_processed[s] for s in STAGES), f"{r.documents_per_second:.6f}",
                        f"{r.reduction_ratio:.6f}"])


def write_confusion_csv(path, report: EvalReport) -> None:
    labels = ImpactCategory.labels()
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["gold\\predicted", *labels])
        for label, row in zip(labels, report.confusion):
            w.writerow([label, *row])
