"""Metrics report output: JSON, delimited CSV, and a summary figure."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .metrics import MetricsReport


def write_report_json(report: MetricsReport, path) -> None:
    Path(path).write_text(report.to_json() + "\n", encoding="utf-8")


def write_report_csv(report: MetricsReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        for name, value in report.items():
            writer.writerow([name, f"{value:.10g}"])


def write_report_figure(report: MetricsReport, path, title: Optional[str] = None) -> None:
    """Bar chart of the report's metrics, rendered to an image file."""
    items = report.items()
    if not items:
        raise ValueError("report holds no metrics to plot")
    names = [name for name, _ in items]
    values = [value for _, value in items]
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(items)), 3.5))
    bars = ax.bar(names, values, color="#4878cf")
    ax.bar_label(bars, fmt="%.4g", padding=2, fontsize=8)
    ax.set_ylabel("value")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
