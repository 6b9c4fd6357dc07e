"""Matplotlib figures for evaluation reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport


def render_report_figures(
    report: MetricsReport,
    curves: dict[str, tuple[list[float], list[float]]],
    out_dir,
    dpi: int = 110,
) -> list[Path]:
    """Write pr_curves.png and ap_per_class.png; returns the file paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for label in sorted(curves):
        recalls, precisions = curves[label]
        ax.plot(recalls, precisions, drawstyle="steps-post", label=label, linewidth=1.4)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0.0, 1.02)
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"precision-recall (mAP {report.map_score:.3f})")
    if curves:
        ax.legend(fontsize=7, loc="lower left")
    ax.grid(alpha=0.3)
    path = out_dir / "pr_curves.png"
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    written.append(path)

    labels = sorted(report.per_class_ap)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    ax.barh(range(len(labels)), [report.per_class_ap[lb] for lb in labels], color="#4878d0")
    ax.set_yticks(range(len(labels)))
    ax.set_yticklabels(labels, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("AP")
    ax.set_xlim(0.0, 1.05)
    ax.axvline(report.map_score, color="#d65f5f", linestyle="--", linewidth=1, label="mAP")
    ax.legend(fontsize=8)
    ax.set_title("per-class average precision")
    fig.tight_layout()
    path = out_dir / "ap_per_class.png"
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    written.append(path)
    return written
