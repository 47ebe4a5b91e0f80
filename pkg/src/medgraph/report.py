"""Metric panel formatting and figure rendering for the CLI report path.

The panel mirrors the engine's headline metric names row for row; values are
strings because some rows are timings or mean (± sd) summaries. Figures are
rendered headless to plain PNG files next to the delimited output.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .engine import EvalResult, qualitative_rows
from .reasoning import Posterior

PANEL_SEP = "\t"


def _fmt_ratio(value: float | None) -> str:
    return "undefined" if value is None else f"{value:.4f}"


def panel_rows(result: EvalResult) -> list[tuple[str, str]]:
    """Headline metric rows, then supplementary diagnostics."""
    if result.batch_elapsed_ms:
        seconds = sorted(result.batch_elapsed_ms)[len(result.batch_elapsed_ms) // 2] / 1000.0
        efficiency = f"{seconds:.3f} s per batch"
    else:
        efficiency = "no batches"
    rows = [
        ("Diagnostic Accuracy", _fmt_ratio(result.diagnostic_accuracy)),
        ("Treatment Recommendation Precision", _fmt_ratio(result.recommendation_precision)),
        ("Semantic Coverage", _fmt_ratio(result.coverage)),
        ("Graph Update Efficiency", efficiency),
    ]
    rows.extend(qualitative_rows().items())
    rows.append(("Semantic Extraction Accuracy", _fmt_ratio(result.extraction)))
    rows.append(("Graph Alignment Score (GAS)", _fmt_ratio(result.alignment)))
    # supplementary rows beyond the headline table
    rows.append(("Mean Utility Error (MUE)", f"{result.mean_utility_error:.6f}"))
    rows.append(("Extraction Precision", _fmt_ratio(result.extraction_prf["precision"])))
    rows.append(("Extraction Recall", _fmt_ratio(result.extraction_prf["recall"])))
    rows.append(("Extraction F1", _fmt_ratio(result.extraction_prf["f1"])))
    return rows


def format_panel(rows: Sequence[tuple[str, str]]) -> str:
    lines = [f"Metric{PANEL_SEP}Result"]
    lines.extend(f"{name}{PANEL_SEP}{value}" for name, value in rows)
    return "\n".join(lines) + "\n"


def write_panel(rows: Sequence[tuple[str, str]], path: Path) -> Path:
    path.write_text(format_panel(rows))
    return path


def metric_bar_figure(result: EvalResult, path: Path) -> Path:
    """Horizontal bars for the ratio-valued metrics."""
    pairs = [
        ("Diagnostic accuracy", result.diagnostic_accuracy),
        ("Recommendation precision", result.recommendation_precision),
        ("Semantic coverage", result.coverage),
        ("Alignment (GAS)", result.alignment),
        ("Extraction accuracy", result.extraction),
    ]
    labels = [name for name, value in pairs if value is not None]
    values = [value for _, value in pairs if value is not None]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.barh(labels, values, color="#4878a8")
    ax.set_xlim(0, 1.0)
    ax.set_xlabel("score")
    for i, v in enumerate(values):
        ax.text(min(v + 0.01, 0.98), i, f"{v:.3f}", va="center", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def posterior_figure(posterior: Posterior, path: Path, top_k: int = 8) -> Path:
    entries = posterior.entries[:top_k]
    labels = [d for d, _ in entries]
    values = [p for _, p in entries]
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.bar(range(len(values)), values, color="#7a4878")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("posterior probability")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def latency_figure(samples_ms: Sequence[float], path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.hist(samples_ms, bins=min(20, max(3, len(samples_ms))), color="#48a878")
    ax.set_xlabel("batch latency (ms)")
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(result: EvalResult, out_dir: Path) -> list[Path]:
    """Write the delimited panel and its figures into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [write_panel(panel_rows(result), out_dir / "metrics.tsv")]
    written.append(metric_bar_figure(result, out_dir / "metrics.png"))
    if result.posterior_sample is not None:
        written.append(posterior_figure(result.posterior_sample, out_dir / "posterior.png"))
    if result.batch_elapsed_ms:
        written.append(latency_figure(result.batch_elapsed_ms, out_dir / "latency.png"))
    return written
