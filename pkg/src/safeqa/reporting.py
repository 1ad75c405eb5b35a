"""Report rendering: JSON documents, CSV tables, plain-text tables for the
terminal, and PNG charts written next to the delimited output."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(report: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_json_safe(report), indent=2, ensure_ascii=False)
                    + "\n", encoding="utf-8")
    return path


def write_csv(rows: Sequence[dict], path: str | Path,
              columns: Optional[Sequence[str]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("", encoding="utf-8")
        return path
    cols = list(columns) if columns else list(rows[0].keys())
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row.get(c, "") for c in cols})
    return path


def render_table(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    """Fixed-width text table for terminal output."""
    if not rows:
        return "(empty)"
    cols = list(columns) if columns else list(rows[0].keys())
    cells = [[str(row.get(c, "")) for c in cols] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for r in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)))
    return "\n".join(lines)


def plot_calibration_sweep(sweep: Sequence[dict], path: str | Path,
                           chosen_tau: Optional[float] = None) -> Path:
    """F1/precision/recall against the threshold candidates."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    finite = [p for p in sweep if p.get("tau") is not None]
    taus = [p["tau"] for p in finite]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(taus, [p["f1"] for p in finite], marker="o", label="F1")
    ax.plot(taus, [p["precision"] for p in finite], marker=".",
            linestyle="--", label="precision")
    ax.plot(taus, [p["recall"] for p in finite], marker=".",
            linestyle=":", label="recall")
    if chosen_tau is not None and math.isfinite(chosen_tau):
        ax.axvline(chosen_tau, color="red", alpha=0.5,
                   label=f"chosen τ={chosen_tau:.3f}")
    ax.set_xlabel("threshold τ")
    ax.set_ylabel("score")
    ax.set_title("Acceptance-threshold sweep")
    ax.set_ylim(-0.05, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_scalability(rows: Sequence[dict], path: str | Path) -> Path:
    """Search latency and build time against corpus size."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    docs = [r["docs"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4.5))
    ax1.plot(docs, [r["p50_ms"] for r in rows], marker="o", label="p50")
    ax1.plot(docs, [r["p95_ms"] for r in rows], marker="s", label="p95")
    ax1.set_xlabel("documents")
    ax1.set_ylabel("search latency (ms)")
    ax1.set_title("Search latency")
    ax1.legend()
    ax2.plot(docs, [r["build_seconds"] for r in rows], marker="o", color="teal")
    ax2.set_xlabel("documents")
    ax2.set_ylabel("build time (s)")
    ax2.set_title("Index build time")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_metric_bars(means: dict[str, float], path: str | Path) -> Path:
    """Mean value per text metric."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(means)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(names, [means[n] for n in names], color="steelblue")
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("mean score")
    ax.set_title("Text metrics")
    for i, name in enumerate(names):
        ax.text(i, means[name] + 0.02, f"{means[name]:.3f}", ha="center")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_rank_histogram(per_item: Sequence[dict], path: str | Path) -> Path:
    """Distribution of reciprocal ranks from a retrieval evaluation."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rrs = [item["reciprocal_rank"] for item in per_item]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.hist(rrs, bins=20, range=(0.0, 1.0), color="steelblue",
            edgecolor="white")
    ax.set_xlabel("reciprocal rank of first in-group hit")
    ax.set_ylabel("queries")
    ax.set_title("Retrieval generalisability")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_theme_rates(table: Sequence[dict], path: str | Path) -> Path:
    """Per-theme record and outcome counts for bias inspection."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    themes = [row["theme"] for row in table]
    x = range(len(themes))
    fig, ax = plt.subplots(figsize=(max(7, len(themes) * 1.2), 4.5))
    width = 0.35
    ax.bar([i - width / 2 for i in x], [row["records"] for row in table],
           width=width, label="records")
    ax.bar([i + width / 2 for i in x], [row["answered"] for row in table],
           width=width, label="answered asks")
    ax.set_xticks(list(x))
    ax.set_xticklabels(themes, rotation=30, ha="right")
    ax.set_ylabel("count")
    ax.set_title("Per-theme coverage")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
