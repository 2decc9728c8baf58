"""Render figures from training logs and adaptation records.

Every figure is written to a file next to the delimited output it was
derived from; nothing opens a display.
"""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .sampler import read_variant_records
from .trainer import TrainLog


def render_training_figure(log_path, out_path=None) -> Path:
    """Loss curves (train and held-out) plus any accuracy snapshots."""
    log_path = Path(log_path)
    out_path = Path(out_path) if out_path else log_path.with_suffix(".png")
    rows, notes = TrainLog.parse(log_path)

    def series(split, col):
        pts = [(it, d if col == "d" else g) for it, d, g, sp in rows if sp == split]
        pts = [(it, v) for it, v in pts if v is not None]
        return np.array(pts).reshape(-1, 2)

    accs = []
    for n in notes:
        m = re.search(r"iteration=(\d+) heldout_accuracy=([0-9.]+)", n)
        if m:
            accs.append((int(m.group(1)), float(m.group(2))))
    accs = np.array(accs).reshape(-1, 2)

    has_acc = len(accs) > 0
    fig, axes = plt.subplots(1, 2 if has_acc else 1, figsize=(9 if has_acc else 5, 3.2))
    ax = axes[0] if has_acc else axes
    for col, label in (("d", "discriminator"), ("g", "generator")):
        tr = series("train", col)
        if len(tr):
            ax.plot(tr[:, 0], tr[:, 1], label=f"{label} train", lw=1)
        he = series("heldout", col)
        if len(he):
            ax.plot(he[:, 0], he[:, 1], "o--", label=f"{label} held-out", ms=3, lw=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    ax.set_title(log_path.stem)
    if has_acc:
        ax2 = axes[1]
        ax2.plot(accs[:, 0], accs[:, 1], "o-", ms=3, lw=1)
        ax2.axhline(0.5, color="gray", lw=0.8, ls=":")
        ax2.set_xlabel("iteration")
        ax2.set_ylabel("held-out accuracy")
        ax2.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_alpha_figure(records_path, out_path=None) -> Path:
    """Histograms of the recorded adjustment parameters."""
    records_path = Path(records_path)
    out_path = Path(out_path) if out_path else records_path.with_suffix(".png")
    records = read_variant_records(records_path)
    arr = np.array([r.params.as_array() for r in records])
    fig, axes = plt.subplots(1, 3, figsize=(9, 2.8), sharey=True)
    for i, (ax, name) in enumerate(zip(axes, ("brightness", "saturation", "contrast"))):
        ax.hist(arr[:, i], bins=min(40, max(5, len(arr) // 4)), color="#4878a8")
        ax.set_xlim(-1.05, 1.05)
        ax.set_xlabel(name)
        ax.axvline(0.0, color="gray", lw=0.8, ls=":")
    axes[0].set_ylabel("count")
    fig.suptitle(f"adjustment parameters over {len(arr)} images", fontsize=10)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def render_swd_figure(labels: list[str], distances: list[float], out_path) -> Path:
    """Bar chart of distances, e.g. before vs after adaptation."""
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(range(len(distances)), distances, color="#4878a8", width=0.6)
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=9)
    ax.set_ylabel("sliced Wasserstein distance")
    for i, d in enumerate(distances):
        ax.text(i, d, f"{d:.4f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
