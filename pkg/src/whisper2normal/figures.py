"""Figure rendering for training runs and evaluation reports.

Everything draws through the Agg backend and writes PNG files next to the
delimited outputs, so runs on headless machines produce the same artifacts.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import dsp

LOSS_KEYS = ("adversarial_G", "second_adversarial", "cycle", "identity", "total_G", "g_loss_metric")


def save_loss_curves(loss_log_path: str | Path, out_path: str | Path) -> Path:
    """Per-epoch mean loss components from a training loss log."""
    epochs = []
    with open(loss_log_path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            if row.get("kind") == "epoch":
                epochs.append(row)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if epochs:
        xs = [r["epoch"] for r in epochs]
        for key in LOSS_KEYS:
            ax.plot(xs, [r[key] for r in epochs], label=key, linewidth=1.2)
        ax.legend(fontsize=8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.set_title("training losses")
    return _save(fig, out_path)


def save_results_chart(rows: list[dict], out_path: str | Path) -> Path:
    """Bar chart of mean PESQ and G-Loss per configuration row."""
    labels = [
        f"{r['mask_percent']}%/{r['window_frames']}/{'VAD' if r['vad'] else 'no VAD'}"
        for r in rows
    ]
    pesq = [r["pesq"] if r["pesq"] is not None else 0.0 for r in rows]
    gloss = [r["g_loss"] if r["g_loss"] is not None else 0.0 for r in rows]
    x = np.arange(len(rows))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.bar(x, pesq, color="#3b6ea5")
    ax1.set_xticks(x, labels, rotation=20, ha="right", fontsize=8)
    ax1.set_ylabel("mean PESQ")
    ax2.bar(x, gloss, color="#a54e3b")
    ax2.set_xticks(x, labels, rotation=20, ha="right", fontsize=8)
    ax2.set_ylabel("G-Loss (final epoch)")
    fig.suptitle("objective results by configuration")
    return _save(fig, out_path)


def save_spectrogram_triptych(
    whisper: dsp.MelSpectrogram,
    converted: dsp.MelSpectrogram,
    normal: dsp.MelSpectrogram,
    out_path: str | Path,
) -> Path:
    """Side-by-side whisper / converted / normal log-mel panels."""
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5), sharey=True)
    for ax, spec, title in zip(axes, (whisper, converted, normal), ("whisper", "converted", "normal")):
        ax.imshow(spec.values, origin="lower", aspect="auto", cmap="magma")
        ax.set_title(title)
        ax.set_xlabel("frame")
    axes[0].set_ylabel("mel bin")
    return _save(fig, out_path)


def _save(fig, out_path: str | Path) -> Path:
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
