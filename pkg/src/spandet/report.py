"""Render training and sweep results to CSV and PNG files."""
from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_history_csv(path, history) -> None:
    """One row per epoch: epoch, loss, lr, dev_f1 (blank when not evaluated)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "lr", "dev_f1"])
        for row in history:
            dev = "" if row.dev_f1 is None else f"{row.dev_f1:.6f}"
            writer.writerow([row.epoch, f"{row.loss:.6f}", f"{row.lr:.8g}", dev])


def save_training_figure(path, history) -> None:
    epochs = [r.epoch for r in history]
    losses = [r.loss for r in history]
    fig, ax = plt.subplots(figsize=(7, 4.2))
    ax.plot(epochs, losses, color="tab:blue", lw=1.2, label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss", color="tab:blue")
    ax.tick_params(axis="y", labelcolor="tab:blue")
    evals = [(r.epoch, r.dev_f1) for r in history if r.dev_f1 is not None]
    if evals:
        ax2 = ax.twinx()
        xs, ys = zip(*evals)
        ax2.plot(xs, ys, color="tab:red", lw=1.2, marker="o", ms=3,
                 label="dev F1")
        ax2.set_ylabel("dev span F1", color="tab:red")
        ax2.tick_params(axis="y", labelcolor="tab:red")
        ax2.set_ylim(0.0, 1.05)
    ax.set_title("training progress")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_sweep_figure(path, rows) -> None:
    """Precision / recall / F1 (percent) against decision threshold."""
    ts = [r.threshold for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.plot(ts, [100.0 * r.prf.precision for r in rows], marker="o", ms=3.5,
            label="precision")
    ax.plot(ts, [100.0 * r.prf.recall for r in rows], marker="s", ms=3.5,
            label="recall")
    ax.plot(ts, [100.0 * r.prf.f1 for r in rows], marker="^", ms=3.5,
            label="F1")
    ax.set_xlabel("confidence threshold")
    ax.set_ylabel("score (%)")
    ax.set_title("threshold sweep")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
