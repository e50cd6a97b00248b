"""Figure rendering for CLI runs: training curves, latent scatter plots, and
per-task accuracy bars.  All figures are written to files (Agg backend)."""

from __future__ import annotations

import csv
import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def loss_curve(log_csv_path: str, out_png: str) -> None:
    """Per-epoch loss components from a train_log.csv file."""
    with open(log_csv_path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"no epochs logged in {log_csv_path}")
    epochs = [int(r["epoch"]) for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for column in ("total", "L_r", "L_y_total", "L_c"):
        ax.plot(epochs, [float(r[column]) for r in rows], label=column)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss component")
    ax.set_title("training objective")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def _pca_2d(X: np.ndarray) -> np.ndarray:
    X = X - X.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    return X @ vt[:2].T


def latent_scatter(latents_jsonl_path: str, out_png: str) -> None:
    """2-D PCA scatter of dumped latent means, colored by side (label/content)."""
    rows = []
    with open(latents_jsonl_path) as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    if not rows:
        raise ValueError(f"no latent rows in {latents_jsonl_path}")
    X = np.array([r["mean"] for r in rows])
    P = _pca_2d(X) if X.shape[1] > 2 else X
    kinds = np.array([r["side"] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 6))
    for kind, marker in (("label", "o"), ("content", "x")):
        sel = kinds == kind
        if sel.any():
            ax.scatter(P[sel, 0], P[sel, 1], s=10, marker=marker, label=f"z_{kind[0]}", alpha=0.6)
    ax.set_title("latent posterior means (2-D PCA)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)


def per_task_bars(per_task_csv_path: str, out_png: str) -> None:
    """Mean per-task accuracy bars (with replicate scatter) from per_task.csv."""
    with open(per_task_csv_path) as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"no rows in {per_task_csv_path}")
    by_task = {}
    for r in rows:
        by_task.setdefault(int(r["task"]), []).append(float(r["accuracy"]))
    tasks = sorted(by_task)
    means = [np.mean(by_task[t]) for t in tasks]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(tasks, means, color="tab:blue", alpha=0.7)
    for t in tasks:
        ax.scatter([t] * len(by_task[t]), by_task[t], color="black", s=12, zorder=3)
    ax.set_xlabel("task")
    ax.set_ylabel("accuracy on all seen test sets")
    ax.set_ylim(0, 1)
    ax.set_xticks(tasks)
    ax.set_title("continual per-task accuracy")
    fig.tight_layout()
    fig.savefig(out_png, dpi=120)
    plt.close(fig)
