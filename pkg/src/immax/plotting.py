"""PNG figures for the report paths; the numbers live in the CSV/JSON outputs."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = {"svm": "#555555", "immax": "#d62728", "ldam": "#1f77b4"}
RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "figure.dpi": 100,
}
# keep the PNG bytes free of version strings
_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=_META)
    plt.close(fig)
    return path


def plot_figure1(result, path: str | Path) -> Path:
    """Training points with the three linear boundaries."""
    X, y = result.train.X, result.train.y
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 4.0))
        ax.scatter(X[y == 0, 0], X[y == 0, 1], s=4, c="#9ecae1", label=f"+1 (m={int((y == 0).sum())})")
        ax.scatter(X[y == 1, 0], X[y == 1, 1], s=14, c="#fd8d3c", marker="^",
                   label=f"-1 (m={int((y == 1).sum())})")
        lo, hi = X[:, 1].min() - 0.5, X[:, 1].max() + 0.5
        xs = np.linspace(lo, hi, 2)
        for b in result.boundaries:
            w1, w2 = b.w
            if abs(w1) > 1e-12:
                ax.plot(-(b.b + w2 * xs) / w1, xs, color=COLORS.get(b.name, "k"),
                        label=f"{b.name} (alpha={b.alpha:.3f}, test err={b.test_error:.2e})")
        ax.set_ylim(lo, hi)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
        ax.legend(loc="best", frameon=False)
        return _save(fig, path)


def plot_bench_binary(summary: dict, path: str | Path) -> Path:
    names = ["svm", "cv", "immax_center", "ldam"]
    means = [summary[f"error_{n}"] for n in names]
    stds = [summary[f"error_{n}_std"] for n in names]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.bar(names, means, yerr=stds, color=["#555555", "#d62728", "#ff9896", "#1f77b4"], capsize=3)
        ax.set_ylabel("mean test zero-one error")
        return _save(fig, path)


def plot_bench_multi(summary: dict, path: str | Path) -> Path:
    names = list(summary)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.0))
        ax.bar(names, [summary[n]["mean"] for n in names],
               yerr=[summary[n]["std"] for n in names], color="#6baed6", capsize=3)
        ax.set_ylabel("mean test zero-one error")
        ax.tick_params(axis="x", rotation=30)
        return _save(fig, path)


def plot_trace(trace, path: str | Path) -> Path:
    epochs = [r.epoch for r in trace]
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(epochs, [r.objective for r in trace], color="#d62728")
        ax.set_xlabel("epoch")
        ax.set_ylabel("objective")
        ax2 = ax.twinx()
        ax2.plot(epochs, [r.train_error for r in trace], color="#555555", ls="--")
        ax2.set_ylabel("train error")
        return _save(fig, path)
