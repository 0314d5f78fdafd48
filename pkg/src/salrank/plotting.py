"""Static figures written next to the CSV tables.

Everything renders through the Agg backend with PNG metadata stripped, so
identical inputs give identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_curves(precision, recall, tpr, fpr, path, title: str = "") -> Path:
    """PR and ROC curves side by side."""
    with plt.rc_context(STYLE):
        fig, (ax_pr, ax_roc) = plt.subplots(1, 2, figsize=(7.0, 3.2))
        ax_pr.plot(recall, precision, color="C0", lw=1.2)
        ax_pr.set_xlabel("recall")
        ax_pr.set_ylabel("precision")
        ax_pr.set_xlim(0, 1)
        ax_pr.set_ylim(0, 1.02)
        ax_pr.set_title("PR")
        ax_roc.plot(np.r_[0.0, np.asarray(fpr)[::-1], 1.0],
                    np.r_[0.0, np.asarray(tpr)[::-1], 1.0], color="C1", lw=1.2)
        ax_roc.plot([0, 1], [0, 1], color="0.7", lw=0.8, ls="--")
        ax_roc.set_xlabel("false positive rate")
        ax_roc.set_ylabel("true positive rate")
        ax_roc.set_xlim(0, 1)
        ax_roc.set_ylim(0, 1.02)
        ax_roc.set_title("ROC")
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        return _save(fig, path)


def plot_sweep(rows, path) -> Path:
    xs = [r.value for r in rows]
    ys = [np.nan if r.sor is None else r.sor for r in rows]
    name = rows[0].parameter if rows else ""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.8))
        ax.plot(xs, ys, marker="o", ms=3.5, lw=1.0, color="C0")
        ax.set_xlabel(name)
        ax.set_ylabel("mean SOR")
        ax.set_ylim(0, 1.02)
        fig.tight_layout()
        return _save(fig, path)


def plot_size_rank(stats, path) -> Path:
    """Instance-size fraction histograms, one panel per rank."""
    ranks = sorted(stats.sizes_by_rank)
    bins = np.linspace(0.0, 1.0, 21)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(ranks), figsize=(1.8 * len(ranks), 2.4), sharey=True)
        for ax, r in zip(np.atleast_1d(axes), ranks):
            ax.hist(stats.sizes_by_rank[r], bins=bins, color=f"C{r - 1}")
            ax.set_title(f"rank {r}")
            ax.set_xlabel("size fraction")
        np.atleast_1d(axes)[0].set_ylabel("instances")
        fig.tight_layout()
        return _save(fig, path)


def plot_sor_hist(values, path) -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 2.6))
        ax.hist([v for v in values if v is not None], bins=np.linspace(0, 1, 21), color="C2")
        ax.set_xlabel("per-image SOR")
        ax.set_ylabel("images")
        fig.tight_layout()
        return _save(fig, path)
