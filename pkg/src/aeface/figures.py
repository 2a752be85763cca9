"""Matplotlib report figures written next to the CSV/JSON artifacts.

Only the Agg backend is used and PNG metadata is stripped so that reruns
produce identical bytes.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .viz import PALETTE  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "figure.dpi": 100,
}


def _save(fig, path):
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def loss_curves(histories, path, ylabel="loss", title=None):
    """``histories`` maps a legend label to a per-epoch loss sequence."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for label, h in histories.items():
            ax.plot(np.arange(1, len(h) + 1), h, label=label, lw=1.2)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(histories) > 1:
            ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def scatter(coords, labels, path, title=None):
    coords = np.asarray(coords)
    labels = np.asarray(labels)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        colors = [PALETTE[int(l) % len(PALETTE)] for l in labels]
        ax.scatter(coords[:, 0], coords[:, 1], c=colors, s=10, lw=0)
        ax.set_xticks([])
        ax.set_yticks([])
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return _save(fig, path)


def score_histogram(scores, same, path, thresholds=()):
    scores = np.asarray(scores)
    same = np.asarray(same, dtype=bool)
    bins = np.linspace(scores.min(), scores.max(), 41) if scores.max() > scores.min() else 10
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.hist(scores[same], bins=bins, alpha=0.6, label="matched", color=PALETTE[0])
        ax.hist(scores[~same], bins=bins, alpha=0.6, label="mismatched", color=PALETTE[1])
        for t in thresholds:
            ax.axvline(t, color="k", lw=0.5, alpha=0.5)
        ax.set_xlabel("cosine score")
        ax.set_ylabel("pairs")
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)
