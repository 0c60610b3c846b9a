"""Static figures for report curves (matplotlib, Agg backend)."""
from __future__ import annotations

from typing import Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

GOLDEN = (5 ** 0.5 - 1) / 2
WIDTH_IN = 5.0

STYLE = {
    "figure.figsize": (WIDTH_IN, WIDTH_IN * GOLDEN),
    "figure.dpi": 120,
    "axes.labelsize": 10,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.bbox": "tight",
    # fixed metadata keeps reruns byte-stable
    "svg.hashsalt": "kramerslab",
}


def plot_curves(path, curves: Sequence[Tuple[Sequence[float], Sequence[float], str]], xlabel: str,
                ylabel: str, title: str = "", logx: bool = False, logy: bool = False,
                markers: bool = False) -> None:
    """Save one figure with a line per ``(x, y, label)`` entry."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for x, y, label in curves:
            ax.plot(x, y, "o-" if markers else "-", ms=3, label=label or None)
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if logx:
            ax.set_xscale("log")
        if logy:
            ax.set_yscale("log")
        if any(label for _, _, label in curves):
            ax.legend(frameon=False)
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
