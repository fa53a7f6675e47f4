"""Report figures rendered with the Agg backend.

PNG metadata is stripped so identical inputs give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "uqtrack",
}
_PNG_META = {"Software": None}


def _save(fig, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)


def plot_hota_alpha(alphas, hota_a, deta_a, assa_a, path, title: str = "") -> None:
    """HOTA, DetA and AssA against the localization threshold."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 3.0), layout="constrained")
        ax.plot(alphas, hota_a, "o-", ms=3, label="HOTA")
        ax.plot(alphas, deta_a, "s--", ms=3, label="DetA")
        ax.plot(alphas, assa_a, "^:", ms=3, label="AssA")
        ax.set_xlabel(r"localization threshold $\alpha$")
        ax.set_ylabel("score")
        ax.set_ylim(0, 1.02)
        ax.set_xlim(0, 1)
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, loc="lower left")
        _save(fig, path)


def plot_ablation(labels: Sequence[str], metrics: Mapping[str, Sequence[float]], path, title: str = "") -> None:
    """Grouped bars, one group per ablation row and one bar per metric."""
    names = list(metrics)
    x = np.arange(len(labels))
    width = 0.8 / max(len(names), 1)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6.0, 3.2), layout="constrained")
        for k, name in enumerate(names):
            vals = np.array([np.nan if v is None else v for v in metrics[name]], float)
            ax.bar(x + (k - (len(names) - 1) / 2) * width, vals, width, label=name)
        ax.set_xticks(x, labels, rotation=30, ha="right")
        ax.set_ylabel("score")
        ax.set_ylim(0, 1.15)
        if title:
            ax.set_title(title)
        # legend sits in the headroom above the bars, clear of the title
        ax.legend(frameon=False, ncols=len(names), loc="upper center")
        _save(fig, path)
