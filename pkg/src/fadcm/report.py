"""Regret-curve figures written next to the CSV output."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .experiment import SummaryStats  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.figsize": (4.2, 3.0),
    "savefig.dpi": 150,
}


def plot_regret(summaries: Sequence[SummaryStats], path, title: Optional[str] = None) -> Path:
    """Mean cumulative regret with its 95% sampled band, one curve per summary.

    Each case's config hash and master seed go into the PNG text metadata.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for s in summaries:
            label = f"{s.config.case_label} ({s.config.policy})"
            line, = ax.plot(s.checkpoints, s.mean, lw=1.4, label=label)
            ax.fill_between(s.checkpoints, s.lo95, s.hi95, color=line.get_color(), alpha=0.2, lw=0)
        ax.set_xlabel("round t")
        ax.set_ylabel("cumulative regret")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, loc="upper left")
        fig.tight_layout()
        provenance = {f"{s.config.name}_{s.config.case_label}":
                      {"config_hash": s.config.config_hash(), "master_seed": s.config.seed}
                      for s in summaries}
        fig.savefig(path, metadata={"Description": json.dumps(provenance, sort_keys=True)})
        plt.close(fig)
    return path
