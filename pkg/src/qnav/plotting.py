"""Figures for sweep reports: learning curves and circuit spectra."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
    "savefig.dpi": 150,
}

# PNG metadata is fixed so repeated runs write identical bytes
_METADATA = {"Software": None}


def new_figure(width: float = 6.0, height: float | None = None, **subplot_kw):
    if height is None:
        height = width * (np.sqrt(5.0) - 1.0) / 2.0
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(width, height), **subplot_kw)
    return fig, ax


def save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        fig.savefig(path, metadata=_METADATA)
    plt.close(fig)
    return path


def plot_learning_curves(curves: dict, path, title: str = "") -> Path:
    """Mean evaluation reward of the best runs with its 95% band, one line per config.

    Negative rewards in ``curves`` are expected to be rescaled already.
    """
    with plt.rc_context(RC):
        fig, ax = new_figure()
        for label, c in curves.items():
            if len(c.train_step) == 0:
                continue
            line, = ax.plot(c.train_step, c.mean_reward_rescaled, label=label)
            ax.fill_between(c.train_step, c.mean_reward_rescaled - c.ci95,
                            c.mean_reward_rescaled + c.ci95, color=line.get_color(),
                            alpha=0.2, linewidth=0)
        ax.axhline(0.0, color="0.6", linewidth=0.6)
        ax.set_xlabel("training step")
        ax.set_ylabel("mean evaluation reward (negative x0.1)")
        if title:
            ax.set_title(title)
        if curves:
            ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
    return save(fig, path)


def plot_spectrum(spectrum, path, layers: int) -> Path:
    with plt.rc_context(RC):
        fig, ax = new_figure(4.5)
        ax.bar(spectrum.frequencies, np.abs(spectrum.coefficients), width=0.6, color="0.3")
        ax.axvspan(-layers - 0.5, layers + 0.5, color="tab:green", alpha=0.1)
        ax.set_xlabel("frequency")
        ax.set_ylabel("|c|")
        ax.set_title(f"L = {layers}, residual {spectrum.residual:.1e}")
        fig.tight_layout()
    return save(fig, path)
