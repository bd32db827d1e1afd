"""Figure rendering for reports: frame snapshots, x-t profiles, metric bars.

Everything draws on the Agg backend and writes straight to files; nothing
here opens a window.
"""

from __future__ import annotations

import os

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .phantom import frames_of  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "image.cmap": "gray",
    "image.interpolation": "nearest",
}

# PNG metadata is pinned so identical inputs give identical files
_SAVE_META = {"Software": None}


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)) or ".", exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata=_SAVE_META)
    plt.close(fig)
    return path


def time_profile(x, height, width, row):
    """x-t image: the chosen image row of every frame, frames along y."""
    return np.abs(frames_of(np.asarray(x), height, width)[:, row, :])


def frames_and_profiles(series: dict, height, width, frame=0, row=None, path="frames.png"):
    """Grid with one column per method: frame snapshot on top, time profile
    along ``row`` below. ``series`` maps method name -> Casorati matrix; the
    first entry sets the gray window."""
    row = height // 2 if row is None else row
    names = list(series)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(2, len(names), figsize=(2.4 * len(names), 5.2),
                                 squeeze=False)
        ref = np.abs(next(iter(series.values())))
        vmax = float(ref.max()) or 1.0
        for j, name in enumerate(names):
            img = np.abs(frames_of(np.asarray(series[name]), height, width)[frame])
            ax = axes[0, j]
            ax.imshow(img, vmin=0, vmax=vmax)
            ax.axhline(row, color="red", lw=0.6)
            ax.set_title(name)
            ax.set_axis_off()
            ax = axes[1, j]
            ax.imshow(time_profile(series[name], height, width, row).T, vmin=0, vmax=vmax,
                      aspect="auto")
            ax.set_xlabel("frame")
            ax.set_yticks([])
        axes[1, 0].set_ylabel(f"x along row {row}")
        return _save(fig, path)


def metric_bars(summaries: dict, path="metrics.png"):
    """Mean +/- std bar chart per metric; ``summaries`` maps method name ->
    ``MetricReport.summary()``."""
    names = list(summaries)
    labels = (("ser", "SER (dB)"), ("ssim", "SSIM"), ("hfen", "HFEN"))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 3, figsize=(9, 2.8))
        pos = np.arange(len(names))
        for ax, (key, label) in zip(axes, labels):
            mean = [summaries[n][key][0] for n in names]
            std = [summaries[n][key][1] for n in names]
            ax.bar(pos, mean, yerr=std, color="0.6", edgecolor="k", capsize=3)
            ax.set_xticks(pos)
            ax.set_xticklabels(names, rotation=30, ha="right")
            ax.set_title(label)
        fig.tight_layout()
        return _save(fig, path)


def objective_trace(data_term, prior_term, lam, path="trace.png"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3))
        it = np.arange(1, len(data_term) + 1)
        total = np.asarray(data_term) + lam * np.asarray(prior_term)
        ax.semilogy(it, data_term, "o-", label="data")
        if lam:
            ax.semilogy(it, lam * np.asarray(prior_term), "s-", label="lambda * prior")
        ax.semilogy(it, total, "k--", label="total")
        ax.set_xlabel("outer iteration")
        ax.legend()
        fig.tight_layout()
        return _save(fig, path)


def denoising_example(clean, noisy, denoised, path="denoise.png"):
    """Overlay of one navigator profile: clean, corrupted, network output."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 2.6))
        t = np.arange(len(clean))
        ax.plot(t, noisy, color="0.7", lw=0.8, label="noisy")
        ax.plot(t, clean, "k", lw=1.0, label="clean")
        ax.plot(t, denoised, "r", lw=0.9, label="denoised")
        ax.set_xlabel("frame")
        ax.legend(loc="upper right")
        fig.tight_layout()
        return _save(fig, path)
