"""Figure renderers for the CLI report paths.

Every function writes a PNG next to the delimited output and returns the
path. Rendering uses the Agg backend so it works headless.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_gram_heatmap(gram, path):
    """Heatmap of a GramMatrix with its kernel descriptor as the title."""
    fig, ax = plt.subplots(figsize=(5.2, 4.4))
    im = ax.imshow(gram.values, cmap="viridis")
    fig.colorbar(im, ax=ax, shrink=0.85)
    n = gram.size
    if n <= 12:
        ax.set_xticks(range(n), gram.ids, rotation=45, ha="right", fontsize=7)
        ax.set_yticks(range(n), gram.ids, fontsize=7)
    ax.set_title(gram.kernel_descriptor or "gram", fontsize=8)
    return _finish(fig, path)


def save_sensitivity_plot(profiles, path):
    """Normalized sensitivity versus time step, one line per labeled profile.

    profiles: list of (label, SensitivityProfile).
    """
    fig, ax = plt.subplots(figsize=(5.6, 3.6))
    for label, prof in profiles:
        steps = np.arange(1, prof.length + 1)
        ax.plot(steps, prof.normalized, marker="o", markersize=2.5, label=label)
    ax.set_xlabel("time step t")
    ax.set_ylabel("s(t) / max s")
    ax.set_ylim(bottom=0)
    ax.legend(fontsize=7)
    ax.set_title("input sensitivity profile", fontsize=9)
    return _finish(fig, path)


def save_convergence_plot(report, path):
    """Median relative kernel error versus width on log-log axes, with the
    fitted slope in the legend."""
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(report.widths, report.median_rel_error, marker="o",
              label=f"median (slope {report.slope:.2f})")
    ax.set_xlabel("width n")
    ax.set_ylabel("relative error")
    kind = "tied" if report.tied else "untied"
    ax.set_title(f"finite-width convergence ({kind} weights)", fontsize=9)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def save_drift_plot(reports, path):
    """Supremum parameter and kernel drift versus width.

    reports: list of (width, DriftReport) sorted by width.
    """
    widths = [w for w, _ in reports]
    param = [r.param_drift_sup for _, r in reports]
    gramd = [r.gram_drift_sup for _, r in reports]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(widths, param, marker="o", label="sup ||theta_s - theta_0|| / sqrt(n)")
    ax.loglog(widths, gramd, marker="s", label="sup ||K_s - K_0||")
    ax.set_xlabel("width n")
    ax.set_ylabel("drift over training")
    ax.set_title("lazy-training drift", fontsize=9)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def save_snr_bars(names, snr_means, snr_stds, path):
    """Mean test SNR per model with one-standard-deviation error bars."""
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    pos = np.arange(len(names))
    finite = [0.0 if not np.isfinite(v) else v for v in snr_means]
    ax.bar(pos, finite, yerr=snr_stds, capsize=3)
    ax.set_xticks(pos, names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("test SNR (dB)")
    ax.set_title("next-step regression", fontsize=9)
    return _finish(fig, path)
