"""Figure rendering for restoration and sweep reports.

Figures are written next to the numeric outputs as PNG.  Everything is
pinned (figure size, dpi, no software metadata tag) so that rerunning a
command reproduces the image bytes exactly.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render_restore", "render_sweep"]

_SAVE = dict(dpi=110, metadata={"Software": None})


def _panel(ax, grid, title):
    if grid.shape[1] == 1:
        ax.plot(grid[:, 0], lw=1.0, color="#1f6f8b")
        ax.set_xlim(0, grid.shape[0] - 1)
    else:
        ax.imshow(grid, cmap="gray", vmin=0.0, vmax=255.0, interpolation="nearest")
        ax.set_xticks([])
        ax.set_yticks([])
    ax.set_title(title, fontsize=9)


def render_restore(path, y, estimate, refit, truth=None, caption: str = "") -> None:
    """Observation / estimate / refit panels, plus the truth when known."""
    panels = [("observation", y), ("estimate", estimate), ("refit", refit)]
    if truth is not None:
        panels.append(("truth", truth))
    fig, axes = plt.subplots(1, len(panels), figsize=(3.0 * len(panels), 3.4))
    for ax, (title, grid) in zip(axes, panels):
        _panel(ax, grid, title)
    if caption:
        fig.suptitle(caption, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)


def render_sweep(path, records, param_label: str) -> None:
    """MSE and PSNR curves of estimate vs refit across the grid."""
    params = [r.param for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax1.plot(params, [r.mse_orig for r in records], "o-", ms=3, label="estimate", color="#b04a4a")
    ax1.plot(params, [r.mse_refit for r in records], "s-", ms=3, label="refit", color="#1f6f8b")
    ax1.set_xscale("log")
    ax1.set_xlabel(param_label)
    ax1.set_ylabel("MSE")
    ax1.legend(fontsize=8)
    ax2.plot(params, [r.psnr_orig for r in records], "o-", ms=3, label="estimate", color="#b04a4a")
    ax2.plot(params, [r.psnr_refit for r in records], "s-", ms=3, label="refit", color="#1f6f8b")
    ax2.set_xscale("log")
    ax2.set_xlabel(param_label)
    ax2.set_ylabel("PSNR [dB]")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE)
    plt.close(fig)
