"""Render sweep curves to image files.

Figures are drawn with an explicit ``Figure`` object so no global pyplot
backend is touched; the output format follows the file extension.
"""

from __future__ import annotations

from matplotlib.figure import Figure

from .threshold import SweepResult

_X_LABELS = {"distance": "distance threshold", "prior": "foreground prior"}


def render_sweep(result: SweepResult, path, title: str | None = None) -> None:
    """Plot CE (blue, left axis) and Dice (orange, right axis) over the grid.

    Dashed verticals mark the ideal operating point (black) and the
    CE-minimizing grid point (gray).
    """
    fig = Figure(figsize=(5.0, 3.4))
    ax = fig.subplots()
    ax2 = ax.twinx()

    ax.plot(result.grid, result.ce, color="tab:blue", label="CE")
    ax2.plot(result.grid, result.dice, color="tab:orange", label="Dice")
    ax.axvline(result.ideal, color="black", linestyle="--", linewidth=1.0, label="ideal")
    ax.axvline(
        result.argmin_ce, color="gray", linestyle="--", linewidth=1.0, label="min CE"
    )

    ax.set_xlabel(_X_LABELS.get(result.kind, result.kind))
    ax.set_ylabel("cross-entropy", color="tab:blue")
    ax2.set_ylabel("Dice", color="tab:orange")
    ax2.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    handles, labels = ax.get_legend_handles_labels()
    handles2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(handles + handles2, labels + labels2, loc="center right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
