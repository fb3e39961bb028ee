"""Report figures: AP against crop count, precision/recall curves, crop overlays."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from foveadet.metrics import PRCurve  # noqa: E402

STYLE = {
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "font.size": 9,
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, bbox_inches="tight", metadata={"Software": None} if path.suffix == ".png" else None)
    plt.close(fig)
    return path


def plot_ap_vs_crops(report, path) -> Path:
    """Bar-and-line chart of AP (percent) for every crop count in a sweep."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        counts = [r.crops for r in report.rows]
        aps = [100 * r.ap for r in report.rows]
        ax.plot(counts, aps, marker="o", color="C0")
        for c, a in zip(counts, aps):
            ax.annotate(f"{a:.1f}", (c, a), textcoords="offset points", xytext=(0, 6), ha="center", fontsize=7)
        ax.set_xlabel("number of crops")
        ax.set_ylabel("AP (%)")
        ax.set_xticks(counts)
        ax.set_ylim(0, 105)
        return _save(fig, path)


def plot_pr_curves(curves: Sequence[tuple[str, PRCurve, float]], path) -> Path:
    """Overlay precision/recall curves; each entry is ``(label, curve, ap)``."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.5))
        for label, curve, ap in curves:
            if not curve.points:
                continue
            rec = [0.0] + curve.recall
            prec = [curve.precision[0]] + curve.precision
            ax.step(rec, prec, where="post", label=f"{label} (AP {100 * ap:.1f}%)")
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1.0)
        ax.set_ylim(0, 1.05)
        if curves:
            ax.legend(loc="lower left", fontsize=7)
        return _save(fig, path)


def plot_crop_plan(width: int, height: int, crops, path, boxes=(), anchors=True) -> Path:
    """Image-frame sketch of crop rectangles, optional detections on top."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 6.4 * height / width))
        ax.add_patch(Rectangle((0, 0), width, height, fill=False, color="0.3"))
        for k, c in enumerate(crops):
            ax.add_patch(Rectangle((c.c_u, c.c_v), c.c_w, c.c_h, fill=False, color=f"C{k % 10}", lw=1.2))
            if anchors and c.anchor is not None:
                ax.plot(c.anchor.u, c.anchor.v, "o", color="gold", ms=3)
        for b in boxes:
            ax.add_patch(Rectangle((b.x, b.y), b.w, b.h, fill=False, color="red", lw=0.8))
        ax.set_xlim(0, width)
        ax.set_ylim(height, 0)
        ax.set_aspect("equal")
        ax.grid(False)
        return _save(fig, path)
