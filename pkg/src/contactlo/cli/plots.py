"""Static SVG plots of log count against time."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def emit_plot(series: dict, reference_slope: float, path, title: str = "", xlabel: str = "t") -> None:
    """Scatter each series on a log axis with its least-squares line, plus a
    dashed reference line of the given slope through the first point."""
    if not series:
        raise ValueError("nothing to plot: empty series")
    clean = {}
    for label, (ts, counts) in series.items():
        ts = np.asarray(ts, dtype=float)
        counts = np.asarray(counts, dtype=float)
        if ts.size == 0 or ts.size != counts.size:
            raise ValueError(f"series {label!r} is empty or ragged")
        if np.any(counts <= 0):
            raise ValueError(f"series {label!r} has non-positive counts; cannot take logs")
        clean[label] = (ts, counts)

    with plt.rc_context({"svg.hashsalt": "contactlo", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(6, 4))
        for label, (ts, counts) in clean.items():
            pts = ax.plot(ts, counts, "o", label=str(label))[0]
            if ts.size >= 2:
                slope, icpt = np.polyfit(ts, np.log(counts), 1)
                ax.plot(ts, np.exp(icpt + slope * ts), "-", color=pts.get_color(), linewidth=1)
        ts0, c0 = next(iter(clean.values()))
        grid = np.linspace(min(s[0].min() for s in clean.values()), max(s[0].max() for s in clean.values()), 2)
        ax.plot(grid, c0[0] * np.exp(reference_slope * (grid - ts0[0])), "k--", linewidth=1, label=f"slope {reference_slope:g}")
        ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("count")
        if title:
            ax.set_title(title)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
