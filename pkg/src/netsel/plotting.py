"""SVG figures written next to the CLI's delimited outputs.

Figures are rendered with a fixed hash salt and no date metadata so reruns
produce byte-identical files.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .core import Backend  # noqa: E402

STYLE = {
    "svg.hashsalt": "netsel",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.fontsize": 7,
    "legend.frameon": False,
}

BACKEND_MARKERS = {
    Backend.CPU: "o",
    Backend.CPU_AVX2: "s",
    Backend.GPU: "^",
    Backend.GPU_TRT: "D",
    Backend.GPU_TRT_DYN: "v",
}


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)


def frontier_scatter(profiles, frontier, metric, path):
    """Latency vs accuracy: colour per model, marker per backend, size per batch."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        models = sorted({p.model_name for p in profiles})
        cmap = plt.get_cmap("tab20")
        colors = {m: cmap(i % 20) for i, m in enumerate(models)}
        for p in profiles:
            ax.scatter(
                p.latency_ms,
                p.metric(metric),
                s=12 + 6 * p.batch_size,
                marker=BACKEND_MARKERS[p.backend],
                color=colors[p.model_name],
                alpha=0.75,
                linewidths=0,
            )
        ax.plot(
            [fp.latency_ms for fp in frontier],
            [fp.accuracy for fp in frontier],
            color="black",
            lw=0.8,
            drawstyle="steps-post",
            label="Pareto frontier",
        )
        for m in models:
            ax.scatter([], [], color=colors[m], s=20, label=m)
        for backend, marker in BACKEND_MARKERS.items():
            if any(p.backend is backend for p in profiles):
                ax.scatter([], [], color="grey", marker=marker, s=20, label=backend.value)
        ax.set_xscale("log")
        ax.set_xlabel("latency per frame [ms]")
        ax.set_ylabel(f"mAP ({metric})")
        ax.legend(loc="center left", bbox_to_anchor=(1.0, 0.5))
        _save(fig, path)


def distribution_pie(distribution, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        names = list(distribution)
        ax.pie(
            [distribution[n].count for n in names],
            labels=names,
            autopct="%1.1f%%",
            startangle=90,
            counterclock=False,
            textprops={"fontsize": 7},
        )
        ax.set_aspect("equal")
        _save(fig, path)


def stream_trace(trace, path):
    """Three stacked panels: latency, overall mAP, and each tracked metric."""
    frames = [e.frame_index for e in trace]
    tracked = list(trace[0].tracked) if trace else []
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(3, 1, figsize=(6.4, 6.0), sharex=True)
        axes[0].step(frames, [e.latency_ms for e in trace], where="post", lw=1)
        axes[0].set_yscale("log")
        axes[0].set_ylabel("latency [ms]")
        axes[1].step(frames, [e.map_overall for e in trace], where="post", lw=1)
        axes[1].set_ylabel("mAP (overall)")
        if tracked:
            for m in tracked:
                axes[2].step(frames, [e.tracked[m] for e in trace], where="post", lw=1, label=m)
            axes[2].legend()
            axes[2].set_ylabel("mAP (tracked)")
        else:
            axes[2].step(frames, [e.objective for e in trace], where="post", lw=1)
            axes[2].set_ylabel("objective")
        axes[2].set_xlabel("frame")
        switches = [b.frame_index for a, b in zip(trace, trace[1:]) if a.network_id != b.network_id]
        for ax in axes:
            for f in switches:
                ax.axvline(f, color="grey", lw=0.6, ls="--")
        _save(fig, path)


def accuracy_bars(reports, path):
    """One bar per classifier plus the Majority baseline bar."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.2))
        names = [r.kind for r in reports] + ["majority baseline"]
        values = [r.accuracy for r in reports] + [reports[0].baseline_accuracy if reports else 0.0]
        bars = ax.bar(names, values, color=["tab:blue"] * len(reports) + ["tab:grey"])
        ax.bar_label(bars, fmt="%.2f", fontsize=7)
        ax.set_ylim(0, 1)
        ax.set_ylabel("validation accuracy")
        _save(fig, path)
