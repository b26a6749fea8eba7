"""Report figures rendered next to the delimited output files."""

from __future__ import annotations

import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_STYLE = {
    "figure.figsize": (6.4, 4.2),
    "figure.dpi": 130,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def save_clustering_figure(instance, clustering, path) -> str:
    """Scatter of the points colored by cluster, centroids marked."""
    path = pathlib.Path(path)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        pts = instance.points
        labels = clustering.assignment
        cmap = plt.get_cmap("tab10")
        for c in range(clustering.k):
            mem = labels == c
            ax.scatter(pts[mem, 0], pts[mem, 1], s=14, color=cmap(c % 10), label=f"cluster {c}")
        cen = np.asarray(clustering.centroids)
        ax.scatter(cen[:, 0], cen[:, 1], marker="x", s=60, color="black", zorder=3)
        ax.set_title(f"{instance.name}: k={clustering.k}, cost={clustering.cost:.6g}")
        ax.set_aspect("equal", adjustable="datalim")
        if clustering.k <= 10:
            ax.legend(loc="best", fontsize=7)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return str(path)


def save_ablation_figures(rows: list[dict], outdir, axis: str) -> list[str]:
    """Bar charts comparing the swept settings on the headline metrics."""
    outdir = pathlib.Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    settings = [str(r["setting"]) for r in rows]
    panels = [
        ("m_end", "final aggregated rows"),
        ("m_avg", "mean aggregated rows per iteration"),
        ("q_updates", "partition updates"),
        ("master_time_fraction", "master share of runtime"),
        ("cg_iterations", "column generation iterations"),
    ]
    paths = []
    with plt.rc_context(_STYLE):
        for key, title in panels:
            vals = [float(r[key]) for r in rows]
            fig, ax = plt.subplots()
            ax.bar(settings, vals, color=plt.get_cmap("tab10")(range(len(settings))))
            ax.set_xlabel(axis)
            ax.set_ylabel(key)
            ax.set_title(title)
            fig.tight_layout()
            out = outdir / f"ablation_{axis}_{key}.png"
            fig.savefig(out)
            plt.close(fig)
            paths.append(str(out))
    return paths
