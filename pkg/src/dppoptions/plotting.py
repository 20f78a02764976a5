"""Static SVG aerial views of option trajectories and ablation bar charts."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.collections import PatchCollection  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

# fixed salt and no date keep SVG output byte-identical across runs
matplotlib.rcParams["svg.hashsalt"] = "dppoptions"
matplotlib.rcParams["svg.fonttype"] = "none"
SVG_META = {"Date": None, "Creator": None}


def option_color(c, n_options):
    """Deterministic hex colour for option ``c``."""
    cmap = plt.get_cmap("tab10" if n_options <= 10 else "hsv")
    if n_options <= 10:
        rgba = cmap(c % 10)
    else:
        rgba = cmap(c / n_options)
    return matplotlib.colors.to_hex(rgba)


def _draw_maze(ax, maze):
    walls = [Rectangle((c - 0.5, maze.height - 1 - r - 0.5), 1, 1) for r, c in sorted(maze.walls)]
    ax.add_collection(PatchCollection(walls, facecolor="#404040", edgecolor="none", gid="walls"))
    for cells, colour, name in ((maze.starts, "#2ca02c", "start"), (maze.goals, "#d62728", "goal")):
        for r, c in cells:
            ax.add_patch(Rectangle((c - 0.5, maze.height - 1 - r - 0.5), 1, 1,
                                   facecolor=colour, alpha=0.35, edgecolor="none", gid=name))
    ax.set_xlim(-0.5, maze.width - 0.5)
    ax.set_ylim(-0.5, maze.height - 0.5)
    ax.set_aspect("equal")
    ax.set_xticks([])
    ax.set_yticks([])


def plot_trajectories(path, maze, records, n_options=None, title=None):
    """Maze plus one coloured line per trajectory; records hold state indices."""
    if n_options is None:
        n_options = max((r.option for r in records), default=-1) + 1
    fig, ax = plt.subplots(figsize=(maze.width * 0.3 + 1, maze.height * 0.3 + 1))
    _draw_maze(ax, maze)
    for i, rec in enumerate(records):
        xy = [maze.xy(s) for s in rec.states]
        xs = [p[0] for p in xy]
        ys = [p[1] for p in xy]
        ax.plot(xs, ys, color=option_color(rec.option, max(n_options, 1)), lw=1.2, alpha=0.8,
                gid=f"traj-{i}-option-{rec.option}")
    if title:
        ax.set_title(title)
    fig.savefig(path, format="svg", metadata=SVG_META, bbox_inches="tight")
    plt.close(fig)


def plot_ablation(path, table):
    """Grouped bars of coverage, diversity and distance for each ablation.

    ``table`` maps ablation name to a dict of metric -> (mean, std).
    """
    keys = ("coverage", "diversity", "mean_distance")
    names = list(table)
    fig, axes = plt.subplots(1, len(keys), figsize=(3.2 * len(keys), 3))
    for ax, key in zip(axes, keys):
        means = [table[n][key][0] for n in names]
        errs = [table[n][key][1] for n in names]
        ax.bar(range(len(names)), means, yerr=errs, color=[option_color(i, 10) for i in range(len(names))],
               capsize=3, gid=f"bars-{key}")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names)
        ax.set_title(key.replace("_", " "))
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)


def plot_curves(path, reports_by_name, field="total"):
    """Learning curves of one report field, one line per run."""
    fig, ax = plt.subplots(figsize=(5, 3))
    for i, (name, reps) in enumerate(reports_by_name.items()):
        ax.plot([r.iteration for r in reps], [getattr(r, field) for r in reps],
                color=option_color(i, 10), label=name, gid=f"curve-{name}")
    ax.set_xlabel("iteration")
    ax.set_ylabel(field)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=SVG_META)
    plt.close(fig)
