"""Figures for benchmark results, rendered next to the CSV.

Three views cover the usual questions about a run matrix: how tight each
configuration's remaining gaps are on average (bar chart), how the gaps
distribute across instances (profile: fraction of instances at or below a
gap threshold), and how large the solved LPs grew (columns and rows, log
scale).  Aggregate rows (instance "ALL") are recomputed here from the data
rows rather than trusted, so the figures also work for hand-edited CSVs.
"""

import csv
import os
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .driver import CSV_COLUMNS, RunStats

FIGURE_KINDS = ("gaps", "profile", "size")


def _by_config(stats: Sequence[RunStats], config_order: Sequence[str]) -> Dict[str, List[RunStats]]:
    groups: Dict[str, List[RunStats]] = {name: [] for name in config_order}
    for st in stats:
        groups.setdefault(st.config, []).append(st)
    return {name: group for name, group in groups.items() if group}


def figure_path(csv_path: str, kind: str) -> str:
    stem, _ = os.path.splitext(csv_path)
    return "%s-%s.png" % (stem, kind)


def render_figures(
    stats: Sequence[RunStats], config_order: Sequence[str], csv_path: str
) -> List[str]:
    """Render one PNG per figure kind next to csv_path; returns the paths."""
    groups = _by_config(stats, config_order)
    written = []
    for kind, draw in (("gaps", _draw_gaps), ("profile", _draw_profile), ("size", _draw_size)):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        draw(ax, groups)
        fig.tight_layout()
        path = figure_path(csv_path, kind)
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written


def _draw_gaps(ax, groups: Dict[str, List[RunStats]]) -> None:
    names = list(groups)
    means = [sum(s.gap for s in groups[n]) / len(groups[n]) for n in names]
    solved = [sum(int(s.solved) for s in groups[n]) for n in names]
    bars = ax.bar(range(len(names)), means, color="steelblue")
    for bar, k, n in zip(bars, solved, names):
        ax.annotate(
            "%d/%d" % (k, len(groups[n])),
            (bar.get_x() + bar.get_width() / 2, bar.get_height()),
            ha="center",
            va="bottom",
            fontsize=8,
        )
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("mean remaining gap")
    ax.set_title("Remaining gap by configuration (labels: solved count)")


def _draw_profile(ax, groups: Dict[str, List[RunStats]]) -> None:
    for name, group in groups.items():
        gaps = sorted(s.gap for s in group)
        frac = [(i + 1) / len(gaps) for i in range(len(gaps))]
        ax.step([0.0] + gaps, [0.0] + frac, where="post", label=name)
    ax.set_xlabel("remaining gap")
    ax.set_ylabel("fraction of instances")
    ax.set_ylim(0.0, 1.05)
    ax.set_title("Gap profile")
    ax.legend(fontsize=8)


def _draw_size(ax, groups: Dict[str, List[RunStats]]) -> None:
    names = list(groups)
    idx = range(len(names))
    cols = [max(1, round(sum(s.cols for s in groups[n]) / len(groups[n]))) for n in names]
    rows = [max(1, round(sum(s.rows for s in groups[n]) / len(groups[n]))) for n in names]
    width = 0.4
    ax.bar([i - width / 2 for i in idx], cols, width, label="columns", color="steelblue")
    ax.bar([i + width / 2 for i in idx], rows, width, label="rows", color="darkorange")
    ax.set_yscale("log")
    ax.set_xticks(list(idx))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("mean count (log)")
    ax.set_title("Master LP size by configuration")
    ax.legend(fontsize=8)


def read_benchmark_csv(path: str) -> Tuple[List[RunStats], List[str]]:
    """Load data rows back into RunStats; aggregate rows are skipped.

    Returns (stats, config order of first appearance).
    """
    stats: List[RunStats] = []
    order: List[str] = []
    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError("benchmark CSV lacks columns %s" % sorted(missing))
        for rec in reader:
            if rec["instance"] == "ALL":
                continue
            st = RunStats(
                instance=rec["instance"],
                config=rec["config"],
                solved=rec["solved"] == "1",
                gap=float(rec["gap"]),
                time=float(rec["time"]),
                nodes=int(rec["nodes"]),
                cols=int(rec["cols"]),
                rows=int(rec["rows"]),
            )
            for col in CSV_COLUMNS:
                if col.startswith("cuts_"):
                    st.cuts[col[len("cuts_") :]] = int(rec[col])
            stats.append(st)
            if st.config not in order:
                order.append(st.config)
    return stats, order


def render_from_csv(path: str) -> List[str]:
    stats, order = read_benchmark_csv(path)
    return render_figures(stats, order, path)
