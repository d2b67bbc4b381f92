"""Figures for storage health and simulation traces, rendered to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .object_store import NodeHealth  # noqa: E402

STYLE = {
    "figure.figsize": (6, 4),
    "figure.dpi": 120,
    "font.size": 10,
    "axes.titlesize": 11,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def plot_storage_report(rows: list[NodeHealth], path: str | Path, title: str = "") -> Path:
    nodes = [r.node for r in rows]
    stored = [r.stored for r in rows]
    corrupt = [r.corrupt for r in rows]
    missing = [r.missing for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        x = range(len(rows))
        ax.bar(x, stored, color="#4c72b0", label="stored")
        ax.bar(x, corrupt, bottom=stored, color="#dd8452", label="corrupt")
        ax.bar(x, missing, bottom=[s + c for s, c in zip(stored, corrupt)], color="#c44e52", label="missing")
        for i, r in enumerate(rows):
            if not r.reachable:
                ax.annotate("down", (i, r.missing), ha="center", va="bottom", fontsize=8)
        ax.set_xticks(list(x))
        ax.set_xticklabels(nodes, rotation=45, ha="right")
        ax.set_ylabel("shards")
        ax.set_title(title or "shard health per storage node")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)


def commit_series(entries: list[dict]) -> dict[str, list[tuple[int, int]]]:
    """(tick, ledger height) points per peer, from the commit events of a trace."""
    series: dict[str, list[tuple[int, int]]] = {}
    for e in entries:
        ev = e["event"]
        if ev.get("kind") == "commit":
            for b in ev["blocks"]:
                series.setdefault(e["node"], []).append((e["tick"], b["height"] + 1))
    return series


def plot_trace(entries: list[dict], path: str | Path, title: str = "") -> Path:
    series = commit_series(entries)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for node, pts in sorted(series.items()):
            ticks, heights = zip(*pts)
            ax.step(ticks, heights, where="post", label=node, linewidth=1)
        drops = [e["tick"] for e in entries
                 if e["event"].get("kind") == "orderer-tick"
                 and any(x["kind"] == "no-quorum-drop" for x in e["event"]["events"])]
        for t in drops:
            ax.axvline(t, color="grey", linestyle=":", linewidth=0.8)
        ax.set_xlabel("tick")
        ax.set_ylabel("ledger height")
        ax.set_title(title or "ledger height per peer")
        if series:
            ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return Path(path)
