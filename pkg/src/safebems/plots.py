"""SVG figures: dendrogram, cluster profiles, storage traces, learning curves."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "safebems"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def dendrogram_xy(dendrogram):
    """Line segments (xs, ys) of a dendrogram drawing, leaves at y=0."""
    n = dendrogram.n_leaves
    pos = {leaf: float(i) for i, leaf in enumerate(dendrogram.leaf_order())}
    height = dict.fromkeys(range(n), 0.0)
    segs = []
    for k, m in enumerate(dendrogram.merges):
        c = n + k
        xa, xb = pos[m.a], pos[m.b]
        ya, yb = height[m.a], height[m.b]
        h = m.height
        segs.append(([xa, xa, xb, xb], [ya, h, h, yb]))
        pos[c] = (xa + xb) / 2
        height[c] = h
    return segs


def plot_dendrogram(dendrogram, path, cut_w=None):
    fig, ax = plt.subplots(figsize=(8, 4))
    for xs, ys in dendrogram_xy(dendrogram):
        ax.plot(xs, ys, color="k", lw=0.8)
    order = dendrogram.leaf_order()
    ax.set_xticks(range(len(order)))
    ax.set_xticklabels([dendrogram.leaf_ids[i] for i in order], rotation=90, fontsize=6)
    if cut_w and 1 < cut_w <= dendrogram.n_leaves and dendrogram.merges:
        h = dendrogram.heights
        lo = h[len(h) - cut_w]
        hi = h[len(h) - cut_w + 1] if cut_w > 1 else lo
        ax.axhline((lo + hi) / 2, color="tab:red", ls="--", lw=0.8)
    ax.set_ylabel("merge cost")
    fig.tight_layout()
    return _save(fig, path)


def daily_profile(values, hours) -> np.ndarray:
    return np.array([values[hours == h].mean() for h in range(24)])


def plot_clusters(loads, labels, references, path):
    w = len(references)
    fig, axes = plt.subplots(1, w, figsize=(3.2 * w, 3), sharey=True, squeeze=False)
    for s, k in zip(loads, labels):
        axes[0, k].plot(daily_profile(s.values, s.calendar[:, 2]), color="0.6", lw=0.6)
    for k, ref in enumerate(references):
        ax = axes[0, k]
        ax.plot(daily_profile(ref.values, ref.calendar[:, 2]), color="tab:blue", lw=2)
        ax.set_title(f"cluster {k}")
        ax.set_xlabel("hour")
    axes[0, 0].set_ylabel("mean load (kWh)")
    fig.tight_layout()
    return _save(fig, path)


def read_trace(path) -> dict:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}


def plot_trace(trace: dict, capacity: float, path):
    t = trace["t"]
    fig, ax = plt.subplots(figsize=(9, 3.5))
    ax.plot(t, trace["load"], label="load", lw=0.9)
    ax.plot(t, trace["solar"], label="solar", lw=0.9)
    ax.plot(t, trace["grid"], label="grid", lw=0.9, alpha=0.8)
    ax.set_ylabel("kWh")
    ax2 = ax.twinx()
    ax2.fill_between(t, trace["soc"] / capacity if capacity > 0 else trace["soc"], color="tab:green", alpha=0.25, label="SoC")
    ax2.set_ylim(0, 1.05)
    ax2.set_ylabel("state of charge")
    ax.set_xlabel("hour")
    ax.legend(loc="upper left", fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def plot_learning_curves(histories: dict, path, window=10):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for k, hist in sorted(histories.items()):
        y = np.array([h["normalized_price"] for h in hist])
        if y.size == 0:
            continue
        win = max(1, min(window, y.size))
        smooth = np.convolve(y, np.ones(win) / win, mode="valid")
        ax.plot(np.arange(win - 1, y.size), smooth, label=f"cluster {k}")
    ax.axhline(1.0, color="k", lw=0.6, ls=":")
    ax.set_xlabel("episode")
    ax.set_ylabel("normalized price cost")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def write_all(out_dir, corpus, model, bundles) -> list:
    out = Path(out_dir) / "plots"
    paths = [plot_dendrogram(model.dendrogram, out / "dendrogram.svg", model.w)]
    by_id = dict(zip(corpus.ids, corpus.buildings))
    members = [(by_id[b].load, k) for b, k in model.assignments.items()]
    paths.append(plot_clusters([m[0] for m in members], [m[1] for m in members], model.reference_series, out / "clusters.svg"))
    paths.append(plot_learning_curves({k: b.history for k, b in bundles.items()}, out / "learning_curves.svg"))
    for p in sorted((Path(out_dir) / "traces").glob("*_ppo.csv")):
        bid = p.name[: -len("_ppo.csv")]
        paths.append(plot_trace(read_trace(p), by_id[bid].esu_capacity, out / f"trace_{bid}.svg"))
    return paths
