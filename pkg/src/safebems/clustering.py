"""Ward agglomeration over a precomputed dissimilarity matrix, cluster
validation scores and per-cluster reference series."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .data import LoadSeries
from .features import DistanceMatrix, corpus_distance_matrix


class Merge(NamedTuple):
    a: int
    b: int
    height: float
    size: int


@dataclass(frozen=True)
class Dendrogram:
    """Merge list in agglomeration order.

    Leaves are clusters ``0..n-1``; the k-th merge creates cluster ``n + k``.
    Heights are Ward merge costs (increase of within-cluster sum of squares).
    """

    merges: tuple
    leaf_ids: tuple

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_ids)

    @property
    def heights(self) -> np.ndarray:
        return np.array([m.height for m in self.merges])

    def to_json(self) -> dict:
        return {
            "leaf_ids": list(self.leaf_ids),
            "merges": [[m.a, m.b, m.height, m.size] for m in self.merges],
        }

    @classmethod
    def from_json(cls, obj) -> "Dendrogram":
        merges = tuple(Merge(int(a), int(b), float(h), int(s)) for a, b, h, s in obj["merges"])
        return cls(merges, tuple(obj["leaf_ids"]))

    def children(self, cluster: int):
        if cluster < self.n_leaves:
            return ()
        m = self.merges[cluster - self.n_leaves]
        return (m.a, m.b)

    def leaf_order(self) -> list:
        """Leaves left to right as drawn in a dendrogram plot."""
        if not self.merges:
            return list(range(self.n_leaves))
        order, stack = [], [self.n_leaves + len(self.merges) - 1]
        while stack:
            c = stack.pop()
            kids = self.children(c)
            if kids:
                stack.extend(reversed(kids))
            else:
                order.append(c)
        return order


def ward_merge_cost(size_a: int, size_b: int, centroid_dist_sq: float) -> float:
    """Increase in within-cluster sum of squares from merging A and B."""
    return size_a * size_b / (size_a + size_b) * centroid_dist_sq


def agglomerate(D: DistanceMatrix) -> Dendrogram:
    """Ward linkage with the Lance-Williams update on merge costs.

    Pairwise merge costs start at ``d_ij**2 / 2`` (two singletons) and are
    updated as
    ``((n_i+n_k) W_ki + (n_j+n_k) W_kj - n_k W_ij) / (n_i+n_j+n_k)``.
    The cheapest pair is merged; ties go to the lexicographically smallest
    ``(a, b)`` cluster-id pair.
    """
    d = np.asarray(D.entries, dtype=np.float64)
    n = d.shape[0]
    if n < 2:
        raise ValueError("agglomerate needs at least two leaves")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix contains non-finite entries")
    total = 2 * n - 1
    W = np.full((total, total), np.inf)
    W[:n, :n] = 0.5 * d * d
    size = np.zeros(total, dtype=np.int64)
    size[:n] = 1
    active = np.zeros(total, dtype=bool)
    active[:n] = True
    upper = np.triu(np.ones((total, total), dtype=bool), k=1)
    merges = []
    for step in range(n - 1):
        cand = np.where(upper & active[:, None] & active[None, :], W, np.inf)
        flat = int(np.argmin(cand))
        a, b = divmod(flat, total)
        h = W[a, b]
        new = n + step
        na, nb = size[a], size[b]
        active[a] = active[b] = False
        ks = np.flatnonzero(active)
        nk = size[ks]
        upd = ((na + nk) * W[a, ks] + (nb + nk) * W[b, ks] - nk * h) / (na + nb + nk)
        W[new, ks] = W[ks, new] = upd
        size[new] = na + nb
        active[new] = True
        merges.append(Merge(int(a), int(b), float(h), int(na + nb)))
    return Dendrogram(tuple(merges), tuple(D.ids))


def cut(dendrogram: Dendrogram, w: int) -> np.ndarray:
    """Flat clustering into ``w`` groups by undoing the ``w-1`` last (highest)
    merges. Cluster indices are numbered by first appearance in leaf order."""
    n = dendrogram.n_leaves
    if not 1 <= w <= n:
        raise ValueError(f"w={w} out of range [1, {n}]")
    parent = list(range(2 * n - 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k, m in enumerate(dendrogram.merges[: n - w]):
        parent[find(m.a)] = n + k
        parent[find(m.b)] = n + k
    roots = [find(i) for i in range(n)]
    index = {}
    return np.array([index.setdefault(r, len(index)) for r in roots], dtype=np.int64)


def silhouette_samples(D: DistanceMatrix, labels) -> np.ndarray:
    d = np.asarray(D.entries)
    labels = np.asarray(labels)
    clusters = np.unique(labels)
    if clusters.size < 2:
        raise ValueError("silhouette needs at least two clusters")
    s = np.zeros(labels.size)
    for i in range(labels.size):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        others = own.copy()
        others[i] = False
        a = d[i, others].mean()
        b = min(d[i, labels == c].mean() for c in clusters if c != labels[i])
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return s


def silhouette(D: DistanceMatrix, labels) -> float:
    """Mean silhouette; singleton clusters score 0, as do points with a = b = 0."""
    return float(silhouette_samples(D, labels).mean())


def inconsistency(dendrogram: Dendrogram, depth: int = 2) -> np.ndarray:
    """Inconsistency coefficient of each merge.

    Statistics are taken over the merge itself and the merges below it down
    to ``depth`` levels (depth 1 is the merge alone); the sample standard
    deviation is used and a zero deviation scores 0.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    n = dendrogram.n_leaves
    out = np.zeros(len(dendrogram.merges))
    for k, m in enumerate(dendrogram.merges):
        heights, frontier = [], [n + k]
        for _ in range(depth):
            nxt = []
            for c in frontier:
                if c >= n:
                    heights.append(dendrogram.merges[c - n].height)
                    nxt.extend(dendrogram.children(c))
            frontier = nxt
        hs = np.array(heights)
        std = hs.std(ddof=1) if hs.size > 1 else 0.0
        out[k] = (m.height - hs.mean()) / std if std > 0 else 0.0
    return out


def silhouette_curve(D: DistanceMatrix, dendrogram: Dendrogram, ws) -> dict:
    return {int(w): silhouette(D, cut(dendrogram, w)) for w in ws}


def inconsistency_curve(dendrogram: Dendrogram, ws, depth: int = 2) -> dict:
    """For each w, the coefficient of the merge that joins w clusters into w-1."""
    coef = inconsistency(dendrogram, depth)
    n = dendrogram.n_leaves
    return {int(w): float(coef[n - w]) for w in ws if 2 <= w <= n}


def reference_series(corpus, labels, w: int | None = None) -> list:
    """Pointwise mean of the member series of each cluster."""
    labels = np.asarray(labels)
    w = int(labels.max()) + 1 if w is None else w
    lengths = {len(s) for s in corpus}
    if len(lengths) != 1:
        raise ValueError(f"series lengths differ: {sorted(lengths)}")
    refs = []
    for k in range(w):
        members = [s for s, lab in zip(corpus, labels) if lab == k]
        if not members:
            raise ValueError(f"cluster {k} is empty")
        values = np.mean([s.values for s in members], axis=0)
        refs.append(LoadSeries(values, members[0].calendar, f"cluster{k}", members[0].start_offset))
    return refs


@dataclass
class ClusterModel:
    w: int
    assignments: dict
    reference_series: list
    dendrogram: Dendrogram
    policy_files: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.reference_series) != self.w:
            raise ValueError("one reference series per cluster required")
        used = set(self.assignments.values())
        if used != set(range(self.w)):
            raise ValueError(f"clusters {sorted(set(range(self.w)) - used)} are empty")

    def members(self, k: int) -> list:
        return [b for b, c in self.assignments.items() if c == k]

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        obj = {
            "schema_version": 1,
            "w": self.w,
            "assignments": self.assignments,
            "reference_series": [
                {
                    "id": r.building_id,
                    "start_offset": r.start_offset,
                    "values": r.values.tolist(),
                    "calendar": r.calendar.tolist(),
                }
                for r in self.reference_series
            ],
            "dendrogram": self.dendrogram.to_json(),
            "policy_files": {str(k): v for k, v in self.policy_files.items()},
        }
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "ClusterModel":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        refs = [
            LoadSeries(np.array(r["values"]), np.array(r["calendar"]), r["id"], r["start_offset"])
            for r in obj["reference_series"]
        ]
        return cls(
            int(obj["w"]),
            {k: int(v) for k, v in obj["assignments"].items()},
            refs,
            Dendrogram.from_json(obj["dendrogram"]),
            {int(k): v for k, v in obj.get("policy_files", {}).items()},
        )

    def write_assignments_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("building_id", "cluster"))
            for b, c in self.assignments.items():
                w.writerow((b, c))
        return path


def fit_cluster_model(loads, w: int, D: DistanceMatrix | None = None):
    """Cluster a list of load series into ``w`` groups.

    Returns ``(model, D)`` so callers can reuse the distance matrix for
    validation curves.
    """
    ids = [s.building_id for s in loads]
    if D is None:
        D = corpus_distance_matrix([s.values for s in loads], ids)
    dendro = agglomerate(D)
    labels = cut(dendro, w)
    refs = reference_series(loads, labels, w)
    model = ClusterModel(w, {b: int(c) for b, c in zip(ids, labels)}, refs, dendro)
    return model, D
