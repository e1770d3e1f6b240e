"""Map a new building onto an existing cluster from a (short) load window."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel
from .data import LoadSeries, slice_window
from .features import dtw_distance, transform

METRICS = ("dtw", "euclidean")


@dataclass(frozen=True)
class DissimilarityVector:
    values: np.ndarray
    metric: str

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("dissimilarities must be a non-empty vector of finite values >= 0")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


def _aligned_reference(ref: LoadSeries, new: LoadSeries) -> LoadSeries:
    # references cover the training horizon; compare on the same calendar window
    if len(ref) == len(new) and ref.start_offset == new.start_offset:
        return ref
    offset = new.start_offset - ref.start_offset
    if offset < 0 or offset + len(new) > len(ref):
        offset = 0
    return slice_window(ref, offset, len(new))


def dissimilarity_vector(new_series: LoadSeries, model: ClusterModel, metric: str = "dtw") -> DissimilarityVector:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if len(new_series) == 0:
        raise ValueError("empty window")
    x = new_series.values
    out = []
    if metric == "euclidean":
        for ref in model.reference_series:
            if len(ref) != len(x):
                raise ValueError(f"euclidean metric needs equal lengths ({len(x)} vs {len(ref)})")
            out.append(float(np.sqrt(np.sum((x - ref.values) ** 2))))
    else:
        fx = transform(x)
        for ref in model.reference_series:
            out.append(dtw_distance(fx, transform(_aligned_reference(ref, new_series).values)))
    return DissimilarityVector(np.array(out), metric)


def assign_cluster(V) -> int:
    """Index of the smallest dissimilarity; ties go to the lowest index."""
    v = V.values if isinstance(V, DissimilarityVector) else np.asarray(V)
    if v.size == 0:
        raise ValueError("empty dissimilarity vector")
    return int(np.argmin(v))


def classify(new_series: LoadSeries, model: ClusterModel, metric: str = "dtw"):
    V = dissimilarity_vector(new_series, model, metric)
    return assign_cluster(V), V


def incremental_refine(stream: LoadSeries, model: ClusterModel, metric: str = "dtw", step: int = 24) -> list:
    """Re-classify every ``step`` hours on the prefix observed so far.

    Returns one assignment per completed step, ``len(stream) // step`` in all.
    The DTW pipeline differentiates its input, so it needs ``step >= 2``.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    if metric == "dtw" and step < 2:
        raise ValueError("dtw refinement needs step >= 2")
    history = []
    for k in range(1, len(stream) // step + 1):
        prefix = slice_window(stream, 0, k * step) if k * step >= 2 else None
        if prefix is None:
            # single-value euclidean prefix
            v = [abs(stream.values[0] - r.values[0]) for r in model.reference_series]
            history.append(assign_cluster(np.array(v)))
            continue
        if metric == "euclidean":
            refs = [_aligned_reference(r, prefix).values for r in model.reference_series]
            v = [float(np.sqrt(np.sum((prefix.values - r) ** 2))) for r in refs]
            history.append(assign_cluster(np.array(v)))
        else:
            history.append(classify(prefix, model, metric)[0])
    return history
