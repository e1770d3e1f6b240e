"""Derivative, magnitude spectrum and DTW distances between load profiles."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numba
import numpy as np


class Stage(str, Enum):
    RAW = "raw"
    DERIVATIVE = "derivative"
    SPECTRUM = "spectrum"


@dataclass(frozen=True)
class FeatureSeries:
    values: np.ndarray
    origin_id: str
    stage: Stage


def differentiate(series) -> np.ndarray:
    """Forward difference ``x[j+1] - x[j]`` (length m-1)."""
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("differentiate needs a 1-D series of length >= 2")
    return x[1:] - x[:-1]


def next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def fft_radix2(x) -> np.ndarray:
    """Iterative decimation-in-time FFT; ``len(x)`` must be a power of two."""
    a = np.asarray(x, dtype=np.complex128)
    n = a.size
    if n == 0 or n & (n - 1):
        raise ValueError(f"length {n} is not a power of two")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    a = a[rev]
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(-1, size)
        even = blocks[:, :half]
        odd = blocks[:, half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=1).reshape(n)
        size *= 2
    return a


def spectrum(series) -> np.ndarray:
    """One-sided DFT magnitudes of the series zero-padded to the next power
    of two ``P``; returns ``P // 2 + 1`` bins."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("spectrum of an empty series")
    p = next_pow2(x.size)
    padded = np.zeros(p)
    padded[: x.size] = x
    return np.abs(fft_radix2(padded)[: p // 2 + 1])


def transform(series) -> np.ndarray:
    """Clustering feature of a raw series: spectrum of its derivative."""
    return spectrum(differentiate(series))


def featurize(values, origin_id: str = "") -> FeatureSeries:
    return FeatureSeries(transform(values), origin_id, Stage.SPECTRUM)


@numba.njit(cache=True, nogil=True)
def _dtw(x, y):
    n = x.shape[0]
    m = y.shape[0]
    prev = np.full(m + 1, np.inf)
    prev[0] = 0.0
    cur = np.empty(m + 1)
    for i in range(1, n + 1):
        cur[0] = np.inf
        xi = x[i - 1]
        for j in range(1, m + 1):
            best = prev[j - 1]
            if prev[j] < best:
                best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            cur[j] = abs(xi - y[j - 1]) + best
        prev, cur = cur, prev
    return prev[m]


def dtw_distance(x, y) -> float:
    """Exact DTW with absolute-difference cost and steps (1,0), (0,1), (1,1).

    The full cost matrix is swept row by row, keeping two rows in memory.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if x.size == 0 or y.size == 0:
        raise ValueError("dtw_distance of an empty series")
    return float(_dtw(x, y))


@dataclass(frozen=True)
class DistanceMatrix:
    entries: np.ndarray
    ids: tuple

    def __post_init__(self):
        d = np.asarray(self.entries, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] != len(self.ids):
            raise ValueError("distance matrix must be n x n with n ids")
        object.__setattr__(self, "entries", d)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))

    def __len__(self):
        return len(self.ids)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("id", *self.ids))
            for i, row in zip(self.ids, self.entries):
                w.writerow((i, *(repr(float(v)) for v in row)))
        return path

    @classmethod
    def from_csv(cls, path) -> "DistanceMatrix":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        ids = rows[0][1:]
        entries = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        return cls(entries, tuple(ids))


def pairwise_matrix(features, ids=None) -> DistanceMatrix:
    """DTW between every pair of already-transformed feature vectors; only
    the upper triangle is computed and mirrored."""
    feats = [np.ascontiguousarray(f, dtype=np.float64) for f in features]
    n = len(feats)
    if n < 2:
        raise ValueError("need at least two series")
    ids = tuple(range(n)) if ids is None else tuple(ids)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = dtw_distance(feats[i], feats[j])
    return DistanceMatrix(d, ids)


def corpus_distance_matrix(series, ids=None) -> DistanceMatrix:
    """Full transform-and-compare pass: derivative, spectrum, pairwise DTW."""
    return pairwise_matrix([transform(s) for s in series], ids)
