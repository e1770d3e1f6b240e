import numpy as np
import pytest
from hypothesis import given, strategies as st

from safebems.classify import DissimilarityVector, assign_cluster, classify, dissimilarity_vector, incremental_refine
from safebems.clustering import ClusterModel, Dendrogram, Merge, fit_cluster_model
from safebems.data import LoadSeries, slice_window
from safebems.features import dtw_distance, transform


def _model(refs):
    n = len(refs)
    merges = tuple(Merge(0 if k == 0 else n + k - 1, k + 1, float(k + 1), k + 2) for k in range(n - 1))
    dg = Dendrogram(merges, tuple(f"r{k}" for k in range(n)))
    return ClusterModel(n, {f"r{k}": k for k in range(n)}, refs, dg)


def test_euclidean_hand_example():
    model = _model([LoadSeries.from_values([3.0, 4.0]), LoadSeries.from_values([1.0, 0.0])])
    V = dissimilarity_vector(LoadSeries.from_values([0.0, 0.0]), model, "euclidean")
    assert V.values.tolist() == [5.0, 1.0]
    assert assign_cluster(V) == 1


def test_euclidean_length_mismatch():
    model = _model([LoadSeries.from_values([3.0, 4.0, 1.0]), LoadSeries.from_values([1.0, 0.0, 1.0])])
    with pytest.raises(ValueError):
        dissimilarity_vector(LoadSeries.from_values([0.0, 0.0]), model, "euclidean")


def test_assign_examples():
    assert assign_cluster(np.array([5.0, 2.0, 7.0])) == 1
    assert assign_cluster(np.array([3.0, 0.0, 1.0])) == 1
    assert assign_cluster(np.array([2.0, 2.0, 5.0])) == 0
    with pytest.raises(ValueError):
        DissimilarityVector(np.array([-1.0]), "dtw")


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=10), st.floats(1e-3, 1e3))
def test_assign_scale_invariant(v, c):
    v = np.array(v)
    assert assign_cluster(v) == assign_cluster(v * c)


def test_identical_to_reference(small_corpus):
    loads = [b.load for b in small_corpus.buildings]
    model, _ = fit_cluster_model(loads, 3)
    for k, ref in enumerate(model.reference_series):
        for metric in ("dtw", "euclidean"):
            got, V = classify(ref, model, metric)
            assert got == k and V.values[k] == 0


def test_dtw_entries_match_independent_calls(small_corpus):
    loads = [b.load for b in small_corpus.buildings]
    model, _ = fit_cluster_model(loads, 3)
    week = slice_window(loads[0], 168, 168)
    V = dissimilarity_vector(week, model)
    for k, ref in enumerate(model.reference_series):
        expect = dtw_distance(transform(week.values), transform(ref.values[168:336]))
        assert V.values[k] == expect


def test_refine_history(small_corpus):
    loads = [b.load for b in small_corpus.buildings]
    model, _ = fit_cluster_model(loads, 3)
    ref = model.reference_series[2]
    hist = incremental_refine(ref, model, step=24)
    assert len(hist) == len(ref) // 24
    assert set(hist) == {2}
    assert len(incremental_refine(slice_window(ref, 0, 100), model, step=24)) == 4
    with pytest.raises(ValueError):
        incremental_refine(ref, model, step=1)
    assert len(incremental_refine(slice_window(ref, 0, 5), model, "euclidean", step=1)) == 5


def test_week_matches_full_horizon(small_corpus):
    loads = [b.load for b in small_corpus.buildings]
    model, _ = fit_cluster_model(loads, 3)
    agree = [classify(slice_window(s, 0, 168), model)[0] == model.assignments[s.building_id] for s in loads]
    assert np.mean(agree) >= 0.9


def test_unknown_metric():
    model = _model([LoadSeries.from_values([3.0, 4.0]), LoadSeries.from_values([1.0, 0.0])])
    with pytest.raises(ValueError):
        dissimilarity_vector(LoadSeries.from_values([0.0, 0.0]), model, "cosine")
