import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from oracles import dft, dtw_bruteforce

from safebems.features import (
    DistanceMatrix,
    corpus_distance_matrix,
    differentiate,
    dtw_distance,
    featurize,
    fft_radix2,
    next_pow2,
    pairwise_matrix,
    spectrum,
    transform,
    Stage,
)

series = st.lists(st.floats(-100, 100, allow_nan=False), min_size=2, max_size=40)


def test_differentiate_examples():
    assert differentiate([1, 2, 4]).tolist() == [1, 2]
    assert differentiate([5, 5, 5, 5]).tolist() == [0, 0, 0]
    assert differentiate([0, 1, 0, 1]).tolist() == [1, -1, 1]
    with pytest.raises(ValueError):
        differentiate([1.0])


@given(series, st.floats(-1e3, 1e3, allow_nan=False))
def test_differentiate_shift_invariant(x, c):
    x = np.array(x)
    assert np.allclose(differentiate(x + c), differentiate(x), atol=1e-9)


def test_spectrum_dc_and_impulse():
    assert np.allclose(spectrum(np.full(8, 2.5)), [20, 0, 0, 0, 0])
    imp = np.zeros(8)
    imp[0] = 1
    assert np.allclose(spectrum(imp), 1)


def test_spectrum_sinusoid_peak_matches_direct_dft():
    t = np.arange(32)
    x = np.sin(2 * np.pi * t / 8)
    s = spectrum(x)
    assert s.size == 17
    assert int(np.argmax(s)) == 4
    assert np.allclose(s, np.abs(dft(x))[:17], atol=1e-9)
    assert np.sum(s > 1e-9) == 1


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=64))
def test_fft_matches_direct_dft(x):
    p = next_pow2(len(x))
    padded = np.zeros(p)
    padded[: len(x)] = x
    assert np.allclose(fft_radix2(padded), dft(padded), atol=1e-8)


@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=100))
def test_parseval(x):
    x = np.array(x)
    p = next_pow2(x.size)
    full = np.abs(fft_radix2(np.concatenate([x, np.zeros(p - x.size)])))
    lhs, rhs = np.sum(full**2) / p, np.sum(x**2)
    assert abs(lhs - rhs) <= 1e-9 * max(1.0, rhs)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        fft_radix2(np.ones(6))


def test_spectrum_non_negative_and_length():
    f = featurize(np.random.default_rng(0).random(100), "b1")
    assert f.stage is Stage.SPECTRUM and f.origin_id == "b1"
    assert np.all(f.values >= 0)
    assert f.values.size == next_pow2(99) // 2 + 1


def test_dtw_examples():
    assert dtw_distance([0, 0, 0], [1, 1, 1]) == 3
    assert dtw_distance([1, 2, 3], [1, 2, 2, 3]) == 0
    with pytest.raises(ValueError):
        dtw_distance([], [1.0])


def test_dtw_exhaustive_small():
    vals = (0.0, 1.0, 2.0)
    seqs = [s for n in (1, 2, 3) for s in itertools.product(vals, repeat=n)]
    for x in seqs:
        for y in seqs:
            assert dtw_distance(x, y) == dtw_bruteforce(x, y)


@given(series, series)
def test_dtw_symmetric_nonnegative(x, y):
    d = dtw_distance(x, y)
    assert d >= 0
    assert d == pytest.approx(dtw_distance(y, x), rel=1e-12, abs=1e-12)


@given(series)
def test_dtw_self_zero(x):
    assert dtw_distance(x, x) == 0


@given(series, st.data())
def test_dtw_zero_under_repetition(x, data):
    i = data.draw(st.integers(0, len(x) - 1))
    k = data.draw(st.integers(1, 4))
    y = x[: i + 1] + [x[i]] * k + x[i + 1 :]
    assert dtw_distance(x, y) == 0


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=n, max_size=n),
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=n, max_size=n))))
def test_dtw_bounded_by_diagonal(pair):
    x, y = map(np.array, pair)
    assert dtw_distance(x, y) <= np.sum(np.abs(x - y)) + 1e-9


def test_pairwise_matrix_matches_independent_calls():
    rng = np.random.default_rng(5)
    raw = [rng.random(30) for _ in range(3)]
    D = corpus_distance_matrix(raw, ["a", "b", "c"])
    feats = [transform(r) for r in raw]
    for i, j in itertools.product(range(3), repeat=2):
        expect = 0.0 if i == j else dtw_distance(feats[i], feats[j])
        assert D.entries[i, j] == expect
    assert np.array_equal(D.entries, D.entries.T)


def test_identical_series_zero_distance(tmp_path):
    x = np.sin(np.arange(48) / 3.0) + 2
    D = corpus_distance_matrix([x, x.copy()], ["p", "q"])
    assert D.entries[0, 1] == 0
    back = DistanceMatrix.from_csv(D.to_csv(tmp_path / "d.csv"))
    assert back.ids == ("p", "q") and np.array_equal(back.entries, D.entries)


def test_pairwise_needs_two():
    with pytest.raises(ValueError):
        pairwise_matrix([np.ones(3)])
