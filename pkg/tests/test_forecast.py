import numpy as np
import pytest
from hypothesis import given, strategies as st
from oracles import numeric_grad, rel_error

from safebems.data import year_calendar
from safebems.forecast import (
    ForecastConfig,
    LSTMForecaster,
    TrainedForecaster,
    TrainingDiverged,
    build_dataset,
    calendar_features,
    encode_temporal,
    evaluate,
    fit_forecaster,
    lag_baseline,
    lstm_forward,
    samples,
    train,
)


def test_encode_examples():
    assert np.allclose(encode_temporal(0, 24), (1, 0))
    assert np.allclose(encode_temporal(12, 24), (-1, 0), atol=1e-12)
    d = lambda a, b: np.hypot(*(np.array(encode_temporal(a, 24)) - np.array(encode_temporal(b, 24))))
    assert d(23, 0) < d(12, 0)
    with pytest.raises(ValueError):
        encode_temporal(1, 0)


@given(st.floats(-1e4, 1e4, allow_nan=False), st.floats(0.5, 1e3))
def test_encode_unit_circle(f, period):
    c, s = encode_temporal(f, period)
    assert c * c + s * s == pytest.approx(1.0, abs=1e-12)


def test_dataset_counts_and_alignment():
    values = np.arange(10.0)
    cal = year_calendar(10)
    X, Y = build_dataset(values, cal, 3, 1)
    assert X.shape == (7, 3, 7) and Y.shape == (7, 1)
    assert X[0, :, 0].tolist() == [0, 1, 2]
    assert Y[0, 0] == 3
    # the last input step carries the calendar of the target hour
    assert np.array_equal(X[0, -1, 1:], calendar_features(cal)[3])
    assert len(samples(values, cal, 3, 2)) == 6
    with pytest.raises(ValueError):
        build_dataset(values, cal, 8, 3)
    _, Yc = build_dataset(np.full(10, 4.0), cal, 3, 2)
    assert np.all(Yc == 4.0)


def test_zero_weights_give_head_bias():
    m = LSTMForecaster(7, 5, 2, 2, seed=0)
    for k in m.params:
        m.params[k][...] = 0
    m.params["by"][:] = [0.3, -1.2]
    x = np.random.default_rng(0).random((6, 7))
    assert np.allclose(lstm_forward(m, x), [0.3, -1.2])


def test_head_linearity():
    m = LSTMForecaster(7, 5, 2, 1, seed=1)
    x = np.random.default_rng(0).random((6, 7))
    y1 = lstm_forward(m, x)
    m.params["Wy"] *= 2
    assert np.allclose(lstm_forward(m, x) - m.params["by"], 2 * (y1 - m.params["by"]))


def test_forward_shape_error():
    with pytest.raises(ValueError):
        lstm_forward(LSTMForecaster(7, 4, 1, 1), np.zeros((5, 3)))


@pytest.mark.parametrize("seed", range(5))
def test_lstm_gradients(seed):
    rng = np.random.default_rng(seed)
    m = LSTMForecaster(3, 4, 2, 2, seed=seed)
    for k in m.params:
        m.params[k] += rng.normal(0, 0.3, m.params[k].shape)
    X = rng.normal(size=(3, 5, 3))
    Y = rng.normal(size=(3, 2))
    _, grads = m.loss_and_grads(X, Y)
    num = numeric_grad(lambda: m.loss_and_grads(X, Y)[0], m.params)
    for k in grads:
        assert rel_error(grads[k], num[k]) < 1e-4, k


def test_constant_series_converges():
    cal = year_calendar(24 * 6)
    X, Y = build_dataset(np.full(24 * 6, 0.5), cal, 12, 1)
    m = LSTMForecaster(7, 8, 1, 1, seed=0)
    _, hist = train(m, X, Y, epochs=40, batch_size=32, lr=1e-2, lr_decay=0.97)
    assert hist[-1] < 1e-4


def test_training_reproducible():
    cal = year_calendar(24 * 4)
    v = np.sin(np.arange(96) * 2 * np.pi / 24)
    X, Y = build_dataset(v, cal, 12, 1)
    h1 = train(LSTMForecaster(7, 6, 1, 1, seed=3), X, Y, epochs=3, seed=5)[1]
    h2 = train(LSTMForecaster(7, 6, 1, 1, seed=3), X, Y, epochs=3, seed=5)[1]
    assert h1 == h2


def test_divergence_detected():
    cal = year_calendar(48)
    X, Y = build_dataset(np.ones(48), cal, 6, 1)
    m = LSTMForecaster(7, 4, 1, 1)
    m.params["by"][:] = np.nan
    with pytest.raises(TrainingDiverged):
        train(m, X, Y, epochs=1)
    with pytest.raises(ValueError):
        train(m, X[:0], Y[:0])


def test_sinusoid_beats_lag():
    m = 24 * 20
    cal = year_calendar(m)
    v = 2 + np.sin(np.arange(m) * 2 * np.pi / 24)
    f = fit_forecaster(v, cal, "nsl", ForecastConfig(window=24, hidden=12, layers=1, epochs=15, lr=5e-3))
    pred = f.one_step_series(v, cal)
    rmse, _ = evaluate(pred[23:-1], v[24:])
    lag_rmse, _ = evaluate(v[23:-1], v[24:])
    assert rmse < lag_rmse


def test_one_step_series_alignment():
    m = 24 * 3
    cal = year_calendar(m)
    v = np.arange(m, dtype=float)
    f = fit_forecaster(v, cal, "price", ForecastConfig(window=6, hidden=4, layers=1, epochs=1))
    out = f.one_step_series(v, cal)
    X, _ = build_dataset(v, cal, 6, 1)
    assert out.shape == (m,)
    assert np.allclose(out[5:-1], f.predict_windows(X)[:, 0])
    assert np.array_equal(out[:5], v[:5])


def test_forecaster_save_load(tmp_path):
    cal = year_calendar(96)
    v = np.random.default_rng(0).random(96)
    f = fit_forecaster(v, cal, "solar", ForecastConfig(window=6, hidden=4, layers=2, epochs=1))
    g = TrainedForecaster.load(f.save(tmp_path / "f.json"))
    X, _ = build_dataset(v, cal, 6, 1)
    assert np.array_equal(f.predict_windows(X), g.predict_windows(X))
    assert g.target == "solar" and g.config == f.config


def test_lag_baseline():
    s = np.full(5, 3.0)
    assert lag_baseline(s, 4) == 3.0
    alt = np.array([0, 1] * 10, dtype=float)
    pred = [lag_baseline(alt, t) for t in range(1, alt.size)]
    assert evaluate(pred, alt[1:])[0] == 1.0
    with pytest.raises(ValueError):
        lag_baseline(s, 0)


def test_evaluate_examples():
    y = np.array([1.0, 2.0, 4.0])
    assert evaluate(y, y) == (0.0, 1.0)
    assert evaluate(np.full(3, y.mean()), y)[1] == pytest.approx(0.0)
    assert evaluate([0, 0], [3, 4])[0] == pytest.approx(np.sqrt(12.5))
    assert np.isnan(evaluate([1, 2], [3, 3])[1])
