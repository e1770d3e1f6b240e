"""LSTM one-step (or N-step) forecasts of price, solar generation and
non-shiftable load, plus the lag-1 baseline and forecast metrics."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import Adam

log = logging.getLogger(__name__)

TARGETS = ("price", "solar", "nsl")
CALENDAR_PERIODS = (12, 7, 24)  # month, day_type, hour


def encode_temporal(f, f_max):
    """Map a cyclic feature onto the unit circle as ``(cos, sin)``."""
    if f_max <= 0:
        raise ValueError("f_max must be > 0")
    angle = 2 * np.pi * np.asarray(f, dtype=np.float64) / f_max
    return np.cos(angle), np.sin(angle)


def calendar_features(calendar) -> np.ndarray:
    """(m, 6) sine-cosine encoding of month, day type and hour."""
    calendar = np.asarray(calendar)
    cols = []
    for j, period in enumerate(CALENDAR_PERIODS):
        c, s = encode_temporal(calendar[:, j], period)
        cols.extend([c, s])
    return np.stack(cols, axis=1)


TEMPORAL_DIM = 2 * len(CALENDAR_PERIODS)


@dataclass(frozen=True)
class ForecastSample:
    inputs: np.ndarray  # (o, 1 + TEMPORAL_DIM)
    target: np.ndarray  # (N,)


def build_dataset(values, calendar, o: int = 24, N: int = 1):
    """Sliding windows over a series.

    Step k of a window carries ``s[t-o+k]`` and the calendar encoding of hour
    ``t-o+k+1``, so the last step holds the features of the first target hour
    ``t``. Returns ``(X, Y)`` with shapes ``(count, o, 1+6)`` and
    ``(count, N)``, ``count = m - o - N + 1``.
    """
    s = np.asarray(values, dtype=np.float64)
    m = s.size
    if o < 1 or N < 1:
        raise ValueError("o and N must be >= 1")
    if m < o + N:
        raise ValueError(f"series of length {m} too short for o={o}, N={N}")
    count = m - o - N + 1
    feats = calendar_features(calendar)
    idx = np.arange(count)[:, None] + np.arange(o)[None, :]
    X = np.concatenate([s[idx][..., None], feats[idx + 1]], axis=2)
    Y = s[np.arange(count)[:, None] + o + np.arange(N)[None, :]]
    return X, Y


def samples(values, calendar, o=24, N=1) -> list:
    X, Y = build_dataset(values, calendar, o, N)
    return [ForecastSample(x, y) for x, y in zip(X, Y)]


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LSTMForecaster:
    """Stacked LSTM with a linear head on the last hidden state.

    Gates are packed as ``[input, forget, cell, output]`` along the last axis
    of each layer's ``W`` (input weights), ``U`` (recurrent) and ``b``.
    """

    def __init__(self, input_dim=1 + TEMPORAL_DIM, hidden=50, layers=2, output=1, seed=0, dtype=np.float64):
        rng = np.random.default_rng(seed)
        self.input_dim, self.hidden, self.layers, self.output = input_dim, hidden, layers, output
        self.params = {}
        for layer in range(layers):
            fan_in = input_dim if layer == 0 else hidden
            k = 1.0 / np.sqrt(hidden)
            self.params[f"W{layer}"] = rng.uniform(-k, k, (fan_in, 4 * hidden)).astype(dtype)
            self.params[f"U{layer}"] = rng.uniform(-k, k, (hidden, 4 * hidden)).astype(dtype)
            b = np.zeros(4 * hidden, dtype=dtype)
            b[hidden : 2 * hidden] = 1.0  # forget-gate bias
            self.params[f"b{layer}"] = b
        k = 1.0 / np.sqrt(hidden)
        self.params["Wy"] = rng.uniform(-k, k, (hidden, output)).astype(dtype)
        self.params["by"] = np.zeros(output, dtype=dtype)

    def forward(self, X, cache=False):
        """``X``: (batch, steps, input_dim) -> (batch, output)."""
        B, T, _ = X.shape
        H = self.hidden
        seq = X
        caches = []
        for layer in range(self.layers):
            W, U, b = self.params[f"W{layer}"], self.params[f"U{layer}"], self.params[f"b{layer}"]
            h = np.zeros((B, H), dtype=X.dtype)
            c = np.zeros((B, H), dtype=X.dtype)
            xw = seq @ W + b  # (B, T, 4H)
            hs = np.empty((B, T, H), dtype=X.dtype)
            steps = []
            for t in range(T):
                z = xw[:, t] + h @ U
                i = _sigmoid(z[:, :H])
                f = _sigmoid(z[:, H : 2 * H])
                g = np.tanh(z[:, 2 * H : 3 * H])
                o = _sigmoid(z[:, 3 * H :])
                c_prev, h_prev = c, h
                c = f * c_prev + i * g
                tc = np.tanh(c)
                h = o * tc
                hs[:, t] = h
                if cache:
                    steps.append((i, f, g, o, c_prev, h_prev, tc))
            caches.append((seq, steps))
            seq = hs
        y = seq[:, -1] @ self.params["Wy"] + self.params["by"]
        if cache:
            self._cache = (caches, seq[:, -1])
        return y

    def backward(self, dy):
        """Gradients of a scalar loss given ``dy = dL/dy`` from the last
        ``forward(..., cache=True)``; backpropagation through time."""
        caches, h_last = self._cache
        H = self.hidden
        grads = {"Wy": h_last.T @ dy, "by": dy.sum(axis=0)}
        B = dy.shape[0]
        T = caches[0][0].shape[1]
        dseq = np.zeros((B, T, H), dtype=dy.dtype)
        dseq[:, -1] = dy @ self.params["Wy"].T
        for layer in reversed(range(self.layers)):
            seq, steps = caches[layer]
            W, U = self.params[f"W{layer}"], self.params[f"U{layer}"]
            dz_all = np.empty((B, T, 4 * H), dtype=dy.dtype)
            dh_next = np.zeros((B, H), dtype=dy.dtype)
            dc_next = np.zeros((B, H), dtype=dy.dtype)
            for t in reversed(range(T)):
                i, f, g, o, c_prev, h_prev, tc = steps[t]
                dh = dseq[:, t] + dh_next
                do = dh * tc
                dc = dc_next + dh * o * (1 - tc * tc)
                di = dc * g
                dg = dc * i
                df = dc * c_prev
                dc_next = dc * f
                dz = dz_all[:, t]
                dz[:, :H] = di * i * (1 - i)
                dz[:, H : 2 * H] = df * f * (1 - f)
                dz[:, 2 * H : 3 * H] = dg * (1 - g * g)
                dz[:, 3 * H :] = do * o * (1 - o)
                dh_next = dz @ U.T
            h_prevs = np.stack([s[5] for s in steps], axis=1)
            grads[f"U{layer}"] = np.einsum("bth,btk->hk", h_prevs, dz_all)
            grads[f"W{layer}"] = np.einsum("bti,btk->ik", seq, dz_all)
            grads[f"b{layer}"] = dz_all.sum(axis=(0, 1))
            dseq = dz_all @ W.T
        return grads

    def loss_and_grads(self, X, Y):
        """MSE averaged over batch and horizon, with its gradients."""
        pred = self.forward(X, cache=True)
        diff = pred - Y
        loss = float(np.mean(diff * diff))
        grads = self.backward(2.0 * diff / diff.size)
        return loss, grads

    def predict(self, X, batch_size=2048):
        out = [self.forward(X[k : k + batch_size]) for k in range(0, len(X), batch_size)]
        return np.concatenate(out, axis=0)


def lstm_forward(model: LSTMForecaster, inputs) -> np.ndarray:
    """N predictions for a single ``(o, input_dim)`` window."""
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"expected (o, {model.input_dim}) input, got {x.shape}")
    return model.forward(x[None])[0]


@dataclass
class ForecastConfig:
    window: int = 24
    horizon: int = 1
    hidden: int = 50
    layers: int = 2
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 0.95
    seed: int = 0


@dataclass
class TrainedForecaster:
    """An LSTM plus the standardisation statistics of its training split."""

    model: LSTMForecaster
    target: str
    mean: float
    std: float
    config: ForecastConfig = field(default_factory=ForecastConfig)
    loss_history: list = field(default_factory=list)

    def _standardize(self, X):
        X = X.copy()
        X[..., 0] = (X[..., 0] - self.mean) / self.std
        return X

    def predict_windows(self, X) -> np.ndarray:
        return self.model.predict(self._standardize(X)) * self.std + self.mean

    def one_step_series(self, values, calendar) -> np.ndarray:
        """Forecast of hour ``t+1`` made at every hour ``t`` (length m).

        Hours without a full history window fall back to the last observation.
        """
        s = np.asarray(values, dtype=np.float64)
        o = self.config.window
        out = s.copy()
        if s.size >= o + 1:
            X, _ = build_dataset(s, calendar, o, 1)
            out[o - 1 : o - 1 + len(X)] = self.predict_windows(X)[:, 0]
        return out

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        obj = {
            "format": "safebems-lstm",
            "version": 1,
            "target": self.target,
            "mean": self.mean,
            "std": self.std,
            "config": self.config.__dict__,
            "shape": [self.model.input_dim, self.model.hidden, self.model.layers, self.model.output],
            "params": {k: v.tolist() for k, v in self.model.params.items()},
            "loss_history": self.loss_history,
        }
        path.write_text(json.dumps(obj), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "TrainedForecaster":
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
        if obj.get("format") != "safebems-lstm" or obj.get("version") != 1:
            raise ValueError(f"{path}: not a version-1 forecaster file")
        input_dim, hidden, layers, output = obj["shape"]
        model = LSTMForecaster(input_dim, hidden, layers, output)
        model.params = {k: np.array(v) for k, v in obj["params"].items()}
        return cls(model, obj["target"], obj["mean"], obj["std"], ForecastConfig(**obj["config"]), obj["loss_history"])


class TrainingDiverged(RuntimeError):
    pass


def train(model: LSTMForecaster, X, Y, epochs=20, batch_size=64, seed=0, lr=1e-3, lr_decay=0.95):
    """Mini-batch Adam on the MSE loss; the step size is multiplied by
    ``lr_decay`` after every epoch. Returns the per-epoch mean loss."""
    if len(X) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(seed)
    opt = Adam(model.params, lr=lr)
    history = []
    for epoch in range(epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for k in range(0, len(X), batch_size):
            idx = order[k : k + batch_size]
            loss, grads = model.loss_and_grads(X[idx], Y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {k // batch_size}")
            opt.step(grads)
            total += loss * len(idx)
        history.append(total / len(X))
        opt.lr *= lr_decay
        log.debug("epoch %d loss %.6g", epoch, history[-1])
    return model, history


def fit_forecaster(values, calendar, target: str, config: ForecastConfig | None = None) -> TrainedForecaster:
    """Standardise on the training series, build windows and train an LSTM.

    ``values``/``calendar`` may be lists of aligned arrays (several buildings);
    windows never straddle two series.
    """
    config = config or ForecastConfig()
    if isinstance(values, np.ndarray) and values.ndim == 1:
        values, calendar = [values], [calendar]
    allv = np.concatenate([np.asarray(v, dtype=np.float64) for v in values])
    mean, std = float(allv.mean()), float(allv.std())
    std = std if std > 1e-12 else 1.0
    Xs, Ys = [], []
    for v, cal in zip(values, calendar):
        X, Y = build_dataset((np.asarray(v) - mean) / std, cal, config.window, config.horizon)
        Xs.append(X)
        Ys.append(Y)
    model = LSTMForecaster(1 + TEMPORAL_DIM, config.hidden, config.layers, config.horizon, seed=config.seed)
    model, history = train(
        model, np.concatenate(Xs), np.concatenate(Ys), config.epochs, config.batch_size, config.seed, config.lr, config.lr_decay
    )
    return TrainedForecaster(model, target, mean, std, config, history)


def lag_baseline(series, t: int) -> float:
    """Persistence forecast: the previous hour's value."""
    if t < 1:
        raise ValueError("lag baseline needs t >= 1")
    return float(np.asarray(series)[t - 1])


def evaluate(predictions, targets):
    """Return ``(rmse, r2)``; ``r2`` is NaN when the targets have no variance."""
    p = np.asarray(predictions, dtype=np.float64).ravel()
    y = np.asarray(targets, dtype=np.float64).ravel()
    if p.size != y.size or p.size < 2:
        raise ValueError("predictions and targets need equal lengths >= 2")
    ss_res = float(np.sum((y - p) ** 2))
    rmse = float(np.sqrt(ss_res / y.size))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = float("nan") if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return rmse, r2
