import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from safebems.data import TariffSchedule, load_tariff_csv
from safebems.tariffs import NoiseSpec, ScenarioConfig, make_scenarios, perturb_series, randomize_peaks, write_scenarios

prices = st.lists(st.floats(0, 5, allow_nan=False), min_size=1, max_size=200)


def test_zero_noise_is_identity():
    x = np.array([0.1, 0.2, 0.0, 3.0])
    out, mu, sigma = perturb_series(x, NoiseSpec())
    assert np.array_equal(out, x) and out is not x
    assert mu == 0 and sigma == 0


@given(prices, st.integers(0, 2**31))
def test_perturbed_prices_valid(x, seed):
    spec = NoiseSpec(-0.5, 0.5, 0.0, 1.0, seed)
    out, mu, sigma = perturb_series(x, spec)
    assert out.shape == (len(x),)
    assert np.all(out >= 0)
    assert -0.5 <= mu <= 0.5 and 0 <= sigma <= 1.0
    assert np.array_equal(out, perturb_series(x, spec)[0])


def test_noise_mean():
    x = np.full(100_000, 10.0)
    out, mu, sigma = perturb_series(x, NoiseSpec(0.1, 0.1, 0.05, 0.05))
    assert mu == 0.1 and sigma == 0.05
    assert abs((out - x).mean() - 0.1) < 4 * 0.05 / np.sqrt(x.size)


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(sigma_low=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(mu_low=1.0, mu_high=0.0)
    with pytest.raises(ValueError):
        perturb_series([], NoiseSpec())
    s = NoiseSpec.scaled(0.2, 0.1, 0.2)
    assert (s.mu_low, s.mu_high, s.sigma_low, s.sigma_high) == pytest.approx((-0.02, 0.02, 0.0, 0.04))


def test_randomize_peaks(small_tariff):
    flat = TariffSchedule(np.full(24 * 5, 0.1), np.zeros(24 * 5))
    same = randomize_peaks(flat, 3, 1.0, seed=1)
    assert np.array_equal(same.price, flat.price)
    out = randomize_peaks(flat, 3, 2.0, seed=1)
    raised = (out.price > 0.1).reshape(5, 24)
    assert np.all(raised.sum(axis=1) == 3)
    for d, lo, hi in out.peak_hours:
        assert hi - lo == 3 and raised[d, lo:hi].all()
    assert np.allclose(out.price[out.price != 0.1], 0.2)
    # hours outside the new intervals keep their nominal price
    t = randomize_peaks(small_tariff, 2, 1.5, seed=4)
    keep = ~t.peak_mask()
    assert np.array_equal(t.price[keep], small_tariff.price[keep])
    with pytest.raises(ValueError):
        randomize_peaks(flat, 25, 1.5)


def test_scenarios_seeded(small_tariff, tmp_path):
    cfg = ScenarioConfig(n_scenarios=4, seed=2)
    a = make_scenarios(small_tariff, cfg)
    b = make_scenarios(small_tariff, cfg)
    assert [s.scenario_id for s in a] == ["s000", "s001", "s002", "s003"]
    assert all(x.tariff == y.tariff and x.mu == y.mu for x, y in zip(a, b))
    assert len({s.seed for s in a}) == 4
    assert not (a[0].tariff == a[1].tariff)
    for s in a:
        assert len(s.tariff) == len(small_tariff)
        assert np.all(s.tariff.price >= 0)
        assert np.array_equal(s.tariff.carbon, small_tariff.carbon)
    manifest = json.loads(write_scenarios(a, tmp_path, cfg).read_text())
    assert manifest["config"]["n_scenarios"] == 4
    entry = manifest["scenarios"][1]
    assert entry["mu"] == a[1].mu and entry["seed"] == a[1].seed
    back = load_tariff_csv(tmp_path / entry["file"])
    assert np.array_equal(back.price, a[1].tariff.price)
