"""Perturbed tariff scenarios for robustness evaluation."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import TariffSchedule, write_tariff_csv


@dataclass(frozen=True)
class NoiseSpec:
    """Uniform bounds for the per-scenario noise mean and std."""

    mu_low: float = 0.0
    mu_high: float = 0.0
    sigma_low: float = 0.0
    sigma_high: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.sigma_low < 0:
            raise ValueError("sigma bounds must be >= 0")
        if self.mu_low > self.mu_high or self.sigma_low > self.sigma_high:
            raise ValueError("noise bounds must be ordered (low <= high)")

    @classmethod
    def scaled(cls, reference: float, mu_frac=0.1, sigma_frac=0.2, seed=0) -> "NoiseSpec":
        """Bounds proportional to a reference level (e.g. the mean price)."""
        return cls(-mu_frac * reference, mu_frac * reference, 0.0, sigma_frac * reference, seed)


def draw_noise_params(spec: NoiseSpec, rng) -> tuple[float, float]:
    mu = rng.uniform(spec.mu_low, spec.mu_high)
    sigma = rng.uniform(spec.sigma_low, spec.sigma_high)
    return float(mu), float(sigma)


def perturb_series(X, spec: NoiseSpec, rng=None):
    """Add N(mu, sigma^2) noise with one (mu, sigma) draw for the whole series.

    Returns ``(noisy, mu, sigma)``; values are floored at zero.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise ValueError("empty series")
    rng = np.random.default_rng(spec.seed) if rng is None else rng
    mu, sigma = draw_noise_params(spec, rng)
    if mu == 0 and sigma == 0:
        return X.copy(), mu, sigma
    noisy = X + rng.normal(mu, sigma, size=X.shape)
    return np.maximum(noisy, 0.0), mu, sigma


def randomize_peaks(schedule: TariffSchedule, peaks_per_day: int, peak_multiplier: float, seed=0) -> TariffSchedule:
    """Mark one random contiguous interval of ``peaks_per_day`` hours per day as high-cost.

    Prices inside the interval are multiplied by ``peak_multiplier``; the
    returned schedule's peak metadata lists the new intervals only.
    """
    if not 0 <= peaks_per_day <= 24:
        raise ValueError("peaks_per_day must be in [0, 24]")
    if peak_multiplier < 0:
        raise ValueError("peak_multiplier must be >= 0")
    rng = np.random.default_rng(seed)
    price = schedule.price.copy()
    n_days = -(-len(price) // 24)
    peaks = []
    for d in range(n_days):
        hours = min(24, len(price) - 24 * d)
        width = min(peaks_per_day, hours)
        if width == 0:
            continue
        lo = int(rng.integers(hours - width + 1))
        price[24 * d + lo : 24 * d + lo + width] *= peak_multiplier
        peaks.append((d, lo, lo + width))
    return TariffSchedule(price, schedule.carbon, tuple(peaks))


@dataclass
class ScenarioConfig:
    n_scenarios: int = 20
    mu_frac: float = 0.1
    sigma_frac: float = 0.2
    peaks_per_day: int = 2
    peak_multiplier: float = 1.5
    perturb_carbon: bool = False
    seed: int = 0


@dataclass
class Scenario:
    scenario_id: str
    tariff: TariffSchedule
    mu: float
    sigma: float
    seed: int
    peak_hours: tuple


def make_scenarios(nominal: TariffSchedule, config: ScenarioConfig | None = None) -> list:
    """Noisy prices plus randomised high-cost periods, one seed per scenario."""
    config = config or ScenarioConfig()
    spec = NoiseSpec.scaled(float(nominal.price.mean()), config.mu_frac, config.sigma_frac)
    out = []
    for k in range(config.n_scenarios):
        seed = config.seed * 100_003 + k
        rng = np.random.default_rng(seed)
        price, mu, sigma = perturb_series(nominal.price, spec, rng)
        carbon = nominal.carbon
        if config.perturb_carbon:
            cspec = NoiseSpec.scaled(float(nominal.carbon.mean()), config.mu_frac, config.sigma_frac)
            carbon, _, _ = perturb_series(carbon, cspec, rng)
        tariff = TariffSchedule(price, carbon)
        if config.peaks_per_day:
            tariff = randomize_peaks(tariff, config.peaks_per_day, config.peak_multiplier, seed)
        out.append(Scenario(f"s{k:03d}", tariff, mu, sigma, seed, tariff.peak_hours))
    return out


def write_scenarios(scenarios, out_dir, config: ScenarioConfig | None = None) -> Path:
    """Tariff CSV per scenario plus ``manifest.json``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sc in scenarios:
        name = f"tariff_{sc.scenario_id}.csv"
        write_tariff_csv(sc.tariff, out_dir / name)
        entries.append({
            "scenario_id": sc.scenario_id,
            "file": name,
            "mu": sc.mu,
            "sigma": sc.sigma,
            "seed": sc.seed,
            "peak_hours": [list(p) for p in sc.peak_hours],
        })
    manifest = {"config": asdict(config) if config else None, "scenarios": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1))
    return path
