"""Cluster-mapped, action-masked PPO control of building energy storage."""

from .data import BuildingSpec, LoadSeries, TariffSchedule, generate_synthetic_corpus, make_tou_tariff
from .env import BuildingEnv, EnvConfig
from .harness import RunConfig, run_pipeline

__all__ = [
    "BuildingSpec",
    "BuildingEnv",
    "EnvConfig",
    "LoadSeries",
    "RunConfig",
    "TariffSchedule",
    "generate_synthetic_corpus",
    "make_tou_tariff",
    "run_pipeline",
]
__version__ = "0.1.0"
