"""Hourly building + storage environment: energy balance, safe action
bounds, storage dynamics and the two reward regimes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import BuildingSpec, TariffSchedule
from .forecast import calendar_features

MASK_TOL = 1e-9


@dataclass(frozen=True)
class EsuState:
    soc: float
    capacity: float
    efficiency: float = 0.9
    power_limit: float = 1.0
    unit_cost: float = 0.0


@dataclass(frozen=True)
class ActionBounds:
    low: float
    high: float

    def __post_init__(self):
        if not -1.0 <= self.low <= 0.0 <= self.high <= 1.0:
            raise ValueError(f"invalid bounds [{self.low}, {self.high}]")

    def contains(self, a: float, tol: float = MASK_TOL) -> bool:
        return self.low - tol <= a <= self.high + tol

    def project(self, a: float) -> float:
        return min(max(a, self.low), self.high)


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    grid_energy: float
    done: bool
    info: dict = field(default_factory=dict)


def action_table(l: int = 10) -> np.ndarray:
    """``2l+1`` fractions ``-1, ..., 0, ..., +1`` evenly spaced."""
    if l < 1:
        raise ValueError("l must be >= 1")
    return np.arange(-l, l + 1) / l


def energy_balance(load: float, e_esu: float, e_pv: float) -> float:
    """Grid draw; PV is used first and any surplus is curtailed."""
    return max(0.0, load + e_esu - e_pv)


def action_bounds(esu: EsuState, demand: float, source_limit: float, e_pv: float = 0.0) -> ActionBounds:
    """Feasible action interval as fractions of capacity.

    Discharge is limited by the power limit, the efficiency-derated stored
    energy and the net demand left after PV, and is closed when PV covers the
    demand. Charge is limited by the power limit, the headroom grossed up by
    the efficiency, and what the source can still supply on top of the net
    demand.
    """
    z = esu.capacity
    if z <= 0:
        return ActionBounds(0.0, 0.0)
    net = max(0.0, demand - e_pv)
    eta = esu.efficiency
    if e_pv >= demand:
        low = 0.0
    else:
        low = -min(esu.power_limit, eta * esu.soc, net) / z
    high = min(esu.power_limit, (z - esu.soc) / eta, source_limit - net) / z
    low = min(0.0, max(-1.0, low))
    high = max(0.0, min(1.0, high))
    return ActionBounds(low, high)


def update_storage_cost(cd_prev: float, h_prev: float, e_in: float, cg: float, h_new: float) -> float:
    """Running cost per stored kWh after adding ``e_in`` bought at ``cg``."""
    if h_new <= 0:
        return 0.0
    if e_in == 0:
        return cd_prev
    return (cd_prev * h_prev + e_in * cg) / h_new


def esu_step(esu: EsuState, a: float, grid_cost: float, bounds: ActionBounds | None = None, pv_surplus: float = 0.0):
    """Apply action fraction ``a``.

    Returns ``(new_state, e_esu, projected)``: ``e_esu`` is the building-side
    energy (positive = intake, negative = delivery) and ``projected`` flags an
    out-of-bounds action that was moved to the nearest bound. Intake bought
    from PV surplus adds no cost to the stored energy.
    """
    projected = False
    if bounds is not None and not bounds.contains(a):
        a = bounds.project(a)
        projected = True
    z, eta, h = esu.capacity, esu.efficiency, esu.soc
    if a == 0 or z <= 0:
        return esu, 0.0, projected
    if a > 0:
        e_esu = a * z
        h_new = min(z, h + e_esu * eta)
        bought = max(0.0, e_esu - pv_surplus)
        rate = grid_cost * bought / e_esu
        cost = update_storage_cost(esu.unit_cost, h, e_esu, rate, h_new)
    else:
        h_new = max(0.0, h + a * z)
        e_esu = -(h - h_new) * eta
        cost = update_storage_cost(esu.unit_cost, h, 0.0, grid_cost, h_new)
    return replace(esu, soc=h_new, unit_cost=cost), e_esu, projected


def reward_pv(cg: float, er_baseline: float, er_agent: float) -> float:
    """Saving of the agent over the no-storage, no-PV baseline."""
    return cg * (er_baseline - er_agent)


def reward_storage(zeta, cd, h_prev, h_now, cg, grid_term, alpha=0.0) -> float:
    """Storage-regime penalty: cost of stored energy used plus grid usage."""
    return (1 - zeta) * cd * max(0.0, h_prev - h_now) * (1 - alpha) + zeta * cg * grid_term


@dataclass
class EnvConfig:
    l: int = 10
    zeta: float = 1.0
    alpha: float = 0.0
    carbon_weight: float = 1.0
    reward_scale: float = 1.0

    def __post_init__(self):
        if not 0 <= self.zeta <= 1:
            raise ValueError("zeta must be in [0, 1]")
        if not 0 <= self.alpha < 1:
            raise ValueError("alpha must be in [0, 1)")


OBS_NAMES = (
    "price", "carbon", "soc", "solar", "load",
    "month_cos", "month_sin", "day_cos", "day_sin", "hour_cos", "hour_sin",
)
FORECAST_NAMES = ("price_next", "solar_next", "load_next")
TRACE_COLUMNS = ("t", "load", "solar", "action", "e_esu", "soc", "grid", "reward", "price", "carbon")


class BuildingEnv:
    """One building with one storage unit over a tariff.

    Observation layout: price, carbon, state of charge (fraction of capacity),
    solar, load, then cos/sin of month, day type and hour, then (optionally)
    one-step forecasts of price, solar and load. Rewards are to be maximised:
    the PV regime pays the saving over the no-storage/no-PV baseline, the
    storage regime pays the negated penalty.
    """

    def __init__(self, building: BuildingSpec, tariff: TariffSchedule, config: EnvConfig | None = None,
                 forecasts: np.ndarray | None = None, record_trace: bool = False):
        if len(tariff) < len(building):
            raise ValueError(f"tariff shorter than building series ({len(tariff)} < {len(building)})")
        self.building = building
        self.tariff = tariff
        self.config = config or EnvConfig()
        self.table = action_table(self.config.l)
        self.load = building.load.values
        self.solar = building.solar.values
        self.price = tariff.price
        self.carbon = tariff.carbon
        self.cg = self.price + self.config.carbon_weight * self.carbon
        self.temporal = calendar_features(building.load.calendar)
        if forecasts is not None:
            forecasts = np.asarray(forecasts, dtype=np.float64)
            if forecasts.shape != (len(building), 3):
                raise ValueError("forecasts must have shape (m, 3)")
        self.forecasts = forecasts
        self.record_trace = record_trace
        self.t = None

    @property
    def obs_dim(self) -> int:
        return len(OBS_NAMES) + (3 if self.forecasts is not None else 0)

    @property
    def n_actions(self) -> int:
        return self.table.size

    def _esu0(self):
        b = self.building
        return EsuState(0.0, b.esu_capacity, b.esu_efficiency, b.esu_power_limit, 0.0)

    def reset(self, t0: int = 0, horizon: int | None = None) -> np.ndarray:
        m = len(self.building)
        if not 0 <= t0 < m:
            raise ValueError(f"t0={t0} out of range [0, {m})")
        horizon = m - t0 if horizon is None else horizon
        if horizon < 1 or t0 + horizon > m:
            raise ValueError(f"horizon {horizon} exceeds data from t0={t0}")
        self.t0, self.t, self.t_end = t0, t0, t0 + horizon
        self.esu = self._esu0()
        self.done = False
        self.totals = dict.fromkeys(
            ("cost_price", "cost_carbon", "base_price", "base_carbon", "nopv_price", "nopv_carbon", "grid", "reward"), 0.0
        )
        self.trace = []
        return self.observation()

    def observation(self) -> np.ndarray:
        t = min(self.t, len(self.building) - 1)
        z = self.esu.capacity
        obs = [self.price[t], self.carbon[t], self.esu.soc / z if z > 0 else 0.0, self.solar[t], self.load[t]]
        obs.extend(self.temporal[t])
        if self.forecasts is not None:
            obs.extend(self.forecasts[t])
        return np.array(obs)

    def bounds(self) -> ActionBounds:
        t = self.t
        return action_bounds(self.esu, self.load[t], self.building.source_power_limit, self.solar[t])

    def action_mask(self) -> np.ndarray:
        b = self.bounds()
        mask = (self.table >= b.low - MASK_TOL) & (self.table <= b.high + MASK_TOL)
        mask[self.config.l] = True
        return mask

    def step(self, action: int) -> StepOutcome:
        if self.t is None or self.done:
            raise RuntimeError("episode is terminal; call reset()")
        t = self.t
        cfg = self.config
        L, pv, cg = self.load[t], self.solar[t], self.cg[t]
        bounds = self.bounds()
        a = float(self.table[action])
        h_prev, cd_prev = self.esu.soc, self.esu.unit_cost
        self.esu, e_esu, projected = esu_step(self.esu, a, cg, bounds, pv_surplus=max(0.0, pv - L))
        grid = energy_balance(L, e_esu, pv)
        base = max(0.0, L - pv)
        if pv >= L:
            reward = reward_pv(cg, L, grid)
            idle = reward_pv(cg, L, base)
        else:
            # grid already includes the storage intake (energy_balance), so it
            # is the whole grid-served demand of the step
            reward = -reward_storage(cfg.zeta, cd_prev, h_prev, self.esu.soc, cg, grid, cfg.alpha)
            idle = -reward_storage(cfg.zeta, cd_prev, h_prev, h_prev, cg, base, cfg.alpha)
        reward *= cfg.reward_scale
        tot = self.totals
        tot["cost_price"] += grid * self.price[t]
        tot["cost_carbon"] += grid * self.carbon[t]
        tot["base_price"] += base * self.price[t]
        tot["base_carbon"] += base * self.carbon[t]
        tot["nopv_price"] += L * self.price[t]
        tot["nopv_carbon"] += L * self.carbon[t]
        tot["grid"] += grid
        tot["reward"] += reward
        if self.record_trace:
            applied = bounds.project(a) if projected else a
            self.trace.append((t, L, pv, applied, e_esu, self.esu.soc, grid, reward, self.price[t], self.carbon[t]))
        self.t += 1
        self.done = self.t >= self.t_end
        info = {
            "baseline_grid": base,
            "applied_action": bounds.project(a) if projected else a,
            "projected": projected,
            "bounds": bounds,
            "e_esu": e_esu,
            # what the idle action would have earned; depends only on exogenous data
            "idle_reward": idle * cfg.reward_scale,
        }
        return StepOutcome(self.observation(), float(reward), grid, self.done, info)

    def write_trace(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for row in self.trace:
                w.writerow((row[0], *(repr(float(v)) for v in row[1:])))
        return path
