"""Pipeline orchestration: configs, baseline policies, evaluation and reports."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .agent import ActionTable, PolicyBundle, PPOConfig, train_cluster_policy
from .classify import classify
from .clustering import ClusterModel, fit_cluster_model, inconsistency_curve, silhouette_curve
from .data import (
    BuildingSpec,
    TariffSchedule,
    generate_synthetic_corpus,
    load_building_csv,
    load_tariff_csv,
    make_tou_tariff,
    slice_window,
    write_building_csv,
    write_tariff_csv,
)
from .env import BuildingEnv, EnvConfig
from .forecast import ForecastConfig, TrainedForecaster, evaluate as forecast_metrics, fit_forecaster
from .tariffs import ScenarioConfig, make_scenarios, write_scenarios

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


# ---------------------------------------------------------------- config


@dataclass
class DataConfig:
    n_buildings: int = 30
    m: int = 8760
    archetypes: int = 3
    noise_std: float = 0.05
    # every holdout_every-th building is kept out of clustering/training
    holdout_every: int = 5
    building_dir: str | None = None
    tariff_csv: str | None = None
    # storage sizing for CSV buildings (relative to their mean load)
    storage_hours: float = 5.0
    power_ratio: float = 1.0
    efficiency: float = 0.7


@dataclass
class ClusterConfig:
    w: int = 3
    w_min: int = 2
    w_max: int = 8
    depth: int = 2
    metric: str = "dtw"
    classify_window: int = 168
    classify_offset: int = 0


@dataclass
class EnvSection:
    l: int = 10
    zeta: float = 1.0
    alpha: float = 0.0
    carbon_weight: float = 1.0
    # "auto" scales rewards by 1 / mean(C^g * load) of the cluster
    reward_scale: float | str = "auto"


@dataclass
class ForecastSection:
    enabled: bool = True
    window: int = 24
    hidden: int = 50
    layers: int = 2
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    lr_decay: float = 0.95


@dataclass
class EvalConfig:
    horizon: int | None = None
    rbc_fraction: float = 0.1
    scenario_policies: tuple = ("ppo", "random", "rbc")
    trace_hours: int = 168


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    seed: int = 0
    data: DataConfig = field(default_factory=DataConfig)
    clustering: ClusterConfig = field(default_factory=ClusterConfig)
    env: EnvSection = field(default_factory=EnvSection)
    agent: PPOConfig = field(default_factory=PPOConfig)
    forecaster: ForecastSection = field(default_factory=ForecastSection)
    tariffs: ScenarioConfig = field(default_factory=ScenarioConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        d, c, e = self.data, self.clustering, self.env
        if d.n_buildings < 2 or d.m < 48:
            raise ValueError("data needs >= 2 buildings and m >= 48")
        if d.holdout_every < 2:
            raise ValueError("holdout_every must be >= 2")
        for p in (d.building_dir, d.tariff_csv):
            if p is not None and not Path(p).exists():
                raise ValueError(f"referenced path does not exist: {p}")
        if not 1 <= c.w <= c.w_max or c.w_min < 2 or c.w_min > c.w_max:
            raise ValueError("cluster counts must satisfy 2 <= w_min <= w_max and 1 <= w <= w_max")
        if c.metric not in ("dtw", "euclidean"):
            raise ValueError(f"unknown metric {c.metric!r}")
        if c.classify_window < 2:
            raise ValueError("classify_window must be >= 2")
        if not 0 <= e.zeta <= 1 or not 0 <= e.alpha < 1 or e.l < 1:
            raise ValueError("env needs zeta in [0,1], alpha in [0,1), l >= 1")
        if not (e.reward_scale == "auto" or (isinstance(e.reward_scale, (int, float)) and e.reward_scale > 0)):
            raise ValueError("reward_scale must be 'auto' or > 0")
        if not 0 < self.evaluation.rbc_fraction <= 1:
            raise ValueError("rbc_fraction must be in (0, 1]")
        unknown = set(self.evaluation.scenario_policies) - set(POLICIES)
        if unknown:
            raise ValueError(f"unknown policies {sorted(unknown)}")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["agent"]["hidden"] = list(self.agent.hidden)
        out["evaluation"]["scenario_policies"] = list(self.evaluation.scenario_policies)
        return out

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def from_dict(cls, obj: dict) -> "RunConfig":
        sections = {
            "data": DataConfig, "clustering": ClusterConfig, "env": EnvSection, "agent": PPOConfig,
            "forecaster": ForecastSection, "tariffs": ScenarioConfig, "evaluation": EvalConfig,
        }
        known = {f.name for f in fields(cls)}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        kw = {}
        for k, v in obj.items():
            if k in sections:
                allowed = {f.name for f in fields(sections[k])}
                bad = set(v) - allowed
                if bad:
                    raise ValueError(f"unknown keys in [{k}]: {sorted(bad)}")
                if k == "evaluation" and "scenario_policies" in v:
                    v = {**v, "scenario_policies": tuple(v["scenario_policies"])}
                kw[k] = sections[k](**v)
            else:
                kw[k] = v
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def env_config(self, reward_scale: float = 1.0) -> EnvConfig:
        e = self.env
        return EnvConfig(e.l, e.zeta, e.alpha, e.carbon_weight, reward_scale)

    def scenario_config(self) -> ScenarioConfig:
        """Scenario settings with the run seed folded in."""
        return replace(self.tariffs, seed=self.tariffs.seed + self.seed)

    def forecast_config(self, seed: int = 0) -> ForecastConfig:
        f = self.forecaster
        return ForecastConfig(f.window, 1, f.hidden, f.layers, f.epochs, f.batch_size, f.lr, f.lr_decay, seed)


# ---------------------------------------------------------------- data


@dataclass
class Corpus:
    buildings: list
    tariff: TariffSchedule
    labels: np.ndarray | None = None

    @property
    def ids(self):
        return [b.building_id for b in self.buildings]

    def split(self, every: int):
        """Indices of (training, held-out) buildings."""
        idx = np.arange(len(self.buildings))
        held = idx % every == every - 1
        return idx[~held].tolist(), idx[held].tolist()


def load_corpus(config: RunConfig) -> Corpus:
    d = config.data
    if d.building_dir is None:
        synth = generate_synthetic_corpus(d.n_buildings, d.m, d.archetypes, config.seed, d.noise_std, efficiency=d.efficiency,
                                          storage_hours=d.storage_hours, power_ratio=d.power_ratio)
        buildings, labels = synth.buildings, synth.labels
    else:
        buildings, labels = [], None
        for p in sorted(Path(d.building_dir).glob("*.csv")):
            b = load_building_csv(p)
            mean = float(b.load.values.mean())
            cap = d.storage_hours * mean
            buildings.append(load_building_csv(
                p, esu_capacity=cap, esu_efficiency=d.efficiency, esu_power_limit=d.power_ratio * cap,
                source_power_limit=1.5 * float(b.load.values.max()) + d.power_ratio * cap,
            ))
        if len(buildings) < 2:
            raise ValueError(f"{d.building_dir}: need at least 2 building CSVs")
    if d.tariff_csv is None:
        tariff = make_tou_tariff(buildings[0].load.calendar)
    else:
        tariff = load_tariff_csv(d.tariff_csv)
    return Corpus(buildings, tariff, labels)


def write_corpus(corpus: Corpus, out_dir) -> Path:
    out = Path(out_dir)
    for b in corpus.buildings:
        write_building_csv(b, out / "buildings" / f"{b.building_id}.csv")
    write_tariff_csv(corpus.tariff, out / "tariff.csv")
    if corpus.labels is not None:
        _write_rows(out / "labels.csv", ("building_id", "archetype"), zip(corpus.ids, corpus.labels.tolist()))
    return out


# ---------------------------------------------------------------- policies


def rbc_action(mask, table: ActionTable, is_peak: bool, is_offpeak: bool, fraction: float = 0.1) -> int:
    """Rule-based action: discharge ``fraction`` at peak, charge it off-peak.

    The chosen fraction is snapped to the nearest valid table entry, so a full
    store charges nothing and an empty one discharges nothing.
    """
    if is_peak:
        return table.nearest_valid(-fraction, mask)
    if is_offpeak:
        return table.nearest_valid(fraction, mask)
    return table.idle


def random_action(mask, rng) -> int:
    return int(rng.choice(np.flatnonzero(mask)))


def offpeak_mask(tariff: TariffSchedule) -> np.ndarray:
    """Hours priced at their day's minimum."""
    out = np.zeros(len(tariff), dtype=bool)
    for d0 in range(0, len(tariff), 24):
        day = tariff.price[d0 : d0 + 24]
        out[d0 : d0 + 24] = day <= day.min() + 1e-12
    return out


class IdlePolicy:
    name = "idle"

    def reset(self, env):
        pass

    def __call__(self, env, obs) -> int:
        return env.config.l


class RandomPolicy:
    name = "random"

    def __init__(self, seed=0):
        self.seed = seed

    def reset(self, env):
        self.rng = np.random.default_rng(self.seed)

    def __call__(self, env, obs) -> int:
        return random_action(env.action_mask(), self.rng)


class RBCPolicy:
    name = "rbc"

    def __init__(self, fraction=0.1):
        self.fraction = fraction

    def reset(self, env):
        self.table = ActionTable(env.config.l)
        self.peak = env.tariff.peak_mask()
        self.off = offpeak_mask(env.tariff)

    def __call__(self, env, obs) -> int:
        t = env.t
        return rbc_action(env.action_mask(), self.table, bool(self.peak[t]), bool(self.off[t]), self.fraction)


class TrainedPolicy:
    name = "ppo"

    def __init__(self, bundle: PolicyBundle):
        self.bundle = bundle

    def reset(self, env):
        pass

    def __call__(self, env, obs) -> int:
        return self.bundle.act(obs, env.action_mask(), greedy=True)[0]


POLICIES = ("ppo", "random", "rbc", "idle")


# ---------------------------------------------------------------- evaluation


@dataclass
class EvalRow:
    building_id: str
    cluster: int
    policy: str
    scenario: str
    cost_price: float
    cost_carbon: float
    base_price: float
    base_carbon: float
    norm_price: float
    norm_carbon: float
    violations: int = 0

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]


def _ratio(a, b):
    return a / b if b > 0 else 1.0


def evaluate(policy, building: BuildingSpec, tariff: TariffSchedule, horizon=None, env_config=None, forecasts=None,
             cluster=0, scenario="nominal", trace_path=None, trace_hours=None) -> EvalRow:
    """One deterministic episode from hour 0; costs normalised by the
    no-storage run of the same building and tariff.

    Every step is checked against the safety invariants; the count of
    violations is reported (and should be zero).
    """
    m = len(building)
    horizon = m if horizon is None else horizon
    if horizon > m or horizon < 1:
        raise ValueError(f"horizon {horizon} exceeds data length {m}")
    env = BuildingEnv(building, tariff, env_config or EnvConfig(), forecasts, record_trace=trace_path is not None)
    obs = env.reset(0, horizon)
    policy.reset(env)
    z = building.esu_capacity
    violations = 0
    while not env.done:
        b = env.bounds()
        a = policy(env, obs)
        out = env.step(a)
        soc = env.esu.soc
        if (out.info["projected"] or not b.contains(env.table[a]) or soc < -1e-9 or soc > z + 1e-9
                or out.grid_energy < 0):
            violations += 1
        obs = out.observation
    if trace_path is not None:
        env.trace = env.trace[: trace_hours or None]
        env.write_trace(trace_path)
    T = env.totals
    return EvalRow(
        building.building_id, int(cluster), policy.name, scenario,
        T["cost_price"], T["cost_carbon"], T["base_price"], T["base_carbon"],
        _ratio(T["cost_price"], T["base_price"]), _ratio(T["cost_carbon"], T["base_carbon"]), violations,
    )


def auto_reward_scale(buildings, tariff: TariffSchedule, carbon_weight=1.0) -> float:
    cg = tariff.price + carbon_weight * tariff.carbon
    level = np.mean([np.mean(cg[: len(b)] * b.load.values) for b in buildings])
    return float(1.0 / level) if level > 0 else 1.0


# ---------------------------------------------------------------- forecasts


@dataclass
class ForecastSet:
    """One forecaster per target; missing targets use persistence."""

    price: TrainedForecaster | None = None
    solar: TrainedForecaster | None = None
    nsl: TrainedForecaster | None = None

    @staticmethod
    def _column(fc, series, calendar):
        return np.asarray(series, dtype=np.float64) if fc is None else fc.one_step_series(series, calendar)

    def price_column(self, building: BuildingSpec, tariff: TariffSchedule) -> np.ndarray:
        return self._column(self.price, tariff.price[: len(building)], building.load.calendar)

    def features(self, building: BuildingSpec, tariff: TariffSchedule) -> np.ndarray:
        cal = building.load.calendar
        return np.column_stack([
            self.price_column(building, tariff),
            self._column(self.solar, building.solar.values, cal),
            self._column(self.nsl, building.load.values, cal),
        ])

    def save(self, out_dir, tag: str):
        # the price forecaster is shared and saved on its own
        for name in ("solar", "nsl"):
            fc = getattr(self, name)
            if fc is not None:
                fc.save(Path(out_dir) / f"{tag}_{name}.json")

    @classmethod
    def load(cls, out_dir, tag: str, shared_price=None) -> "ForecastSet":
        out = {}
        for name in ("solar", "nsl"):
            p = Path(out_dir) / f"{tag}_{name}.json"
            out[name] = TrainedForecaster.load(p) if p.exists() else None
        return cls(shared_price, **out)


def forecast_table(forecasters: ForecastSet, buildings, tariff: TariffSchedule, label: str) -> list:
    """RMSE/R^2 of LSTM and lag-1 forecasts on the given (held-out) buildings."""
    rows = []
    for target in ("price", "solar", "nsl"):
        fc = getattr(forecasters, target)
        if fc is None:
            continue
        preds, lags, ys = [], [], []
        series_list = [tariff.price[: len(buildings[0])]] if target == "price" else [
            b.solar.values if target == "solar" else b.load.values for b in buildings
        ]
        cals = [buildings[0].load.calendar] if target == "price" else [b.load.calendar for b in buildings]
        for s, cal in zip(series_list, cals):
            f = fc.one_step_series(s, cal)
            o = fc.config.window
            # forecast at t of hour t+1, compared with persistence s[t]
            preds.append(f[o - 1 : -1])
            lags.append(s[o - 1 : -1])
            ys.append(s[o:])
        y = np.concatenate(ys)
        rmse, r2 = forecast_metrics(np.concatenate(preds), y)
        lrmse, lr2 = forecast_metrics(np.concatenate(lags), y)
        rows.append({"group": label, "target": target, "lstm_rmse": rmse, "lstm_r2": r2, "lag_rmse": lrmse, "lag_r2": lr2})
    return rows


# ---------------------------------------------------------------- stages


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return path


def _read_dicts(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def stage_cluster(config: RunConfig, corpus: Corpus, out_dir) -> ClusterModel:
    out = Path(out_dir)
    train_idx, _ = corpus.split(config.data.holdout_every)
    loads = [corpus.buildings[i].load for i in train_idx]
    c = config.clustering
    if c.w > len(loads):
        raise ValueError(f"w={c.w} exceeds the {len(loads)} training buildings")
    model, D = fit_cluster_model(loads, c.w)
    D.to_csv(out / "cluster" / "distance_matrix.csv")
    (out / "cluster" / "dendrogram.json").write_text(json.dumps(model.dendrogram.to_json()))
    model.save(out / "cluster" / "cluster_model.json")
    model.write_assignments_csv(out / "cluster" / "assignments.csv")
    ws = list(range(c.w_min, min(c.w_max, len(loads) - 1) + 1))
    sil = silhouette_curve(D, model.dendrogram, ws)
    inc = inconsistency_curve(model.dendrogram, ws, c.depth)
    _write_rows(out / "cluster" / "selection.csv", ("w", "silhouette", "inconsistency"), [(w, sil[w], inc[w]) for w in ws])
    return model


def stage_classify(config: RunConfig, corpus: Corpus, model: ClusterModel, out_dir) -> dict:
    """Assign each held-out building from a short load window."""
    _, held = corpus.split(config.data.holdout_every)
    c = config.clustering
    out = {}
    rows = []
    for i in held:
        b = corpus.buildings[i]
        length = min(c.classify_window, len(b) - c.classify_offset)
        window = slice_window(b.load, c.classify_offset, length)
        k, V = classify(window, model, c.metric)
        out[b.building_id] = k
        rows.append((b.building_id, k, *V.values.tolist()))
    _write_rows(Path(out_dir) / "classify" / "classification.csv",
                ("building_id", "cluster", *[f"d{k}" for k in range(model.w)]), rows)
    return out


def _cluster_members(corpus: Corpus, model: ClusterModel, k: int):
    by_id = dict(zip(corpus.ids, corpus.buildings))
    return [by_id[b] for b in model.members(k)]


def stage_forecasters(config: RunConfig, corpus: Corpus, model: ClusterModel, out_dir) -> dict:
    """Price forecaster on the tariff, solar/load forecasters per cluster."""
    if not config.forecaster.enabled:
        return {}
    out = Path(out_dir) / "forecasters"
    cal = corpus.buildings[0].load.calendar
    m = len(corpus.buildings[0])
    price = fit_forecaster(corpus.tariff.price[:m], cal, "price", config.forecast_config(config.seed))
    price.save(out / "price.json")
    sets = {}
    for k in range(model.w):
        members = _cluster_members(corpus, model, k)
        ref = model.reference_series[k]
        solar_mean = np.mean([b.solar.values for b in members], axis=0)
        fc = ForecastSet(
            price,
            fit_forecaster(solar_mean, cal, "solar", config.forecast_config(config.seed + 10 * k + 1)),
            fit_forecaster(ref.values, ref.calendar, "nsl", config.forecast_config(config.seed + 10 * k + 2)),
        )
        fc.save(out, f"cluster{k}")
        sets[k] = fc
    return sets


def load_forecasters(config: RunConfig, model: ClusterModel, out_dir) -> dict:
    if not config.forecaster.enabled:
        return {}
    out = Path(out_dir) / "forecasters"
    if not (out / "price.json").exists():
        return {}
    price = TrainedForecaster.load(out / "price.json")
    return {k: ForecastSet.load(out, f"cluster{k}", price) for k in range(model.w)}


def _features(forecasters: dict, k: int, building, tariff):
    fc = forecasters.get(k)
    return None if fc is None else fc.features(building, tariff)


def stage_train(config: RunConfig, corpus: Corpus, model: ClusterModel, forecasters: dict, out_dir, callback=None) -> dict:
    out = Path(out_dir) / "policies"
    bundles = {}
    for k in range(model.w):
        members = _cluster_members(corpus, model, k)
        scale = config.env.reward_scale
        if scale == "auto":
            scale = auto_reward_scale(members, corpus.tariff, config.env.carbon_weight)
        env_cfg = config.env_config(scale)
        envs = [BuildingEnv(b, corpus.tariff, env_cfg, _features(forecasters, k, b, corpus.tariff)) for b in members]
        bundle = train_cluster_policy(envs, config.agent, seed=config.seed + 7919 * (k + 1), cluster_id=k,
                                      env_config=asdict(env_cfg), callback=callback)
        path = bundle.save(out / f"cluster{k}.json")
        model.policy_files[k] = path.name
        _write_rows(out / f"learning_curve_cluster{k}.csv", ("episode", "building", "return", "normalized_price"),
                    [(r["episode"], r["building"], r["return"], r["normalized_price"]) for r in bundle.history])
        bundles[k] = bundle
    model.save(Path(out_dir) / "cluster" / "cluster_model.json")
    return bundles


def load_bundles(model: ClusterModel, out_dir) -> dict:
    out = Path(out_dir) / "policies"
    bundles = {}
    for k in range(model.w):
        p = out / f"cluster{k}.json"
        if not p.exists():
            raise FileNotFoundError(f"missing policy file {p}")
        bundles[k] = PolicyBundle.load(p)
    return bundles


def _make_policy(name, bundle, config: RunConfig, seed):
    if name == "ppo":
        return TrainedPolicy(bundle)
    if name == "random":
        return RandomPolicy(seed)
    if name == "rbc":
        return RBCPolicy(config.evaluation.rbc_fraction)
    return IdlePolicy()


def stage_evaluate(config: RunConfig, corpus: Corpus, assignments: dict, bundles: dict, forecasters: dict, out_dir,
                   scenarios=None) -> list:
    """Nominal evaluation of every policy on every held-out building, then
    the scenario policies on each perturbed tariff."""
    by_id = dict(zip(corpus.ids, corpus.buildings))
    ev = config.evaluation
    rows = []
    traces = Path(out_dir) / "traces"
    price_cache = {}
    for n, (bid, k) in enumerate(sorted(assignments.items())):
        b = by_id[bid]
        bundle = bundles[k]
        env_cfg = EnvConfig(**bundle.env_config)
        fx = _features(forecasters, k, b, corpus.tariff)
        for name in ("ppo", "random", "rbc"):
            policy = _make_policy(name, bundle, config, config.seed + 31 * n)
            rows.append(evaluate(policy, b, corpus.tariff, ev.horizon, env_cfg, fx, k, "nominal",
                                 traces / f"{bid}_{name}.csv", ev.trace_hours))
        for sc in scenarios or ():
            fx_s = None
            if fx is not None:
                # only the price column depends on the tariff, and the
                # price forecaster is shared by all clusters
                key = (sc.scenario_id, len(b), b.load.calendar[0].tobytes())
                if key not in price_cache:
                    price_cache[key] = forecasters[k].price_column(b, sc.tariff)
                fx_s = fx.copy()
                fx_s[:, 0] = price_cache[key]
            for name in ev.scenario_policies:
                policy = _make_policy(name, bundle, config, config.seed + 31 * n)
                rows.append(evaluate(policy, b, sc.tariff, ev.horizon, env_cfg, fx_s, k, sc.scenario_id))
    return rows


# ---------------------------------------------------------------- reports


def write_evaluations(rows, path) -> Path:
    return _write_rows(path, EvalRow.columns(), [[getattr(r, c) for c in EvalRow.columns()] for r in rows])


def read_evaluations(path) -> list:
    out = []
    for d in _read_dicts(path):
        out.append(EvalRow(
            d["building_id"], int(d["cluster"]), d["policy"], d["scenario"],
            *(float(d[c]) for c in ("cost_price", "cost_carbon", "base_price", "base_carbon", "norm_price", "norm_carbon")),
            int(d["violations"]),
        ))
    return out


def summarize(rows) -> tuple[list, list]:
    """Cluster-level tables: nominal means per (cluster, policy), and the
    mean/std over scenarios of the per-scenario cluster means."""
    nominal, stochastic = [], []
    keys = sorted({(r.cluster, r.policy) for r in rows})
    for k, pol in keys:
        sel = [r for r in rows if r.cluster == k and r.policy == pol]
        nom = [r for r in sel if r.scenario == "nominal"]
        if nom:
            nominal.append({
                "cluster": k, "policy": pol, "scenario": "nominal", "n_buildings": len(nom),
                "norm_price": float(np.mean([r.norm_price for r in nom])),
                "norm_carbon": float(np.mean([r.norm_carbon for r in nom])),
                "cost_price": float(np.sum([r.cost_price for r in nom])),
                "cost_carbon": float(np.sum([r.cost_carbon for r in nom])),
                "base_price": float(np.sum([r.base_price for r in nom])),
                "base_carbon": float(np.sum([r.base_carbon for r in nom])),
                "violations": int(sum(r.violations for r in nom)),
            })
        scen = sorted({r.scenario for r in sel} - {"nominal"})
        if scen:
            per_p = [np.mean([r.norm_price for r in sel if r.scenario == s]) for s in scen]
            per_c = [np.mean([r.norm_carbon for r in sel if r.scenario == s]) for s in scen]
            stochastic.append({
                "cluster": k, "policy": pol, "n_scenarios": len(scen),
                "norm_price_mean": float(np.mean(per_p)), "norm_price_std": float(np.std(per_p)),
                "norm_carbon_mean": float(np.mean(per_c)), "norm_carbon_std": float(np.std(per_c)),
                "violations": int(sum(r.violations for r in sel if r.scenario != "nominal")),
            })
    return nominal, stochastic


def emit_report(rows, out_dir, forecast_rows=None) -> dict:
    """Write the evaluation tables as CSV and JSON; returns the written paths."""
    if not rows:
        raise ValueError("no evaluation rows to report")
    out = Path(out_dir) / "report"
    nominal, stochastic = summarize(rows)
    paths = {"evaluations": write_evaluations(rows, out / "evaluations.csv")}
    for name, table in (("table1_nominal", nominal), ("table3_stochastic", stochastic), ("table2_forecast", forecast_rows or [])):
        if table:
            cols = list(table[0])
            paths[name] = _write_rows(out / f"{name}.csv", cols, [[r[c] for c in cols] for r in table])
    summary = {
        "schema_version": SCHEMA_VERSION,
        "table1_nominal": nominal,
        "table2_forecast": forecast_rows or [],
        "table3_stochastic": stochastic,
    }
    paths["json"] = out / "report.json"
    paths["json"].write_text(json.dumps(summary, indent=1, sort_keys=True, default=_json_default))
    return paths


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)


# ---------------------------------------------------------------- pipeline


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the stage tag
        raise StageError(name, f"{type(exc).__name__}: {exc}") from exc


def run_pipeline(config: RunConfig, out_dir, plots=True, callback=None) -> Path:
    """cluster -> references -> forecasters -> per-cluster training ->
    held-out classification -> nominal and stochastic evaluation -> reports."""
    from . import plots as plotting

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config.save(out / "config.json")
    corpus = _stage("data", load_corpus, config)
    model = _stage("cluster", stage_cluster, config, corpus, out)
    forecasters = _stage("forecast", stage_forecasters, config, corpus, model, out)
    bundles = _stage("train", stage_train, config, corpus, model, forecasters, out, callback)
    assignments = _stage("classify", stage_classify, config, corpus, model, out)
    tcfg = config.scenario_config()
    scenarios = _stage("tariffs", make_scenarios, corpus.tariff, tcfg)
    _stage("tariffs", write_scenarios, scenarios, out / "scenarios", tcfg)
    rows = _stage("evaluate", stage_evaluate, config, corpus, assignments, bundles, forecasters, out, scenarios)
    _, held = corpus.split(config.data.holdout_every)
    frows = []
    for k, fc in sorted(forecasters.items()):
        members = [corpus.buildings[i] for i in held if assignments.get(corpus.ids[i]) == k]
        if members:
            # the price forecaster is shared, report it once
            fc = ForecastSet(fc.price if not frows else None, fc.solar, fc.nsl)
            frows.extend(forecast_table(fc, members, corpus.tariff, f"cluster{k}"))
    _stage("report", emit_report, rows, out, frows)
    if plots:
        _stage("plots", plotting.write_all, out, corpus, model, bundles)
    return out
