"""Building load/generation series, tariff schedules, CSV formats and the synthetic corpus."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

BUILDING_COLUMNS = (
    "month",
    "day_type",
    "hour",
    "non_shiftable_load_kwh",
    "solar_generation_kwh",
)
TARIFF_COLUMNS = ("price_usd_per_kwh", "carbon_cost_per_kwh")

HOURS_PER_YEAR = 8760
_DAYS_IN_MONTH = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)
_MONTH_OF_DAY = np.repeat(np.arange(1, 13), _DAYS_IN_MONTH)


class DataError(ValueError):
    """Raised when an input file or series violates its schema."""


def year_calendar(m: int, offset: int = 0) -> np.ndarray:
    """(month, day_type, hour) rows for hours ``offset .. offset+m-1`` of a
    non-leap year that starts on a Monday (day_type 1 = Monday, 7 = Sunday)."""
    t = np.arange(offset, offset + m)
    day = t // 24
    month = _MONTH_OF_DAY[day % 365]
    return np.stack([month, day % 7 + 1, t % 24], axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class LoadSeries:
    """Hourly kWh series of one building signal.

    The calendar is carried row by row as ``(month, day_type, hour)`` so a
    slice keeps its own temporal index; ``start_offset`` counts hours from the
    start of the source series.
    """

    values: np.ndarray
    calendar: np.ndarray
    building_id: str = ""
    start_offset: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        calendar = np.asarray(self.calendar, dtype=np.int64)
        if values.ndim != 1 or values.size < 2:
            raise DataError("series needs at least 2 values")
        if not np.all(np.isfinite(values)):
            raise DataError("series contains non-finite values")
        if np.any(values < 0):
            raise DataError(f"negative value at index {int(np.argmax(values < 0))}")
        if calendar.shape != (values.size, 3):
            raise DataError("calendar must have one (month, day_type, hour) row per value")
        values.setflags(write=False)
        calendar.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "calendar", calendar)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, LoadSeries):
            return NotImplemented
        return (
            self.building_id == other.building_id
            and self.start_offset == other.start_offset
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.calendar, other.calendar)
        )

    @property
    def start_month(self) -> int:
        return int(self.calendar[0, 0])

    @property
    def start_day_type(self) -> int:
        return int(self.calendar[0, 1])

    @property
    def start_hour(self) -> int:
        return int(self.calendar[0, 2])

    @classmethod
    def from_values(cls, values, building_id="", offset=0):
        values = np.asarray(values, dtype=np.float64)
        return cls(values, year_calendar(values.size, offset), building_id, offset)


@dataclass(frozen=True, eq=False)
class TariffSchedule:
    """Hourly financial price and carbon cost per kWh of grid energy.

    ``peak_hours`` lists ``(day_index, first_hour, end_hour)`` intervals with
    ``end_hour`` exclusive; it is metadata and is not stored in the CSV.
    """

    price: np.ndarray
    carbon: np.ndarray
    peak_hours: tuple = ()

    def __post_init__(self):
        price = np.asarray(self.price, dtype=np.float64)
        carbon = np.asarray(self.carbon, dtype=np.float64)
        if price.size == 0:
            raise DataError("empty schedule")
        if price.shape != carbon.shape or price.ndim != 1:
            raise DataError(f"price/carbon length mismatch ({price.size} vs {carbon.size})")
        for name, arr in (("price", price), ("carbon", carbon)):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite {name}")
            if np.any(arr < 0):
                raise DataError(f"negative {name} at row {int(np.argmax(arr < 0)) + 1}")
        price.setflags(write=False)
        carbon.setflags(write=False)
        object.__setattr__(self, "price", price)
        object.__setattr__(self, "carbon", carbon)
        object.__setattr__(self, "peak_hours", tuple(tuple(int(v) for v in p) for p in self.peak_hours))

    def __len__(self):
        return self.price.size

    def __eq__(self, other):
        if not isinstance(other, TariffSchedule):
            return NotImplemented
        return np.array_equal(self.price, other.price) and np.array_equal(self.carbon, other.carbon)

    def peak_mask(self) -> np.ndarray:
        """Boolean per-hour flag of the declared high-cost periods.

        Schedules without declared peaks (e.g. read back from CSV) fall back
        to hours priced above their day's mean.
        """
        mask = np.zeros(len(self), dtype=bool)
        if self.peak_hours:
            for day, lo, hi in self.peak_hours:
                mask[day * 24 + lo : day * 24 + hi] = True
            return mask
        for d0 in range(0, len(self), 24):
            day = self.price[d0 : d0 + 24]
            mask[d0 : d0 + 24] = day > day.mean() + 1e-12
        return mask


@dataclass(frozen=True)
class BuildingSpec:
    load: LoadSeries
    solar: LoadSeries
    esu_capacity: float = 6.0
    esu_efficiency: float = 0.9
    esu_power_limit: float = 3.0
    source_power_limit: float = 10.0

    def __post_init__(self):
        if len(self.load) != len(self.solar) or not np.array_equal(self.load.calendar, self.solar.calendar):
            raise DataError("load and solar series are not time-aligned")
        if self.esu_capacity < 0:
            raise DataError("esu_capacity must be >= 0")
        if not 0 < self.esu_efficiency <= 1:
            raise DataError("esu_efficiency must be in (0, 1]")
        if self.esu_power_limit <= 0 or self.source_power_limit <= 0:
            raise DataError("power limits must be > 0")

    @property
    def building_id(self) -> str:
        return self.load.building_id

    def __len__(self):
        return len(self.load)

    def esu_params(self) -> dict:
        return {
            "esu_capacity": self.esu_capacity,
            "esu_efficiency": self.esu_efficiency,
            "esu_power_limit": self.esu_power_limit,
            "source_power_limit": self.source_power_limit,
        }


# --------------------------------------------------------------------------- CSV


def _read_rows(path, columns, empty_msg="empty file"):
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: {empty_msg}") from None
        header = [h.strip() for h in header]
        missing = [c for c in columns if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        idx = [header.index(c) for c in columns]
        rows = []
        for rownum, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            vals = []
            for c, i in zip(columns, idx):
                try:
                    cell = row[i]
                except IndexError:
                    raise DataError(f"{path}: row {rownum}: missing value for {c}") from None
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: row {rownum}: non-numeric {c} {cell!r}") from None
            rows.append(vals)
    return np.array(rows, dtype=np.float64).reshape(-1, len(columns))


def load_building_csv(path, building_id: str | None = None, **esu_params) -> BuildingSpec:
    """Read a building file; ESU parameters are not part of the file and come
    from ``esu_params`` (BuildingSpec defaults otherwise)."""
    path = Path(path)
    rows = _read_rows(path, BUILDING_COLUMNS)
    if rows.shape[0] < 2:
        raise DataError(f"{path}: need at least 2 rows, got {rows.shape[0]}")
    for j, name in enumerate(BUILDING_COLUMNS):
        bad = ~np.isfinite(rows[:, j])
        if bad.any():
            raise DataError(f"{path}: row {int(np.argmax(bad)) + 1}: non-finite {name}")
    cal = rows[:, :3]
    if np.any(cal != np.round(cal)):
        raise DataError(f"{path}: row {int(np.argmax(np.any(cal != np.round(cal), axis=1))) + 1}: non-integer calendar field")
    cal = cal.astype(np.int64)
    limits = ((1, 12), (1, 7), (0, 23))
    for j, (lo, hi) in enumerate(limits):
        bad = (cal[:, j] < lo) | (cal[:, j] > hi)
        if bad.any():
            raise DataError(f"{path}: row {int(np.argmax(bad)) + 1}: {BUILDING_COLUMNS[j]} out of range [{lo}, {hi}]")
    for j in (3, 4):
        bad = rows[:, j] < 0
        if bad.any():
            raise DataError(f"{path}: row {int(np.argmax(bad)) + 1}: negative {BUILDING_COLUMNS[j]}")
    bid = building_id if building_id is not None else path.stem
    load = LoadSeries(rows[:, 3], cal, bid)
    solar = LoadSeries(rows[:, 4], cal, bid)
    return BuildingSpec(load, solar, **esu_params)


def write_building_csv(spec: BuildingSpec, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BUILDING_COLUMNS)
        for (mo, dt, hr), load, pv in zip(spec.load.calendar, spec.load.values, spec.solar.values):
            w.writerow((int(mo), int(dt), int(hr), repr(float(load)), repr(float(pv))))
    return path


def load_tariff_csv(path) -> TariffSchedule:
    rows = _read_rows(path, TARIFF_COLUMNS, "empty schedule")
    if rows.shape[0] == 0:
        raise DataError(f"{path}: empty schedule")
    return TariffSchedule(rows[:, 0], rows[:, 1])


def write_tariff_csv(tariff: TariffSchedule, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TARIFF_COLUMNS)
        for p, c in zip(tariff.price, tariff.carbon):
            w.writerow((repr(float(p)), repr(float(c))))
    return path


# ----------------------------------------------------------------- windows


def slice_window(series: LoadSeries, offset: int, length: int) -> LoadSeries:
    if offset < 0 or length < 2 or offset + length > len(series):
        raise DataError(f"window [{offset}, {offset + length}) out of range for series of length {len(series)}")
    return replace(
        series,
        values=series.values[offset : offset + length],
        calendar=series.calendar[offset : offset + length],
        start_offset=series.start_offset + offset,
    )


def slice_building(spec: BuildingSpec, offset: int, length: int) -> BuildingSpec:
    return replace(
        spec,
        load=slice_window(spec.load, offset, length),
        solar=slice_window(spec.solar, offset, length),
    )


# --------------------------------------------------------------- synthesis

# Base daily shapes, 24 hourly values each, normalised to mean 1 below.
_BASE_SHAPES = {
    "residential": [0.5, 0.4, 0.4, 0.4, 0.4, 0.5, 0.8, 1.3, 1.2, 0.8, 0.6, 0.6,
                    0.6, 0.6, 0.6, 0.7, 0.9, 1.4, 2.0, 2.3, 2.2, 1.8, 1.2, 0.8],
    "commercial": [0.3, 0.3, 0.3, 0.3, 0.3, 0.4, 0.7, 1.2, 1.7, 1.9, 1.9, 1.9,
                   1.8, 1.9, 1.9, 1.9, 1.8, 1.5, 1.0, 0.6, 0.4, 0.3, 0.3, 0.3],
    "industrial": [0.9, 0.9, 0.9, 0.9, 0.9, 0.95, 1.0, 1.05, 1.1, 1.1, 1.1, 1.1,
                   1.05, 1.1, 1.1, 1.1, 1.05, 1.0, 1.0, 0.95, 0.95, 0.9, 0.9, 0.9],
    "night_shift": [1.6, 1.7, 1.7, 1.7, 1.6, 1.4, 1.0, 0.7, 0.6, 0.6, 0.6, 0.6,
                    0.6, 0.6, 0.6, 0.6, 0.7, 0.8, 1.0, 1.2, 1.4, 1.5, 1.5, 1.6],
    "school": [0.2, 0.2, 0.2, 0.2, 0.2, 0.3, 0.6, 1.8, 2.4, 2.4, 2.3, 2.2,
               2.2, 2.3, 2.1, 1.5, 0.8, 0.5, 0.4, 0.3, 0.3, 0.2, 0.2, 0.2],
}
ARCHETYPES = tuple(_BASE_SHAPES)
BASE_SHAPES = {k: np.array(v) / np.mean(v) for k, v in _BASE_SHAPES.items()}
# mean kWh/h, weekend multiplier, seasonal amplitude
_ARCHETYPE_SCALE = {
    "residential": (1.2, 1.15, 0.25),
    "commercial": (3.0, 0.35, 0.15),
    "industrial": (5.0, 0.9, 0.05),
    "night_shift": (2.0, 1.0, 0.1),
    "school": (2.5, 0.25, 0.2),
}


def archetype_template(name: str, calendar: np.ndarray) -> np.ndarray:
    """Deterministic kWh profile of an archetype on a calendar: base daily
    shape times weekend and seasonal factors times the archetype's mean load."""
    mean_kwh, weekend, season_amp = _ARCHETYPE_SCALE[name]
    month, day_type, hour = calendar.T
    shape = BASE_SHAPES[name][hour]
    day_factor = np.where(day_type >= 6, weekend, 1.0)
    # winter-peaking seasonality, month 1 and 12 highest
    season = 1.0 + season_amp * np.cos(2 * np.pi * (month - 1) / 12.0)
    return mean_kwh * shape * day_factor * season


def solar_template(calendar: np.ndarray) -> np.ndarray:
    """Clear-sky kWh per kWp: half-sine between sunrise and sunset with
    summer-longer days and higher yield."""
    month, _, hour = calendar.T
    summer = -np.cos(2 * np.pi * (month - 1) / 12.0)  # -1 in January, +1 in July
    half_day = 6.0 + 2.0 * summer
    x = (hour + 0.5 - 12.5) / half_day
    shape = np.where(np.abs(x) < 1, np.cos(0.5 * np.pi * x), 0.0)
    return np.clip(shape, 0.0, None) * (0.65 + 0.25 * summer)


@dataclass(frozen=True)
class SyntheticCorpus:
    buildings: list
    labels: np.ndarray
    archetypes: tuple = field(default=())

    def __iter__(self):
        return iter(zip(self.buildings, self.labels))

    def __len__(self):
        return len(self.buildings)


def generate_synthetic_corpus(
    n_buildings: int,
    m: int,
    archetype_count: int,
    seed: int,
    noise_std: float = 0.05,
    pv_fraction: float = 0.3,
    storage_hours: float = 5.0,
    power_ratio: float = 1.0,
    efficiency: float = 0.7,
) -> SyntheticCorpus:
    """Draw a corpus of buildings from ``archetype_count`` base daily shapes.

    Each building is ``scale * template * (1 + noise_std * N(0,1))`` with a
    per-building scale in [0.9, 1.1] and ground-truth label ``i % archetype_count``
    (labels then shuffled). Solar is a per-building PV size times a clear-sky
    profile and a daily cloudiness factor. ESU capacity is ``storage_hours``
    of mean load, power limit ``power_ratio * capacity``.
    """
    if not 1 <= archetype_count <= len(ARCHETYPES):
        raise ValueError(f"archetype_count must be in [1, {len(ARCHETYPES)}]")
    if n_buildings < archetype_count:
        raise ValueError("n_buildings must be >= archetype_count")
    if m < 48:
        raise ValueError("m must be >= 48")
    rng = np.random.default_rng(seed)
    calendar = year_calendar(m)
    labels = rng.permutation(np.arange(n_buildings) % archetype_count)
    names = ARCHETYPES[:archetype_count]
    clear_sky = solar_template(calendar)
    n_days = (m + 23) // 24
    buildings = []
    for i, lab in enumerate(labels):
        bid = f"b{i:03d}"
        scale = rng.uniform(0.9, 1.1)
        template = archetype_template(names[lab], calendar)
        noise = rng.standard_normal(m)
        load = scale * template * np.clip(1.0 + noise_std * noise, 0.0, None)
        kwp = pv_fraction * template.mean() * rng.uniform(0.8, 1.2) / max(clear_sky.mean(), 1e-9)
        cloud = np.repeat(rng.uniform(0.5, 1.0, n_days), 24)[:m]
        solar = kwp * clear_sky * cloud
        capacity = storage_hours * load.mean()
        buildings.append(
            BuildingSpec(
                LoadSeries(load, calendar, bid),
                LoadSeries(solar, calendar, bid),
                esu_capacity=float(capacity),
                esu_efficiency=efficiency,
                esu_power_limit=float(power_ratio * capacity),
                source_power_limit=float(1.5 * load.max() + power_ratio * capacity),
            )
        )
    return SyntheticCorpus(buildings, labels.astype(np.int64), names)


def make_tou_tariff(
    calendar: np.ndarray,
    offpeak: float = 0.10,
    shoulder: float = 0.16,
    peak: float = 0.30,
    peak_start: int = 16,
    peak_end: int = 21,
    carbon_base: float = 0.03,
    carbon_evening: float = 0.03,
) -> TariffSchedule:
    """Time-of-use schedule on ``calendar``: night off-peak (22h-7h), weekday
    peak ``[peak_start, peak_end)``, shoulder otherwise. Carbon cost follows
    a grid-mix curve that is lowest at midday and highest in the evening."""
    calendar = np.asarray(calendar)
    _, day_type, hour = calendar.T
    weekday = day_type <= 5
    is_peak = weekday & (hour >= peak_start) & (hour < peak_end)
    night = (hour >= 22) | (hour < 7)
    price = np.where(is_peak, peak, np.where(night, offpeak, shoulder))
    carbon = carbon_base * (1.0 - 0.3 * np.sin(np.pi * np.clip(hour - 6, 0, 12) / 12.0))
    carbon = carbon + carbon_evening * np.exp(-0.5 * ((hour - 19) / 2.0) ** 2)
    peaks = []
    n_days = (len(calendar) + 23) // 24
    for d in range(n_days):
        rows = slice(d * 24, min(d * 24 + 24, len(calendar)))
        if is_peak[rows].any():
            h = hour[rows][is_peak[rows]]
            peaks.append((d, int(h.min()), int(h.max()) + 1))
    return TariffSchedule(price, carbon, tuple(peaks))
