"""
Uniform-interval time-series container and the weather/energy record types.

A TimeSeries never has gaps: a missing interval is an explicit ``None``
record. Interval series are 15-minute aligned by default; daily and monthly
series come out of resample_mean and are indexed by calendar buckets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Dict, Generic, Iterator, List, Literal, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd

from chillopt.errors import DataError
from chillopt.logger import get_logger

logger = get_logger(__name__)

R = TypeVar("R")
S = TypeVar("S")

STEP_MINUTES = 15
INTERVALS_PER_DAY = 24 * 60 // STEP_MINUTES
Granularity = Literal["interval", "daily", "monthly"]

_PANDAS_FREQ = {"daily": "D", "monthly": "MS"}
CSV_FLOAT_FORMAT = "%.6f"


def to_utc(value: datetime | str | pd.Timestamp) -> datetime:
    """Parse/normalize an instant to a tz-aware UTC datetime at minute resolution."""
    stamp = pd.Timestamp(value)
    if stamp.tzinfo is None:
        stamp = stamp.tz_localize("UTC")
    else:
        stamp = stamp.tz_convert("UTC")
    return stamp.to_pydatetime().replace(second=0, microsecond=0)


def stull_wet_bulb(dry_bulb_c: float, rel_humidity_pct: float) -> float:
    """Wet-bulb temperature from dry-bulb and RH (Stull's empirical fit)."""
    t = dry_bulb_c
    rh = rel_humidity_pct
    wet = (
        t * math.atan(0.151977 * math.sqrt(rh + 8.313659))
        + math.atan(t + rh)
        - math.atan(rh - 1.676331)
        + 0.00391838 * rh**1.5 * math.atan(0.023101 * rh)
        - 4.686035
    )
    # the fit slightly overshoots near saturation
    return min(wet, t)


@dataclass(frozen=True)
class WeatherRecord:
    dry_bulb_c: float
    rel_humidity_pct: float
    wet_bulb_c: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.dry_bulb_c) and math.isfinite(self.rel_humidity_pct)):
            raise DataError("weather values must be finite")
        if not 0.0 <= self.rel_humidity_pct <= 100.0:
            raise DataError(f"relative humidity {self.rel_humidity_pct} outside [0, 100]")
        object.__setattr__(
            self, "wet_bulb_c", stull_wet_bulb(self.dry_bulb_c, self.rel_humidity_pct)
        )


@dataclass(frozen=True)
class EnergyRecord:
    power_kw: float
    cooling_kw: float

    def __post_init__(self):
        if not (math.isfinite(self.power_kw) and math.isfinite(self.cooling_kw)):
            raise DataError("energy values must be finite")
        if self.power_kw < 0 or self.cooling_kw < 0:
            raise DataError("energy values must be non-negative")
        if self.cooling_kw > 0 and (self.power_kw <= 0 or self.cooling_kw / self.power_kw > 12.0):
            raise DataError(
                f"implausible COP: cooling {self.cooling_kw:.1f} kW for power {self.power_kw:.1f} kW"
            )


@dataclass(frozen=True)
class TimeSeries(Generic[R]):
    """Uniformly sampled series of records; ``None`` marks an absent record."""

    start: datetime
    records: tuple
    step_minutes: int = STEP_MINUTES
    granularity: Granularity = "interval"

    def __post_init__(self):
        object.__setattr__(self, "start", to_utc(self.start))
        object.__setattr__(self, "records", tuple(self.records))
        if self.granularity == "interval":
            if self.step_minutes <= 0 or 60 % self.step_minutes != 0:
                raise DataError(f"step of {self.step_minutes} minutes must divide 60")
            if self.start.minute % self.step_minutes != 0:
                raise DataError(f"start {self.start.isoformat()} not aligned to {self.step_minutes}-minute step")
        elif self.granularity == "daily":
            if (self.start.hour, self.start.minute) != (0, 0):
                raise DataError("daily series must start at midnight")
        elif self.granularity == "monthly":
            if (self.start.day, self.start.hour, self.start.minute) != (1, 0, 0):
                raise DataError("monthly series must start on the first of a month")

    # construction helpers -------------------------------------------------

    @classmethod
    def from_values(
        cls,
        start: datetime | str,
        values: Sequence[Optional[float]] | np.ndarray,
        step_minutes: int = STEP_MINUTES,
        granularity: Granularity = "interval",
    ) -> "TimeSeries[float]":
        records = tuple(
            None if value is None or not math.isfinite(float(value)) else float(value)
            for value in values
        )
        return cls(start=start, records=records, step_minutes=step_minutes, granularity=granularity)

    # container protocol ---------------------------------------------------

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Optional[R]]:
        return iter(self.records)

    def __getitem__(self, index: int) -> Optional[R]:
        return self.records[index]

    # time axis ------------------------------------------------------------

    def timestamps(self) -> pd.DatetimeIndex:
        if self.granularity == "interval":
            freq = f"{self.step_minutes}min"
        else:
            freq = _PANDAS_FREQ[self.granularity]
        return pd.date_range(self.start, periods=len(self.records), freq=freq, tz="UTC")

    def timestamp_at(self, index: int) -> datetime:
        if self.granularity == "interval":
            return self.start + timedelta(minutes=self.step_minutes * index)
        return self.timestamps()[index].to_pydatetime()

    @property
    def end(self) -> datetime:
        """Exclusive end instant of the series."""
        if self.granularity == "interval":
            return self.start + timedelta(minutes=self.step_minutes * len(self.records))
        stamps = pd.date_range(self.start, periods=len(self.records) + 1, freq=_PANDAS_FREQ[self.granularity], tz="UTC")
        return stamps[-1].to_pydatetime()

    def index_of(self, instant: datetime) -> int:
        if self.granularity != "interval":
            raise DataError("index_of only applies to interval series")
        delta = to_utc(instant) - self.start
        steps, remainder = divmod(delta.total_seconds(), self.step_minutes * 60)
        if remainder:
            raise DataError(f"{instant} is not on the series grid")
        return int(steps)

    def is_aligned_with(self, other: "TimeSeries") -> bool:
        return (
            self.start == other.start
            and self.step_minutes == other.step_minutes
            and self.granularity == other.granularity
            and len(self) == len(other)
        )

    def overlaps(self, other: "TimeSeries") -> bool:
        return self.start < other.end and other.start < self.end

    # transformations ------------------------------------------------------

    def map(self, fn: Callable[[R], S]) -> "TimeSeries[S]":
        """Apply fn to every present record; absent records stay absent."""
        return TimeSeries(
            start=self.start,
            records=tuple(None if record is None else fn(record) for record in self.records),
            step_minutes=self.step_minutes,
            granularity=self.granularity,
        )

    def slice(self, begin: int, stop: Optional[int] = None) -> "TimeSeries[R]":
        stop = len(self.records) if stop is None else stop
        if self.granularity != "interval":
            raise DataError("slicing is only defined for interval series")
        return TimeSeries(
            start=self.timestamp_at(begin),
            records=self.records[begin:stop],
            step_minutes=self.step_minutes,
        )

    def window(self, start: datetime, end: datetime) -> "TimeSeries[R]":
        """Records with start <= timestamp < end."""
        begin = max(0, self.index_of(start))
        stop = min(len(self.records), self.index_of(end))
        return self.slice(begin, stop)

    def concat(self, other: "TimeSeries[R]") -> "TimeSeries[R]":
        if other.start != self.end or other.step_minutes != self.step_minutes:
            raise DataError("series are not contiguous")
        return TimeSeries(
            start=self.start,
            records=self.records + other.records,
            step_minutes=self.step_minutes,
            granularity=self.granularity,
        )

    def values(self) -> np.ndarray:
        """Float array of a scalar series, NaN for absent records."""
        return np.array(
            [np.nan if record is None else float(record) for record in self.records], dtype=float
        )

    def present_count(self) -> int:
        return sum(record is not None for record in self.records)


def _as_scalar_series(series: TimeSeries) -> pd.Series:
    return pd.Series(series.values(), index=series.timestamps())


def resample_mean(series: TimeSeries[float], granularity: Literal["daily", "monthly"]) -> TimeSeries[float]:
    """One record per calendar day/month: mean of present records in the bucket."""
    if len(series) == 0:
        raise DataError("empty input")
    if granularity not in _PANDAS_FREQ:
        raise DataError(f"unknown granularity '{granularity}'")
    if series.granularity == "monthly" and granularity == "daily":
        raise DataError("cannot resample monthly data to daily")
    if series.granularity == granularity:
        return series

    frame = _as_scalar_series(series)
    # pandas skips NaN; an all-NaN bucket yields NaN, which becomes an absent marker
    means = frame.resample(_PANDAS_FREQ[granularity]).mean()
    return TimeSeries.from_values(means.index[0].to_pydatetime(), means.to_numpy(), granularity=granularity)


def resample_sum(series: TimeSeries[float], granularity: Literal["daily", "monthly"]) -> TimeSeries[float]:
    """Bucket totals of present records; an all-absent bucket is absent."""
    if len(series) == 0:
        raise DataError("empty input")
    frame = _as_scalar_series(series)
    totals = frame.resample(_PANDAS_FREQ[granularity]).sum(min_count=1)
    return TimeSeries.from_values(totals.index[0].to_pydatetime(), totals.to_numpy(), granularity=granularity)


def bucket_counts(series: TimeSeries, granularity: Literal["daily", "monthly"]) -> pd.Series:
    """Number of present records per calendar bucket."""
    present = pd.Series(
        [record is not None for record in series.records], index=series.timestamps(), dtype=float
    )
    return present.resample(_PANDAS_FREQ[granularity]).sum()


# CSV interfaces ------------------------------------------------------------

WEATHER_COLUMNS = ["timestamp", "dry_bulb_c", "rel_humidity_pct"]
ENERGY_COLUMNS = ["timestamp", "power_kw", "cooling_kw"]


def format_timestamp(instant: datetime) -> str:
    return to_utc(instant).strftime("%Y-%m-%dT%H:%M:%SZ")


def records_to_frame(series: TimeSeries[R], columns: List[str], row: Callable[[R], Dict[str, float]]) -> pd.DataFrame:
    """Tabulate a series; absent records become rows of empty fields."""
    rows = []
    for instant, record in zip(series.timestamps(), series.records):
        values = {name: None for name in columns[1:]} if record is None else row(record)
        rows.append({"timestamp": format_timestamp(instant), **values})
    return pd.DataFrame(rows, columns=columns)


def write_frame(frame: pd.DataFrame, path: str | Path) -> None:
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def read_interval_frame(path: str | Path, columns: List[str]) -> tuple[datetime, pd.DataFrame]:
    """Read a CSV whose timestamps are strictly increasing and 15-minute aligned."""
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    missing = [name for name in columns if name not in frame.columns]
    if missing:
        raise DataError(f"{path} is missing columns: {', '.join(missing)}")
    if frame.empty:
        raise DataError(f"{path}: empty input")
    stamps = pd.to_datetime(frame["timestamp"], utc=True)
    steps = stamps.diff().dropna()
    if (steps <= pd.Timedelta(0)).any():
        raise DataError(f"{path}: timestamps must be strictly increasing")
    if (steps != pd.Timedelta(minutes=STEP_MINUTES)).any():
        raise DataError(f"{path}: timestamps must be contiguous {STEP_MINUTES}-minute intervals")
    if (stamps.dt.minute % STEP_MINUTES != 0).any():
        raise DataError(f"{path}: timestamps must be {STEP_MINUTES}-minute aligned")
    return stamps.iloc[0].to_pydatetime(), frame


def write_weather_csv(series: TimeSeries[WeatherRecord], path: str | Path) -> None:
    frame = records_to_frame(
        series,
        WEATHER_COLUMNS,
        lambda r: {"dry_bulb_c": r.dry_bulb_c, "rel_humidity_pct": r.rel_humidity_pct},
    )
    write_frame(frame, path)


def read_weather_csv(path: str | Path) -> TimeSeries[WeatherRecord]:
    start, frame = read_interval_frame(path, WEATHER_COLUMNS)
    records = []
    for dry, rh in zip(frame["dry_bulb_c"], frame["rel_humidity_pct"]):
        if pd.isna(dry) or pd.isna(rh):
            records.append(None)
        else:
            records.append(WeatherRecord(float(dry), float(rh)))
    return TimeSeries(start=start, records=tuple(records))


def write_energy_csv(series: TimeSeries[EnergyRecord], path: str | Path) -> None:
    frame = records_to_frame(
        series,
        ENERGY_COLUMNS,
        lambda r: {"power_kw": r.power_kw, "cooling_kw": r.cooling_kw},
    )
    write_frame(frame, path)


def read_energy_csv(path: str | Path) -> TimeSeries[EnergyRecord]:
    start, frame = read_interval_frame(path, ENERGY_COLUMNS)
    records = []
    for power, cooling in zip(frame["power_kw"], frame["cooling_kw"]):
        if pd.isna(power) or pd.isna(cooling):
            records.append(None)
        else:
            records.append(EnergyRecord(float(power), float(cooling)))
    return TimeSeries(start=start, records=tuple(records))


def write_scalar_csv(series: TimeSeries[float], path: str | Path, column: str) -> None:
    frame = pd.DataFrame(
        {
            "timestamp": [format_timestamp(t) for t in series.timestamps()],
            column: series.values(),
        }
    )
    write_frame(frame, path)


def read_scalar_csv(path: str | Path, column: str) -> TimeSeries[float]:
    start, frame = read_interval_frame(path, ["timestamp", column])
    return TimeSeries.from_values(start, frame[column].to_numpy(dtype=float))


def utc_midnight(instant: datetime) -> datetime:
    stamp = to_utc(instant)
    return stamp.replace(hour=0, minute=0, tzinfo=timezone.utc)
