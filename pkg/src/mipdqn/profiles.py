"""24-hour PV / load / price series: CSV ingestion, synthesis and train/test split."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

CSV_HEADER = ("timestamp", "pv_kw", "load_kw", "price")


@dataclass(frozen=True)
class DayProfile:
    day: date | None
    pv: tuple[float, ...]
    load: tuple[float, ...]
    price: tuple[float, ...]

    def __post_init__(self):
        for name in ("pv", "load", "price"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.pv) == len(self.load) == len(self.price):
            raise ValidationError("pv, load and price must have equal length")
        if any(v < 0 for v in self.pv) or any(v < 0 for v in self.load):
            raise ValidationError(f"negative pv or load on {self.day}")
        if any(v <= 0 for v in self.price):
            raise ValidationError(f"non-positive price on {self.day}")

    def __len__(self):
        return len(self.pv)

    def scaled(self, load_factor: float = 1.0, pv_factor: float = 1.0) -> "DayProfile":
        return replace(self, load=[v * load_factor for v in self.load],
                       pv=[v * pv_factor for v in self.pv])


@dataclass(frozen=True)
class Dataset:
    train: tuple[DayProfile, ...]
    test: tuple[DayProfile, ...]


@dataclass(frozen=True)
class SeasonParams:
    """Hourly shape parameters for one season.

    PV follows a daylight bell between ``sunrise`` and ``sunset`` peaking at
    ``pv_peak`` kW; load is a base level plus morning and evening bumps and a
    daytime plateau; price is a three-tier time-of-use tariff.
    """

    pv_peak: float
    sunrise: float = 6.0
    sunset: float = 20.0
    pv_day_std: float = 0.08
    pv_hour_std: float = 0.05
    load_base: float = 230.0
    load_daytime: float = 80.0
    load_morning: float = 40.0
    load_evening: float = 100.0
    load_day_std: float = 0.04
    load_hour_std: float = 0.03
    price_off_peak: float = 3.0
    price_shoulder: float = 8.0
    price_peak: float = 14.0
    price_std: float = 0.05
    price_floor: float = 0.5

    @property
    def solar_noon(self) -> float:
        return 0.5 * (self.sunrise + self.sunset)

    def pv_mean(self) -> np.ndarray:
        h = np.arange(24, dtype=float)
        phase = np.clip((h - self.sunrise) / (self.sunset - self.sunrise), 0.0, 1.0)
        pv = self.pv_peak * np.sin(np.pi * phase) ** 1.5
        pv[(phase <= 0.0) | (phase >= 1.0)] = 0.0   # sin(pi) is not exactly zero
        return pv

    def load_mean(self) -> np.ndarray:
        h = np.arange(24, dtype=float)
        bump = lambda centre, width: np.exp(-0.5 * ((h - centre) / width) ** 2)  # noqa: E731
        plateau = 1.0 / (1.0 + np.exp(-(h - 9.0))) - 1.0 / (1.0 + np.exp(-(h - 17.0)))
        return (self.load_base + self.load_daytime * plateau
                + self.load_morning * bump(8.0, 1.5) + self.load_evening * bump(19.0, 1.8))

    def price_mean(self) -> np.ndarray:
        price = np.full(24, self.price_shoulder)
        price[:7] = self.price_off_peak
        price[23] = self.price_off_peak
        price[17:22] = self.price_peak
        return price


SUMMER = SeasonParams(pv_peak=170.0)
WINTER = SeasonParams(pv_peak=90.0, sunrise=8.0, sunset=17.0, load_base=240.0, load_evening=110.0)


def _blend(a: SeasonParams, b: SeasonParams, w: float) -> SeasonParams:
    fields = {k: (1 - w) * getattr(a, k) + w * getattr(b, k) for k in a.__dataclass_fields__}
    return SeasonParams(**fields)


def season_for(day: date) -> SeasonParams:
    """Cosine blend between winter (early January) and summer (late June)."""
    doy = day.timetuple().tm_yday
    w = 0.5 * (1 - math.cos(2 * math.pi * (doy - 1) / 365.0))
    return _blend(WINTER, SUMMER, w)


def synthesize(seed: int, n_days: int, season_params: SeasonParams | None = None,
               start: date = date(2023, 1, 1)) -> list[DayProfile]:
    """Draw ``n_days`` consecutive synthetic days starting at ``start``.

    With ``season_params`` every day uses that season; otherwise the season
    drifts with the calendar between WINTER and SUMMER.
    """
    if n_days < 1:
        raise ValidationError("n_days must be at least 1")
    rng = np.random.default_rng(seed)
    days = []
    for k in range(n_days):
        day = start + timedelta(days=k)
        sp = season_params or season_for(day)
        pv = sp.pv_mean() * (1 + sp.pv_day_std * rng.standard_normal()) \
            * (1 + sp.pv_hour_std * rng.standard_normal(24))
        load = sp.load_mean() * (1 + sp.load_day_std * rng.standard_normal()) \
            * (1 + sp.load_hour_std * rng.standard_normal(24))
        price = sp.price_mean() * (1 + sp.price_std * rng.standard_normal(24))
        pv = np.where(sp.pv_mean() > 0, np.maximum(pv, 0.0), 0.0)
        days.append(DayProfile(day, pv, np.maximum(load, 0.0), np.maximum(price, sp.price_floor)))
    return days


def split_train_test(days: Iterable[DayProfile]) -> Dataset:
    """Days 1-21 of every month train, the rest test."""
    train, test = [], []
    for d in days:
        if d.day is None:
            raise ValidationError("cannot split a profile without a calendar date")
        (train if d.day.day <= 21 else test).append(d)
    if not train or not test:
        raise ValidationError("split produced an empty train or test set")
    return Dataset(tuple(train), tuple(test))


def load_csv(path, horizon: int = 24) -> list[DayProfile]:
    path = Path(path)
    rows: dict[date, dict[int, tuple[float, float, float]]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"expected header {','.join(CSV_HEADER)}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line=lineno)
            try:
                ts = datetime.fromisoformat(row[0].strip())
                pv, load, price = (float(c) for c in row[1:])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if ts.minute or ts.second or ts.microsecond:
                raise ParseError(f"timestamp {row[0]} is not on the hour", line=lineno)
            hours = rows.setdefault(ts.date(), {})
            if ts.hour in hours:
                raise ParseError(f"duplicate hour {row[0]}", line=lineno)
            hours[ts.hour] = (pv, load, price)

    profiles = []
    for day in sorted(rows):
        hours = rows[day]
        if sorted(hours) != list(range(horizon)):
            missing = sorted(set(range(horizon)) - set(hours))
            raise ValidationError(f"day {day.isoformat()} is incomplete: missing hours {missing}")
        vals = [hours[h] for h in range(horizon)]
        profiles.append(DayProfile(day, *zip(*vals)))
    return profiles


def write_csv(path, days: Sequence[DayProfile]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for d in days:
            base = datetime.combine(d.day, datetime.min.time())
            for h in range(len(d)):
                ts = (base + timedelta(hours=h)).isoformat()
                w.writerow([ts, repr(d.pv[h]), repr(d.load[h]), repr(d.price[h])])
