"""Seeded synthetic datasets with a known Bayes-optimal decision rule.

Negatives ~ N(0, I); positives ~ N(s * u, I) for a random unit vector ``u``.
Projected onto ``u`` the classes are N(0, 1) and N(s, 1), so the Bayes
accuracy has a closed form in the normal CDF.

Also writes the yearly-count fixture used to exercise the ``prep`` pipeline at
full scale (49 regions x every day of 1998-2007).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .dataio import LabeledDataset
from .preprocess import make_rng


@dataclass
class SynthConfig:
    n_samples: int = 5000
    n_features: int = 16
    tornado_rate: float = 0.023
    separability: float = 4.0
    seed: int = 42
    n_locations: int = 10
    start_date: str = "1998-01-01"

    def __post_init__(self):
        if not 0.0 < self.tornado_rate <= 0.5:
            raise ValueError("tornado_rate must be in (0, 0.5]")
        if self.n_features < 2:
            raise ValueError("n_features must be >= 2")
        if self.separability < 0:
            raise ValueError("separability must be >= 0")
        if self.n_samples < 1 or self.n_locations < 1:
            raise ValueError("n_samples and n_locations must be positive")


def _phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def n_positives(n_samples: int, rate: float) -> int:
    """Round ``n * rate`` half up."""
    return int(math.floor(n_samples * rate + 0.5))


def bayes_threshold(separability: float, rate: float) -> float:
    """Cut point on the projection ``x . u`` above which the posterior favours positives."""
    if separability == 0:
        return math.inf if rate < 0.5 else -math.inf
    return separability / 2.0 + math.log((1.0 - rate) / rate) / separability


def bayes_accuracy(separability: float, rate: float) -> float:
    if separability == 0:
        return max(rate, 1.0 - rate)
    tau = bayes_threshold(separability, rate)
    return (1.0 - rate) * _phi(tau) + rate * (1.0 - _phi(tau - separability))


@dataclass
class GroundTruth:
    direction: np.ndarray
    shift: float
    rate: float
    bayes_threshold: float
    bayes_accuracy: float
    n_positives: int
    rows_per_year: dict
    tornado_per_year: dict
    config: dict

    def to_dict(self) -> dict:
        out = asdict(self)
        out["direction"] = self.direction.tolist()
        if not math.isfinite(self.bayes_threshold):
            out["bayes_threshold"] = None
        out["rows_per_year"] = {str(k): v for k, v in self.rows_per_year.items()}
        out["tornado_per_year"] = {str(k): v for k, v in self.tornado_per_year.items()}
        return out


def generate(config: SynthConfig | None = None):
    """Return ``(LabeledDataset, GroundTruth)`` for ``config``.

    Sample ``i`` sits at location ``LOC{i % n_locations}`` on day
    ``start_date + i // n_locations``, so each location has a continuous daily
    series and rows arrive in (date, location) order.
    """
    cfg = config or SynthConfig()
    rng = make_rng(cfg.seed)
    n, d = cfg.n_samples, cfg.n_features
    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)

    n_pos = n_positives(n, cfg.tornado_rate)
    y = np.zeros(n, dtype=np.int64)
    y[rng.permutation(n)[:n_pos]] = 1
    X = rng.standard_normal((n, d)) + cfg.separability * np.outer(y, direction)

    width = len(str(cfg.n_locations - 1))
    locs = np.array([f"LOC{i % cfg.n_locations:0{width}d}" for i in range(n)], dtype=object)
    dates = np.datetime64(cfg.start_date, "D") + (np.arange(n) // cfg.n_locations)

    years = dates.astype("datetime64[Y]").astype(int) + 1970
    rows_per_year, tornado_per_year = {}, {}
    for yr in np.unique(years):
        sel = years == yr
        rows_per_year[int(yr)] = int(sel.sum())
        tornado_per_year[int(yr)] = int(y[sel].sum())

    names = [f"x{j:02d}" for j in range(d)]
    truth = GroundTruth(
        direction, cfg.separability, cfg.tornado_rate,
        bayes_threshold(cfg.separability, cfg.tornado_rate),
        bayes_accuracy(cfg.separability, cfg.tornado_rate),
        n_pos, rows_per_year, tornado_per_year, asdict(cfg),
    )
    return LabeledDataset(X, y, dates, locs, names), truth


def bayes_predict(X, truth: GroundTruth) -> np.ndarray:
    return (np.asarray(X) @ truth.direction > truth.bayes_threshold).astype(np.int64)


# --------------------------------------------------------------------------
# Yearly-count fixture
# --------------------------------------------------------------------------

YEARLY_TORNADO = {
    1998: 491, 1999: 425, 2000: 413, 2001: 405, 2002: 336,
    2003: 398, 2004: 489, 2005: 380, 2006: 363, 2007: 381,
}
# 48 contiguous states + DC: 49 regions, so 365 * 49 = 17,885 rows per year
FIXTURE_REGIONS = (
    "AL AZ AR CA CO CT DE DC FL GA ID IL IN IA KS KY LA ME MD MA MI MN MS MO MT "
    "NE NV NH NJ NM NY NC ND OH OK OR PA RI SC SD TN TX UT VT VA WA WV WI WY"
).split()


def write_yearly_fixture(out_dir, seed: int = 1998):
    """Write ``weather.csv`` and ``events.csv`` reproducing the yearly counts.

    The weather file uses Visual Crossing style headers and includes a text
    column, a sparse column and scattered missing cells so the cleaning path is
    exercised. The event file contains same-day duplicates and a few events in
    a region with no weather rows. Returns the two paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)

    days = pd.date_range("1998-01-01", "2007-12-31", freq="D")
    n_reg = len(FIXTURE_REGIONS)
    n = len(days) * n_reg
    date_col = np.repeat(days.strftime("%Y-%m-%d").to_numpy(), n_reg)
    region_col = np.tile(np.array(FIXTURE_REGIONS, dtype=object), len(days))

    doy = np.repeat(days.dayofyear.to_numpy(), n_reg)
    season = np.cos(2 * np.pi * (doy - 200) / 365.25)
    temp = 55 + 25 * season + rng.normal(0, 8, n)
    spread = np.abs(rng.normal(18, 4, n))

    def r1(a):
        return np.round(a, 1)

    humidity = r1(np.clip(rng.normal(65, 15, n), 5, 100))
    humidity_text = humidity.astype(str).astype(object)
    humidity_text[rng.random(n) < 0.01] = ""
    sparse = r1(rng.gamma(1.0, 2.0, n)).astype(str).astype(object)
    sparse[rng.random(n) < 0.9] = ""

    weather = pd.DataFrame({
        "name": region_col,
        "datetime": date_col,
        "tempmax": r1(temp + spread / 2),
        "tempmin": r1(temp - spread / 2),
        "temp": r1(temp),
        "feelslike": r1(temp + rng.normal(0, 3, n)),
        "dew": r1(temp - rng.gamma(4, 3, n)),
        "humidity": humidity_text,
        "precip": r1(rng.gamma(0.5, 0.3, n)),
        "precipprob": r1(rng.uniform(0, 100, n)),
        "precipcover": r1(rng.uniform(0, 100, n)),
        "preciptype": rng.choice(np.array(["rain", "snow", "", "rain,snow"], dtype=object), n),
        "snow": sparse,
        "windspeed": r1(rng.gamma(3, 4, n)),
        "winddir": r1(rng.uniform(0, 359.9, n)),
        "sealevelpressure": r1(rng.normal(1015, 7, n)),
        "cloudcover": r1(rng.uniform(0, 100, n)),
        "visibility": r1(np.clip(rng.normal(9, 2, n), 0, 15)),
        "moonphase": np.round(rng.uniform(0, 1, n), 2),
        "conditions": rng.choice(np.array(["Clear", "Rain", "Partially cloudy", "Overcast"], dtype=object), n),
    })
    weather_path = out / "weather.csv"
    weather.to_csv(weather_path, index=False, lineterminator="\n")

    years = days.year.to_numpy()
    events = []
    for year, count in YEARLY_TORNADO.items():
        rows = np.flatnonzero(np.repeat(years == year, n_reg))
        picked = rng.choice(rows, size=count, replace=False)
        picked.sort()
        for k, row in enumerate(picked):
            mag = int(rng.integers(-1, 6))
            copies = 2 if k % 17 == 0 else 1
            for _ in range(copies):
                events.append((date_col[row], region_col[row], -9 if mag < 0 else mag))
        events.append((f"{year}-06-15", "PR", 1))
    events_frame = pd.DataFrame(events, columns=["date", "st", "mag"])
    events_path = out / "events.csv"
    events_frame.to_csv(events_path, index=False, lineterminator="\n")
    return weather_path, events_path
