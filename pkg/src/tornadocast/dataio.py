"""Weather and storm-event ingestion, cleaning, labeling and the canonical dataset.

Raw tables are pandas DataFrames. The labeled output is a :class:`LabeledDataset`
holding numpy arrays, which is what the rest of the package consumes.

Canonical dataset CSV layout::

    date,location_id,<feature_1>,...,<feature_n>,result
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import DataError, SchemaError

DATE = "date"
LOCATION = "location_id"
RESULT = "result"
KEY_COLUMNS = (DATE, LOCATION)

# Named weather attributes; any other numeric column is kept as an extra feature.
WEATHER_FIELDS = (
    "temp_max",
    "temp_min",
    "temp_avg",
    "feels_like",
    "dew_point",
    "humidity",
    "precip_amount",
    "precip_prob",
    "precip_cover",
    "wind_speed",
    "wind_dir",
    "sea_level_pressure",
    "cloud_cover",
    "visibility",
    "moon_phase",
)

# Visual Crossing / SPC export headers -> canonical names.
COLUMN_ALIASES = {
    "datetime": DATE,
    "name": LOCATION,
    "tempmax": "temp_max",
    "tempmin": "temp_min",
    "temp": "temp_avg",
    "feelslike": "feels_like",
    "dew": "dew_point",
    "precip": "precip_amount",
    "precipprob": "precip_prob",
    "precipcover": "precip_cover",
    "windspeed": "wind_speed",
    "winddir": "wind_dir",
    "sealevelpressure": "sea_level_pressure",
    "cloudcover": "cloud_cover",
    "moonphase": "moon_phase",
}
EVENT_ALIASES = {"st": LOCATION, "mag": "magnitude", "slat": "latitude", "slon": "longitude"}

VALID_RANGES = {
    "humidity": (0.0, 100.0, True),
    "precip_prob": (0.0, 100.0, True),
    "precip_cover": (0.0, 100.0, True),
    "cloud_cover": (0.0, 100.0, True),
    "moon_phase": (0.0, 1.0, True),
    "wind_dir": (0.0, 360.0, False),
    "precip_amount": (0.0, math.inf, True),
    "wind_speed": (0.0, math.inf, True),
    "visibility": (0.0, math.inf, True),
}

MISSING_TOKENS = frozenset({"", "na", "nan", "null", "none", "n/a"})
UNKNOWN_MAGNITUDE = frozenset({"", "-9", "u", "unknown", "na", "nan"})


def _is_missing(value) -> bool:
    if value is None:
        return True
    if isinstance(value, float):
        return math.isnan(value)
    return isinstance(value, str) and value.strip().lower() in MISSING_TOKENS


# --------------------------------------------------------------------------
# Loading
# --------------------------------------------------------------------------


def _read_csv_strict(path, schema=None) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if schema is not None and list(schema) != header:
            missing = [c for c in schema if c not in header]
            extra = [c for c in header if c not in schema]
            raise SchemaError(
                f"{path}: header mismatch (missing={missing}, unexpected={extra})"
            )
        rows = []
        try:
            for row in reader:
                if not row:
                    continue
                if len(row) != len(header):
                    raise DataError(
                        f"{path}: line {reader.line_num}: expected {len(header)} fields, "
                        f"got {len(row)}"
                    )
                rows.append(row)
        except csv.Error as exc:
            raise DataError(f"{path}: line {reader.line_num}: {exc}") from exc
    return pd.DataFrame(rows, columns=header, dtype=object)


def load_weather_csv(path, schema=None) -> pd.DataFrame:
    """Read a weather CSV as raw string cells, column order preserved.

    If ``schema`` is given the header must equal it exactly.
    """
    return _read_csv_strict(path, schema)


def load_events_csv(path) -> pd.DataFrame:
    """Read a storm-event CSV into ``date, location_id, magnitude[, latitude, longitude]``.

    SPC-style headers (``st``, ``mag``, ``slat``, ``slon``) are accepted.
    Magnitude is a nullable integer; ``-9``/blank/``U`` mean unknown.
    """
    raw = _read_csv_strict(path)
    raw = raw.rename(columns={k: v for k, v in EVENT_ALIASES.items() if k in raw.columns})
    required = (DATE, LOCATION, "magnitude")
    missing = [c for c in required if c not in raw.columns]
    if missing:
        raise SchemaError(f"{path}: event file lacks columns {missing}")

    mags = []
    for i, value in enumerate(raw["magnitude"]):
        text = str(value).strip().lower()
        if text in UNKNOWN_MAGNITUDE:
            mags.append(pd.NA)
            continue
        try:
            mag = int(float(text))
        except ValueError:
            raise DataError(f"{path}: line {i + 2}: bad magnitude {value!r}") from None
        if not 0 <= mag <= 5:
            raise DataError(f"{path}: line {i + 2}: magnitude {mag} outside EF0-EF5")
        mags.append(mag)

    events = pd.DataFrame(
        {
            DATE: raw[DATE],
            LOCATION: raw[LOCATION].astype(str).str.strip(),
            "magnitude": pd.array(mags, dtype="Int64"),
        }
    )
    for col in ("latitude", "longitude"):
        if col in raw.columns:
            events[col] = pd.to_numeric(raw[col].replace("", np.nan), errors="coerce")
    return parse_dates(events)


# --------------------------------------------------------------------------
# Cleaning
# --------------------------------------------------------------------------


def canonicalize_columns(rows: pd.DataFrame) -> pd.DataFrame:
    renames = {k: v for k, v in COLUMN_ALIASES.items() if k in rows.columns and v not in rows.columns}
    return rows.rename(columns=renames)


def clean_columns(rows: pd.DataFrame, sparsity_threshold: float = 0.5):
    """Drop non-numeric and sparse columns.

    Returns ``(cleaned, dropped)`` where ``dropped`` is a list of
    ``{"column", "reason", "missing_fraction"}`` records. A column is sparse when
    its missing fraction is strictly greater than ``sparsity_threshold``.
    """
    if not 0.0 <= sparsity_threshold <= 1.0:
        raise ValueError("sparsity_threshold must be in [0, 1]")
    rows = canonicalize_columns(rows)
    for key in KEY_COLUMNS:
        if key not in rows.columns:
            raise SchemaError(f"weather table lacks required column {key!r}")

    n = len(rows)
    kept = {key: rows[key] for key in KEY_COLUMNS}
    dropped = []
    for col in rows.columns:
        if col in KEY_COLUMNS:
            continue
        series = rows[col]
        if pd.api.types.is_numeric_dtype(series):
            values = series.astype(float)
            present = values.notna()
        else:
            present = ~series.map(_is_missing).astype(bool)
            values = pd.to_numeric(series.where(present), errors="coerce")
            if bool((values.isna() & present).any()):
                dropped.append({"column": col, "reason": "non-numeric", "missing_fraction": None})
                continue
        values = values.where(np.isfinite(values))
        frac = float(values.isna().mean()) if n else 0.0
        if frac > sparsity_threshold:
            dropped.append({"column": col, "reason": "sparse", "missing_fraction": frac})
            continue
        kept[col] = values.astype(np.float64)

    if len(kept) == len(KEY_COLUMNS):
        raise DataError("no usable features: every non-key column was dropped")
    return pd.DataFrame(kept, index=rows.index), dropped


def feature_columns(rows: pd.DataFrame) -> list[str]:
    return [c for c in rows.columns if c not in KEY_COLUMNS and c != RESULT]


def impute_mean(rows: pd.DataFrame, means=None) -> pd.DataFrame:
    """Fill missing feature cells with the column mean of present values.

    ``means`` (a mapping) overrides the computed means, e.g. training-fold means.
    """
    out = rows.copy()
    for col in feature_columns(out):
        values = out[col]
        if not values.isna().any():
            continue
        if means is not None:
            fill = means[col]
        else:
            if values.notna().sum() == 0:
                raise DataError(f"column {col!r} has no present values to average")
            fill = values.mean()
        out[col] = values.fillna(fill)
    return out


def check_ranges(rows: pd.DataFrame) -> list[dict]:
    """List range violations of the named weather attributes (not an error)."""
    problems = []
    for col, (lo, hi, hi_closed) in VALID_RANGES.items():
        if col not in rows.columns:
            continue
        v = rows[col].to_numpy(dtype=float)
        bad = (v < lo) | ((v > hi) if hi_closed else (v >= hi))
        bad &= ~np.isnan(v)
        if bad.any():
            problems.append({"column": col, "count": int(bad.sum()), "range": [lo, hi]})
    return problems


_DATE_FORMATS = ("%Y-%m-%d", "%m/%d/%Y", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S")


def _parse_date_column(values: pd.Series) -> pd.Series:
    if pd.api.types.is_datetime64_any_dtype(values):
        return values.dt.normalize()
    text = values.astype(str).str.strip()
    parsed = pd.Series(pd.NaT, index=values.index, dtype="datetime64[ns]")
    for fmt in _DATE_FORMATS:
        todo = parsed.isna()
        if not todo.any():
            break
        parsed[todo] = pd.to_datetime(text[todo], format=fmt, errors="coerce")
    bad = parsed.isna()
    if bad.any():
        pos = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"row {pos + 1}: unparseable date {text.iloc[pos]!r}")
    return parsed.dt.normalize()


def parse_dates(rows: pd.DataFrame) -> pd.DataFrame:
    """Convert the date column to day-resolution datetimes and sort by (date, location_id)."""
    if DATE not in rows.columns:
        raise SchemaError("table lacks a 'date' column")
    out = rows.copy()
    out[DATE] = _parse_date_column(out[DATE])
    keys = [DATE, LOCATION] if LOCATION in out.columns else [DATE]
    return out.sort_values(keys, kind="mergesort").reset_index(drop=True)


def clean_weather(rows: pd.DataFrame, sparsity_threshold: float = 0.5, impute: bool = True):
    """clean_columns -> impute_mean -> parse_dates. Returns ``(table, dropped_columns)``."""
    cleaned, dropped = clean_columns(rows, sparsity_threshold)
    if impute:
        cleaned = impute_mean(cleaned)
    return parse_dates(cleaned), dropped


# --------------------------------------------------------------------------
# Labeled samples
# --------------------------------------------------------------------------


@dataclass
class LabeledDataset:
    """Feature matrix with binary ``result`` labels and (date, location_id) keys."""

    X: np.ndarray
    y: np.ndarray
    dates: np.ndarray
    location_ids: np.ndarray
    feature_names: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.location_ids = np.asarray(self.location_ids, dtype=object)
        self.feature_names = list(self.feature_names)
        n = len(self.y)
        if self.X.ndim != 2 or self.X.shape[0] != n:
            raise SchemaError(f"X must be (n, n_features) with n={n}, got {self.X.shape}")
        if self.X.shape[1] != len(self.feature_names):
            raise SchemaError("feature_names length does not match X")
        if len(self.dates) != n or len(self.location_ids) != n:
            raise SchemaError("dates/location_ids length does not match labels")
        if n and not np.isin(self.y, (0, 1)).all():
            raise SchemaError("result labels must be 0 or 1")

    def __len__(self):
        return len(self.y)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def subset(self, index) -> "LabeledDataset":
        return LabeledDataset(
            self.X[index], self.y[index], self.dates[index], self.location_ids[index],
            self.feature_names,
        )

    def sorted_by_location(self) -> "LabeledDataset":
        order = np.lexsort((self.dates, self.location_ids.astype(str)))
        return self.subset(order)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.X, columns=self.feature_names)
        frame.insert(0, LOCATION, self.location_ids)
        frame.insert(0, DATE, pd.to_datetime(self.dates).strftime("%Y-%m-%d"))
        frame[RESULT] = self.y
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "LabeledDataset":
        for col in (DATE, LOCATION, RESULT):
            if col not in frame.columns:
                raise SchemaError(f"dataset lacks column {col!r}")
        features = feature_columns(frame)
        dates = _parse_date_column(frame[DATE]).to_numpy().astype("datetime64[D]")
        return cls(
            frame[features].to_numpy(dtype=np.float64),
            frame[RESULT].to_numpy(dtype=np.int64),
            dates,
            frame[LOCATION].astype(str).to_numpy(dtype=object),
            features,
        )


def join_label(weather: pd.DataFrame, events: pd.DataFrame):
    """Label each weather row with ``result = 1`` iff an event shares its (date, location_id).

    Returns ``(dataset, dropped_events)``; ``dropped_events`` lists events that
    match no weather row.
    """
    weather = parse_dates(weather)
    events = parse_dates(events)
    event_keys = pd.MultiIndex.from_arrays([events[DATE], events[LOCATION].astype(str)])
    weather_keys = pd.MultiIndex.from_arrays([weather[DATE], weather[LOCATION].astype(str)])

    y = weather_keys.isin(event_keys).astype(np.int64)
    orphan = ~event_keys.isin(weather_keys)
    dropped = [
        {"date": d.strftime("%Y-%m-%d"), "location_id": loc}
        for d, loc in zip(events[DATE][orphan], events[LOCATION].astype(str)[orphan])
    ]
    features = feature_columns(weather)
    ds = LabeledDataset(
        weather[features].to_numpy(dtype=np.float64),
        y,
        weather[DATE].to_numpy().astype("datetime64[D]"),
        weather[LOCATION].astype(str).to_numpy(dtype=object),
        features,
    )
    return ds, dropped


@dataclass
class DatasetSummary:
    rows_per_year: dict[int, int] = field(default_factory=dict)
    tornado_per_year: dict[int, int] = field(default_factory=dict)
    total_rows: int = 0
    total_positives: int = 0
    n_features: int = 0

    def to_dict(self) -> dict:
        return {
            "rows_per_year": {str(k): v for k, v in self.rows_per_year.items()},
            "tornado_per_year": {str(k): v for k, v in self.tornado_per_year.items()},
            "total_rows": self.total_rows,
            "total_positives": self.total_positives,
            "n_features": self.n_features,
        }

    def format_table(self) -> str:
        lines = [f"{'Year':<6}{'Number of rows':>16}{'Number of tornado':>20}"]
        for year in sorted(self.rows_per_year):
            lines.append(
                f"{year:<6}{self.rows_per_year[year]:>16,}{self.tornado_per_year.get(year, 0):>20,}"
            )
        lines.append(f"{'Total':<6}{self.total_rows:>16,}{self.total_positives:>20,}")
        return "\n".join(lines)


def summarize(samples: LabeledDataset) -> DatasetSummary:
    if len(samples) == 0:
        return DatasetSummary(n_features=samples.n_features)
    years = samples.dates.astype("datetime64[Y]").astype(int) + 1970
    uniq, counts = np.unique(years, return_counts=True)
    rows = {int(yr): int(c) for yr, c in zip(uniq, counts)}
    pos = {int(yr): int(samples.y[years == yr].sum()) for yr in uniq}
    return DatasetSummary(rows, pos, len(samples), int(samples.y.sum()), samples.n_features)


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------


def write_dataset(samples: LabeledDataset, path) -> None:
    # pandas writes floats with repr(), which round-trips float64 exactly
    samples.to_frame().to_csv(path, index=False, lineterminator="\n")


def read_dataset(path) -> LabeledDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    frame = pd.read_csv(path, dtype={DATE: str, LOCATION: str}, float_precision="round_trip")
    return LabeledDataset.from_frame(frame)


def read_dataset_header(path) -> list[str]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        return next(csv.reader(fh), [])


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
