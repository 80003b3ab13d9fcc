"""Daily gridded fields: storage formats, wind speed, anomalies, annual series.

A field is a float32 tensor indexed ``(year, day, node)`` with a fixed
365-day calendar. Missing entries hold :data:`MISSING`, the most negative
finite float32.

Two on-disk layouts are supported. ``csv`` starts with::

    #AGF-CSV,v1,n_lat,n_lon,lat_step,lon_step,lat_origin,lon_origin,year_first,year_last

followed by one ``year,day,v0,...,v{N-1}`` row per (year, day), missing
written as ``NA``. ``bin`` is the ``AGF1`` magic followed by a little-endian
header (u32 n_lat, u32 n_lon, 4 x f64 geometry, i32 year_first, i32 year_last)
and the raw f32 payload in (year, day, node) order.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ParseError
from .grid import GridSpec

DAYS = 365
MISSING = np.finfo(np.float32).min

BIN_MAGIC = b"AGF1"
_BIN_HEADER = struct.Struct("<4sIIddddii")
CSV_TAG = "#AGF-CSV"
CSV_VERSION = "v1"


@dataclass(eq=False)
class DailyField:
    """Dense (year, day, node) tensor on a grid. Anomaly fields share this type."""

    grid: GridSpec
    year_first: int
    values: np.ndarray
    # surrogate fields record, per (output year, node), which input year
    # block was placed there; None for unshuffled data
    year_source: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 3 or self.values.shape[1:] != (DAYS, self.grid.node_count):
            raise InvalidInputError(
                f"values must have shape (n_years, {DAYS}, {self.grid.node_count}), "
                f"got {self.values.shape}"
            )
        if self.values.shape[0] < 1:
            raise InvalidInputError("field must cover at least one year")

    @property
    def n_years(self) -> int:
        return self.values.shape[0]

    @property
    def year_last(self) -> int:
        return self.year_first + self.n_years - 1

    @property
    def years(self) -> range:
        return range(self.year_first, self.year_last + 1)

    @property
    def missing(self) -> np.ndarray:
        return self.values == MISSING

    def year_index(self, year: int) -> int:
        if year not in self.years:
            raise InvalidInputError(f"year {year} outside {self.year_first}-{self.year_last}")
        return year - self.year_first

    def complete_nodes(self, year: int) -> np.ndarray:
        """Boolean per node: no missing day in ``year``."""
        yi = self.year_index(year)
        return ~np.any(self.values[yi] == MISSING, axis=0)

    def equals(self, other: "DailyField") -> bool:
        return (
            self.grid == other.grid
            and self.year_first == other.year_first
            and self.values.shape == other.values.shape
            and self.values.tobytes() == other.values.tobytes()
        )


AnomalyField = DailyField


# ---------------------------------------------------------------------------
# storage


def _fmt(v: np.float32) -> str:
    # shortest repr that round-trips through float32
    return "NA" if v == MISSING else str(v)


def store_field(field: DailyField, path, format: str = "bin") -> None:
    if format == "bin":
        _store_bin(field, path)
    elif format == "csv":
        _store_csv(field, path)
    else:
        raise InvalidInputError(f"unknown field format {format!r}")


def load_field(path, format: str | None = None) -> DailyField:
    """Read a field; ``format`` defaults to sniffing the first bytes."""
    if format is None:
        with open(path, "rb") as fh:
            head = fh.read(len(CSV_TAG))
        format = "csv" if head == CSV_TAG.encode() else "bin"
    if format == "bin":
        return _load_bin(path)
    if format == "csv":
        return _load_csv(path)
    raise InvalidInputError(f"unknown field format {format!r}")


def _store_bin(field: DailyField, path) -> None:
    g = field.grid
    header = _BIN_HEADER.pack(
        BIN_MAGIC, g.n_lat, g.n_lon, g.lat_step, g.lon_step, g.lat_origin, g.lon_origin,
        field.year_first, field.year_last,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(field.values.astype("<f4", copy=False).tobytes(order="C"))


def _load_bin(path) -> DailyField:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != BIN_MAGIC:
        raise ParseError("bad magic", 0, unit="byte")
    if len(raw) < _BIN_HEADER.size:
        raise ParseError("truncated header", len(raw), unit="byte")
    _, n_lat, n_lon, lat_step, lon_step, lat_origin, lon_origin, y0, y1 = _BIN_HEADER.unpack_from(raw)
    try:
        grid = GridSpec(n_lat, n_lon, lat_step, lon_step, lat_origin, lon_origin)
    except InvalidInputError as exc:
        raise ParseError(f"malformed grid header: {exc}", 4, unit="byte") from None
    if y1 < y0:
        raise ParseError("year_last precedes year_first", _BIN_HEADER.size - 8, unit="byte")
    n_years = y1 - y0 + 1
    expected = 4 * n_years * DAYS * grid.node_count
    payload = len(raw) - _BIN_HEADER.size
    if payload != expected:
        raise ParseError(
            f"payload holds {payload} bytes, header implies {expected}",
            _BIN_HEADER.size + min(payload, expected), unit="byte",
        )
    values = np.frombuffer(raw, dtype="<f4", offset=_BIN_HEADER.size)
    values = values.reshape(n_years, DAYS, grid.node_count).astype(np.float32)
    return DailyField(grid, y0, values)


def _store_csv(field: DailyField, path) -> None:
    g = field.grid
    with open(path, "w", newline="") as fh:
        fh.write(
            f"{CSV_TAG},{CSV_VERSION},{g.n_lat},{g.n_lon},{g.lat_step!r},{g.lon_step!r},"
            f"{g.lat_origin!r},{g.lon_origin!r},{field.year_first},{field.year_last}\n"
        )
        for yi, year in enumerate(field.years):
            for day in range(DAYS):
                row = field.values[yi, day]
                fh.write(f"{year},{day}," + ",".join(_fmt(v) for v in row) + "\n")


def _load_csv(path) -> DailyField:
    with open(path, newline="") as fh:
        first = fh.readline().rstrip("\r\n").split(",")
        if len(first) != 10 or first[0] != CSV_TAG or first[1] != CSV_VERSION:
            raise ParseError("malformed AGF-CSV header", 1)
        try:
            n_lat, n_lon = int(first[2]), int(first[3])
            lat_step, lon_step, lat_origin, lon_origin = (float(x) for x in first[4:8])
            y0, y1 = int(first[8]), int(first[9])
            grid = GridSpec(n_lat, n_lon, lat_step, lon_step, lat_origin, lon_origin)
        except (ValueError, InvalidInputError) as exc:
            raise ParseError(f"malformed AGF-CSV header: {exc}", 1) from None
        if y1 < y0:
            raise ParseError("year_last precedes year_first", 1)
        n_years = y1 - y0 + 1
        n = grid.node_count
        values = np.empty((n_years, DAYS, n), dtype=np.float32)
        expected_rows = n_years * DAYS
        row_i = 0
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if not row:
                continue
            if row_i >= expected_rows:
                raise ParseError(f"more than {expected_rows} data rows", lineno)
            yi, day = divmod(row_i, DAYS)
            if len(row) != n + 2:
                raise ParseError(f"expected {n + 2} columns, got {len(row)}", lineno)
            if row[0] != str(y0 + yi) or row[1] != str(day):
                raise ParseError(f"expected row for year {y0 + yi} day {day}", lineno)
            try:
                values[yi, day] = [MISSING if v == "NA" else np.float32(v) for v in row[2:]]
            except ValueError:
                raise ParseError("non-numeric value", lineno) from None
            row_i += 1
        if row_i != expected_rows:
            raise ParseError(f"found {row_i} data rows, header implies {expected_rows}", row_i + 2)
    return DailyField(grid, y0, values)


# ---------------------------------------------------------------------------
# derived fields


def wind_speed(u: DailyField, v: DailyField) -> DailyField:
    """Horizontal wind speed ``sqrt(u^2 + v^2)``; missing where either is."""
    if u.grid != v.grid or u.year_first != v.year_first or u.values.shape != v.values.shape:
        raise InvalidInputError("u and v fields differ in grid, years or shape")
    missing = u.missing | v.missing
    speed = np.hypot(np.where(missing, 0, u.values), np.where(missing, 0, v.values)).astype(np.float32)
    speed[missing] = MISSING
    return DailyField(u.grid, u.year_first, speed)


def compute_anomaly(field: DailyField) -> DailyField:
    """Subtract the per-(day, node) mean over all years.

    The climatology skips missing entries; output is missing wherever the
    input is. Accumulation is in float64, storage float32.
    """
    if field.n_years < 2:
        raise InvalidInputError("anomaly requires ≥ 2 years")
    x = field.values.astype(np.float64)
    missing = field.missing
    x[missing] = 0.0
    counts = np.count_nonzero(~missing, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        clim = x.sum(axis=0) / counts
    anom = (x - clim[None]).astype(np.float32)
    anom[missing] = MISSING
    return DailyField(field.grid, field.year_first, anom)


# ---------------------------------------------------------------------------
# annual series


class AnnualSeries:
    """Year -> value mapping with strictly increasing years."""

    def __init__(self, years=(), values=()):
        years = np.asarray(years, dtype=np.int64).ravel()
        values = np.asarray(values, dtype=np.float64).ravel()
        if years.shape != values.shape:
            raise InvalidInputError("years and values differ in length")
        order = np.argsort(years, kind="stable")
        years, values = years[order], values[order]
        if np.any(np.diff(years) == 0):
            raise InvalidInputError("duplicate year in annual series")
        self.years = years
        self.values = values

    @classmethod
    def from_dict(cls, mapping) -> "AnnualSeries":
        items = sorted(mapping.items())
        return cls([k for k, _ in items], [v for _, v in items])

    def to_dict(self) -> dict:
        return {int(y): float(v) for y, v in zip(self.years, self.values)}

    def __len__(self):
        return self.years.size

    def __getitem__(self, year):
        i = np.searchsorted(self.years, year)
        if i == self.years.size or self.years[i] != year:
            raise KeyError(year)
        return float(self.values[i])

    def __eq__(self, other):
        return (
            isinstance(other, AnnualSeries)
            and np.array_equal(self.years, other.years)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"AnnualSeries({self.to_dict()!r})"

    def total(self) -> float:
        return float(self.values.sum())


def load_annual_series(path) -> AnnualSeries:
    years, values = [], []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["year", "value"]:
            raise ParseError("annual series header must be 'year,value'", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 columns, got {len(row)}", lineno)
            try:
                year = int(row[0])
            except ValueError:
                raise ParseError(f"non-integer year {row[0]!r}", lineno) from None
            try:
                value = float(row[1])
            except ValueError:
                raise ParseError(f"non-numeric value {row[1]!r}", lineno) from None
            if year in seen:
                raise ParseError(f"duplicate year {year}", lineno)
            seen.add(year)
            years.append(year)
            values.append(value)
    return AnnualSeries(years, values)


def store_annual_series(series: AnnualSeries, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("year,value\n")
        for y, v in zip(series.years, series.values):
            fh.write(f"{int(y)},{_num(v)}\n")


def _num(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() else repr(v)
