"""Census and case-record ingestion.

Parses delimited census tables (counts V0001..V0007 plus area), derives the
six housing/occupation indicators used by the pipeline, z-standardizes them,
and aggregates dated case records into per-km² densities by neighborhood
and year.
"""

from __future__ import annotations

import csv
import logging
import unicodedata
from dataclasses import dataclass, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, ParseError, SchemaError

log = logging.getLogger(__name__)

#: Indicator column order used everywhere downstream.
INDICATOR_COLUMNS = (
    "population_density",
    "collective_ratio",
    "vacancy_rate",
    "avg_household_size",
    "collective_abs",
    "area_km2",
)

_CENSUS_COUNT_COLUMNS = ("v0001", "v0002", "v0003", "v0004", "v0007")
_CENSUS_REQUIRED = ("v0001", "v0002", "v0003", "v0004", "v0005", "v0006", "v0007", "area_km2")
_ID_COLUMN_ALIASES = ("neighborhood", "neighborhood_id", "bairro", "id")


def normalize_key(name: str) -> str:
    """Canonical neighborhood key: trimmed, accent-stripped, uppercased."""
    stripped = unicodedata.normalize("NFD", name.strip())
    stripped = "".join(ch for ch in stripped if not unicodedata.combining(ch))
    return stripped.upper()


@dataclass
class CensusTractRaw:
    """Raw census counts for one neighborhood (IBGE variable codes)."""

    neighborhood_id: str
    v0001: float  # residents
    v0002: float  # housing units, private + collective
    v0003: float  # private housing units
    v0004: float  # collective housing units
    v0005: float  # mean residents per occupied private unit (audit only)
    v0006: float  # imputed-unit percentage (audit only)
    v0007: float  # occupied private housing units
    area_km2: float

    def validate(self):
        for name in _CENSUS_COUNT_COLUMNS:
            if getattr(self, name) < 0:
                raise SchemaError(
                    f"{self.neighborhood_id}: count {name.upper()} is negative"
                )
        if self.v0007 > self.v0003:
            raise SchemaError(
                f"{self.neighborhood_id}: V0007 ({self.v0007:g}) exceeds "
                f"V0003 ({self.v0003:g})"
            )
        if self.area_km2 <= 0:
            raise SchemaError(f"{self.neighborhood_id}: area must be positive")
        # Housing-unit identity holds only up to reporting noise; log, don't fail.
        gap = abs(self.v0003 + self.v0004 - self.v0002)
        if gap > max(1.0, 0.01 * max(self.v0002, 1.0)):
            log.warning(
                "%s: V0003 + V0004 = %g differs from V0002 = %g",
                self.neighborhood_id, self.v0003 + self.v0004, self.v0002,
            )


@dataclass
class IndicatorTable:
    """Per-neighborhood indicator matrix, optionally z-standardized."""

    neighborhood_ids: list[str]
    values: np.ndarray  # n x len(columns)
    columns: tuple[str, ...] = INDICATOR_COLUMNS
    standardized: bool = False
    col_means: np.ndarray | None = None
    col_stds: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.neighborhood_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def destandardized(self) -> "IndicatorTable":
        """Invert standardization using the stored (mean, std) pairs."""
        if not self.standardized:
            return self
        raw = self.values * self.col_stds + self.col_means
        return replace(self, values=raw, standardized=False,
                       col_means=None, col_stds=None)


@dataclass(frozen=True)
class CaseDensity:
    """Aggregated case count and per-km² density for (neighborhood, year)."""

    neighborhood_id: str
    year: int
    case_count: int
    density: float


@dataclass(frozen=True)
class RejectedRow:
    row: int
    reason: str


def _sniff_delimiter(header_line: str) -> str:
    return ";" if header_line.count(";") > header_line.count(",") else ","


def _open_table(path):
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    text = path.read_text(encoding="utf-8-sig")
    lines = text.splitlines()
    if not lines:
        raise SchemaError(f"{path}: file is empty")
    delim = _sniff_delimiter(lines[0])
    return csv.reader(lines, delimiter=delim)


def _header_index(header, path):
    """Map lowercase column name -> position."""
    index = {}
    for pos, name in enumerate(header):
        index.setdefault(name.strip().lower(), pos)
    return index


def _parse_cell(raw: str, column: str, row: int) -> float:
    try:
        return float(raw.strip())
    except ValueError:
        raise ParseError(
            f"non-numeric value {raw.strip()!r} in column {column.upper()}", row=row
        ) from None


def parse_census(path) -> list[CensusTractRaw]:
    """Parse a delimited census table into per-neighborhood records.

    The header must name an id column (``neighborhood``, ``bairro`` or
    ``id``), V0001..V0007 and AREA_KM2 (case-insensitive; comma or semicolon
    delimited, auto-detected). Rows sharing a normalized neighborhood key are
    merged by summing counts and areas; the audit-only V0005/V0006 columns
    are merged by unweighted mean since they are not counts.
    """
    reader = _open_table(path)
    header = next(reader)
    index = _header_index(header, path)

    id_col = next((a for a in _ID_COLUMN_ALIASES if a in index), None)
    if id_col is None:
        raise SchemaError(
            f"{path}: no neighborhood id column (expected one of "
            f"{', '.join(_ID_COLUMN_ALIASES)})"
        )
    for required in _CENSUS_REQUIRED:
        if required not in index:
            raise SchemaError(f"{path}: missing required column {required.upper()}")

    merged: dict[str, CensusTractRaw] = {}
    mean_rows: dict[str, int] = {}
    for row_no, row in enumerate(reader, start=2):
        if not any(cell.strip() for cell in row):
            continue
        key = normalize_key(row[index[id_col]])
        if not key:
            raise ParseError("empty neighborhood id", row=row_no)
        fields = {
            name: _parse_cell(row[index[name]], name, row_no)
            for name in _CENSUS_REQUIRED
        }
        record = CensusTractRaw(neighborhood_id=key, **fields)
        if key not in merged:
            merged[key] = record
            mean_rows[key] = 1
        else:
            prev = merged[key]
            k = mean_rows[key]
            merged[key] = CensusTractRaw(
                neighborhood_id=key,
                v0001=prev.v0001 + record.v0001,
                v0002=prev.v0002 + record.v0002,
                v0003=prev.v0003 + record.v0003,
                v0004=prev.v0004 + record.v0004,
                v0005=(prev.v0005 * k + record.v0005) / (k + 1),
                v0006=(prev.v0006 * k + record.v0006) / (k + 1),
                v0007=prev.v0007 + record.v0007,
                area_km2=prev.area_km2 + record.area_km2,
            )
            mean_rows[key] = k + 1

    records = list(merged.values())
    if not records:
        raise SchemaError(f"{path}: no data rows")
    for record in records:
        record.validate()
    return records


def derive_indicators(raw: list[CensusTractRaw], drop_invalid: bool = True) -> IndicatorTable:
    """Compute the six indicators from raw counts.

    population_density = V0001 / area, collective_ratio = V0004 / V0002,
    vacancy_rate = (V0003 - V0007) / V0003, avg_household_size = V0001 / V0007,
    collective_abs = V0004, area passthrough.

    Records with a zero denominator are dropped with a warning when
    `drop_invalid` is true (uninhabited tracts do occur), otherwise the
    offending neighborhoods raise a DegenerateDataError.
    """
    ids, rows, bad = [], [], []
    for record in raw:
        if record.v0002 <= 0 or record.v0003 <= 0 or record.v0007 <= 0:
            bad.append(record.neighborhood_id)
            continue
        rows.append([
            record.v0001 / record.area_km2,
            record.v0004 / record.v0002,
            (record.v0003 - record.v0007) / record.v0003,
            record.v0001 / record.v0007,
            record.v0004,
            record.area_km2,
        ])
        ids.append(record.neighborhood_id)
    if bad:
        if not drop_invalid:
            raise DegenerateDataError(
                "zero housing-unit denominator for: " + ", ".join(sorted(bad))
            )
        log.warning("dropped %d record(s) with zero denominators: %s",
                    len(bad), ", ".join(sorted(bad)))
    if not ids:
        raise DegenerateDataError("no usable census records after filtering")
    return IndicatorTable(neighborhood_ids=ids, values=np.array(rows, dtype=float))


def standardize(table: IndicatorTable) -> IndicatorTable:
    """Z-standardize each column using the sample (n-1) standard deviation."""
    if table.standardized:
        return table
    if table.n < 3:
        raise DegenerateDataError("standardization needs at least 3 rows")
    means = table.values.mean(axis=0)
    stds = table.values.std(axis=0, ddof=1)
    for pos, std in enumerate(stds):
        if std == 0 or not np.isfinite(std):
            raise DegenerateDataError(
                f"indicator {table.columns[pos]!r} has zero variance"
            )
    z = (table.values - means) / stds
    return replace(table, values=z, standardized=True,
                   col_means=means, col_stds=stds)


def _parse_case_date(raw: str, row: int, dayfirst: bool):
    text = raw.strip()
    formats = ("%d/%m/%Y", "%Y-%m-%d") if dayfirst else ("%Y-%m-%d", "%d/%m/%Y")
    for fmt in formats:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ParseError(f"unparseable date {text!r}", row=row)


def aggregate_cases(
    path,
    areas: dict[str, float],
    year_range: tuple[int, int] | None = None,
    dayfirst: bool = False,
) -> tuple[list[CaseDensity], list[RejectedRow]]:
    """Count case rows per (neighborhood, year) and convert to densities.

    `areas` maps normalized neighborhood keys to km² (from the census table).
    Rows whose neighborhood is unknown, or whose year falls outside
    `year_range`, go to the rejects list instead of being silently dropped.
    An unparseable date is a hard ParseError. Raises DegenerateDataError when
    nothing matches at all.
    """
    reader = _open_table(path)
    header = next(reader)
    index = _header_index(header, path)
    for required in ("date", "neighborhood"):
        if required not in index:
            raise SchemaError(f"{path}: missing required column {required.upper()}")

    counts: dict[tuple[str, int], int] = {}
    rejects: list[RejectedRow] = []
    for row_no, row in enumerate(reader, start=2):
        if not any(cell.strip() for cell in row):
            continue
        day = _parse_case_date(row[index["date"]], row_no, dayfirst)
        key = normalize_key(row[index["neighborhood"]])
        if key not in areas:
            rejects.append(RejectedRow(row_no, f"unknown neighborhood {key!r}"))
            continue
        if year_range is not None and not year_range[0] <= day.year <= year_range[1]:
            rejects.append(RejectedRow(row_no, f"year {day.year} outside filter"))
            continue
        counts[(key, day.year)] = counts.get((key, day.year), 0) + 1

    if not counts:
        raise DegenerateDataError(f"{path}: no case rows matched the census table")
    return (
        [
            CaseDensity(key, year, count, count / areas[key])
            for (key, year), count in sorted(counts.items())
        ],
        rejects,
    )


def density_by_neighborhood(
    cases: list[CaseDensity],
    neighborhood_ids: list[str],
    years: tuple[int, int] | None = None,
) -> np.ndarray:
    """Total per-km² density per listed neighborhood over a year range.

    Neighborhoods with no matching case records get density 0.
    """
    totals = {nid: 0.0 for nid in neighborhood_ids}
    for entry in cases:
        if years is not None and not years[0] <= entry.year <= years[1]:
            continue
        if entry.neighborhood_id in totals:
            totals[entry.neighborhood_id] += entry.density
    return np.array([totals[nid] for nid in neighborhood_ids])
