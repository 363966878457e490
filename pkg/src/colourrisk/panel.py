"""Ingestion and weekly aggregation of regional indicator panels.

Sixteen daily healthcare indicators per region are read from a
delimiter-separated feed, validated, optionally derived by day-over-day
differencing of cumulative counters, and aggregated onto the week grid
defined by the colour-label file. The label file owns the week boundaries:
colour ordinances, not ISO weeks, set the decision cadence.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from enum import IntEnum
from importlib import resources

import numpy as np

__all__ = [
    "INDICATOR_IDS",
    "INDICATOR_NAMES",
    "N_INDICATORS",
    "RiskLevel",
    "ValidationError",
    "IngestionError",
    "ColumnRule",
    "ColumnMap",
    "ColourMap",
    "RegionTable",
    "DailyPanel",
    "IngestionReport",
    "LabelEntry",
    "LabelSeries",
    "LabelReport",
    "WeeklyPanel",
    "AggregationResult",
    "CorrelationResult",
    "PopulationShares",
    "parse_daily_csv",
    "parse_label_csv",
    "parse_populations_csv",
    "aggregate_weekly",
    "correlation_matrix",
    "population_share_by_colour",
]

N_INDICATORS = 16
INDICATOR_IDS = tuple(f"X{i}" for i in range(1, N_INDICATORS + 1))
INDICATOR_NAMES = {
    "X1": "Hospitalized with symptoms",
    "X2": "ICU patients",
    "X3": "ICU daily admissions",
    "X4": "Home quarantine",
    "X5": "Confirmed cases",
    "X6": "Discharged healed",
    "X7": "Deaths",
    "X8": "Cases confirmed by PCR",
    "X9": "Cases confirmed by RAT",
    "X10": "Total cases",
    "X11": "Increase in total cases",
    "X12": "People Tested",
    "X13": "PCR",
    "X14": "RAT",
    "X15": "Total swabs",
    "X16": "Increase in total swabs",
}

DEFAULT_WINDOW = (date(2021, 1, 1), date(2021, 12, 31))

MAX_REPORTED_PROBLEMS = 20


class RiskLevel(IntEnum):
    """Ordered risk level, low < medium < high (codes 1 < 2 < 3)."""

    L = 1
    M = 2
    H = 3

    @property
    def index(self) -> int:
        """0-based index used in label arrays."""
        return self.value - 1

    @classmethod
    def from_index(cls, idx: int) -> "RiskLevel":
        return cls(idx + 1)

    @classmethod
    def from_letter(cls, letter: str) -> "RiskLevel":
        try:
            return cls[letter.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown risk level {letter!r}") from None


class ValidationError(ValueError):
    """Input data violates a panel contract."""


class IngestionError(ValidationError):
    """One or more fatal problems found while parsing an input file."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        shown = self.problems[:MAX_REPORTED_PROBLEMS]
        suffix = (
            f" (+{len(self.problems) - len(shown)} more)"
            if len(self.problems) > len(shown)
            else ""
        )
        super().__init__("; ".join(shown) + suffix)


def _parse_date(text: str) -> date:
    return datetime.fromisoformat(text.strip()).date()


def _load_packaged(name: str) -> dict:
    with resources.files("colourrisk.data").joinpath(name).open("r", encoding="utf-8") as f:
        return json.load(f)


@dataclass(frozen=True)
class ColumnRule:
    """Source for one indicator: a raw column, or differencing a cumulative one."""

    column: str | None = None
    difference_of: str | None = None

    def __post_init__(self):
        if (self.column is None) == (self.difference_of is None):
            raise ValueError("rule needs exactly one of 'column' or 'difference_of'")

    @property
    def source(self) -> str:
        return self.column if self.column is not None else self.difference_of

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnRule":
        return cls(column=d.get("column"), difference_of=d.get("difference_of"))


@dataclass(frozen=True)
class ColumnMap:
    """Assignment of every indicator to a source column of the daily feed."""

    date_column: str
    region_column: str
    rules: dict[str, ColumnRule]

    def __post_init__(self):
        missing = [x for x in INDICATOR_IDS if x not in self.rules]
        if missing:
            raise ValueError(f"column map lacks rules for {missing}")

    def source_columns(self) -> list[str]:
        seen: dict[str, None] = {}
        for x in INDICATOR_IDS:
            seen.setdefault(self.rules[x].source)
        return list(seen)

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnMap":
        return cls(
            date_column=d["date_column"],
            region_column=d["region_column"],
            rules={k: ColumnRule.from_dict(v) for k, v in d["indicators"].items()},
        )

    @classmethod
    def from_file(cls, path) -> "ColumnMap":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    @classmethod
    def default(cls) -> "ColumnMap":
        return cls.from_dict(_load_packaged("column_map.json"))


@dataclass(frozen=True)
class ColourMap:
    """Colour word -> risk level (or DROP to discard the row)."""

    mapping: dict[str, str]

    def __post_init__(self):
        for word, target in self.mapping.items():
            if target not in ("L", "M", "H", "DROP"):
                raise ValueError(f"colour {word!r} maps to invalid target {target!r}")

    def resolve(self, word: str) -> RiskLevel | None:
        """Level for a colour word, None for DROP; KeyError if unmapped."""
        target = self.mapping[word.strip().lower()]
        return None if target == "DROP" else RiskLevel[target]

    @classmethod
    def from_file(cls, path) -> "ColourMap":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return cls(mapping={k.strip().lower(): v for k, v in raw.items()})

    @classmethod
    def default(cls) -> "ColourMap":
        raw = _load_packaged("colour_map.json")
        return cls(mapping={k.strip().lower(): v for k, v in raw.items()})


@dataclass(frozen=True)
class RegionTable:
    """Canonical region names plus lowercase aliases."""

    canonical: tuple[str, ...]
    aliases: dict[str, str]

    def normalize(self, name: str) -> tuple[str, bool]:
        """Canonical spelling and whether the name was recognized."""
        stripped = name.strip()
        lower = stripped.lower()
        for canon in self.canonical:
            if lower == canon.lower():
                return canon, True
        if lower in self.aliases:
            return self.aliases[lower], True
        return stripped, False

    @classmethod
    def from_file(cls, path) -> "RegionTable":
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
        return cls(
            canonical=tuple(raw["canonical"]),
            aliases={k.lower(): v for k, v in raw.get("aliases", {}).items()},
        )

    @classmethod
    def default(cls) -> "RegionTable":
        raw = _load_packaged("regions.json")
        return cls(
            canonical=tuple(raw["canonical"]),
            aliases={k.lower(): v for k, v in raw.get("aliases", {}).items()},
        )


@dataclass(frozen=True)
class DailyPanel:
    """Daily indicator values per region on a shared, strictly increasing date axis.

    `values[r, d]` is the 16-vector for region r on date d; `present[r, d]`
    marks whether that (region, date) row was ingested. Arrays are read-only.
    """

    regions: tuple[str, ...]
    dates: tuple[date, ...]
    values: np.ndarray
    present: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        present = np.asarray(self.present, dtype=bool)
        R, D = len(self.regions), len(self.dates)
        if values.shape != (R, D, N_INDICATORS):
            raise ValueError(f"values shape {values.shape} != {(R, D, N_INDICATORS)}")
        if present.shape != (R, D):
            raise ValueError(f"present shape {present.shape} != {(R, D)}")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        if not np.isfinite(values[present]).all():
            raise ValueError("non-finite value in an ingested row")
        values.setflags(write=False)
        present.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "present", present)

    def region_index(self, region: str) -> int:
        try:
            return self.regions.index(region)
        except ValueError:
            raise KeyError(f"region {region!r} not in panel") from None

    def restrict(self, regions: list[str]) -> "DailyPanel":
        idx = [self.region_index(r) for r in regions]
        return DailyPanel(
            regions=tuple(regions),
            dates=self.dates,
            values=self.values[idx].copy(),
            present=self.present[idx].copy(),
        )

    def drop_dates(self, dropped: set) -> "DailyPanel":
        keep = [i for i, d in enumerate(self.dates) if d not in dropped]
        return DailyPanel(
            regions=self.regions,
            dates=tuple(self.dates[i] for i in keep),
            values=self.values[:, keep].copy(),
            present=self.present[:, keep].copy(),
        )

    def write_csv(self, fileobj) -> None:
        """One row per ingested (region, date); floats as shortest round-trip reprs."""
        w = csv.writer(fileobj, lineterminator="\n")
        w.writerow(["region", "date", *INDICATOR_IDS])
        for ri, region in enumerate(self.regions):
            for di, day in enumerate(self.dates):
                if self.present[ri, di]:
                    w.writerow(
                        [region, day.isoformat(), *[repr(float(v)) for v in self.values[ri, di]]]
                    )

    @classmethod
    def read_csv(cls, fileobj) -> "DailyPanel":
        reader = csv.reader(fileobj)
        header = next(reader)
        if header != ["region", "date", *INDICATOR_IDS]:
            raise IngestionError([f"unexpected daily-cache header: {header[:4]}..."])
        rows: dict[str, dict[date, np.ndarray]] = {}
        for row in reader:
            region, day = row[0], _parse_date(row[1])
            rows.setdefault(region, {})[day] = np.array([float(v) for v in row[2:]])
        regions = tuple(sorted(rows))
        dates = tuple(sorted({d for per in rows.values() for d in per}))
        date_idx = {d: i for i, d in enumerate(dates)}
        values = np.full((len(regions), len(dates), N_INDICATORS), np.nan)
        present = np.zeros((len(regions), len(dates)), dtype=bool)
        for ri, region in enumerate(regions):
            for day, vec in rows[region].items():
                di = date_idx[day]
                values[ri, di] = vec
                present[ri, di] = True
        return cls(regions=regions, dates=dates, values=values, present=present)


@dataclass
class IngestionReport:
    """What was kept, dropped, and warned about while parsing the daily feed."""

    window: tuple[date, date]
    indicators: dict[str, str] = field(default_factory=lambda: dict(INDICATOR_NAMES))
    days_per_region: dict[str, int] = field(default_factory=dict)
    dropped_rows: list[tuple[str, str, str]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "window": [self.window[0].isoformat(), self.window[1].isoformat()],
            "indicators": self.indicators,
            "days_per_region": self.days_per_region,
            "dropped_rows": [list(t) for t in self.dropped_rows],
            "warnings": self.warnings,
        }


def parse_daily_csv(
    stream,
    mapping: ColumnMap | None = None,
    window: tuple[date, date] | None = None,
    regions: RegionTable | None = None,
) -> tuple[DailyPanel, IngestionReport]:
    """Parse the daily feed into a validated panel plus an ingestion report.

    Difference rules use strict day-over-day deltas: the first in-window day
    is differenced against the last pre-window day when the feed provides it,
    otherwise that day is dropped and listed in the report. Fatal problems
    (missing mapped column, unparseable cell, duplicate (region, date),
    negative raw count) raise IngestionError with row locations.
    """
    mapping = mapping or ColumnMap.default()
    window = window or DEFAULT_WINDOW
    regions = regions or RegionTable.default()
    lo, hi = window
    if hi < lo:
        raise ValueError(f"window end {hi} before start {lo}")

    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise IngestionError(["empty input: no header row"])
    needed = [mapping.date_column, mapping.region_column, *mapping.source_columns()]
    missing = [c for c in needed if c not in reader.fieldnames]
    if missing:
        raise IngestionError([f"missing mapped column(s): {', '.join(missing)}"])

    report = IngestionReport(window=window)
    problems: list[str] = []
    unknown_regions: set[str] = set()
    # region -> date -> {source column -> value}
    raw: dict[str, dict[date, dict[str, float]]] = {}
    sources = mapping.source_columns()

    for lineno, row in enumerate(reader, start=2):
        loc = f"line {lineno}"
        try:
            day = _parse_date(row[mapping.date_column])
        except ValueError:
            problems.append(f"{loc}: unparseable date {row[mapping.date_column]!r}")
            continue
        if day < lo - timedelta(days=1) or day > hi:
            continue
        region, known = regions.normalize(row[mapping.region_column])
        if not known and region not in unknown_regions:
            unknown_regions.add(region)
            report.warnings.append(f"region name not in canonical table: {region!r}")
        per_region = raw.setdefault(region, {})
        if day in per_region:
            problems.append(f"{loc}: duplicate entry for ({region}, {day.isoformat()})")
            continue
        cells: dict[str, float] = {}
        for col in sources:
            text = (row.get(col) or "").strip()
            if not text:
                problems.append(f"{loc}: missing value in column {col!r}")
                continue
            try:
                value = float(text)
            except ValueError:
                problems.append(f"{loc}: unparseable number {text!r} in column {col!r}")
                continue
            if value < 0:
                problems.append(
                    f"{loc}: negative value {value} in count column {col!r} "
                    f"({region}, {day.isoformat()})"
                )
                continue
            cells[col] = value
        if len(cells) == len(sources):
            per_region[day] = cells

    if problems:
        raise IngestionError(problems)
    if not raw:
        raise IngestionError(["no rows inside the configured date window"])

    # Apply indicator rules; differencing may drop a region's first day(s).
    panel_rows: dict[str, dict[date, np.ndarray]] = {}
    for region in sorted(raw):
        per_region = raw[region]
        days = sorted(per_region)
        kept: dict[date, np.ndarray] = {}
        for day in days:
            if day < lo:
                continue  # pre-window rows exist only to seed differencing
            vec = np.empty(N_INDICATORS)
            dropped_reason = None
            for xi, xid in enumerate(INDICATOR_IDS):
                rule = mapping.rules[xid]
                if rule.column is not None:
                    vec[xi] = per_region[day][rule.column]
                    continue
                prev = day - timedelta(days=1)
                if prev not in per_region:
                    dropped_reason = f"no previous-day value to difference {xid}"
                    break
                diff = per_region[day][rule.difference_of] - per_region[prev][rule.difference_of]
                if diff < 0:
                    report.warnings.append(
                        f"negative daily increment for {xid} "
                        f"({region}, {day.isoformat()}): {diff}"
                    )
                vec[xi] = diff
            if dropped_reason is None:
                kept[day] = vec
            else:
                report.dropped_rows.append((region, day.isoformat(), dropped_reason))
        if kept:
            panel_rows[region] = kept
        report.days_per_region[region] = len(kept)

    if not panel_rows:
        raise IngestionError(["all rows dropped during differencing"])

    region_names = tuple(sorted(panel_rows))
    dates = tuple(sorted({d for per in panel_rows.values() for d in per}))
    date_idx = {d: i for i, d in enumerate(dates)}
    values = np.full((len(region_names), len(dates), N_INDICATORS), np.nan)
    present = np.zeros((len(region_names), len(dates)), dtype=bool)
    for ri, region in enumerate(region_names):
        for day, vec in panel_rows[region].items():
            di = date_idx[day]
            values[ri, di] = vec
            present[ri, di] = True
    panel = DailyPanel(regions=region_names, dates=dates, values=values, present=present)
    return panel, report


@dataclass(frozen=True, order=True)
class LabelEntry:
    region: str
    week_start: date
    week_end: date
    level: RiskLevel


@dataclass(frozen=True)
class LabelSeries:
    """Weekly colour labels; windows for one region never overlap."""

    entries: tuple[LabelEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(sorted(self.entries)))
        by_region: dict[str, list[LabelEntry]] = {}
        for e in self.entries:
            if e.week_end < e.week_start:
                raise ValidationError(
                    f"label window ends before it starts: {e.region} "
                    f"{e.week_start}..{e.week_end}"
                )
            by_region.setdefault(e.region, []).append(e)
        for region, items in by_region.items():
            for a, b in zip(items, items[1:]):
                if b.week_start <= a.week_end:
                    raise ValidationError(
                        f"overlapping label windows for {region}: "
                        f"{a.week_start}..{a.week_end} and {b.week_start}..{b.week_end}"
                    )

    def regions(self) -> list[str]:
        return sorted({e.region for e in self.entries})

    def for_region(self, region: str) -> list[LabelEntry]:
        return [e for e in self.entries if e.region == region]

    def week_grid(self) -> list[tuple[date, date]]:
        """Distinct label windows across all regions, sorted by start."""
        return sorted({(e.week_start, e.week_end) for e in self.entries})

    def write_csv(self, fileobj) -> None:
        w = csv.writer(fileobj, lineterminator="\n")
        w.writerow(["region", "week_start", "week_end", "level"])
        for e in self.entries:
            w.writerow([e.region, e.week_start.isoformat(), e.week_end.isoformat(), e.level.name])

    @classmethod
    def read_csv(cls, fileobj) -> "LabelSeries":
        reader = csv.DictReader(fileobj)
        entries = [
            LabelEntry(
                region=row["region"],
                week_start=_parse_date(row["week_start"]),
                week_end=_parse_date(row["week_end"]),
                level=RiskLevel.from_letter(row["level"]),
            )
            for row in reader
        ]
        return cls(entries=tuple(entries))


@dataclass
class LabelReport:
    retained_weeks: dict[str, int] = field(default_factory=dict)
    dropped_weeks: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "retained_weeks": self.retained_weeks,
            "dropped_weeks": self.dropped_weeks,
        }


def parse_label_csv(
    stream,
    colour_map: ColourMap | None = None,
    regions: RegionTable | None = None,
) -> tuple[LabelSeries, LabelReport]:
    """Parse weekly colour labels, mapping colour words to risk levels.

    Rows whose colour maps to DROP are discarded but counted per region in
    the report, so retained-week counts (the error denominators downstream)
    are always available.
    """
    colour_map = colour_map or ColourMap.default()
    regions = regions or RegionTable.default()
    reader = csv.DictReader(stream)
    required = {"region", "week_start", "week_end", "colour"}
    if reader.fieldnames is None or not required.issubset(reader.fieldnames):
        raise IngestionError(
            [f"label file must have columns {sorted(required)}, got {reader.fieldnames}"]
        )
    problems: list[str] = []
    entries: list[LabelEntry] = []
    report = LabelReport()
    for lineno, row in enumerate(reader, start=2):
        region, _ = regions.normalize(row["region"])
        try:
            start = _parse_date(row["week_start"])
            end = _parse_date(row["week_end"])
        except ValueError as exc:
            problems.append(f"line {lineno}: {exc}")
            continue
        if end < start:
            problems.append(
                f"line {lineno}: week_end {end} before week_start {start} ({region})"
            )
            continue
        try:
            level = colour_map.resolve(row["colour"])
        except KeyError:
            problems.append(f"line {lineno}: unknown colour word {row['colour']!r}")
            continue
        if level is None:
            report.dropped_weeks[region] = report.dropped_weeks.get(region, 0) + 1
            continue
        entries.append(LabelEntry(region=region, week_start=start, week_end=end, level=level))
        report.retained_weeks[region] = report.retained_weeks.get(region, 0) + 1
    if problems:
        raise IngestionError(problems)
    try:
        series = LabelSeries(entries=tuple(entries))
    except ValidationError as exc:
        raise IngestionError([str(exc)]) from None
    return series, report


def parse_populations_csv(stream) -> dict[str, int]:
    """Read (region, population) rows; populations must be positive integers."""
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or not {"region", "population"}.issubset(reader.fieldnames):
        raise IngestionError(
            [f"populations file must have columns ['population', 'region'], got {reader.fieldnames}"]
        )
    out: dict[str, int] = {}
    problems = []
    for lineno, row in enumerate(reader, start=2):
        try:
            pop = int(row["population"])
        except ValueError:
            problems.append(f"line {lineno}: unparseable population {row['population']!r}")
            continue
        if pop <= 0:
            problems.append(f"line {lineno}: population must be positive, got {pop}")
            continue
        out[row["region"].strip()] = pop
    if problems:
        raise IngestionError(problems)
    return out


@dataclass(frozen=True)
class WeeklyPanel:
    """One region's weekly-aggregated indicators aligned to its label windows."""

    region: str
    windows: tuple[tuple[date, date], ...]
    X: np.ndarray
    y: np.ndarray  # 0-based RiskLevel indices
    aggregation: str
    days_per_week: tuple[int, ...]

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=np.int8)
        if X.shape[0] != len(self.windows) or y.shape != (len(self.windows),):
            raise ValueError("window/X/y length mismatch")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_weeks(self) -> int:
        return len(self.windows)

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def levels(self) -> list[RiskLevel]:
        return [RiskLevel.from_index(int(i)) for i in self.y]

    def write_csv(self, fileobj) -> None:
        ids = [f"X{i}" for i in range(1, self.k + 1)]
        w = csv.writer(fileobj, lineterminator="\n")
        w.writerow(["week_start", "week_end", "level", "days", *ids])
        for i, (start, end) in enumerate(self.windows):
            w.writerow(
                [
                    start.isoformat(),
                    end.isoformat(),
                    RiskLevel.from_index(int(self.y[i])).name,
                    self.days_per_week[i],
                    *[repr(float(v)) for v in self.X[i]],
                ]
            )

    @classmethod
    def read_csv(cls, fileobj, region: str, aggregation: str) -> "WeeklyPanel":
        reader = csv.reader(fileobj)
        header = next(reader)
        k = len(header) - 4
        windows, X, y, days = [], [], [], []
        for row in reader:
            windows.append((_parse_date(row[0]), _parse_date(row[1])))
            y.append(RiskLevel.from_letter(row[2]).index)
            days.append(int(row[3]))
            X.append([float(v) for v in row[4 : 4 + k]])
        return cls(
            region=region,
            windows=tuple(windows),
            X=np.asarray(X, dtype=float),
            y=np.asarray(y, dtype=np.int8),
            aggregation=aggregation,
            days_per_week=tuple(days),
        )


@dataclass
class AggregationResult:
    panels: list[WeeklyPanel]
    rejected_weeks: list[tuple[str, str, str, int]]  # region, start, end, days found

    def panel_for(self, region: str) -> WeeklyPanel:
        for p in self.panels:
            if p.region == region:
                return p
        raise KeyError(f"no weekly panel for region {region!r}")


def aggregate_weekly(
    daily: DailyPanel,
    labels: LabelSeries,
    statistic: str = "mean",
    min_days: int = 4,
) -> AggregationResult:
    """Aggregate daily values onto the label-file week grid, one panel per region.

    The label windows define the weeks. A window with no ingested day is an
    error; a window with fewer than `min_days` available days is rejected and
    reported (broken source data). `min_days` exists so resampling runs,
    which legitimately shorten weeks by one day, can relax the bound.
    """
    if statistic not in ("mean", "sum"):
        raise ValueError(f"statistic must be 'mean' or 'sum', got {statistic!r}")
    date_idx = {d: i for i, d in enumerate(daily.dates)}
    panels: list[WeeklyPanel] = []
    rejected: list[tuple[str, str, str, int]] = []
    for region in labels.regions():
        try:
            ri = daily.region_index(region)
        except KeyError:
            raise ValidationError(
                f"region {region!r} present in labels but absent from the panel"
            ) from None
        windows, xs, ys, days = [], [], [], []
        for entry in labels.for_region(region):
            span = [
                date_idx[d]
                for d in _dates_in(entry.week_start, entry.week_end)
                if d in date_idx and daily.present[ri, date_idx[d]]
            ]
            if not span:
                raise ValidationError(
                    f"label window {entry.week_start}..{entry.week_end} for "
                    f"{region} has no overlapping daily data"
                )
            if len(span) < min_days:
                rejected.append(
                    (region, entry.week_start.isoformat(), entry.week_end.isoformat(), len(span))
                )
                continue
            block = daily.values[ri, span]
            xs.append(block.mean(axis=0) if statistic == "mean" else block.sum(axis=0))
            ys.append(entry.level.index)
            windows.append((entry.week_start, entry.week_end))
            days.append(len(span))
        panels.append(
            WeeklyPanel(
                region=region,
                windows=tuple(windows),
                X=np.asarray(xs, dtype=float).reshape(len(windows), N_INDICATORS),
                y=np.asarray(ys, dtype=np.int8),
                aggregation=statistic,
                days_per_week=tuple(days),
            )
        )
    return AggregationResult(panels=panels, rejected_weeks=rejected)


def _dates_in(start: date, end: date) -> list[date]:
    return [start + timedelta(days=i) for i in range((end - start).days + 1)]


@dataclass(frozen=True)
class CorrelationResult:
    """Pearson correlation matrix; entries touching constant columns are NaN."""

    matrix: np.ndarray
    constant_columns: tuple[int, ...]


def correlation_matrix(X: np.ndarray) -> CorrelationResult:
    """Pearson correlations between columns of an observation matrix.

    Constant columns cannot be correlated; their rows and columns are flagged
    NaN rather than given an arbitrary number. Requires at least 3 rows.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected 2-d matrix, got shape {X.shape}")
    n, k = X.shape
    if n < 3:
        raise ValidationError(f"need at least 3 rows for correlations, got {n}")
    centered = X - X.mean(axis=0)
    ss = (centered * centered).sum(axis=0)
    constant = np.flatnonzero(ss == 0.0)
    sd = np.sqrt(ss)
    sd_safe = np.where(ss == 0.0, np.nan, sd)
    M = (centered.T @ centered) / np.outer(sd_safe, sd_safe)
    for i in np.flatnonzero(ss != 0.0):
        M[i, i] = 1.0
    return CorrelationResult(matrix=M, constant_columns=tuple(int(c) for c in constant))


@dataclass(frozen=True)
class PopulationShares:
    """Per-week population fractions at each risk level.

    Shares are fractions of the total population given in the populations
    input; per week they sum to the covered fraction (< 1 when some regions
    carry no label that week).
    """

    windows: tuple[tuple[date, date], ...]
    shares: np.ndarray  # (n_weeks, 3), columns L, M, H
    covered: np.ndarray  # (n_weeks,)


def population_share_by_colour(
    labels: LabelSeries, populations: dict[str, int]
) -> PopulationShares:
    """Population share per risk level for every window in the label grid."""
    missing = [r for r in labels.regions() if r not in populations]
    if missing:
        raise ValidationError(f"missing population entry for {missing}")
    bad = {r: p for r, p in populations.items() if p <= 0}
    if bad:
        raise ValidationError(f"populations must be positive: {bad}")
    total = float(sum(populations.values()))
    grid = labels.week_grid()
    window_idx = {w: i for i, w in enumerate(grid)}
    shares = np.zeros((len(grid), 3))
    for e in labels.entries:
        wi = window_idx[(e.week_start, e.week_end)]
        shares[wi, e.level.index] += populations[e.region]
    shares /= total
    return PopulationShares(
        windows=tuple(grid), shares=shares, covered=shares.sum(axis=1)
    )
