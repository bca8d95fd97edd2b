"""
Data ingestion and feature engineering
======================================

Parses the published factor and predictor source files, engineers the 18
monthly features, and produces standardized, date-aligned train /
validation / test splits (1927-1957 / 1958-1988 / 1989-2019).

Input file layouts (all comma separated):

* Factor monthly file: any number of preamble lines, then a header row
  whose columns include ``Mkt-RF`` and ``RF`` (values in percent; date key
  ``YYYYMM`` in the first, unnamed column).  The data block ends at the
  first blank or non-monthly row (the published file appends annual
  tables below the monthly block).
* Factor daily file: same layout with ``YYYYMMDD`` date keys.
* Predictor monthly file: header row on the first line with a ``yyyymm``
  column plus either the predictor columns themselves (``dp``, ``ep``,
  ``bm`` or ``b/m``, ``ntis``, ``tbl``, ``tms``, ``dfy``, ``infl``,
  ``corpr``, ``ltr``, ``svar``) or the raw columns they derive from
  (``Index``, ``D12``, ``E12``, ``lty``, ``AAA``, ``BAA``).  Derivations
  follow the source convention: ``dp = ln(D12/Index)``,
  ``ep = ln(E12/Index)``, ``tms = lty - tbl``, ``dfy = BAA - AAA``.
  Values are used as published (decimal units, levels).
* Payout-yield monthly file: header row with ``yyyymm`` plus the payout
  yield column, named via ``column=`` or inferred when there is exactly
  one non-date column.

Feature order is fixed and versioned (see ``FEATURE_NAMES``): the 11
predictors, the one-month lagged excess market return, payout-yield lags
1-3, and realized-squared-volatility lags 1-3.

Files written by the ``save_*`` functions are versioned CSVs; floats are
serialized with ``repr`` so a parse/serialize round trip is byte
identical.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

SPLIT_YEARS = {
    "train": (1927, 1957),
    "validation": (1958, 1988),
    "test": (1989, 2019),
}

PREDICTOR_NAMES = (
    "dp", "ep", "bm", "ntis", "tbl", "tms", "dfy", "infl", "corpr", "ltr", "svar",
)

FEATURE_NAMES = PREDICTOR_NAMES + (
    "mkt_excess_lag1",
    "payout_lag1", "payout_lag2", "payout_lag3",
    "rsv_lag1", "rsv_lag2", "rsv_lag3",
)

N_FEATURES = len(FEATURE_NAMES)  # 18

SPLIT_FILE_TAG = "kellybench-split v1"
STATS_FILE_TAG = "kellybench-stats v1"


class DataError(Exception):
    """Base class for ingestion failures."""


class ParseError(DataError):
    """A row could not be parsed; message carries file and line number."""


class SchemaError(DataError):
    """A required column is missing from a source file."""


class AlignmentError(DataError):
    """Source series do not cover a contiguous common range."""


# ---------------------------------------------------------------------------
# month arithmetic (dates are YYYYMM ints)

def month_index(date: int) -> int:
    year, month = divmod(date, 100)
    if not 1 <= month <= 12:
        raise ValueError(f"bad month key {date}")
    return year * 12 + (month - 1)


def month_from_index(index: int) -> int:
    year, month = divmod(index, 12)
    return year * 100 + month + 1


def month_add(date: int, k: int) -> int:
    return month_from_index(month_index(date) + k)


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class RawMonthly:
    """One month of the factor file: excess market return and risk-free rate (decimals)."""

    date: int
    mkt_excess: float
    rf: float


@dataclass
class MonthlyRecord:
    """One aligned month: total market return, risk-free rate, 18 features."""

    date: int
    mkt_return: float
    rf: float
    features: np.ndarray

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} features, got {self.features.shape}")


@dataclass
class FeatureStats:
    """Per-feature train mean and population standard deviation."""

    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray


@dataclass
class DatasetSplit:
    name: str
    records: list[MonthlyRecord]
    stats: FeatureStats | None = None

    def feature_matrix(self) -> np.ndarray:
        return np.array([r.features for r in self.records], dtype=np.float64)

    def mkt_returns(self) -> np.ndarray:
        return np.array([r.mkt_return for r in self.records], dtype=np.float64)

    def rf_returns(self) -> np.ndarray:
        return np.array([r.rf for r in self.records], dtype=np.float64)

    def dates(self) -> list[int]:
        return [r.date for r in self.records]


# ---------------------------------------------------------------------------
# source file parsing

def _split_row(line: str) -> list[str]:
    return [field.strip() for field in line.split(",")]


def _find_factor_header(lines: list[str], path: Path) -> tuple[int, list[str]]:
    for i, line in enumerate(lines):
        fields = _split_row(line)
        if "Mkt-RF" in fields and "RF" in fields:
            return i, fields
    raise SchemaError(f"{path}: no header row with Mkt-RF and RF columns")


def _parse_factor_rows(path: str | Path, date_digits: int) -> list[tuple[int, float, float]]:
    """Shared monthly/daily factor parser; returns (date, mkt_excess, rf) decimals."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input file: {path}")
    lines = path.read_text().splitlines()
    header_at, header = _find_factor_header(lines, path)
    col_mkt = header.index("Mkt-RF")
    col_rf = header.index("RF")
    rows: list[tuple[int, float, float]] = []
    for lineno in range(header_at + 1, len(lines)):
        fields = _split_row(lines[lineno])
        key = fields[0]
        if not (key.isdigit() and len(key) == date_digits):
            break  # annual block or trailing junk ends the data section
        if len(fields) <= max(col_mkt, col_rf):
            raise ParseError(f"{path}:{lineno + 1}: row has {len(fields)} fields, "
                             f"expected at least {max(col_mkt, col_rf) + 1}")
        try:
            mkt_pct = float(fields[col_mkt])
            rf_pct = float(fields[col_rf])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno + 1}: {exc}") from None
        if abs(mkt_pct + 99.99) < 1e-9 or abs(rf_pct + 99.99) < 1e-9:
            continue  # -99.99 is the published missing-value sentinel
        rows.append((int(key), mkt_pct / 100.0, rf_pct / 100.0))
    if not rows:
        raise ParseError(f"{path}: no data rows after header")
    return rows


def parse_factor_monthly(path: str | Path) -> list[RawMonthly]:
    """Parse the monthly factor file into decimal returns, 1927-2019 only."""
    rows = [r for r in _parse_factor_rows(path, date_digits=6)
            if 1927 <= r[0] // 100 <= 2019]
    out: list[RawMonthly] = []
    prev = None
    for date, mkt_excess, rf in rows:
        if not (math.isfinite(mkt_excess) and math.isfinite(rf)) or rf <= -1.0:
            raise ParseError(f"{path}: non-finite or impossible value at {date}")
        if prev is not None and month_index(date) != month_index(prev) + 1:
            raise AlignmentError(f"{path}: monthly series jumps from {prev} to {date}")
        out.append(RawMonthly(date=date, mkt_excess=mkt_excess, rf=rf))
        prev = date
    return out


def parse_factor_daily(path: str | Path) -> dict[int, list[float]]:
    """Group total daily market returns (Mkt-RF + RF, decimals) by YYYYMM."""
    by_month: dict[int, list[float]] = {}
    for date, mkt_excess, rf in _parse_factor_rows(path, date_digits=8):
        by_month.setdefault(date // 100, []).append(mkt_excess + rf)
    return by_month


def realized_squared_volatility(daily_returns) -> float:
    """Sum of squared daily returns within one month (realized variance)."""
    arr = np.asarray(list(daily_returns), dtype=np.float64)
    if arr.size == 0:
        raise DataError("realized volatility needs at least one daily observation")
    return float(np.sum(arr * arr))


def monthly_realized_volatility(daily_by_month: dict[int, list[float]]) -> dict[int, float]:
    return {month: realized_squared_volatility(days)
            for month, days in daily_by_month.items()}


def _read_header_table(path: str | Path) -> tuple[list[str], list[dict[str, str]]]:
    """Plain CSV with the header on the first line and a yyyymm date column."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing input file: {path}")
    with path.open(newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        rows = []
        for lineno, fields in enumerate(reader, start=2):
            if not fields or all(not f.strip() for f in fields):
                continue
            if len(fields) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, "
                                 f"got {len(fields)}")
            rows.append({h: f.strip() for h, f in zip(header, fields)})
    return header, rows


def _date_column(header: list[str], path: Path) -> str:
    for name in header:
        if name.lower() in ("yyyymm", "date", "month"):
            return name
    raise SchemaError(f"{path}: no yyyymm date column in {header}")


def _cell(row: dict[str, str], name: str) -> float | None:
    value = row.get(name, "").strip()
    if value in ("", "NaN", "NA", "nan"):
        return None
    return float(value)


def parse_predictor_monthly(path: str | Path) -> dict[int, dict[str, float]]:
    """Read the 11 predictors per month, deriving dp/ep/tms/dfy when absent.

    Returns a mapping date -> {predictor: value} containing only months
    where all 11 predictors are available.
    """
    path = Path(path)
    header, rows = _read_header_table(path)
    date_col = _date_column(header, path)
    aliases = {"bm": ("bm", "b/m", "b.m")}
    out: dict[int, dict[str, float]] = {}
    for row in rows:
        date = int(float(row[date_col]))
        values: dict[str, float] = {}
        for name in PREDICTOR_NAMES:
            direct = None
            for candidate in aliases.get(name, (name,)):
                for column in header:
                    if column.lower() == candidate:
                        direct = _cell(row, column)
                        break
                if direct is not None:
                    break
            if direct is not None:
                values[name] = direct
        # derive what the file does not provide directly
        if "dp" not in values or "ep" not in values:
            index = _cell(row, "Index")
            d12 = _cell(row, "D12")
            e12 = _cell(row, "E12")
            if "dp" not in values and index is not None and d12 is not None and d12 > 0:
                values["dp"] = math.log(d12) - math.log(index)
            if "ep" not in values and index is not None and e12 is not None and e12 > 0:
                values["ep"] = math.log(e12) - math.log(index)
        if "tms" not in values:
            lty, tbl = _cell(row, "lty"), _cell(row, "tbl")
            if lty is not None and tbl is not None:
                values["tms"] = lty - tbl
        if "dfy" not in values:
            aaa, baa = _cell(row, "AAA"), _cell(row, "BAA")
            if aaa is not None and baa is not None:
                values["dfy"] = baa - aaa
        if all(name in values for name in PREDICTOR_NAMES):
            out[date] = values
    if not out:
        missing = [n for n in PREDICTOR_NAMES
                   if not any(h.lower() in aliases.get(n, (n,)) for h in header)]
        raise SchemaError(f"{path}: cannot assemble predictors; "
                          f"no complete month (unresolved: {missing})")
    return out


def parse_payout_monthly(path: str | Path, column: str | None = None) -> dict[int, float]:
    """Read the monthly payout-yield series.

    ``column`` names the payout column explicitly; when omitted the file
    must contain exactly one non-date column.
    """
    path = Path(path)
    header, rows = _read_header_table(path)
    date_col = _date_column(header, path)
    if column is None:
        candidates = [h for h in header if h != date_col]
        if len(candidates) != 1:
            raise SchemaError(f"{path}: payout column is ambiguous, pass column= "
                              f"(choices: {candidates})")
        column = candidates[0]
    elif column not in header:
        raise SchemaError(f"{path}: no column named {column!r} (have {header})")
    out = {}
    for row in rows:
        value = _cell(row, column)
        if value is not None:
            out[int(float(row[date_col]))] = value
    return out


# ---------------------------------------------------------------------------
# feature table and splits

def build_feature_table(
    raw_monthly: list[RawMonthly],
    predictors: dict[int, dict[str, float]],
    payout_yield: dict[int, float],
    realized_vol: dict[int, float],
) -> list[MonthlyRecord]:
    """Assemble the aligned 18-feature table.

    The earliest months where any lag is undefined are dropped; a missing
    input after the first complete month is an alignment error.
    """
    raw_by_date = {r.date: r for r in raw_monthly}

    def missing_inputs(date: int) -> list[str]:
        gaps = []
        if date not in predictors:
            gaps.append(f"predictors@{date}")
        if month_add(date, -1) not in raw_by_date:
            gaps.append(f"mkt_excess@{month_add(date, -1)}")
        for lag in (1, 2, 3):
            if month_add(date, -lag) not in payout_yield:
                gaps.append(f"payout@{month_add(date, -lag)}")
            if month_add(date, -lag) not in realized_vol:
                gaps.append(f"rsv@{month_add(date, -lag)}")
        return gaps

    start = None
    for i, raw in enumerate(raw_monthly):
        if not missing_inputs(raw.date):
            start = i
            break
    if start is None:
        raise AlignmentError("no month has all 18 feature inputs available")

    records: list[MonthlyRecord] = []
    for raw in raw_monthly[start:]:
        gaps = missing_inputs(raw.date)
        if gaps:
            raise AlignmentError(f"incomplete inputs at {raw.date}: {', '.join(gaps)}")
        pred = predictors[raw.date]
        features = np.empty(N_FEATURES, dtype=np.float64)
        for j, name in enumerate(PREDICTOR_NAMES):
            features[j] = pred[name]
        features[11] = raw_by_date[month_add(raw.date, -1)].mkt_excess
        for j, lag in enumerate((1, 2, 3)):
            features[12 + j] = payout_yield[month_add(raw.date, -lag)]
            features[15 + j] = realized_vol[month_add(raw.date, -lag)]
        if not np.all(np.isfinite(features)):
            bad = [FEATURE_NAMES[j] for j in np.flatnonzero(~np.isfinite(features))]
            raise AlignmentError(f"non-finite features at {raw.date}: {bad}")
        records.append(MonthlyRecord(
            date=raw.date,
            mkt_return=raw.mkt_excess + raw.rf,
            rf=raw.rf,
            features=features,
        ))
    return records


def make_splits(records: list[MonthlyRecord]) -> dict[str, DatasetSplit]:
    """Partition the aligned table by calendar year into the three splits."""
    splits = {}
    for name, (first, last) in SPLIT_YEARS.items():
        members = [r for r in records if first <= r.date // 100 <= last]
        splits[name] = DatasetSplit(name=name, records=members)
    return splits


def standardize(splits: dict[str, DatasetSplit]) -> dict[str, DatasetSplit]:
    """Z-score all features with train-split statistics.

    Uses the population convention (divide by N).  A zero-variance train
    feature standardizes to zeros with a warning.  The returned splits
    share one FeatureStats object.
    """
    train = splits["train"]
    if not train.records:
        raise DataError("train split is empty; cannot standardize")
    matrix = train.feature_matrix()
    mean = matrix.mean(axis=0)
    std = matrix.std(axis=0)  # ddof=0
    # relative threshold: a constant column can carry ~1e-19 of float
    # residue around its own mean, which an exact zero test would miss
    constant = std < 1e-12 * np.maximum(np.abs(mean), 1.0)
    for j in np.flatnonzero(constant):
        warnings.warn(f"feature {FEATURE_NAMES[j]} is constant on train; "
                      "standardizing with divisor 1", stacklevel=2)
    divisor = np.where(constant, 1.0, std)
    stats = FeatureStats(names=FEATURE_NAMES, mean=mean, std=divisor)
    out = {}
    for name, split in splits.items():
        records = [replace(r, features=(r.features - mean) / divisor)
                   for r in split.records]
        out[name] = DatasetSplit(name=name, records=records, stats=stats)
    return out


def prepare_dataset(
    factors_monthly: str | Path,
    factors_daily: str | Path,
    predictors: str | Path,
    payout: str | Path,
    payout_column: str | None = None,
) -> dict[str, DatasetSplit]:
    """Full ingestion pipeline: parse, engineer, split, standardize."""
    raw = parse_factor_monthly(factors_monthly)
    rsv = monthly_realized_volatility(parse_factor_daily(factors_daily))
    table = build_feature_table(
        raw,
        parse_predictor_monthly(predictors),
        parse_payout_monthly(payout, column=payout_column),
        rsv,
    )
    return standardize(make_splits(table))


# ---------------------------------------------------------------------------
# persistence

def _format_float(value: float) -> str:
    return repr(float(value))


def save_split(path: str | Path, split: DatasetSplit, manifest: str | None = None) -> None:
    """Write one split as a versioned CSV (date, mkt_return, rf, 18 features)."""
    lines = [f"# {SPLIT_FILE_TAG}"]
    if manifest is not None:
        lines.append(f"# manifest {manifest}")
    lines.append(",".join(("date", "mkt_return", "rf") + FEATURE_NAMES))
    for r in split.records:
        cells = [str(r.date), _format_float(r.mkt_return), _format_float(r.rf)]
        cells += [_format_float(v) for v in r.features]
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def load_split(path: str | Path, name: str | None = None) -> DatasetSplit:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing split file: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {SPLIT_FILE_TAG}"):
        raise SchemaError(f"{path}: not a {SPLIT_FILE_TAG} file")
    body = [l for l in lines if not l.startswith("#")]
    header = _split_row(body[0])
    expected = ["date", "mkt_return", "rf", *FEATURE_NAMES]
    if header != expected:
        raise SchemaError(f"{path}: unexpected columns {header}")
    records = []
    for line in body[1:]:
        fields = _split_row(line)
        records.append(MonthlyRecord(
            date=int(fields[0]),
            mkt_return=float(fields[1]),
            rf=float(fields[2]),
            features=np.array([float(v) for v in fields[3:]], dtype=np.float64),
        ))
    return DatasetSplit(name=name or path.stem, records=records)


def save_stats(path: str | Path, stats: FeatureStats, manifest: str | None = None) -> None:
    lines = [f"# {STATS_FILE_TAG}"]
    if manifest is not None:
        lines.append(f"# manifest {manifest}")
    lines.append("feature,mean,std")
    for name, mean, std in zip(stats.names, stats.mean, stats.std):
        lines.append(f"{name},{_format_float(mean)},{_format_float(std)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_stats(path: str | Path) -> FeatureStats:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing stats file: {path}")
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith(f"# {STATS_FILE_TAG}"):
        raise SchemaError(f"{path}: not a {STATS_FILE_TAG} file")
    body = [l for l in lines if not l.startswith("#")]
    names, means, stds = [], [], []
    for line in body[1:]:
        name, mean, std = _split_row(line)
        names.append(name)
        means.append(float(mean))
        stds.append(float(std))
    if tuple(names) != FEATURE_NAMES:
        raise SchemaError(f"{path}: feature names do not match the current schema")
    return FeatureStats(names=tuple(names),
                        mean=np.array(means), std=np.array(stds))


def save_dataset(directory: str | Path, splits: dict[str, DatasetSplit],
                 manifest: str | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, split in splits.items():
        save_split(directory / f"{name}.csv", split, manifest=manifest)
    stats = splits["train"].stats
    if stats is not None:
        save_stats(directory / "feature_stats.csv", stats, manifest=manifest)


def load_dataset(directory: str | Path,
                 names: tuple[str, ...] = ("train", "validation", "test")) -> dict[str, DatasetSplit]:
    """Load split files; the loaded splits share one FeatureStats object."""
    directory = Path(directory)
    stats = load_stats(directory / "feature_stats.csv")
    splits = {}
    for name in names:
        split = load_split(directory / f"{name}.csv", name=name)
        split.stats = stats
        splits[name] = split
    return splits
