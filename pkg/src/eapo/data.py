"""CSV ingestion, disclosure alignment, synthetic data, and report export.

Schemas (exact headers):
    prices.csv     date,ticker,adjusted_close
    emissions.csv  ticker,fiscal_year,scope,tco2e,confidence
    revenues.csv   ticker,quarter_end,revenue_usd
    sectors.csv    ticker,sector

Intensities are revenue-normalized in tCO2e per $mm and forward-carried: at
each rebalance date an asset uses its most recent fiscal year disclosed
strictly before the date, divided by trailing-twelve-month revenue at that
disclosure reference date. Assets with no prior disclosure stay missing and
are either imputed (causally, from the cross-section observable at the
date) or excluded in strict mode.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from .errors import InvalidInputError, SchemaError
from .estimation import average_imputations, impute_emissions

__all__ = [
    "RawRecords",
    "AlignedDataset",
    "ingest",
    "export_records",
    "align_forward_carry",
    "complete_intensities",
    "synth_generate",
    "write_report_json",
    "write_weights_csv",
]

PRICE_COLUMNS = ["date", "ticker", "adjusted_close"]
EMISSION_COLUMNS = ["ticker", "fiscal_year", "scope", "tco2e", "confidence"]
REVENUE_COLUMNS = ["ticker", "quarter_end", "revenue_usd"]
SECTOR_COLUMNS = ["ticker", "sector"]

_ISO_DATE = re.compile(r"^\d{4}-\d{2}-\d{2}$")


@dataclass
class RawRecords:
    """Validated long-format records as read from (or written to) CSV."""

    prices: pd.DataFrame
    emissions: pd.DataFrame
    revenues: pd.DataFrame
    sectors: pd.DataFrame


@dataclass
class AlignedDataset:
    """Panels aligned on the trading calendar for one emissions scope.

    ``intensity`` rows are rebalance dates; NaN marks assets with no usable
    disclosure at that date. ``emission_levels`` carries forward-carried raw
    scope-1 emissions for the EMW benchmark. ``provenance`` records how each
    intensity cell was obtained.
    """

    scope: int
    prices: pd.DataFrame
    returns: pd.DataFrame
    intensity: pd.DataFrame
    emission_levels: pd.DataFrame
    rebalance_dates: pd.DatetimeIndex
    sectors: Dict[str, str]
    provenance: pd.DataFrame
    revenue_ttm: pd.DataFrame = field(default=None)


def _parse_date(value: str, line: int) -> str:
    if not _ISO_DATE.match(value):
        raise SchemaError(f"date {value!r} is not ISO-8601 (YYYY-MM-DD)", line)
    try:
        dt.date.fromisoformat(value)
    except ValueError:
        raise SchemaError(f"invalid calendar date {value!r}", line) from None
    return value


def _parse_float(value: str, name: str, line: int) -> float:
    try:
        out = float(value)
    except ValueError:
        raise SchemaError(f"{name} {value!r} is not a number", line) from None
    if not np.isfinite(out):
        raise SchemaError(f"{name} must be finite, got {value!r}", line)
    return out


def _read_rows(path: Path, expected_header: List[str]):
    if not path.exists():
        raise SchemaError(f"missing input file {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path.name} is empty") from None
        if header != expected_header:
            raise SchemaError(
                f"{path.name} header {header} does not match {expected_header}", 1)
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise SchemaError(
                    f"{path.name}: expected {len(expected_header)} fields, got {len(row)}",
                    line)
            yield line, row


def ingest(directory) -> RawRecords:
    """Read and validate the four CSVs from a directory.

    Duplicate keys, malformed dates, nonpositive revenues, or negative
    emissions raise SchemaError with the offending line number.
    """
    directory = Path(directory)

    prices, seen = [], set()
    for line, row in _read_rows(directory / "prices.csv", PRICE_COLUMNS):
        date, ticker, close = row
        _parse_date(date, line)
        if not ticker:
            raise SchemaError("empty ticker", line)
        px = _parse_float(close, "adjusted_close", line)
        if px <= 0:
            raise SchemaError(f"adjusted_close must be > 0, got {px}", line)
        key = (date, ticker)
        if key in seen:
            raise SchemaError(f"duplicate price row for {key}", line)
        seen.add(key)
        prices.append((date, ticker, px))

    emissions, seen = [], set()
    for line, row in _read_rows(directory / "emissions.csv", EMISSION_COLUMNS):
        ticker, year, scope, tco2e, confidence = row
        if not ticker:
            raise SchemaError("empty ticker", line)
        try:
            year_i = int(year)
        except ValueError:
            raise SchemaError(f"fiscal_year {year!r} is not an integer", line) from None
        if scope not in ("1", "2", "3"):
            raise SchemaError(f"scope must be 1, 2 or 3, got {scope!r}", line)
        val = _parse_float(tco2e, "tco2e", line)
        if val < 0:
            raise SchemaError(f"tco2e must be >= 0, got {val}", line)
        key = (ticker, year_i, int(scope))
        if key in seen:
            raise SchemaError(f"duplicate emissions row for {key}", line)
        seen.add(key)
        emissions.append((ticker, year_i, int(scope), val, confidence))

    revenues, seen = [], set()
    for line, row in _read_rows(directory / "revenues.csv", REVENUE_COLUMNS):
        ticker, quarter_end, revenue = row
        if not ticker:
            raise SchemaError("empty ticker", line)
        _parse_date(quarter_end, line)
        val = _parse_float(revenue, "revenue_usd", line)
        if val <= 0:
            raise SchemaError(f"revenue_usd must be > 0, got {val}", line)
        key = (ticker, quarter_end)
        if key in seen:
            raise SchemaError(f"duplicate revenue row for {key}", line)
        seen.add(key)
        revenues.append((ticker, quarter_end, val))

    sectors, seen = [], set()
    for line, row in _read_rows(directory / "sectors.csv", SECTOR_COLUMNS):
        ticker, sector = row
        if not ticker:
            raise SchemaError("empty ticker", line)
        if not sector:
            raise SchemaError(f"empty sector for {ticker}", line)
        if ticker in seen:
            raise SchemaError(f"duplicate sector row for {ticker}", line)
        seen.add(ticker)
        sectors.append((ticker, sector))

    return RawRecords(
        prices=pd.DataFrame(prices, columns=PRICE_COLUMNS),
        emissions=pd.DataFrame(emissions, columns=EMISSION_COLUMNS),
        revenues=pd.DataFrame(revenues, columns=REVENUE_COLUMNS),
        sectors=pd.DataFrame(sectors, columns=SECTOR_COLUMNS),
    )


def export_records(records: RawRecords, directory) -> None:
    """Write the four CSVs with canonical key ordering and exact round-trip."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    def dump(frame, name, sort_keys):
        frame = frame.sort_values(sort_keys, kind="mergesort")
        with open(directory / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(frame.columns))
            for row in frame.itertuples(index=False):
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])

    dump(records.prices, "prices.csv", ["date", "ticker"])
    dump(records.emissions, "emissions.csv", ["ticker", "fiscal_year", "scope"])
    dump(records.revenues, "revenues.csv", ["ticker", "quarter_end"])
    dump(records.sectors, "sectors.csv", ["ticker"])


def _last_trading_days(index: pd.DatetimeIndex) -> pd.DatetimeIndex:
    pos = pd.Series(np.arange(len(index)), index=index)
    last = pos.groupby([index.year, index.month]).max().values
    return index[np.sort(last)]


def align_forward_carry(raw: RawRecords, scope: int = 1,
                        rebalance_dates: Optional[pd.DatetimeIndex] = None
                        ) -> AlignedDataset:
    """Build aligned panels with forward-carried, revenue-normalized intensities.

    Disclosure for fiscal year Y becomes usable strictly after Dec 31 of Y.
    TTM revenue sums the four most recent quarters ending on or before that
    reference date (fewer quarters are annualized and flagged). Assets
    without full price coverage are dropped with a warning.
    """
    if scope not in (1, 2, 3):
        raise InvalidInputError(f"scope must be 1, 2 or 3, got {scope}")
    px = raw.prices.copy()
    px["date"] = pd.to_datetime(px["date"])
    wide = px.pivot(index="date", columns="ticker", values="adjusted_close").sort_index()
    full = wide.columns[wide.notna().all(axis=0)]
    dropped = [t for t in wide.columns if t not in set(full)]
    if dropped:
        warnings.warn(f"dropping {len(dropped)} asset(s) with partial price "
                      f"coverage: {dropped[:5]}{'...' if len(dropped) > 5 else ''}",
                      RuntimeWarning)
    wide = wide[list(full)]
    if wide.shape[1] == 0:
        raise InvalidInputError("no asset has full price coverage")
    returns = (wide / wide.shift(1)).iloc[1:]

    if rebalance_dates is None:
        rebalance_dates = _last_trading_days(returns.index)
    else:
        rebalance_dates = pd.DatetimeIndex(sorted(rebalance_dates))

    sectors = dict(zip(raw.sectors["ticker"], raw.sectors["sector"]))
    tickers = list(wide.columns)

    revenue_by_ticker = {}
    for ticker, group in raw.revenues.groupby("ticker"):
        ends = pd.to_datetime(group["quarter_end"])
        revenue_by_ticker[ticker] = sorted(zip(ends, group["revenue_usd"]))

    def ttm_revenue(ticker, ref_date):
        """(revenue_usd, flagged_partial) at the disclosure reference date."""
        rows = [v for d, v in revenue_by_ticker.get(ticker, []) if d <= ref_date]
        if not rows:
            return None, True
        recent = rows[-4:]
        if len(recent) == 4:
            return float(sum(recent)), False
        return float(np.mean(recent) * 4.0), True

    emis = raw.emissions
    disclosures = {}  # (ticker, scope) -> sorted [(ref_date, fiscal_year, tco2e)]
    for (ticker, sc), group in emis.groupby(["ticker", "scope"]):
        rows = sorted((int(y), float(v)) for y, v in zip(group["fiscal_year"],
                                                         group["tco2e"]))
        disclosures[(ticker, int(sc))] = [
            (pd.Timestamp(dt.date(y, 12, 31)), y, v) for y, v in rows]

    n = len(tickers)
    lam = np.full((len(rebalance_dates), n), np.nan)
    levels = np.full((len(rebalance_dates), n), np.nan)
    ttm_panel = np.full((len(rebalance_dates), n), np.nan)
    prov = np.full((len(rebalance_dates), n), "missing", dtype=object)

    for j, ticker in enumerate(tickers):
        scoped = disclosures.get((ticker, scope), [])
        scope1 = disclosures.get((ticker, 1), [])
        for i, date in enumerate(rebalance_dates):
            prior = [(ref, y, v) for ref, y, v in scoped if ref < date]
            if scope1:
                prior1 = [(ref, y, v) for ref, y, v in scope1 if ref < date]
                if prior1:
                    levels[i, j] = prior1[-1][2]
            if not prior:
                continue
            ref, _, tco2e = prior[-1]
            revenue, flagged = ttm_revenue(ticker, ref)
            if revenue is None:
                continue
            lam[i, j] = tco2e / (revenue / 1e6)  # tCO2e per $mm revenue
            ttm_panel[i, j] = revenue / 1e6
            prov[i, j] = "partial_revenue" if flagged else "observed"

    return AlignedDataset(
        scope=scope,
        prices=wide,
        returns=returns,
        intensity=pd.DataFrame(lam, index=rebalance_dates, columns=tickers),
        emission_levels=pd.DataFrame(levels, index=rebalance_dates, columns=tickers),
        rebalance_dates=rebalance_dates,
        sectors=sectors,
        provenance=pd.DataFrame(prov, index=rebalance_dates, columns=tickers),
        revenue_ttm=pd.DataFrame(ttm_panel, index=rebalance_dates, columns=tickers),
    )


def complete_intensities(dataset: AlignedDataset, k: int = 8, seed: int = 0,
                         strict: bool = False) -> pd.DataFrame:
    """Fill missing intensities by causal multiple imputation (or leave NaN).

    At each rebalance date the sector model is fitted on the forward-carried
    cross-section observable at that date only, so no future record can
    influence earlier weights. The K draws are averaged per cell. In strict
    mode the panel is returned unchanged (missing assets stay excluded).
    """
    lam = dataset.intensity.copy()
    if strict:
        return lam
    sectors = [dataset.sectors.get(t, "UNKNOWN") for t in lam.columns]
    levels = dataset.emission_levels
    # reconstruct the level/revenue split the intensities came from
    for i, date in enumerate(lam.index):
        row = lam.iloc[i].to_numpy(dtype=float)
        missing = ~np.isfinite(row)
        if not missing.any():
            continue
        c_row = np.where(np.isfinite(row), row * np.nan_to_num(
            dataset.revenue_ttm.iloc[i].to_numpy(dtype=float), nan=1.0), np.nan)
        s_row = dataset.revenue_ttm.iloc[i].to_numpy(dtype=float)
        observed = np.isfinite(row)
        if observed.sum() == 0:
            continue  # nothing to fit on yet; assets stay excluded at this date
        c_row[~observed] = np.nan
        s_row = np.where(observed, s_row, np.nan)
        draws = impute_emissions(c_row, s_row, sectors, k=k, seed=seed + 8191 * i)
        filled = average_imputations(draws)
        row[missing] = filled[missing]
        lam.iloc[i] = row
    return lam


def synth_generate(n_assets: int, n_days: int, n_sectors: int = 5,
                   intensity_return_correlation: float = 0.0,
                   missing_rate: float = 0.0, seed: int = 0,
                   start: str = "2015-01-02") -> RawRecords:
    """Generate a synthetic dataset with sector structure.

    Prices follow geometric random walks driven by market, sector, and
    idiosyncratic shocks. Emissions and revenues are log-normal and
    sector-clustered; per-asset drifts correlate with log intensity at the
    requested level. A ``missing_rate`` fraction of (asset, fiscal year)
    disclosures is withheld. Deterministic given the seed.
    """
    if n_assets < 1 or n_days < 1:
        raise InvalidInputError("need n_assets >= 1 and n_days >= 1")
    if not 0.0 <= missing_rate < 1.0:
        raise InvalidInputError(f"missing rate must be in [0,1), got {missing_rate}")
    if not -1.0 <= intensity_return_correlation <= 1.0:
        raise InvalidInputError("intensity-return correlation must be in [-1,1]")
    rng = np.random.default_rng(seed)
    tickers = [f"A{i:04d}" for i in range(n_assets)]
    sector_names = [f"SEC{s:02d}" for s in range(n_sectors)]
    sector_of = [sector_names[i % n_sectors] for i in range(n_assets)]

    # sector-clustered log intensities (tCO2e per $mm revenue)
    sector_log_lam = rng.uniform(np.log(5.0), np.log(500.0), size=n_sectors)
    log_lam = np.array([sector_log_lam[i % n_sectors] for i in range(n_assets)])
    log_lam += 0.6 * rng.standard_normal(n_assets)
    lam_true = np.exp(log_lam)

    rho = intensity_return_correlation
    z_drift = rng.standard_normal(n_assets)
    lam_std = (log_lam - log_lam.mean()) / max(log_lam.std(), 1e-12)
    drift = 3e-4 + 1.5e-4 * (rho * lam_std + np.sqrt(max(0.0, 1.0 - rho ** 2)) * z_drift)

    dates = pd.bdate_range(start=start, periods=n_days + 1)
    market = 0.008 * rng.standard_normal(n_days)
    sector_shocks = 0.006 * rng.standard_normal((n_days, n_sectors))
    idio = 0.009 * rng.standard_normal((n_days, n_assets))
    # demean shock series so realized mean log returns equal the drifts and
    # the intensity-return correlation knob is accurate at any sample length
    market -= market.mean()
    sector_shocks -= sector_shocks.mean(axis=0)
    idio -= idio.mean(axis=0)
    sector_idx = np.array([i % n_sectors for i in range(n_assets)])
    log_rets = drift[None, :] + market[:, None] + sector_shocks[:, sector_idx] + idio
    log_px = np.vstack([np.zeros(n_assets), np.cumsum(log_rets, axis=0)])
    px = 100.0 * np.exp(log_px)

    price_rows = []
    for d_i, date in enumerate(dates):
        iso = date.date().isoformat()
        for a_i, ticker in enumerate(tickers):
            price_rows.append((iso, ticker, float(px[d_i, a_i])))

    # annual revenue per asset (USD), quarterly rows with mild noise
    annual_revenue = np.exp(rng.uniform(np.log(1e9), np.log(2e10), size=n_assets))
    first_year = dates[0].year - 1
    last_year = dates[-1].year
    quarter_ends = pd.date_range(start=f"{first_year - 1}-03-31",
                                 end=f"{last_year}-12-31", freq="QE")
    revenue_rows = []
    for a_i, ticker in enumerate(tickers):
        for q in quarter_ends:
            noise = float(np.exp(0.03 * rng.standard_normal()))
            revenue_rows.append((ticker, q.date().isoformat(),
                                 float(annual_revenue[a_i] / 4.0 * noise)))

    grades = ["A", "B", "C", "D", ""]
    emission_rows = []
    for a_i, ticker in enumerate(tickers):
        for year in range(first_year, last_year + 1):
            if rng.uniform() < missing_rate:
                continue
            wobble = float(np.exp(0.05 * rng.standard_normal()))
            c1 = lam_true[a_i] * (annual_revenue[a_i] / 1e6) * wobble
            scope_mult = {1: 1.0, 2: float(rng.uniform(0.5, 2.0)),
                          3: float(rng.uniform(2.0, 10.0))}
            grade = grades[int(rng.integers(len(grades)))]
            for sc in (1, 2, 3):
                emission_rows.append((ticker, year, sc, float(c1 * scope_mult[sc]), grade))

    sector_rows = list(zip(tickers, sector_of))
    return RawRecords(
        prices=pd.DataFrame(price_rows, columns=PRICE_COLUMNS),
        emissions=pd.DataFrame(emission_rows, columns=EMISSION_COLUMNS),
        revenues=pd.DataFrame(revenue_rows, columns=REVENUE_COLUMNS),
        sectors=pd.DataFrame(sector_rows, columns=SECTOR_COLUMNS),
    )


def write_report_json(report, path, config: Optional[dict] = None) -> None:
    """Serialize a BacktestReport deterministically (sorted keys)."""
    payload = {
        "strategy": report.strategy,
        "metrics": report.metrics,
        "average_intensity": report.average_intensity,
        "net_returns": {
            "dates": [d.date().isoformat() for d in report.net_returns.index],
            "values": [float(v) for v in report.net_returns.values],
        },
        "turnover": {
            "dates": [d.date().isoformat() for d in report.turnover.index],
            "values": [float(v) for v in report.turnover.values],
        },
        "intensity_path": {
            "dates": [d.date().isoformat() for d in report.intensity_path.index],
            "values": [float(v) for v in report.intensity_path.values],
        },
        "config": config or {},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1,
                  default=lambda o: repr(o), allow_nan=True)
        fh.write("\n")


def write_weights_csv(report, path) -> None:
    """Export the weight panel as date,ticker,weight rows (fixed order)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "ticker", "weight"])
        for date, row in report.weights.iterrows():
            iso = date.date().isoformat()
            for ticker in report.weights.columns:
                writer.writerow([iso, ticker, repr(float(row[ticker]))])


def load_report_returns(path) -> pd.Series:
    """Read the daily net-return series back from a report JSON."""
    with open(path) as fh:
        payload = json.load(fh)
    series = pd.Series(payload["net_returns"]["values"],
                       index=pd.to_datetime(payload["net_returns"]["dates"]),
                       name=payload["strategy"])
    return series
