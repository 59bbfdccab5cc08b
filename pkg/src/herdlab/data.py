"""Price/return panels: CSV ingestion, log returns, normalization, serialization."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

LOG_EMPIRICAL = "log-empirical"
SIMULATED_COUNT = "simulated-count"


class LoadError(ValueError):
    """Malformed or incomplete input table."""


@dataclass(frozen=True)
class PricePanel:
    dates: tuple[dt.date, ...]
    tickers: tuple[str, ...]
    prices: np.ndarray
    sector_of: np.ndarray
    sector_names: tuple[str, ...]

    @property
    def T(self) -> int:
        return self.prices.shape[0]

    @property
    def n(self) -> int:
        return len(self.tickers)

    @property
    def n_sec(self) -> int:
        return len(self.sector_names)


@dataclass(frozen=True)
class ReturnPanel:
    tickers: tuple[str, ...]
    sector_of: np.ndarray
    returns: np.ndarray
    kind: str = LOG_EMPIRICAL
    sector_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.returns.ndim != 2 or self.returns.shape[1] != len(self.tickers):
            raise ValueError("returns must be a T x n table matching the tickers")
        if self.returns.shape[0] < 1:
            raise ValueError("a return panel needs at least one row")
        if not np.all(np.isfinite(self.returns)):
            raise ValueError("return panel contains non-finite entries")

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def n(self) -> int:
        return len(self.tickers)

    @property
    def n_sec(self) -> int:
        return int(self.sector_of.max()) + 1


@dataclass(frozen=True)
class NormalizedPanel:
    tickers: tuple[str, ...]
    sector_of: np.ndarray
    r: np.ndarray
    mean: np.ndarray
    sigma: np.ndarray
    sector_names: tuple[str, ...] = ()

    @property
    def T(self) -> int:
        return self.r.shape[0]

    @property
    def n(self) -> int:
        return self.r.shape[1]

    @property
    def n_sec(self) -> int:
        return int(self.sector_of.max()) + 1


def normalized_from_array(r: np.ndarray, sector_of: Sequence[int] | None = None,
                          tickers: Sequence[str] | None = None) -> NormalizedPanel:
    """Normalize a raw T x n array (convenience for tests and fixtures)."""
    r = np.asarray(r, dtype=float)
    n = r.shape[1]
    tickers = tuple(tickers) if tickers is not None else tuple(f"S{i:03d}" for i in range(n))
    sector_of = np.zeros(n, dtype=int) if sector_of is None else np.asarray(sector_of, dtype=int)
    return normalize(ReturnPanel(tickers, sector_of, r))


# --------------------------------------------------------------------------
# loading
# --------------------------------------------------------------------------

def read_sectors(path: str | Path) -> tuple[list[str], list[str]]:
    """Return (tickers, labels) in file order from a ``ticker,sector`` CSV."""
    path = Path(path)
    if not path.exists():
        raise LoadError(f"sectors file not found: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip().lower() for c in rows[0][:2]] != ["ticker", "sector"]:
        raise LoadError(f"{path}: header must be 'ticker,sector'")
    tickers, labels = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 2 or not row[0].strip() or not row[1].strip():
            raise LoadError(f"{path}:{lineno}: expected 'ticker,sector', got {row!r}")
        t = row[0].strip()
        if t in tickers:
            raise LoadError(f"{path}:{lineno}: ticker {t!r} listed twice")
        tickers.append(t)
        labels.append(row[1].strip())
    return tickers, labels


def load_price_panel(prices_file: str | Path, sectors_file: str | Path,
                     intersect_dates: bool = False) -> PricePanel:
    """Load and validate a complete date x ticker closing-price table.

    With ``intersect_dates`` any date on which some ticker has no price is
    dropped before validation instead of raising.
    """
    prices_file = Path(prices_file)
    if not prices_file.exists():
        raise LoadError(f"prices file not found: {prices_file}")
    sec_tickers, sec_labels = read_sectors(sectors_file)

    with prices_file.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{prices_file}: empty file") from None
        rows = [row for row in reader if row and any(c.strip() for c in row)]

    if not header or header[0].strip().lower() != "date":
        raise LoadError(f"{prices_file}: first column must be 'date'")
    tickers = [h.strip() for h in header[1:]]
    if not tickers:
        raise LoadError(f"{prices_file}: no ticker columns")
    if len(set(tickers)) != len(tickers):
        raise LoadError(f"{prices_file}: duplicate ticker columns")

    sector_label = dict(zip(sec_tickers, sec_labels))
    for t in sec_tickers:
        if t not in tickers:
            raise LoadError(f"sectors file lists unknown ticker {t!r}")
    for t in tickers:
        if t not in sector_label:
            raise LoadError(f"ticker {t!r} has no sector")

    dates: list[dt.date] = []
    table: list[list[float]] = []
    for lineno, row in enumerate(rows, start=2):
        try:
            date = dt.date.fromisoformat(row[0].strip())
        except ValueError:
            raise LoadError(f"{prices_file}:{lineno}: unparseable date {row[0]!r}") from None
        cells = [c.strip() for c in row[1:]] + [""] * (len(tickers) - len(row) + 1)
        values = []
        missing = None
        for t, cell in zip(tickers, cells):
            if cell == "" or cell.lower() in ("na", "nan", "null"):
                missing = t
                break
            try:
                v = float(cell)
            except ValueError:
                raise LoadError(f"{prices_file}:{lineno}: bad number {cell!r} at ({date}, {t})") from None
            if not math.isfinite(v) or v <= 0:
                raise LoadError(f"non-positive price {cell} at ({date}, {t})")
            values.append(v)
        if missing is not None:
            if intersect_dates:
                continue
            raise LoadError(f"missing price at ({date}, {missing})")
        dates.append(date)
        table.append(values)

    for a, b in zip(dates, dates[1:]):
        if b <= a:
            raise LoadError(f"dates not strictly increasing at {b}")
    if not table:
        raise LoadError(f"{prices_file}: no complete rows")

    names: list[str] = []
    for lab in sec_labels:
        if lab not in names:
            names.append(lab)
    sector_of = np.array([names.index(sector_label[t]) for t in tickers], dtype=int)
    return PricePanel(tuple(dates), tuple(tickers), np.array(table, dtype=float),
                      sector_of, tuple(names))


# --------------------------------------------------------------------------
# transforms
# --------------------------------------------------------------------------

def log_returns(panel: PricePanel) -> ReturnPanel:
    if panel.T < 2:
        raise ValueError("need at least 2 dates to form returns")
    R = np.diff(np.log(panel.prices), axis=0)
    return ReturnPanel(panel.tickers, panel.sector_of, R, LOG_EMPIRICAL, panel.sector_names)


def normalize(panel: ReturnPanel) -> NormalizedPanel:
    """Zero-mean, unit population-variance returns per stock."""
    if panel.T < 2:
        raise ValueError("normalization needs at least 2 rows")
    R = panel.returns.astype(float)
    mean = R.mean(axis=0)
    centred = R - mean
    sigma = np.sqrt((centred ** 2).mean(axis=0))
    scale = np.maximum(np.abs(R).max(axis=0), 1e-300)
    bad = np.flatnonzero(sigma <= 1e-14 * scale)
    if bad.size:
        raise ValueError(f"stock {panel.tickers[bad[0]]!r} has zero variance")
    r = centred / sigma
    # second pass removes the O(eps) residue left by the first
    r = r - r.mean(axis=0)
    r = r / np.sqrt((r ** 2).mean(axis=0))
    return NormalizedPanel(panel.tickers, panel.sector_of, r, mean, sigma, panel.sector_names)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def write_returns(panel: ReturnPanel, path: str | Path) -> None:
    """``t,<ticker...>`` CSV; integers verbatim, floats with round-trip precision."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *panel.tickers])
        for t, row in enumerate(panel.returns, start=1):
            w.writerow([t, *(_fmt(x) for x in row)])


def read_returns(path: str | Path, sectors_file: str | Path | None = None,
                 kind: str = LOG_EMPIRICAL) -> ReturnPanel:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"returns file not found: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "t":
            raise LoadError(f"{path}: header must start with 't'")
        tickers = tuple(h.strip() for h in header[1:])
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(tickers) + 1:
                raise LoadError(f"{path}:{lineno}: expected {len(tickers) + 1} cells")
            try:
                rows.append([float(c) for c in row[1:]])
            except ValueError:
                raise LoadError(f"{path}:{lineno}: non-numeric cell") from None
    R = np.array(rows, dtype=float)
    if sectors_file is None:
        return ReturnPanel(tickers, np.zeros(len(tickers), dtype=int), R, kind)
    sec_tickers, labels = read_sectors(sectors_file)
    lookup = dict(zip(sec_tickers, labels))
    missing = [t for t in tickers if t not in lookup]
    if missing:
        raise LoadError(f"ticker {missing[0]!r} has no sector")
    names: list[str] = []
    used = {lookup[t] for t in tickers}
    for lab in labels:
        if lab in used and lab not in names:
            names.append(lab)
    sector_of = np.array([names.index(lookup[t]) for t in tickers], dtype=int)
    return ReturnPanel(tickers, sector_of, R, kind, tuple(names))


def write_prices(panel: PricePanel, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *panel.tickers])
        for d, row in zip(panel.dates, panel.prices):
            w.writerow([d.isoformat(), *(repr(float(x)) for x in row)])


def write_sectors(tickers: Sequence[str], sector_of: Sequence[int],
                  names: Sequence[str], path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ticker", "sector"])
        for t, j in zip(tickers, sector_of):
            w.writerow([t, names[j]])
