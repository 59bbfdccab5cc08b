"""Synthetic price panels for testing without proprietary market data.

Daily log returns are a three-layer factor mix,

    x_i(t) = sigma(t) * (a * m(t) + b_j * s_j(t) + c_ij * e_i(t)),

with a market factor m, one factor s_j per sector, idiosyncratic noise
e_i (all i.i.d. standard normal), c_ij = sqrt(1 - a^2 - b_j^2), and a common
log-AR(1) volatility sigma(t) that produces volatility clustering.  The
loadings were tuned so that :func:`herdlab.calibration.calibrate` recovers
the co-movement degrees of the two reference markets to within 0.05.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass

import numpy as np

from herdlab.data import PricePanel


@dataclass(frozen=True)
class FixtureSpec:
    T: int
    market_loading: float
    sector_loadings: tuple[float, ...]
    vol_persistence: float = 0.98
    vol_of_vol: float = 0.12
    daily_vol: float = 0.015
    start: dt.date = dt.date(1990, 1, 2)
    sector_names: tuple[str, ...] = ("sector1", "sector2", "sector3", "sector4", "sector5")
    stocks_per_sector: int = 30


NYSE_LIKE = FixtureSpec(
    T=4286,
    market_loading=0.4295,
    sector_loadings=(0.3771, 0.2255, 0.2813, 0.2760, 0.4561),
    start=dt.date(1990, 1, 2),
    sector_names=("Basic Materials", "Consumer Goods", "Industrial Goods", "Services", "Utility"),
)

HKSE_LIKE = FixtureSpec(
    T=2146,
    market_loading=0.3750,
    sector_loadings=(0.3300, 0.2920, 0.2070, 0.2065, 0.1335),
    start=dt.date(2003, 1, 2),
    sector_names=("Real Estate Development", "Conglomerates-Industrial Goods",
                  "Basic Materials-Technology", "Services", "Consumer Goods"),
)

NOISE = FixtureSpec(T=4286, market_loading=0.0, sector_loadings=(0.0,) * 5, vol_of_vol=0.0)

KINDS = {"nyse-like": NYSE_LIKE, "hkse-like": HKSE_LIKE, "noise": NOISE}


def factor_returns(spec: FixtureSpec, seed: int, T: int | None = None) -> np.ndarray:
    """(T x n) log returns following the factor mix of ``spec``."""
    T = spec.T if T is None else T
    gen = np.random.default_rng(np.random.SeedSequence([seed, 0xF1C5]))
    n_sec = len(spec.sector_loadings)
    ns = spec.stocks_per_sector
    a = spec.market_loading
    b = np.repeat(np.asarray(spec.sector_loadings, dtype=float), ns)
    c = np.sqrt(1.0 - a * a - b * b)

    m = gen.standard_normal(T)
    s = gen.standard_normal((T, n_sec))
    e = gen.standard_normal((T, n_sec * ns))
    z = a * m[:, None] + b * np.repeat(s, ns, axis=1) + c * e

    h = np.empty(T)
    eta = gen.standard_normal(T) * spec.vol_of_vol
    h[0] = eta[0] / np.sqrt(max(1.0 - spec.vol_persistence ** 2, 1e-12))
    for t in range(1, T):
        h[t] = spec.vol_persistence * h[t - 1] + eta[t]
    return spec.daily_vol * np.exp(h)[:, None] * z


def business_days(start: dt.date, count: int) -> list[dt.date]:
    days, d = [], start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def make_fixture(kind: str, seed: int = 0, T: int | None = None) -> PricePanel:
    """Synthetic price panel; ``T`` counts price rows (returns are one fewer)."""
    try:
        spec = KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown fixture kind {kind!r}; choose from {sorted(KINDS)}") from None
    T = spec.T if T is None else T
    x = factor_returns(spec, seed, T - 1)
    log_p = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)]) + np.log(50.0)
    n_sec = len(spec.sector_loadings)
    ns = spec.stocks_per_sector
    tickers = tuple(f"S{j + 1}_{k + 1:02d}" for j in range(n_sec) for k in range(ns))
    return PricePanel(
        dates=tuple(business_days(spec.start, T)),
        tickers=tickers,
        prices=np.round(np.exp(log_p), 6),
        sector_of=np.repeat(np.arange(n_sec), ns),
        sector_names=spec.sector_names,
    )
