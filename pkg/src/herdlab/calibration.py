"""Model parameters: horizon weights, co-movement degrees and trade probabilities."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from herdlab.data import NormalizedPanel

HORIZON_EXPONENT = 1.12
NYSE_P = 0.00826

DEFAULT_N_AGENTS = 600_000
DEFAULT_L = 1000
DEFAULT_BURN_IN = 10_000
DEFAULT_T_OUT = 4286

# Reference co-movement values of the two markets, used by the presets.
NYSE_H_M = 0.363
NYSE_H = (0.491, 0.414, 0.438, 0.431, 0.546)
HKSE_H_M = 0.306
HKSE_H = (0.426, 0.406, 0.364, 0.361, 0.340)


class CalibrationError(ValueError):
    """A parameter computed from data falls outside the model's valid range."""


@dataclass(frozen=True)
class HorizonWeights:
    L: int
    xi: np.ndarray
    k: float
    exponent: float = HORIZON_EXPONENT

    @property
    def lag_weights(self) -> np.ndarray:
        """Coefficients ``c_m`` with ``R'(t) = sum_m c_m R(t-m)``, m = 0..L-1.

        Swapping the order of summation in the horizon-weighted average gives
        ``c_m = k * sum_{l > m} xi_l``, i.e. ``k`` times the upper tail of xi.
        """
        tail = np.cumsum(self.xi[::-1])[::-1]
        return self.k * tail


@dataclass(frozen=True)
class CoMovement:
    H_M: float
    H: tuple[float, ...]

    @property
    def H_bar(self) -> float:
        return float(sum(self.H) / len(self.H))


@dataclass(frozen=True)
class ModelParams:
    n: int
    n_sec: int
    co: CoMovement
    p: float
    P: float
    N: int = DEFAULT_N_AGENTS
    L: int = DEFAULT_L
    exponent: float = HORIZON_EXPONENT
    burn_in: int = DEFAULT_BURN_IN
    T_out: int = DEFAULT_T_OUT
    weights: HorizonWeights = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1 or self.n_sec < 1 or self.n % self.n_sec:
            raise CalibrationError(f"n={self.n} is not divisible by n_sec={self.n_sec}")
        if len(self.co.H) != self.n_sec:
            raise CalibrationError(f"expected {self.n_sec} sector H values, got {len(self.co.H)}")
        if not 0 < self.p < 0.5:
            raise CalibrationError(f"individual probability p={self.p} outside (0, 0.5)")
        if not 0 <= self.P <= 0.5:
            raise CalibrationError(f"group probability P={self.P} outside [0, 0.5]")
        if self.N < self.n:
            raise CalibrationError(f"N={self.N} agents cannot cover n={self.n} stocks")
        if self.burn_in < 0 or self.T_out < 0:
            raise CalibrationError("burn_in and T_out must be non-negative")
        check_co_movement(self.co)
        object.__setattr__(self, "weights", horizon_weights(self.L, self.exponent))

    @property
    def stocks_per_sector(self) -> int:
        return self.n // self.n_sec

    @property
    def sector_of(self) -> np.ndarray:
        """Stocks are laid out sector by sector: stock i is in sector i // (n/n_sec)."""
        return np.arange(self.n) // self.stocks_per_sector

    def replace(self, **changes) -> "ModelParams":
        kw = {f: getattr(self, f) for f in _PARAM_FIELDS}
        kw.update(changes)
        return ModelParams(**kw)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "n_sec": self.n_sec,
            "N": self.N,
            "L": self.L,
            "exponent": float(self.exponent),
            "H_M": float(self.co.H_M),
            "H": [float(h) for h in self.co.H],
            "p": float(self.p),
            "P": float(self.P),
            "burn_in": self.burn_in,
            "T_out": self.T_out,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        try:
            return cls(
                n=int(d["n"]),
                n_sec=int(d["n_sec"]),
                N=int(d.get("N", DEFAULT_N_AGENTS)),
                L=int(d.get("L", DEFAULT_L)),
                exponent=float(d.get("exponent", HORIZON_EXPONENT)),
                co=CoMovement(float(d["H_M"]), tuple(float(h) for h in d["H"])),
                p=float(d["p"]),
                P=float(d["P"]),
                burn_in=int(d.get("burn_in", DEFAULT_BURN_IN)),
                T_out=int(d.get("T_out", DEFAULT_T_OUT)),
            )
        except KeyError as e:
            raise CalibrationError(f"params file is missing field {e.args[0]!r}") from None


_PARAM_FIELDS = ("n", "n_sec", "co", "p", "P", "N", "L", "exponent", "burn_in", "T_out")


def save_params(params: ModelParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2) + "\n")


def load_params(path: str | Path) -> ModelParams:
    return ModelParams.from_dict(json.loads(Path(path).read_text()))


def preset(market: str, **overrides) -> ModelParams:
    """Parameters for the two calibrated markets ("nyse" or "hkse")."""
    market = market.lower()
    if market == "nyse":
        co, T_out = CoMovement(NYSE_H_M, NYSE_H), 4286
    elif market == "hkse":
        co, T_out = CoMovement(HKSE_H_M, HKSE_H), 2146
    else:
        raise ValueError(f"unknown market preset {market!r}")
    p = individual_probability(0.603, 1.64, 250)
    kw = dict(n=150, n_sec=5, co=co, p=p, P=group_probability(p, 150, co.H_M), T_out=T_out)
    kw.update(overrides)
    return ModelParams(**kw)


# --------------------------------------------------------------------------
# horizon weights and the weighted average return
# --------------------------------------------------------------------------

def horizon_weights(L: int, exponent: float = HORIZON_EXPONENT) -> HorizonWeights:
    if L < 1:
        raise ValueError(f"maximum horizon L must be >= 1, got {L}")
    raw = np.arange(1, L + 1, dtype=float) ** -exponent
    xi = raw / raw.sum()
    # sum_l sum_{m>=l} xi_m == sum_m m * xi_m
    k = 1.0 / float(np.dot(np.arange(1, L + 1), xi))
    return HorizonWeights(L=L, xi=xi, k=k, exponent=exponent)


def weighted_return(history: Sequence[float], weights: HorizonWeights) -> float:
    """Horizon-weighted average of the last ``L`` returns, oldest first.

    Shorter histories are zero-padded on the old side.  Evaluated in the
    single-pass lag form (see ``HorizonWeights.lag_weights``), which is
    algebraically identical to summing partial sums per horizon.
    """
    h = np.asarray(history, dtype=float)
    if h.size > weights.L:
        h = h[-weights.L:]
    recent_first = h[::-1]
    return float(np.dot(weights.lag_weights[: recent_first.size], recent_first))


def horizon_mass_below(weights: HorizonWeights, horizon: int) -> float:
    """Fraction of agents whose investment horizon is shorter than ``horizon`` days."""
    return float(weights.xi[: max(horizon - 1, 0)].sum())


# --------------------------------------------------------------------------
# co-movement degrees
# --------------------------------------------------------------------------

def daily_trend_amplitudes(r_day) -> tuple[float, float, float, float, float]:
    """(v_plus, v_minus, v_dom, v_non, zeta) for one day of normalized returns.

    On a tie the rising trend dominates.  Zero returns join neither trend.
    """
    r = np.asarray(r_day, dtype=float)
    n_s = r.size
    up, down = r > 0, r < 0
    v_plus = float(np.sum(r[up] ** 2)) / n_s
    v_minus = float(np.sum(r[down] ** 2)) / n_s
    if v_plus >= v_minus:
        return v_plus, v_minus, v_plus, v_minus, int(up.sum()) / n_s
    return v_plus, v_minus, v_minus, v_plus, int(down.sum()) / n_s


def day_statistics(r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised ``(zeta(t), v_dom(t) - v_non(t))`` for a T x n_s block."""
    r = np.asarray(r, dtype=float)
    n_s = r.shape[1]
    sq = r * r
    v_plus = np.where(r > 0, sq, 0.0).sum(axis=1) / n_s
    v_minus = np.where(r < 0, sq, 0.0).sum(axis=1) / n_s
    rising = v_plus >= v_minus
    zeta = np.where(rising, (r > 0).sum(axis=1), (r < 0).sum(axis=1)) / n_s
    return zeta, np.abs(v_plus - v_minus)


def co_movement_degree(panel: NormalizedPanel, sector: int | None = None) -> float:
    """H = <zeta> * <v_dom - v_non> over the whole market or one sector."""
    if sector is None:
        cols = np.arange(panel.n)
    else:
        cols = np.flatnonzero(panel.sector_of == sector)
    if cols.size == 0:
        raise ValueError(f"sector {sector} has no stocks")
    zeta, gap = day_statistics(panel.r[:, cols])
    return float(zeta.mean() * gap.mean())


def check_co_movement(co: CoMovement) -> None:
    for j, h in enumerate(co.H):
        if h <= co.H_M:
            raise CalibrationError(
                f"sector {j}: H={h:.4g} <= H_M={co.H_M:.4g}; sector herding needs "
                "stronger co-movement inside the sector than across the market"
            )
    if not 0 < co.H_M < 1:
        raise CalibrationError(f"market co-movement H_M={co.H_M} outside (0, 1)")
    for j, h in enumerate(co.H):
        if not 0 < h <= 1 + 1e-9:
            raise CalibrationError(f"sector {j} co-movement H={h} outside (0, 1]")


# --------------------------------------------------------------------------
# trade probabilities
# --------------------------------------------------------------------------

def individual_probability(institutional_fraction: float, yearly_turnover: float,
                           trading_days: int) -> float:
    """Daily buy (= sell) probability of one retail investor."""
    if not 0 <= institutional_fraction < 1:
        raise ValueError(f"institutional fraction must be in [0, 1), got {institutional_fraction}")
    if yearly_turnover <= 0 or trading_days <= 0:
        raise ValueError("turnover and trading days must be positive")
    yearly_trades = yearly_turnover / (1.0 - institutional_fraction)
    p = yearly_trades / trading_days / 2.0
    if p >= 0.5:
        raise CalibrationError(f"individual probability p={p:.4g} >= 0.5")
    return p


def group_probability(p: float, n: int, H_M: float) -> float:
    """Buy (= sell) probability of an M-group with ``n * H_M`` members on average."""
    if not 0 < p < 0.5:
        raise CalibrationError(f"individual probability p={p} outside (0, 0.5)")
    if n * H_M <= 0:
        raise CalibrationError("n * H_M must be positive")
    P = 1.0 - (1.0 - p) ** (n * H_M)
    if P > 0.5:
        raise CalibrationError(f"group probability P={P:.4g} > 0.5 leaves a negative hold probability")
    return P


def calibrate(panel: NormalizedPanel, *, p: float = NYSE_P, N: int = DEFAULT_N_AGENTS,
              L: int = DEFAULT_L, exponent: float = HORIZON_EXPONENT,
              burn_in: int = DEFAULT_BURN_IN, T_out: int | None = None) -> ModelParams:
    """Compute every model parameter from a normalized return panel."""
    H_M = co_movement_degree(panel)
    H = tuple(co_movement_degree(panel, j) for j in range(panel.n_sec))
    co = CoMovement(H_M, H)
    check_co_movement(co)
    P = group_probability(p, panel.n, H_M)
    return ModelParams(n=panel.n, n_sec=panel.n_sec, co=co, p=p, P=P, N=N, L=L,
                       exponent=exponent, burn_in=burn_in,
                       T_out=panel.T if T_out is None else T_out)


def calibration_summary(params: ModelParams, sector_names: Sequence[str] | None = None) -> str:
    names = list(sector_names) if sector_names else [f"sector {j}" for j in range(params.n_sec)]
    lines = [
        f"stocks n={params.n}  sectors n_sec={params.n_sec}  agents N={params.N}",
        f"horizon L={params.L}  exponent={params.exponent}  k={params.weights.k:.6g}",
        f"H_M = {params.co.H_M:.4f}",
    ]
    lines += [f"H[{j}] {name:<20s} = {h:.4f}" for j, (name, h) in enumerate(zip(names, params.co.H))]
    lines += [
        f"H_bar = {params.co.H_bar:.4f}",
        f"p = {params.p:.6g}   P = {params.P:.6g}   P_hold = {1 - 2 * params.P:.6g}",
    ]
    return "\n".join(lines)

