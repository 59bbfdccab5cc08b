"""Multi-level herding simulation.

One simulated day:

1. every stock's weighted average return R' sets its I-group count,
2. I-groups of a sector cluster into S-groups,
3. S-groups cluster into M-groups, sector j only using the first G_M(j),
4. each M-group draws buy / sell / hold with probabilities (P, P, 1 - 2P),
5. a stock's return is the buy count minus the sell count of its agents.

Agents inside one stock are exchangeable, so the day is computed at the
level of I-groups: a stock with N_i agents split into G near-equal blocks
has ``N_i % G`` blocks of ``N_i // G + 1`` agents followed by blocks of
``N_i // G``.  Which agent lands in which block never changes a return;
:func:`day_state` materialises that mapping when it is wanted.

All randomness comes from :mod:`herdlab.rng`, keyed by (seed, day, level,
origin), so stocks can be processed in any order or in parallel.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from herdlab import __version__, rng
from herdlab.calibration import CalibrationError, ModelParams
from herdlab.data import SIMULATED_COUNT, ReturnPanel


@dataclass(frozen=True)
class AgentPopulation:
    stock_of: np.ndarray
    N_i: np.ndarray

    @property
    def N(self) -> int:
        return int(self.stock_of.size)


@dataclass
class DayState:
    """Full herding hierarchy of one day (inspection and tests only)."""

    t: int
    rprime: np.ndarray
    D_I: np.ndarray
    G_I: np.ndarray
    N_I_j: np.ndarray
    N_I_M: int
    G_S: np.ndarray
    G_M: np.ndarray
    G_M_total: int
    i_offset: np.ndarray        # first global I-group index of each stock
    i_size: np.ndarray          # agents per I-group
    i_stock: np.ndarray         # owning stock per I-group
    i_to_s: np.ndarray          # I-group -> S-group index within its sector
    s_offset: np.ndarray        # first global S-group index of each sector
    s_to_m: np.ndarray          # global S-group -> M-group
    decisions: np.ndarray       # +1 / -1 / 0 per M-group
    returns: np.ndarray
    agent_group: np.ndarray | None = None  # agent -> global I-group


@dataclass
class SimOutput:
    panel: ReturnPanel
    manifest: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# population
# --------------------------------------------------------------------------

def init_population(params: ModelParams, seed: int, mode: str = "random") -> AgentPopulation:
    """Give every agent one stock.

    ``random`` draws each agent's stock uniformly (redrawn until every stock
    has an agent); ``uniform`` gives each stock exactly N / n agents.
    """
    n, N = params.n, params.N
    if N < n:
        raise ValueError(f"N={N} agents cannot cover n={n} stocks")
    if mode == "uniform":
        if N % n:
            raise ValueError(f"uniform population needs n | N (N={N}, n={n})")
        stock_of = np.repeat(np.arange(n), N // n)
    elif mode == "random":
        gen = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
        while True:
            stock_of = gen.integers(0, n, size=N)
            if np.bincount(stock_of, minlength=n).min() >= 1:
                break
    else:
        raise ValueError(f"unknown population mode {mode!r}")
    return AgentPopulation(stock_of=stock_of, N_i=np.bincount(stock_of, minlength=n).astype(np.int64))


# --------------------------------------------------------------------------
# group counts
# --------------------------------------------------------------------------

@nb.njit(cache=True, inline="always")
def _round_half_away(x):
    if x >= 0:
        return np.floor(x + 0.5)
    return -np.floor(-x + 0.5)


@nb.njit(cache=True)
def _clamp_count(x, hi):
    g = _round_half_away(x)
    if g < 1.0:
        return 1
    if g > hi:
        return hi
    return nb.int64(g)


def stock_herding(rprime: float, N_i: int) -> tuple[float, int]:
    """(D_I, G_I) for one stock: mean I-group size is |R'| floored at one agent."""
    if N_i < 1:
        raise ValueError("a stock needs at least one agent")
    G = _clamp_count(N_i / max(abs(rprime), 1.0), N_i)
    return 1.0 / G, int(G)


def sector_group_count(N_I_j: int, n: int, H_j: float, H_M: float) -> int:
    """Number of S-groups in a sector holding ``N_I_j`` I-groups."""
    if H_j <= H_M:
        raise CalibrationError(f"sector co-movement H={H_j} must exceed H_M={H_M}")
    if N_I_j < 1:
        raise ValueError("a sector needs at least one I-group")
    D_S = n * (H_j - H_M) / N_I_j
    return int(_clamp_count(1.0 / D_S, N_I_j))


def market_group_counts(N_I_M: int, H, H_M: float, n: int) -> tuple[np.ndarray, int]:
    """(G_M per sector, total M-groups).

    Each sector's count is rounded first and the total is the largest of
    the rounded counts.
    """
    H = np.asarray(H, dtype=float)
    if np.any(H <= 0) or N_I_M < 1:
        raise ValueError("need positive H values and at least one I-group")
    G_M = _market_counts(N_I_M, H, float(H.mean()), H_M, n)
    return G_M, int(G_M.max())


@nb.njit(cache=True)
def _market_counts(N_I_M, H, H_bar, H_M, n):
    G_M = np.empty(H.size, dtype=np.int64)
    for j in range(H.size):
        N_M_j = H_bar * N_I_M / H[j]
        D_M = n * H_M / N_M_j
        g = _round_half_away(1.0 / D_M)
        G_M[j] = 1 if g < 1.0 else nb.int64(g)
    return G_M


@nb.njit(cache=True)
def _group_counts(N_i, rprime, sector_of, n_sec, H, H_M, H_bar):
    n = N_i.size
    G_I = np.empty(n, dtype=np.int64)
    N_I_j = np.zeros(n_sec, dtype=np.int64)
    for i in range(n):
        a = abs(rprime[i])
        if a < 1.0:
            a = 1.0
        G_I[i] = _clamp_count(N_i[i] / a, N_i[i])
        N_I_j[sector_of[i]] += G_I[i]
    N_I_M = N_I_j.sum()
    G_S = np.empty(n_sec, dtype=np.int64)
    for j in range(n_sec):
        D_S = n * (H[j] - H_M) / N_I_j[j]
        G_S[j] = _clamp_count(1.0 / D_S, N_I_j[j])
    G_M = _market_counts(N_I_M, H, H_bar, H_M, n)
    return G_I, N_I_j, N_I_M, G_S, G_M


# --------------------------------------------------------------------------
# dispersion-preferring assignment
# --------------------------------------------------------------------------

@nb.njit(cache=True)
def _disperse(n_members, n_targets, key, out, out_start):
    """Spread ``n_members`` of one origin over ``n_targets`` targets.

    A uniformly random permutation of the targets is dealt round-robin:
    member k goes to ``perm[k % n_targets]``.  With no more members than
    targets every member gets its own target (only the first n_members
    entries of the permutation are drawn); otherwise target loads differ by
    at most one.
    """
    m = n_targets
    draws = n_members if n_members < m else m
    perm = np.arange(m)
    for c in range(draws):
        j = c + rng.randbelow(key, c, m - c)
        tmp = perm[c]
        perm[c] = perm[j]
        perm[j] = tmp
    for k in range(n_members):
        out[out_start + k] = perm[k % m]


@nb.njit(cache=True)
def _join_uniform(n_members, n_targets, key, out, out_start):
    """Every member picks a target independently and uniformly."""
    for k in range(n_members):
        out[out_start + k] = rng.randbelow(key, k, n_targets)


@nb.njit(cache=True)
def _assign(n_members, n_targets, key, out, out_start, disperse):
    if disperse:
        _disperse(n_members, n_targets, key, out, out_start)
    else:
        _join_uniform(n_members, n_targets, key, out, out_start)


def assign_with_dispersion(origin_counts, target_count: int, seed: int = 0,
                           day: int = 0, kind: int = rng.KIND_STOCK) -> list[np.ndarray]:
    """Targets for the members of each origin; origin o uses substream o."""
    if target_count < 1:
        raise ValueError("target_count must be >= 1")
    key_seed = rng.seed_to_uint64(seed)
    result = []
    for o, c in enumerate(origin_counts):
        out = np.empty(int(c), dtype=np.int64)
        key = np.uint64(rng.stream_key(key_seed, day, kind, o))
        _disperse(int(c), int(target_count), key, out, 0)
        result.append(out)
    return result


# --------------------------------------------------------------------------
# one day
# --------------------------------------------------------------------------

@nb.njit(cache=True)
def _sector_to_market(seed, day, G_S, G_M, disperse):
    n_sec = G_S.size
    s_offset = np.zeros(n_sec + 1, dtype=np.int64)
    for j in range(n_sec):
        s_offset[j + 1] = s_offset[j] + G_S[j]
    s_to_m = np.empty(s_offset[n_sec], dtype=np.int64)
    for j in range(n_sec):
        key = rng.stream_key(seed, day, rng.KIND_SECTOR, j)
        _assign(G_S[j], G_M[j], key, s_to_m, s_offset[j], disperse)
    return s_offset, s_to_m


@nb.njit(cache=True)
def _decisions(seed, day, count, P):
    key = rng.stream_key(seed, day, rng.KIND_DECISION, 0)
    dec = np.empty(count, dtype=np.int64)
    for g in range(count):
        u = rng.uniform(key, g)
        if u < P:
            dec[g] = 1
        elif u < 2.0 * P:
            dec[g] = -1
        else:
            dec[g] = 0
    return dec


@nb.njit(cache=True, parallel=True)
def _stock_returns(seed, day, N_i, G_I, sector_of, G_S, s_offset, s_to_m, dec, i_offset, i_to_s,
                   disperse):
    n = N_i.size
    R = np.empty(n, dtype=np.int64)
    for i in nb.prange(n):
        g = G_I[i]
        j = sector_of[i]
        key = rng.stream_key(seed, day, rng.KIND_STOCK, i)
        _assign(g, G_S[j], key, i_to_s, i_offset[i], disperse)
        q = N_i[i] // g
        extra = N_i[i] - q * g
        total = 0
        for k in range(g):
            size = q + 1 if k < extra else q
            total += size * dec[s_to_m[s_offset[j] + i_to_s[i_offset[i] + k]]]
        R[i] = total
    return R


@nb.njit(cache=True)
def _rprime(hist, pos, lag_w):
    """Weighted average return from a ring buffer whose newest column is ``pos``."""
    n, L = hist.shape
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for m in range(L):
            c = pos - m
            if c < 0:
                c += L
            acc += lag_w[m] * hist[i, c]
        out[i] = acc
    return out


@nb.njit(cache=True)
def _day(seed, day, N_i, rprime, sector_of, n_sec, H, H_M, H_bar, P, disp_stock, disp_sector):
    G_I, N_I_j, N_I_M, G_S, G_M = _group_counts(N_i, rprime, sector_of, n_sec, H, H_M, H_bar)
    s_offset, s_to_m = _sector_to_market(seed, day, G_S, G_M, disp_sector)
    dec = _decisions(seed, day, G_M.max(), P)
    i_offset = np.zeros(N_i.size + 1, dtype=np.int64)
    for i in range(N_i.size):
        i_offset[i + 1] = i_offset[i] + G_I[i]
    i_to_s = np.empty(N_I_M, dtype=np.int64)
    R = _stock_returns(seed, day, N_i, G_I, sector_of, G_S, s_offset, s_to_m, dec, i_offset, i_to_s,
                       disp_stock)
    return R, G_I, N_I_j, N_I_M, G_S, G_M, s_offset, s_to_m, dec, i_offset, i_to_s


@nb.njit(cache=True)
def _run(seed, n_days, burn_in, N_i, sector_of, n_sec, H, H_M, H_bar, P, lag_w,
         disp_stock, disp_sector):
    n = N_i.size
    L = lag_w.size
    hist = np.zeros((n, L), dtype=np.int64)
    pos = L - 1
    out = np.empty((n_days - burn_in, n), dtype=np.int64)
    for day in range(n_days):
        rp = _rprime(hist, pos, lag_w)
        R = _day(seed, day, N_i, rp, sector_of, n_sec, H, H_M, H_bar, P,
                 disp_stock, disp_sector)[0]
        pos += 1
        if pos == L:
            pos = 0
        for i in range(n):
            hist[i, pos] = R[i]
        if day >= burn_in:
            out[day - burn_in] = R
    return out


DISPERSION_POLICIES = ("market", "both", "none")


def dispersion_flags(policy: str) -> tuple[bool, bool]:
    """(I->S dispersion, S->M dispersion) for a policy name.

    ``market``: I-groups join S-groups uniformly, S-groups of one sector
    are spread over distinct M-groups.  ``both`` applies the spreading rule
    at both levels, ``none`` at neither.
    """
    if policy not in DISPERSION_POLICIES:
        raise ValueError(f"dispersion must be one of {DISPERSION_POLICIES}, got {policy!r}")
    return policy == "both", policy in ("market", "both")


def _engine_args(params: ModelParams, dispersion: str):
    return (params.sector_of.astype(np.int64), params.n_sec,
            np.asarray(params.co.H, dtype=float), float(params.co.H_M),
            float(params.co.H_bar), float(params.P), *dispersion_flags(dispersion))


def rprime_from_history(history: np.ndarray, params: ModelParams) -> np.ndarray:
    """R' per stock from an n x h history, most recent return in the last column."""
    h = np.asarray(history, dtype=float)
    if h.ndim == 1:
        h = h[:, None]
    h = h[:, -params.L:][:, ::-1]
    return h @ params.weights.lag_weights[: h.shape[1]]


def step_day(history: np.ndarray, params: ModelParams, N_i: np.ndarray, seed: int,
             day: int, dispersion: str = "market") -> np.ndarray:
    """Integer returns of every stock for one day.

    Missing older returns in ``history`` count as zero.
    """
    rp = rprime_from_history(history, params)
    return _day(rng.seed_to_uint64(seed), day, np.asarray(N_i, dtype=np.int64), rp,
                *_engine_args(params, dispersion))[0]


def day_state(history: np.ndarray, params: ModelParams, population: AgentPopulation,
              seed: int, day: int, dispersion: str = "market",
              with_agents: bool = True) -> DayState:
    """Recompute one day and return the whole group hierarchy."""
    rp = rprime_from_history(history, params)
    N_i = population.N_i
    (R, G_I, N_I_j, N_I_M, G_S, G_M, s_offset, s_to_m, dec, i_offset,
     i_to_s) = _day(rng.seed_to_uint64(seed), day, N_i, rp, *_engine_args(params, dispersion))
    i_stock = np.repeat(np.arange(params.n), G_I)
    i_size = np.empty(int(N_I_M), dtype=np.int64)
    for i in range(params.n):
        q, extra = divmod(int(N_i[i]), int(G_I[i]))
        i_size[i_offset[i]:i_offset[i + 1]] = q
        i_size[i_offset[i]:i_offset[i] + extra] = q + 1
    agent_group = None
    if with_agents:
        # random permutation of each stock's agents cut into consecutive blocks
        agent_group = np.empty(population.N, dtype=np.int64)
        for i in range(params.n):
            agents = np.flatnonzero(population.stock_of == i)
            u = rng.uniforms(seed, day, rng.KIND_AGENT, i, agents.size)
            shuffled = agents[np.argsort(u, kind="stable")]
            agent_group[shuffled] = np.repeat(np.arange(i_offset[i], i_offset[i + 1]),
                                              i_size[i_offset[i]:i_offset[i + 1]])
    return DayState(
        t=day, rprime=rp, D_I=1.0 / G_I, G_I=G_I, N_I_j=N_I_j, N_I_M=int(N_I_M),
        G_S=G_S, G_M=G_M, G_M_total=int(G_M.max()), i_offset=i_offset, i_size=i_size,
        i_stock=i_stock, i_to_s=i_to_s, s_offset=s_offset, s_to_m=s_to_m,
        decisions=dec, returns=R, agent_group=agent_group,
    )


# --------------------------------------------------------------------------
# full run
# --------------------------------------------------------------------------

def params_digest(params: ModelParams) -> str:
    blob = json.dumps(params.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def set_threads(threads: int | None) -> int:
    if threads is not None:
        nb.set_num_threads(max(1, min(int(threads), nb.config.NUMBA_NUM_THREADS)))
    return nb.get_num_threads()


def run_simulation(params: ModelParams, seed: int, population: AgentPopulation | None = None,
                   mode: str = "random", dispersion: str = "market",
                   threads: int | None = None) -> SimOutput:
    """Simulate ``burn_in + T_out`` days and keep the last ``T_out``."""
    if population is None:
        population = init_population(params, seed, mode)
    n_threads = set_threads(threads)
    t0 = time.perf_counter()
    R = _run(rng.seed_to_uint64(seed), params.burn_in + params.T_out, params.burn_in,
             population.N_i, *_engine_args(params, dispersion)[:6],
             params.weights.lag_weights, *dispersion_flags(dispersion))
    wall = time.perf_counter() - t0
    tickers = tuple(f"S{i:03d}" for i in range(params.n))
    names = tuple(f"sector{j + 1}" for j in range(params.n_sec))
    panel = ReturnPanel(tickers, params.sector_of, R, SIMULATED_COUNT, names)
    manifest = {
        "seed": int(seed),
        "params_digest": params_digest(params),
        "population_mode": mode,
        "dispersion": dispersion,
        "threads": n_threads,
        "wall_time_seconds": round(wall, 3),
        "version": __version__,
    }
    return SimOutput(panel=panel, manifest=manifest)
