"""Counter-based random numbers for the herding engine.

Every draw is a pure function of ``(seed, day, kind, origin, counter)``,
hashed through the SplitMix64 finalizer.  There is no mutable generator
state, so draws made for one stock never depend on the order in which
other stocks are processed, and a run is identical for any thread count.

Stream kinds
------------
``KIND_STOCK``
    I-group -> S-group targets for one stock (origin = stock index).
``KIND_SECTOR``
    S-group -> M-group targets for one sector (origin = sector index).
``KIND_DECISION``
    one buy/sell/hold draw per M-group (origin = 0).
``KIND_AGENT``
    agent -> I-group permutation, only materialised for inspection.
"""

from __future__ import annotations

import numba as nb
import numpy as np

KIND_STOCK = 1
KIND_SECTOR = 2
KIND_DECISION = 3
KIND_AGENT = 4

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


@nb.njit(nb.uint64(nb.uint64), cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(nb.uint64(nb.uint64, nb.int64, nb.int64, nb.int64), cache=True)
def stream_key(seed, day, kind, origin):
    """Derive the key of one substream."""
    k = mix64(seed + _GOLDEN)
    k = mix64(k ^ (nb.uint64(day) * _GOLDEN))
    k = mix64(k ^ (nb.uint64(kind) * _M1))
    k = mix64(k ^ (nb.uint64(origin) * _M2))
    return k


@nb.njit(nb.float64(nb.uint64, nb.int64), cache=True, inline="always")
def uniform(key, counter):
    """The ``counter``-th uniform double in [0, 1) of the stream ``key``."""
    x = mix64(key + nb.uint64(counter + 1) * _GOLDEN)
    return nb.float64(x >> _S11) * _INV53


@nb.njit(nb.int64(nb.uint64, nb.int64, nb.int64), cache=True, inline="always")
def randbelow(key, counter, m):
    """Integer in [0, m).  Bias is below m / 2**53, irrelevant for m < 2**31."""
    j = nb.int64(uniform(key, counter) * m)
    if j >= m:
        j = m - 1
    return j


def seed_to_uint64(seed: int) -> np.uint64:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.uint64(seed & 0xFFFFFFFFFFFFFFFF)


def uniforms(seed: int, day: int, kind: int, origin: int, count: int) -> np.ndarray:
    """Vector of ``count`` uniforms from one substream (testing/inspection)."""
    return _uniforms(seed_to_uint64(seed), day, kind, origin, count)


@nb.njit(cache=True)
def _uniforms(seed, day, kind, origin, count):
    key = stream_key(seed, day, kind, origin)
    out = np.empty(count)
    for c in range(count):
        out[c] = uniform(key, c)
    return out
