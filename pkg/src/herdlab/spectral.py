"""Observables of a return panel: volatility autocorrelation and correlation spectrum."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba as nb
import numpy as np

from herdlab.data import NormalizedPanel

MAX_SWEEPS = 100
OFF_TOL = 1e-12


class ConvergenceError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CorrelationMatrix:
    C: np.ndarray

    @property
    def n(self) -> int:
        return self.C.shape[0]


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues in descending order; ``vectors[:, k]`` belongs to ``values[k]``."""

    values: np.ndarray
    vectors: np.ndarray
    sweeps: int = 0


@dataclass(frozen=True)
class SectorScores:
    scores: np.ndarray
    top_sector: int
    ratio: float


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    top: tuple[float, ...]

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def mass(self) -> float:
        return float(np.sum(self.density * np.diff(self.edges)))


@dataclass
class SpectralReport:
    spectrum: Spectrum
    sector_of: np.ndarray
    sector_scores: list[SectorScores]
    histogram: Histogram
    A: np.ndarray
    tickers: tuple[str, ...] = ()
    sector_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def to_dict(self, n_vectors: int = 3) -> dict:
        v = self.spectrum.values
        return {
            "eigenvalues": v.tolist(),
            "top_vectors": [
                {"lambda": float(v[k]), "components": self.spectrum.vectors[:, k].tolist()}
                for k in range(min(n_vectors, v.size))
            ],
            "sector_scores": [
                {"index": k, "scores": s.scores.tolist(), "top_sector": s.top_sector,
                 "ratio": s.ratio}
                for k, s in enumerate(self.sector_scores)
            ],
            "histogram": {
                "edges": self.histogram.edges.tolist(),
                "density": self.histogram.density.tolist(),
                "top": list(self.histogram.top),
            },
            "A": self.A.tolist(),
            "meta": self.meta,
        }

    def write(self, out_dir: str | Path) -> list[Path]:
        """report.json plus plot-ready A.csv, eigvec_<k>.csv and eighist.csv."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        written = [out / "report.json"]
        written[0].write_text(json.dumps(self.to_dict(), indent=1) + "\n")

        path = out / "A.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lag", "value"])
            for lag, a in enumerate(self.A):
                w.writerow([lag, repr(float(a))])
        written.append(path)

        tickers = self.tickers or tuple(str(i) for i in range(self.sector_of.size))
        for k in range(min(3, self.spectrum.values.size)):
            path = out / f"eigvec_{k}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["stock", "abs_u", "sector"])
                for t, u, j in zip(tickers, np.abs(self.spectrum.vectors[:, k]), self.sector_of):
                    label = self.sector_names[j] if self.sector_names else int(j)
                    w.writerow([t, repr(float(u)), label])
            written.append(path)

        path = out / "eighist.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_center", "density"])
            for c, d in zip(self.histogram.centers, self.histogram.density):
                w.writerow([repr(float(c)), repr(float(d))])
        written.append(path)
        return written


# --------------------------------------------------------------------------
# volatility autocorrelation
# --------------------------------------------------------------------------

def volatility_autocorrelation(panel: NormalizedPanel, max_lag: int) -> np.ndarray:
    """Stock-averaged autocorrelation of |r| for lags 0..max_lag.

    Lag t averages the T - t overlapping products; the mean and variance of
    |r| come from the full series.
    """
    a = np.abs(np.asarray(panel.r, dtype=float))
    T = a.shape[0]
    if not 0 <= max_lag < T:
        raise ValueError(f"max_lag must be in [0, {T}), got {max_lag}")
    mean = a.mean(axis=0)
    A0 = (a * a).mean(axis=0) - mean ** 2
    bad = np.flatnonzero(A0 <= 0)
    if bad.size:
        name = panel.tickers[bad[0]] if panel.tickers else str(bad[0])
        raise ValueError(f"stock {name!r} has constant |r|; autocorrelation undefined")
    out = np.empty(max_lag + 1)
    for t in range(max_lag + 1):
        per_stock = ((a[: T - t] * a[t:]).mean(axis=0) - mean ** 2) / A0
        out[t] = per_stock.mean()
    return out


# --------------------------------------------------------------------------
# correlation matrix and its spectrum
# --------------------------------------------------------------------------

def cross_correlation(panel: NormalizedPanel) -> CorrelationMatrix:
    r = np.asarray(panel.r, dtype=float)
    if r.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    C = r.T @ r / r.shape[0]
    C = 0.5 * (C + C.T)
    return CorrelationMatrix(C)


@nb.njit(cache=True)
def _jacobi(a, tol, max_sweeps):
    """Cyclic Jacobi rotations; returns (diag, V, sweeps, off_norm)."""
    n = a.shape[0]
    a = a.copy()
    v = np.eye(n)
    scale = 0.0
    for i in range(n):
        for j in range(n):
            scale += a[i, j] * a[i, j]
    scale = max(np.sqrt(scale), 1.0)
    sweeps = 0
    off = 0.0
    while True:
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += a[p, q] * a[p, q]
        off = np.sqrt(2.0 * off)
        if off <= tol * scale or sweeps >= max_sweeps:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    d = np.empty(n)
    for i in range(n):
        d[i] = a[i, i]
    return d, v, sweeps, off


def eigendecompose(C, tol: float = OFF_TOL, max_sweeps: int = MAX_SWEEPS) -> Spectrum:
    """Full symmetric eigen-decomposition by cyclic Jacobi rotations.

    Iterates until the off-diagonal Frobenius norm is at most
    ``tol * max(1, ||C||_F)``.  Eigenvectors are signed so their components
    sum to a non-negative value.
    """
    A = np.asarray(C.C if isinstance(C, CorrelationMatrix) else C, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.array_equal(A, A.T):
        if not np.allclose(A, A.T, rtol=0, atol=1e-12):
            raise ValueError("matrix is not symmetric")
        A = 0.5 * (A + A.T)
    d, V, sweeps, off = _jacobi(np.ascontiguousarray(A), tol, max_sweeps)
    if off > tol * max(np.linalg.norm(A), 1.0):
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps (off={off:.3g})")
    order = np.argsort(-d, kind="stable")
    d, V = d[order], V[:, order]
    flip = V.sum(axis=0) < 0
    V[:, flip] *= -1.0
    return Spectrum(values=d, vectors=V, sweeps=int(sweeps))


def sector_dominance(spectrum: Spectrum, sector_of: Sequence[int], k: int) -> SectorScores:
    """Mean |u_i| per sector for eigenvector k, the top sector and its lead.

    ``ratio`` is the top score over the mean of the remaining sectors.
    """
    sector_of = np.asarray(sector_of, dtype=int)
    if not 0 <= k < spectrum.values.size:
        raise ValueError(f"eigen index {k} out of range")
    u = np.abs(spectrum.vectors[:, k])
    n_sec = int(sector_of.max()) + 1
    scores = np.array([u[sector_of == j].mean() for j in range(n_sec)])
    top = int(np.argmax(scores))
    rest = np.delete(scores, top)
    if rest.size == 0:
        ratio = 1.0
    else:
        ratio = float(scores[top] / rest.mean()) if rest.mean() > 0 else float("inf")
    return SectorScores(scores=scores, top_sector=top, ratio=ratio)


def eigenvalue_histogram(spectrum: Spectrum, bins: int = 50, upper: float | None = None) -> Histogram:
    """Density histogram of all eigenvalues over [min(0, lambda_min), 1.05 * lambda_0]."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    v = spectrum.values
    hi = 1.05 * v[0] if upper is None else float(upper)
    lo = min(0.0, float(v.min()))
    hi = max(hi, float(v.max()))
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    density = counts / (v.size * np.diff(edges))
    return Histogram(edges=edges, density=density, top=tuple(float(x) for x in v[:3]))


def analyze(panel: NormalizedPanel, max_lag: int = 100, bins: int = 50,
            n_vectors: int = 3) -> SpectralReport:
    """Everything the report needs, from one normalized panel."""
    max_lag = min(max_lag, panel.T - 1)
    spectrum = eigendecompose(cross_correlation(panel))
    scores = [sector_dominance(spectrum, panel.sector_of, k)
              for k in range(min(n_vectors, panel.n))]
    return SpectralReport(
        spectrum=spectrum,
        sector_of=np.asarray(panel.sector_of),
        sector_scores=scores,
        histogram=eigenvalue_histogram(spectrum, bins),
        A=volatility_autocorrelation(panel, max_lag),
        tickers=tuple(panel.tickers),
        sector_names=tuple(panel.sector_names),
        meta={"T": panel.T, "n": panel.n, "max_lag": max_lag, "bins": bins,
              "jacobi_sweeps": spectrum.sweeps},
    )
