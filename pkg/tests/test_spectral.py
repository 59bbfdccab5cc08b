import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from herdlab.data import normalized_from_array
from herdlab.spectral import (
    ConvergenceError, Spectrum, analyze, cross_correlation, eigendecompose,
    eigenvalue_histogram, sector_dominance, volatility_autocorrelation,
)
import oracles


def random_symmetric_rational(g, n):
    M = g.integers(-20, 21, size=(n, n)) / 10
    return np.triu(M) + np.triu(M, 1).T


# --- volatility autocorrelation -----------------------------------------

def test_autocorrelation_lag_zero_is_one(rng):
    panel = normalized_from_array(rng.standard_normal((300, 5)))
    A = volatility_autocorrelation(panel, 20)
    assert A[0] == pytest.approx(1.0, abs=1e-12)
    assert A.shape == (21,)


def test_noise_has_no_volatility_memory():
    panel = normalized_from_array(np.random.default_rng(3).standard_normal((4000, 150)))
    A = volatility_autocorrelation(panel, 100)
    assert np.all(np.abs(A[1:]) < 0.05)


def test_autocorrelation_ignores_signs(rng):
    R = rng.standard_normal((200, 4)) * np.exp(np.cumsum(rng.normal(0, 0.1, 200)))[:, None]
    flips = np.array([1, -1, -1, 1])
    a = volatility_autocorrelation(normalized_from_array(R), 30)
    b = volatility_autocorrelation(normalized_from_array(R * flips), 30)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_autocorrelation_errors(rng):
    panel = normalized_from_array(rng.standard_normal((50, 2)))
    with pytest.raises(ValueError):
        volatility_autocorrelation(panel, 50)
    constant_abs = normalized_from_array(np.column_stack([np.tile([1.0, -1.0], 25),
                                                          rng.standard_normal(50)]),
                                         tickers=["FLAT", "X"])
    with pytest.raises(ValueError, match="FLAT"):
        volatility_autocorrelation(constant_abs, 5)


# --- cross-correlation ----------------------------------------------------

def test_correlation_examples(rng):
    x = rng.standard_normal(100)
    np.testing.assert_allclose(cross_correlation(normalized_from_array(np.column_stack([x, x]))).C,
                               [[1, 1], [1, 1]], atol=1e-12)
    C = cross_correlation(normalized_from_array(np.column_stack([x, -x]))).C
    assert C[0, 1] == pytest.approx(-1, abs=1e-12)


def test_correlation_hand_panel():
    R = np.array([[1.0, 1.0, 2.0], [0.0, -1.0, -1.0], [-1.0, 0.0, -1.0]])
    h = math.sqrt(3) / 2
    expect = [[1, 0.5, h], [0.5, 1, h], [h, h, 1]]
    np.testing.assert_allclose(cross_correlation(normalized_from_array(R)).C, expect, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32), st.integers(2, 12), st.integers(3, 80))
def test_correlation_invariants(seed, n, T):
    g = np.random.default_rng(seed)
    R = g.standard_normal((T, n)) + g.standard_normal((T, 1))
    C = cross_correlation(normalized_from_array(R)).C
    np.testing.assert_allclose(np.diag(C), 1, atol=1e-9)
    assert np.array_equal(C, C.T)
    assert np.all(np.abs(C) <= 1 + 1e-9)
    assert abs(np.trace(C) - n) <= 1e-6
    s = eigendecompose(C)
    assert abs(s.values.sum() - n) <= 1e-6
    assert s.values.min() >= -1e-8


# --- eigen-decomposition ----------------------------------------------------

def test_identity_spectrum():
    s = eigendecompose(np.eye(5))
    np.testing.assert_array_equal(s.values, np.ones(5))


def test_uniform_correlation_spectrum():
    C = np.full((4, 4), 0.4) + 0.6 * np.eye(4)
    s = eigendecompose(C)
    np.testing.assert_allclose(s.values, [2.2, 0.6, 0.6, 0.6], atol=1e-10)
    np.testing.assert_allclose(s.vectors[:, 0], 0.5, atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_matches_characteristic_polynomial(seed):
    M = random_symmetric_rational(np.random.default_rng(seed), 6)
    np.testing.assert_allclose(eigendecompose(M).values, oracles.charpoly_eigenvalues(M.tolist()),
                               atol=1e-8)


def test_oracle_sanity():
    np.testing.assert_allclose(oracles.charpoly_eigenvalues([[2, 1], [1, 2]]), [3, 1], atol=1e-14)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32), st.integers(1, 25))
def test_decomposition_properties(seed, n):
    g = np.random.default_rng(seed)
    M = g.standard_normal((n, n))
    M = M + M.T
    s = eigendecompose(M)
    U, lam = s.vectors, s.values
    assert np.all(np.diff(lam) <= 0)
    assert np.abs(U @ np.diag(lam) @ U.T - M).max() <= 1e-7
    assert np.abs(U.T @ U - np.eye(n)).max() <= 1e-8
    assert np.abs(M @ U - U * lam).max() <= 1e-8
    assert np.all(U.sum(axis=0) >= -1e-12)
    perm = g.permutation(n)
    sp = eigendecompose(M[np.ix_(perm, perm)])
    np.testing.assert_allclose(sp.values, lam, atol=1e-9)
    # compare on a simple top eigenvalue: its eigenvector is unique up to sign
    if n == 1 or lam[0] - lam[1] > 1e-3:
        u, v = U[perm, 0], sp.vectors[:, 0]
        np.testing.assert_allclose(u * np.sign(u @ v), v, atol=1e-7)


def test_eigendecompose_rejects_bad_input():
    with pytest.raises(ValueError):
        eigendecompose(np.ones((2, 3)))
    with pytest.raises(ValueError):
        eigendecompose(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ConvergenceError):
        M = random_symmetric_rational(np.random.default_rng(0), 8)
        eigendecompose(M, max_sweeps=1)


def test_against_numpy_at_full_size():
    g = np.random.default_rng(9)
    R = g.standard_normal((600, 150)) + 0.5 * g.standard_normal((600, 1))
    C = cross_correlation(normalized_from_array(R)).C
    np.testing.assert_allclose(eigendecompose(C).values, np.linalg.eigvalsh(C)[::-1], atol=1e-9)


# --- sector dominance and histogram -----------------------------------------

def test_sector_dominance_examples():
    sector_of = np.repeat([0, 1, 2], 3)
    U = np.zeros((9, 2))
    U[:, 0] = 1 / 3
    U[3:6, 1] = 1 / math.sqrt(3)
    s = Spectrum(values=np.array([2.0, 1.0]), vectors=U)
    flat = sector_dominance(s, sector_of, 0)
    np.testing.assert_allclose(flat.scores, 1 / 3)
    assert flat.ratio == pytest.approx(1.0)
    peaked = sector_dominance(s, sector_of, 1)
    assert peaked.top_sector == 1 and peaked.scores[1] > 0
    assert peaked.scores[0] == peaked.scores[2] == 0
    assert peaked.ratio == math.inf
    with pytest.raises(ValueError):
        sector_dominance(s, sector_of, 2)


def test_identity_histogram_is_one_spike():
    h = eigenvalue_histogram(eigendecompose(np.eye(6)), bins=10)
    assert np.count_nonzero(h.density) == 1
    assert h.edges[0] <= 1 <= h.edges[-1]
    assert h.mass == pytest.approx(1, abs=1e-12)
    assert h.top == (1.0, 1.0, 1.0)


@given(st.integers(1, 200), st.integers(0, 2**32))
@settings(max_examples=50, deadline=None)
def test_histogram_mass_is_one(bins, seed):
    g = np.random.default_rng(seed)
    C = cross_correlation(normalized_from_array(g.standard_normal((40, 12)))).C
    h = eigenvalue_histogram(eigendecompose(C), bins=bins)
    assert abs(h.mass - 1) <= 1e-6
    with pytest.raises(ValueError):
        eigenvalue_histogram(eigendecompose(C), bins=0)


def test_analyze_report_files(tmp_path, rng):
    R = rng.standard_normal((300, 6)) + rng.standard_normal((300, 1))
    panel = normalized_from_array(R, sector_of=[0, 0, 0, 1, 1, 1])
    rep = analyze(panel, max_lag=10, bins=5)
    files = {p.name for p in rep.write(tmp_path)}
    assert files == {"report.json", "A.csv", "eigvec_0.csv", "eigvec_1.csv", "eigvec_2.csv",
                     "eighist.csv"}
    d = json.loads((tmp_path / "report.json").read_text())
    assert {"eigenvalues", "top_vectors", "sector_scores", "histogram", "A"} <= set(d)
    assert len(d["top_vectors"]) == 3 and len(d["A"]) == 11
    lines = (tmp_path / "eigvec_0.csv").read_text().splitlines()
    assert lines[0] == "stock,abs_u,sector" and len(lines) == 7
    assert (tmp_path / "A.csv").read_text().startswith("lag,value\n0,")
