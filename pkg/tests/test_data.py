import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from herdlab.data import (
    LoadError, ReturnPanel, load_price_panel, log_returns, normalize,
    normalized_from_array, read_returns, write_returns, write_prices, write_sectors,
)
from herdlab.fixtures import make_fixture
from conftest import write


@pytest.fixture
def tiny(tmp_path):
    prices = write(tmp_path / "p.csv", "date,AAA,BBB\n2020-01-02,10,20\n2020-01-03,11,19\n")
    sectors = write(tmp_path / "s.csv", "ticker,sector\nAAA,A\nBBB,A\n")
    return prices, sectors


def test_load_minimal(tiny):
    panel = load_price_panel(*tiny)
    assert (panel.T, panel.n, panel.n_sec) == (2, 2, 1)
    np.testing.assert_array_equal(panel.prices, [[10, 20], [11, 19]])
    assert panel.tickers == ("AAA", "BBB")


def test_blank_cell_names_date_and_ticker(tmp_path, tiny):
    _, sectors = tiny
    prices = write(tmp_path / "p2.csv", "date,AAA,BBB\n2020-01-02,10,\n2020-01-03,11,19\n")
    with pytest.raises(LoadError, match=r"2020-01-02, BBB"):
        load_price_panel(prices, sectors)


def test_intersect_dates_drops_incomplete_rows(tmp_path, tiny):
    _, sectors = tiny
    prices = write(tmp_path / "p2.csv",
                   "date,AAA,BBB\n2020-01-02,10,\n2020-01-03,11,19\n2020-01-06,12,18\n")
    panel = load_price_panel(prices, sectors, intersect_dates=True)
    assert panel.T == 2


@pytest.mark.parametrize("body, sectors, match", [
    ("date,AAA,BBB\n2020-01-02,10,-1\n", "ticker,sector\nAAA,A\nBBB,A\n", "non-positive"),
    ("date,AAA,BBB\n2020-01-02,10,0\n", "ticker,sector\nAAA,A\nBBB,A\n", "non-positive"),
    ("date,AAA,BBB\n2020-13-02,10,2\n", "ticker,sector\nAAA,A\nBBB,A\n", "unparseable date"),
    ("date,AAA,BBB\n2020-01-02,10,2\n", "ticker,sector\nAAA,A\nBBB,A\nCCC,B\n", "unknown ticker"),
    ("date,AAA,BBB\n2020-01-02,10,2\n", "ticker,sector\nAAA,A\n", "has no sector"),
    ("date,AAA,BBB\n2020-01-03,10,2\n2020-01-02,10,2\n", "ticker,sector\nAAA,A\nBBB,A\n",
     "strictly increasing"),
    ("date,AAA,BBB\n2020-01-02,10,x\n", "ticker,sector\nAAA,A\nBBB,A\n", "bad number"),
    ("date,AAA,BBB\n2020-01-02,10,2\n", "ticker,sector\nAAA,A\nBBB,\n", "expected"),
])
def test_load_errors(tmp_path, body, sectors, match):
    p = write(tmp_path / "p.csv", body)
    s = write(tmp_path / "s.csv", sectors)
    with pytest.raises(LoadError, match=match):
        load_price_panel(p, s)


def test_sector_indices_follow_manifest_order(tmp_path):
    p = write(tmp_path / "p.csv", "date,X,Y,Z\n2020-01-02,1,2,3\n2020-01-03,1,2,3\n")
    s = write(tmp_path / "s.csv", "ticker,sector\nZ,util\nX,tech\nY,util\n")
    panel = load_price_panel(p, s)
    assert panel.sector_names == ("util", "tech")
    np.testing.assert_array_equal(panel.sector_of, [1, 0, 0])


def test_full_size_fixture_loads(tmp_path):
    fx = make_fixture("nyse-like", seed=3)
    write_prices(fx, tmp_path / "p.csv")
    write_sectors(fx.tickers, fx.sector_of, fx.sector_names, tmp_path / "s.csv")
    panel = load_price_panel(tmp_path / "p.csv", tmp_path / "s.csv")
    assert (panel.T, panel.n, panel.n_sec) == (4286, 150, 5)
    np.testing.assert_allclose(panel.prices, fx.prices, rtol=1e-15)


def _panel_from_prices(prices):
    from herdlab.data import PricePanel
    import datetime as dt
    prices = np.asarray(prices, dtype=float).reshape(len(prices), -1)
    T, n = prices.shape
    return PricePanel(tuple(dt.date(2020, 1, 1) + dt.timedelta(days=d) for d in range(T)),
                      tuple(f"T{i}" for i in range(n)), prices, np.zeros(n, dtype=int), ("s",))


def test_log_returns_examples():
    assert log_returns(_panel_from_prices([1.0, math.e])).returns[0, 0] == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_array_equal(log_returns(_panel_from_prices([5.0, 5.0, 5.0])).returns, 0.0)
    r = log_returns(_panel_from_prices([100.0, 110.0, 99.0])).returns[:, 0]
    np.testing.assert_allclose(r, [0.0953101798, -0.1053605157], atol=1e-9)
    assert log_returns(_panel_from_prices([100.0, 110.0, 99.0])).kind == "log-empirical"


@given(st.floats(1e-3, 1e3), st.floats(0.5, 2.0), st.integers(2, 60))
def test_geometric_prices_give_constant_returns(y0, g, T):
    prices = y0 * g ** np.arange(T)
    r = log_returns(_panel_from_prices(prices)).returns
    np.testing.assert_allclose(r, math.log(g), atol=1e-12)


def test_normalize_examples():
    z = normalized_from_array(np.array([[-1.0], [1.0]]))
    np.testing.assert_allclose(z.r[:, 0], [-1.0, 1.0], atol=1e-15)
    z = normalized_from_array(np.array([[1.0], [2.0], [3.0]]))
    np.testing.assert_allclose(z.r[:, 0], [-1.224744871391589, 0.0, 1.224744871391589], atol=1e-12)
    assert z.mean[0] == 2.0
    assert z.sigma[0] == pytest.approx(math.sqrt(2 / 3))
    with pytest.raises(ValueError, match="zero variance"):
        normalized_from_array(np.zeros((3, 1)), tickers=["FLAT"])


arrays = st.integers(3, 40).flatmap(
    lambda T: st.lists(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=3, max_size=3),
                       min_size=T, max_size=T))


@settings(max_examples=200)
@given(arrays)
def test_normalize_invariants_and_idempotence(rows):
    R = np.array(rows)
    if np.any(R.std(axis=0) < 1e-6 * (1 + np.abs(R).max(axis=0))):
        return
    z = normalized_from_array(R)
    assert np.all(np.abs(z.r.mean(axis=0)) < 1e-9)
    assert np.all(np.abs(z.r.std(axis=0) - 1) < 1e-9)
    zz = normalized_from_array(z.r)
    assert np.max(np.abs(zz.r - z.r)) <= 1e-12


def test_returns_roundtrip(tmp_path, rng):
    R = rng.standard_normal((30, 4)) * 0.01
    panel = ReturnPanel(("a", "b", "c", "d"), np.array([0, 0, 1, 1]), R)
    write_returns(panel, tmp_path / "r.csv")
    write(tmp_path / "s.csv", "ticker,sector\na,x\nb,x\nc,y\nd,y\n")
    back = read_returns(tmp_path / "r.csv", tmp_path / "s.csv")
    # 15 significant digits at least
    np.testing.assert_allclose(back.returns, R, rtol=1e-15, atol=0)
    np.testing.assert_array_equal(back.sector_of, [0, 0, 1, 1])
    assert (tmp_path / "r.csv").read_text().splitlines()[1].startswith("1,")


def test_integer_returns_written_verbatim(tmp_path):
    panel = ReturnPanel(("a", "b"), np.array([0, 0]), np.array([[3, -4], [0, 12]]), "simulated-count")
    write_returns(panel, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text() == "t,a,b\n1,3,-4\n2,0,12\n"
