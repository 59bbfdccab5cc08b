"""Shared structural checks for simulated days."""

import numpy as np


def check_day_state(st_, p, pop):
    """Assert every structural invariant of one simulated day."""
    n = p.n
    assert np.all((1 <= st_.G_I) & (st_.G_I <= pop.N_i))
    assert np.all((1 <= st_.G_S) & (st_.G_S <= st_.N_I_j))
    assert np.all(st_.G_M >= 1) and st_.G_M_total == st_.G_M.max()
    np.testing.assert_allclose(st_.D_I, 1 / st_.G_I)
    assert st_.N_I_M == st_.G_I.sum() == st_.N_I_j.sum()
    for j in range(p.n_sec):
        assert st_.N_I_j[j] == st_.G_I[p.sector_of == j].sum()
    # every stock's I-group sizes add up to N_i and differ by at most one
    for i in range(n):
        sizes = st_.i_size[st_.i_offset[i]:st_.i_offset[i + 1]]
        assert sizes.sum() == pop.N_i[i] and sizes.max() - sizes.min() <= 1
    # I -> S stays inside the sector, S -> M respects the sector's admissible range
    for i in range(n):
        j = p.sector_of[i]
        s_local = st_.i_to_s[st_.i_offset[i]:st_.i_offset[i + 1]]
        assert np.all((0 <= s_local) & (s_local < st_.G_S[j]))
    for j in range(p.n_sec):
        m = st_.s_to_m[st_.s_offset[j]:st_.s_offset[j + 1]]
        assert m.size == st_.G_S[j]
        assert np.all((0 <= m) & (m < st_.G_M[j]))
    assert st_.decisions.size == st_.G_M_total
    assert set(np.unique(st_.decisions)) <= {-1, 0, 1}
    # every agent in one I-group of its own stock; recompute returns agent by agent
    ag = st_.agent_group
    assert np.all(st_.i_stock[ag] == pop.stock_of)
    np.testing.assert_array_equal(np.bincount(ag, minlength=st_.N_I_M), st_.i_size)
    sec = p.sector_of[st_.i_stock]
    phi_group = st_.decisions[st_.s_to_m[st_.s_offset[sec] + st_.i_to_s]]
    R = np.bincount(pop.stock_of, weights=phi_group[ag], minlength=n).astype(np.int64)
    np.testing.assert_array_equal(R, st_.returns)
    assert np.all(np.abs(st_.returns) <= pop.N_i)
