import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hofilter import streams
from hofilter.errors import RejectedInput
from hofilter.paths import brownian_increments, sample_brownian, uniform_grid
from hofilter.taylor import (TaylorBlock, build_integral_table, enumerate_indices, eval_eta,
                             eval_kappa, iterated_integrals, mi_concat, mi_left_trunc,
                             mi_length, mi_right_trunc, mi_zero_count)


def test_multi_index_operations():
    a = (1, 0, 2)
    assert mi_length(a) == 3 and mi_zero_count(a) == 1
    assert mi_right_trunc(a) == (1, 0) and mi_left_trunc(a) == (0, 2)
    assert mi_concat((1,), (0, 0)) == (1, 0, 0)
    assert mi_right_trunc(()) == () and mi_length(()) == 0


def test_enumeration_examples():
    assert enumerate_indices(0, 1, 1) == [(), (0,), (1,)]
    assert enumerate_indices(2, 2, 1) == [(0, 0), (0, 1), (1, 0), (1, 1)]
    with pytest.raises(RejectedInput):
        enumerate_indices(3, 2, 1)


@given(st.integers(0, 3), st.integers(0, 3), st.integers(1, 3))
def test_enumeration_counts(n, extra, d_V):
    m = n + extra
    idx = enumerate_indices(n, m, d_V)
    assert len(idx) == sum((d_V + 1) ** k for k in range(n, m + 1))
    assert len(set(idx)) == len(idx)
    assert all(n <= len(a) <= m for a in idx)


def test_table_rejects_unclosed_index_sets():
    with pytest.raises(RejectedInput):
        iterated_integrals(np.zeros((4, 1)), 0.1, [(), (1, 1)])


@given(st.integers(1, 32), st.integers(0, 1000))
def test_low_order_integrals_are_exact(k, seed):
    g = uniform_grid(0.4, 2, k)
    bm = sample_brownian(g, seed, 0)
    tab = build_integral_table(bm, 1, 3)
    s = g.steps(1)
    np.testing.assert_allclose(tab.column((0,)), tab.times - tab.times[0], atol=1e-15)
    V = np.concatenate([[0.0], np.cumsum(bm.V_incr[s, 0])])
    np.testing.assert_allclose(tab.column((1,)), V, atol=1e-14)
    assert np.all(tab.column(()) == 1.0)
    # product rule on the grid: I_(0,1) + I_(1,0) = I_0 I_1 up to the left-point defect
    defect = np.concatenate([[0.0], np.cumsum(g.dt[s] * bm.V_incr[s, 0])])
    np.testing.assert_allclose(tab.column((0, 1)) + tab.column((1, 0)),
                               tab.column((0,)) * tab.column((1,)) - defect, atol=1e-13)


def test_double_integral_converges_pathwise():
    delta = 0.25
    N = 4000
    errs, hs = [], []
    for k in (8, 16, 32, 64, 128):
        g = uniform_grid(delta, 1, k)
        dV = brownian_increments(uniform_grid(delta, 1, 128), 9, range(N), 1, streams.LANE_V)
        dV = dV.reshape(N, k, 128 // k, 1).sum(2)
        vals, _ = iterated_integrals(dV, g.dt, [(), (1,), (1, 1)])
        dVt = dV[:, :, 0].sum(1)
        exact = (dVt ** 2 - delta) / 2
        errs.append(np.sqrt(np.mean((vals[:, -1, 2] - exact) ** 2)))
        hs.append(delta / k)
    assert np.polyfit(np.log(hs), np.log(errs), 1)[0] >= 0.4


@pytest.mark.parametrize("alpha", [(), (0,), (1,), (0, 0), (0, 1), (1, 0), (1, 1)])
def test_moments_match_oracle(alpha):
    from hofilter.oracle import iterated_moment_oracle
    delta, N, k = 0.5, 10_000, 64
    g = uniform_grid(delta, 1, k)
    dV = brownian_increments(g, 21, range(N), 1, streams.LANE_V)
    idx = enumerate_indices(0, 2, 1)
    vals, _ = iterated_integrals(dV, g.dt, idx)
    x = vals[:, -1, idx.index(alpha)]
    m1, m2 = iterated_moment_oracle(alpha, delta)
    # the (0,0) left-point sum is deterministic; allow its O(delta/k) bias
    bias = delta * delta / (2 * k) + 1e-12
    se1 = x.std(ddof=1) / np.sqrt(N)
    se2 = (x ** 2).std(ddof=1) / np.sqrt(N)
    assert abs(x.mean() - m1) <= 3 * se1 + bias
    assert abs((x ** 2).mean() - m2) <= 3 * se2 + 2 * bias * delta


def test_eta_and_kappa_closed_form_linear(lg_scalar):
    # h = x, L^0 h = -x, L^1 h = 1
    g = uniform_grid(0.5, 4, 16)
    bm = sample_brownian(g, 3, 0)
    tab = build_integral_table(bm, 2, 2)
    x = np.array([0.7])
    s = 16
    eta = eval_eta(tab, lg_scalar.oracle, x, 1, 2, s)
    expected = tab.column((0,))[s] * (-0.7) + tab.column((1,))[s] * 1.0
    np.testing.assert_allclose(eta, [expected], rtol=1e-12)
    np.testing.assert_allclose(eval_eta(tab, lg_scalar.oracle, x, 0, 1, s), [0.7])
    kap = eval_kappa(tab, lg_scalar.oracle, x, 0, 1)
    assert kap == pytest.approx(-0.5 * 0.49 * 0.125)
    with pytest.raises(RejectedInput):
        eval_eta(tab, lg_scalar.oracle, x, 2, 2, s)


def test_eta_end_minus_sensor_has_order_delta_mean(bounded):
    N = 4000
    gaps, deltas = [], []
    for n in (2, 4, 8, 16):
        g = uniform_grid(0.5, n, 8)
        dV = brownian_increments(g, 8, range(N), 1, streams.LANE_V)
        from hofilter.paths import euler_maruyama
        X = euler_maruyama(bounded, np.ones(1), dV, g.dt)
        block = TaylorBlock(bounded.oracle, g, X, dV, 2)
        eta_end = block.eta_path(0, 2)[:, 0, -1, 0]
        h_end = bounded.sensor(X[:, 8])[:, 0]
        gaps.append(abs(np.mean(eta_end - h_end)))
        deltas.append(0.5 / n)
    assert np.polyfit(np.log(deltas), np.log(gaps), 1)[0] >= 0.7


@pytest.mark.parametrize("m", [1, 2, 3])
def test_block_matches_per_table(lg_2d, m):
    g = uniform_grid(0.3, 3, 8)
    N = 5
    from hofilter.likelihood import bank_chunk
    X, dV = bank_chunk(lg_2d, g, 1, range(N))
    block = TaylorBlock(lg_2d.oracle, g, X, dV, m)
    kap = block.kappa(0, m)
    eta = block.eta_path(0, m)
    from hofilter.paths import BrownianRecord
    for i in range(N):
        bm = BrownianRecord(g, dV[i], np.zeros((g.n_steps, 2)))
        for j in range(3):
            tab = build_integral_table(bm, j, m)
            x = X[i, 8 * j]
            assert kap[i, j] == pytest.approx(eval_kappa(tab, lg_2d.oracle, x, 0, m), rel=1e-12)
            np.testing.assert_allclose(eta[i, j, 5], eval_eta(tab, lg_2d.oracle, x, 0, m, 5),
                                       rtol=1e-12, atol=1e-14)
    with pytest.raises(RejectedInput):
        block.kappa(0, m + 1)


def test_table_subinterval_bounds(bounded):
    bm = sample_brownian(uniform_grid(0.5, 2, 4), 0, 0)
    with pytest.raises(RejectedInput):
        build_integral_table(bm, 2, 2)
    with pytest.raises(RejectedInput):
        build_integral_table(bm, 0, 0)
