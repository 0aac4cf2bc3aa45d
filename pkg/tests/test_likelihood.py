import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hofilter.errors import CapabilityError, RejectedInput
from hofilter.likelihood import (estimate_filter, filter_log_weights, gamma_bound,
                                 gamma_min_slope, gamma_sup, gamma_trunc, make_functional,
                                 mu_increment, weighted_estimate, xi_bar, xi_increment)
from hofilter.model import with_fd_oracle
from hofilter.paths import simulate_scenario, uniform_grid
from hofilter.taylor import build_integral_table

from conftest import rng


def test_gamma_examples():
    assert gamma_trunc(1, 1.0, 1.0) == 0.5
    assert gamma_trunc(2, 0.5, 0.0) == 0.0
    assert gamma_trunc(1, 1.0, 1e300) == pytest.approx(0.0, abs=1e-200)
    assert gamma_bound(1, 1.0) == 1.0
    for bad in ((0, 1.0), (1.5, 1.0), (1, 0.0), (1, -1.0)):
        with pytest.raises(RejectedInput):
            gamma_trunc(*bad, 1.0)


@given(st.integers(1, 6), st.floats(1e-3, 1), st.floats(-1e3, 1e3))
def test_gamma_bounded_and_odd(q, delta, z):
    g = gamma_trunc(q, delta, z)
    assert abs(g) <= gamma_bound(q, delta) + 1e-12
    assert gamma_trunc(q, delta, -z) == -g


@pytest.mark.parametrize("q", [1, 2, 3, 6])
def test_gamma_sup_and_slopes(q):
    delta = 0.3
    z = np.linspace(0, 3 * delta, 200001)
    g = gamma_trunc(q, delta, z)
    assert np.max(g) == pytest.approx(gamma_sup(q, delta), rel=1e-6)
    assert z[np.argmax(g)] == pytest.approx(gamma_bound(q, delta), rel=1e-4)
    slopes = np.diff(g) / np.diff(z)
    assert slopes.min() == pytest.approx(gamma_min_slope(q), rel=1e-4)
    assert slopes.min() >= (q * (1 - q) - 1) / (2 * q) and slopes.max() <= 1.0


def _scenario(model, n=4, k=16, seed=1):
    g = uniform_grid(0.5, n, k)
    sig, obs, bm = simulate_scenario(model, g, seed, 0)
    tables = [build_integral_table(bm, j, 3) for j in range(n)]
    return g, sig, obs, bm, tables


def test_xi_order_one_is_explicit(bounded):
    g, sig, obs, bm, tables = _scenario(bounded)
    for j in range(4):
        x = sig.X[g.base_index(j)]
        h = bounded.sensor(x)[0]
        dY = obs.Y[g.base_index(j + 1), 0] - obs.Y[g.base_index(j), 0]
        assert xi_increment(tables, bounded.oracle, sig, obs, j, 1) == pytest.approx(
            -0.5 * h * h * 0.125 + h * dY, rel=1e-13)


def test_order_two_adds_the_level_one_terms(lg_scalar):
    g, sig, obs, bm, tables = _scenario(lg_scalar)
    j = 2
    s = g.steps(j)
    x = sig.X[g.base_index(j), 0]
    d1 = xi_increment(tables, lg_scalar.oracle, sig, obs, j, 2) - \
        xi_increment(tables, lg_scalar.oracle, sig, obs, j, 1)
    I0 = tables[j].column((0,))[:-1]
    I1 = tables[j].column((1,))[:-1]
    dY = np.diff(obs.Y[s.start:s.stop + 1, 0])
    dt = g.dt[s]
    # eta^{1,2} = -x I_0 + I_1 ; L^0 x^2 = 1 - 2x^2, L^1 x^2 = 2x
    kappa = -0.5 * np.sum(((1 - 2 * x * x) * I0 + 2 * x * I1) * dt)
    ito = np.sum((-x * I0 + I1) * dY)
    assert d1 == pytest.approx(kappa + ito, rel=1e-10, abs=1e-13)


def test_order_three_splits_into_xi2_and_mu(lg_scalar):
    g, sig, obs, bm, tables = _scenario(lg_scalar)
    with pytest.raises(RejectedInput):
        mu_increment(tables, lg_scalar.oracle, sig, obs, 0, 2)
    for j in range(4):
        xi3 = xi_increment(tables, lg_scalar.oracle, sig, obs, j, 3)
        xi2 = xi_increment(tables, lg_scalar.oracle, sig, obs, j, 2)
        mu = mu_increment(tables, lg_scalar.oracle, sig, obs, j, 3)
        assert xi3 == pytest.approx(xi2 + mu, rel=1e-12, abs=1e-14)


def test_xi_bar_examples():
    xi = np.array([0.1, -0.2, 0.3])
    assert xi_bar(xi, None, np.array([0.1, 0.1, 0.1]), 2) == pytest.approx(0.2)
    mu = np.array([1.0, 0.0, -1.0])
    deltas = np.array([0.5, 0.25, 0.25])
    expected = 0.2 + gamma_trunc(3, 0.5, 1.0) + gamma_trunc(3, 0.25, -1.0)
    assert xi_bar(xi, mu, deltas, 3) == pytest.approx(expected)
    with pytest.raises(RejectedInput):
        xi_bar(xi, mu[:2], deltas, 3)


@given(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4))
def test_xi_bar_truncation_bound(mu):
    deltas = np.full(4, 0.125)
    val = xi_bar(np.zeros(4), np.array(mu), deltas, 4)
    assert abs(val) <= 4 * gamma_bound(4, 0.125) + 1e-12


def test_weighted_estimate_basics():
    r = rng(0)
    lw = r.normal(size=1000)
    v = r.normal(size=1000)
    rho, rho_se, pi, pi_se, ess = weighted_estimate(lw, v)
    w = np.exp(lw)
    assert rho == pytest.approx(np.mean(w * v))
    assert pi == pytest.approx(np.sum(w * v) / np.sum(w))
    assert 1 <= ess <= 1000
    shifted = weighted_estimate(lw + 700, v)
    assert shifted[2] == pytest.approx(pi, rel=1e-12)
    with pytest.raises(RejectedInput):
        weighted_estimate([0.0], [1.0])


@pytest.mark.parametrize("m", [1, 2, 3])
def test_constant_functional_normalises_exactly(bounded, m):
    g = uniform_grid(0.5, 4, 8)
    _, obs, _ = simulate_scenario(bounded, g, 4, 0)
    est = estimate_filter(bounded, obs, 4, m, "one", 500, 1)
    assert est.pi == 1.0 and est.pi_se == 0.0


def test_blind_sensor_gives_prior_mean(blind):
    g = uniform_grid(0.5, 4, 8)
    _, obs, _ = simulate_scenario(blind, g, 4, 0)
    lw, vals = filter_log_weights(blind, obs, 4, 2, "coordinate", 2000, 3)
    assert np.all(lw == 0.0)
    est = estimate_filter(blind, obs, 4, 2, "coordinate", 2000, 3)
    assert est.pi == pytest.approx(vals.mean(), rel=1e-12)


def test_filter_input_errors(bounded):
    g = uniform_grid(0.5, 4, 8)
    _, obs, _ = simulate_scenario(bounded, g, 4, 0)
    with pytest.raises(RejectedInput):
        estimate_filter(bounded, obs, 4, 2, "one", 1, 0)
    with pytest.raises(CapabilityError):
        estimate_filter(bounded, obs, 4, 6, "one", 10, 0)
    with pytest.raises(RejectedInput):
        estimate_filter(bounded, obs, 3, 1, "one", 10, 0)
    with pytest.raises(RejectedInput):
        make_functional("median")


def test_fd_oracle_matches_closed_form_filter(lg_scalar):
    g = uniform_grid(0.5, 4, 8)
    _, obs, _ = simulate_scenario(lg_scalar, g, 4, 0)
    a, _ = filter_log_weights(lg_scalar, obs, 4, 2, "coordinate", 200, 3)
    b, _ = filter_log_weights(with_fd_oracle(lg_scalar), obs, 4, 2, "coordinate", 200, 3)
    np.testing.assert_allclose(a, b, rtol=1e-5, atol=1e-6)


@given(st.integers(0, 4), st.floats(-2, 2), st.integers(0, 1000))
def test_constant_sensor_weight_ignores_partition(level, c, seed):
    # with h = c every order gives -c^2 t / 2 + c Y_t, whatever the dyadic partition
    from conftest import custom_model
    model = custom_model(lambda x: -x, lambda x: np.ones(x.shape + (1,)),
                         lambda x: np.full_like(x, c))
    g = uniform_grid(1.0, 16, 2)
    _, obs, _ = simulate_scenario(model, g, seed, 0)
    lw, _ = filter_log_weights(model, obs, 2 ** level, 2, "one", 3, 0)
    np.testing.assert_allclose(lw, -0.5 * c * c + c * obs.Y[-1, 0], rtol=1e-10, atol=1e-10)


def test_chunking_and_threads_are_bit_identical(bounded):
    g = uniform_grid(0.5, 8, 8)
    _, obs, _ = simulate_scenario(bounded, g, 4, 0)
    a, va = filter_log_weights(bounded, obs, 8, 2, "bounded", 1000, 7)
    b, vb = filter_log_weights(bounded, obs, 8, 2, "bounded", 1000, 7, threads=4, chunk_size=97)
    assert np.array_equal(a, b) and np.array_equal(va, vb)
