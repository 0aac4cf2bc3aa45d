import numpy as np
import pytest

from hofilter.errors import CapabilityError, RejectedInput
from hofilter.model import make_model
from hofilter.oracle import (iterated_moment_oracle, kalman_bucy, reference_filter,
                             write_kalman)
from hofilter.paths import ObservationRecord, read_table, simulate_scenario, uniform_grid


def _zero_obs(t, n, k, d_Y=1):
    g = uniform_grid(t, n, k)
    return ObservationRecord(g, np.zeros((g.n_steps + 1, d_Y)))


def test_blind_kalman_is_the_prior():
    m = make_model("linear_gaussian", {"a": -1.0, "b": 1.0, "c": 0.0,
                                       "x0": {"kind": "gaussian", "mean": [2.0], "var": 0.5}})
    traj = kalman_bucy(m, _zero_obs(1.0, 1, 4096))
    t = traj.times
    np.testing.assert_allclose(traj.means[:, 0], 2.0 * np.exp(-t), rtol=1e-3)
    var = 0.5 * np.exp(-2 * t) + (1 - np.exp(-2 * t)) / 2
    np.testing.assert_allclose(traj.covariances[:, 0, 0], var, rtol=1e-3)


def test_noiseless_signal_from_a_point_keeps_zero_covariance():
    m = make_model("linear_gaussian", {"a": 0.3, "b": 0.0, "c": 1.0,
                                       "x0": {"kind": "point", "value": [1.0]}})
    traj = kalman_bucy(m, simulate_scenario(m, uniform_grid(1.0, 4, 8), 0, 0)[1])
    assert np.all(traj.covariances == 0.0)
    np.testing.assert_allclose(traj.means[:, 0], np.cumprod(np.r_[1.0, np.full(32, 1 + 0.3 / 32)]))


def test_riccati_reaches_steady_state(lg_scalar):
    traj = kalman_bucy(lg_scalar, _zero_obs(10.0, 10, 1000))
    assert traj.final.covariance[0, 0] == pytest.approx(np.sqrt(2) - 1, rel=1e-3)
    assert len(traj) == 10_001 and traj[0].time == 0.0


def test_covariance_stays_symmetric_psd(lg_2d):
    _, obs, _ = simulate_scenario(lg_2d, uniform_grid(1.0, 8, 32), 3, 0)
    P = kalman_bucy(lg_2d, obs).covariances
    np.testing.assert_array_equal(P, np.swapaxes(P, 1, 2))
    assert np.all(np.linalg.eigvalsh(P) >= -1e-12)


def test_kalman_needs_linear_gaussian(bounded, tmp_path, lg_scalar):
    with pytest.raises(CapabilityError):
        kalman_bucy(bounded, _zero_obs(0.5, 2, 2))
    traj = kalman_bucy(lg_scalar, _zero_obs(0.5, 2, 2))
    write_kalman(traj, tmp_path / "k.csv")
    header, times, values = read_table(tmp_path / "k.csv")
    assert header == ["time", "mean1", "cov11"] and values.shape == (5, 2)


def test_reference_filter_cases(blind, lg_scalar):
    _, obs, _ = simulate_scenario(blind, uniform_grid(0.5, 64, 2), 1, 0)
    ref = reference_filter(blind, obs, 64, 20_000, 3, finest_n=8)
    # prior mean of the bounded-sensor signal started at 1 stays inside (0, 1.5)
    assert 0.0 < ref.pi < 1.5 and ref.pi_se < 0.01
    with pytest.raises(RejectedInput):
        reference_filter(blind, obs, 32, 100, 3, finest_n=8)

    _, obs, _ = simulate_scenario(lg_scalar, uniform_grid(0.5, 64, 4), 7, 0)
    kal = kalman_bucy(lg_scalar, obs).final.mean[0]
    ests = [reference_filter(lg_scalar, obs, n, 50_000, 5) for n in (32, 64)]
    for est in ests:
        assert abs(est.pi - kal) <= 4 * est.pi_se + 2e-3
    assert abs(ests[0].pi - ests[1].pi) <= 4 * np.hypot(ests[0].pi_se, ests[1].pi_se) + 2e-3


def test_moment_oracle_examples():
    assert iterated_moment_oracle((), 0.3) == (1.0, 1.0)
    assert iterated_moment_oracle((0,), 0.5) == (0.5, 0.25)
    assert iterated_moment_oracle((2,), 0.5) == (0.0, 0.5)
    assert iterated_moment_oracle((0, 0), 0.5) == (0.125, 0.0625 / 4)
    assert iterated_moment_oracle((1, 0), 0.5) == (0.0, 0.125 / 3)
    assert iterated_moment_oracle((1, 2), 0.5) == (0.0, 0.125)
    assert iterated_moment_oracle((1, 1, 1), 0.5) is None
