"""Reference solutions: Kalman-Bucy, a high-resolution self-reference, and
closed-form moments of low-order iterated integrals."""

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, RejectedInput
from .likelihood import estimate_filter
from .paths import write_table


@dataclass(frozen=True)
class KalmanState:
    time: float
    mean: np.ndarray
    covariance: np.ndarray


@dataclass(frozen=True, eq=False)
class KalmanTrajectory:
    times: np.ndarray
    means: np.ndarray
    covariances: np.ndarray

    def __len__(self):
        return len(self.times)

    def __getitem__(self, s):
        return KalmanState(float(self.times[s]), self.means[s], self.covariances[s])

    @property
    def final(self):
        return self[-1]


def kalman_bucy(model, observation):
    """Euler integration of the Kalman-Bucy mean and Riccati equations on the
    observation's fine grid (left-point rule, matching the observation sums)."""
    lg = model.linear_gaussian_params
    if lg is None:
        raise CapabilityError(f"model {model.name!r} has no linear-Gaussian parameters")
    A, B, H = lg.A, lg.B, lg.H
    BB = B @ B.T
    dt = observation.grid.dt
    dY = observation.increments
    M = len(dt)
    means = np.empty((M + 1, A.shape[0]))
    covs = np.empty((M + 1,) + A.shape)
    mu, P = lg.mean0.astype(float).copy(), lg.cov0.astype(float).copy()
    means[0], covs[0] = mu, P
    for s in range(M):
        gain = P @ H.T
        mu = mu + (A @ mu) * dt[s] + gain @ (dY[s] - (H @ mu) * dt[s])
        P = P + (A @ P + P @ A.T + BB - gain @ gain.T) * dt[s]
        P = 0.5 * (P + P.T)
        means[s + 1], covs[s + 1] = mu, P
    return KalmanTrajectory(observation.grid.times.copy(), means, covs)


def write_kalman(trajectory, location):
    """CSV: time, mean components, covariance entries row-major."""
    d = trajectory.means.shape[1]
    header = (["time"] + [f"mean{i + 1}" for i in range(d)]
              + [f"cov{i + 1}{j + 1}" for i in range(d) for j in range(d)])
    values = np.hstack([trajectory.means, trajectory.covariances.reshape(len(trajectory), -1)])
    write_table(location, header, trajectory.times, values)


def reference_filter(model, observation, n_ref, N_ref, root_seed, phi="coordinate", m_ref=2,
                     finest_n=None, bank=0, threads=1):
    """High-resolution same-method estimate used as the reference in convergence studies."""
    if finest_n is not None and n_ref < 8 * finest_n:
        raise RejectedInput(f"n_ref={n_ref} must be at least 8x the finest partition ({finest_n})")
    return estimate_filter(model, observation, n_ref, m_ref, phi, N_ref, root_seed, bank=bank,
                           threads=threads)


def iterated_moment_oracle(alpha, delta):
    """``(E[I_alpha], E[I_alpha^2])`` of I_alpha(1)_{0,delta}, or None when |alpha| > 2."""
    alpha = tuple(alpha)
    d = float(delta)
    if len(alpha) > 2:
        return None
    if not alpha:
        return 1.0, 1.0
    if alpha == (0,):
        return d, d * d
    if len(alpha) == 1:
        return 0.0, d
    if alpha == (0, 0):
        return d * d / 2, d ** 4 / 4
    if alpha[0] == 0 or alpha[1] == 0:
        return 0.0, d ** 3 / 3
    return 0.0, d * d / 2
