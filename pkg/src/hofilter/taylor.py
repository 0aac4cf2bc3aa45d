"""Multi-indices, iterated Ito integrals and the Taylor building blocks.

A multi-index is a tuple over ``{0, ..., d_V}``; entry 0 stands for the time
component. ``I_alpha`` below always means ``I_alpha(1)_{t_j, s}`` on one
subinterval, built from left-point sums on the fine grid.
"""

from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import RejectedInput


def mi_length(alpha):
    return len(alpha)


def mi_zero_count(alpha):
    return sum(1 for a in alpha if a == 0)


def mi_right_trunc(alpha):
    """alpha- : drop the last entry."""
    return tuple(alpha[:-1])


def mi_left_trunc(alpha):
    """-alpha : drop the first entry."""
    return tuple(alpha[1:])


def mi_concat(alpha, beta):
    return tuple(alpha) + tuple(beta)


def enumerate_indices(n, m, d_V):
    """All alpha with n <= |alpha| <= m, ordered by length then lexicographically."""
    if n < 0 or n > m:
        raise RejectedInput(f"need 0 <= n <= m, got n={n}, m={m}")
    out = []
    for k in range(n, m + 1):
        out.extend(product(range(d_V + 1), repeat=k))
    return out


def iterated_integrals(dV, dt, indices):
    """Left-point recursion dI_alpha = I_{alpha-}(left) * dV^{alpha_last}.

    ``dV`` has shape (..., k, d_V) and ``dt`` broadcasts against (..., k).
    ``indices`` must be closed under right truncation and ordered so that
    alpha- precedes alpha. Returns values at the k + 1 fine points (starting
    at 0 for |alpha| >= 1) and the k per-step increments, each with a
    trailing axis over ``indices``.
    """
    dV = np.asarray(dV, dtype=float)
    lead = dV.shape[:-1]
    dt = np.broadcast_to(dt, lead)
    pos = {alpha: a for a, alpha in enumerate(indices)}
    k = lead[-1]
    values = np.empty(lead[:-1] + (k + 1, len(indices)))
    incr = np.empty(lead + (len(indices),))
    for a, alpha in enumerate(indices):
        if not alpha:
            values[..., a] = 1.0
            incr[..., a] = 0.0
            continue
        parent = alpha[:-1]
        if parent not in pos:
            raise RejectedInput(f"index set is not closed under truncation: {parent} missing")
        last = alpha[-1]
        driver = dt if last == 0 else dV[..., last - 1]
        incr[..., a] = values[..., :k, pos[parent]] * driver
        values[..., 0, a] = 0.0
        np.cumsum(incr[..., a], axis=-1, out=values[..., 1:, a])
    return values, incr


@dataclass(frozen=True, eq=False)
class IteratedIntegralTable:
    j: int
    indices: list
    times: np.ndarray
    values: np.ndarray
    increments: np.ndarray

    @property
    def dt(self):
        return np.diff(self.times)

    def column(self, alpha):
        return self.values[..., self.indices.index(tuple(alpha))]


def build_integral_table(brownian, j, m):
    """I_alpha(1)_{t_j, s} for alpha in M_{0, m-1} at every fine time s of subinterval j."""
    if m < 1:
        raise RejectedInput("order m must be >= 1")
    grid = brownian.grid
    if not 0 <= j < grid.base.n:
        raise RejectedInput(f"subinterval {j} outside 0..{grid.base.n - 1}")
    steps = grid.steps(j)
    d_V = brownian.V_incr.shape[-1]
    indices = enumerate_indices(0, m - 1, d_V)
    values, incr = iterated_integrals(brownian.V_incr[..., steps, :], grid.dt[steps], indices)
    times = grid.times[steps.start:steps.stop + 1]
    return IteratedIntegralTable(j, indices, times, values, incr)


def _level_indices(indices, l, m):
    if l < 0 or l >= m:
        raise RejectedInput(f"need 0 <= l <= m - 1, got l={l}, m={m}")
    return [a for a, alpha in enumerate(indices) if l <= len(alpha) <= m - 1]


def _require_order(indices, m, d_V):
    need = len(enumerate_indices(0, m - 1, d_V))
    have = sum(1 for alpha in indices if len(alpha) <= m - 1)
    if have < need:
        raise RejectedInput(f"table does not cover M_(0,{m - 1})")


def eval_eta(table, oracle, x_tj, l, m, s):
    """eta_j^{l,m} at fine position ``s`` (0 = t_j, k = t_{j+1}) of the subinterval."""
    _require_order(table.indices, m, oracle.d_V)
    sel = _level_indices(table.indices, l, m)
    alphas = [table.indices[a] for a in sel]
    coeff = oracle.sensor_table(alphas, x_tj)
    return np.einsum("...a,...ai->...i", table.values[..., s, sel], coeff)


def eval_kappa(table, oracle, x_tj, l, m, j=None):
    """kappa_j^{l,m} with the time integral by left-point fine sums."""
    _require_order(table.indices, m, oracle.d_V)
    sel = _level_indices(table.indices, l, m)
    alphas = [table.indices[a] for a in sel]
    coeff = oracle.hh_table(alphas, x_tj)
    time_int = np.einsum("...ka,k->...a", table.values[..., :-1, sel], table.dt)
    return -0.5 * np.einsum("...a,...a->...", coeff, time_int)


class TaylorBlock:
    """All subintervals of a partition at once, for a batch of samples.

    ``X`` holds fine-grid signal states (..., M + 1, d_X), ``dV`` the driving
    increments (..., M, d_V) and ``grid`` the fine grid split by the target
    partition. Tables cover M_{0, m_max - 1}; one array per multi-index, and
    indices made only of zeros are deterministic so they are stored once as
    (n, k + 1) and broadcast against the batch.
    """

    def __init__(self, oracle, grid, X, dV, m_max, coefficients=None):
        n, k = grid.base.n, grid.refine_factor
        self.n, self.k, self.m_max = n, k, m_max
        self.indices = enumerate_indices(0, m_max - 1, oracle.d_V)
        self.batch_shape = dV.shape[:-2]
        self.dt = grid.dt.reshape(n, k)
        self.x_start = X[..., 0:grid.n_steps:k, :]
        dVr = dV.reshape(self.batch_shape + (n, k, dV.shape[-1]))
        self.values, self.incr = [], []
        pos = {}
        for a, alpha in enumerate(self.indices):
            pos[alpha] = a
            if not alpha:
                self.values.append(np.ones((n, k + 1)))
                self.incr.append(np.zeros((n, k)))
                continue
            parent = self.values[pos[alpha[:-1]]]
            last = alpha[-1]
            driver = self.dt if last == 0 else dVr[..., last - 1]
            inc = parent[..., :-1] * driver
            val = np.zeros(inc.shape[:-1] + (k + 1,))
            np.cumsum(inc, axis=-1, out=val[..., 1:])
            self.values.append(val)
            self.incr.append(inc)
        if coefficients is None:
            self.sensor, self.hh = oracle.coefficient_tables(self.indices, self.x_start)
        else:
            # (sensor, hh) evaluated at these start states, possibly for a larger index set
            sensor, hh = coefficients
            A = len(self.indices)
            self.sensor, self.hh = sensor[..., :A, :], hh[..., :A]

    def _sel(self, l, m):
        if m > self.m_max:
            raise RejectedInput(f"block built for m <= {self.m_max}, asked for m={m}")
        return _level_indices(self.indices, l, m)

    def _zeros(self, *tail):
        return np.zeros(self.batch_shape + (self.n,) + tail)

    def eta_path(self, l, m, stride=1):
        """eta_j^{l,m} at every ``stride``-th fine point: (..., n, k/stride + 1, d_Y)."""
        out = self._zeros(self.k // stride + 1, self.sensor.shape[-1])
        for a in self._sel(l, m):
            out += self.values[a][..., ::stride, None] * self.sensor[..., a, None, :]
        return out

    def kappa(self, l, m):
        """kappa_j^{l,m} for every j: (..., n)."""
        out = self._zeros()
        for a in self._sel(l, m):
            time_int = np.einsum("...nk,nk->...n", self.values[a][..., :-1], self.dt)
            out += self.hh[..., a] * time_int
        return -0.5 * out

    def ito_sum(self, l, m, Y):
        """Left-point sums of <eta_j^{l,m}, dY> per subinterval; ``Y`` is the (M + 1, d_Y) path.

        The empty index contributes ``<h(X_{t_j}), Y_{t_{j+1}} - Y_{t_j}>``
        from the telescoped path values rather than summed increments.
        """
        dYr = np.diff(Y, axis=0).reshape(self.n, self.k, Y.shape[-1])
        out = self._zeros()
        for a in self._sel(l, m):
            if not self.indices[a]:
                out += boundary_pairing(self.sensor[..., a, :], Y[::self.k])
                continue
            proj = np.einsum("...nk,nki->...ni", self.values[a][..., :-1], dYr)
            out += np.einsum("...ni,...ni->...n", proj, self.sensor[..., a, :])
        return out


def boundary_pairing(h_start, y_base):
    """<h_j, y_{t_{j+1}} - y_{t_j}> per subinterval; ``y_base`` is (n + 1, d_Y)."""
    return np.einsum("ni,...ni->...n", y_base[1:] - y_base[:-1], h_start)
