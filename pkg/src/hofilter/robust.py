"""Pathwise (robust) filter functionals.

For an observation path y the stochastic integrals against dY are replaced by
integration by parts, so only values of y enter:

    Xi_j(y) = kappa_j^{0,m} + <eta_j^{0,m}(t_{j+1}), y_{t_{j+1}}> - <h(X_{t_j}), y_{t_j}>
              - J_j(y),
    J_j(y)  = sum_i <y_{s_i}, eta_j(s_{i+1}) - eta_j(s_i)>,  s_i = t_j + i (t_{j+1} - t_j) / k.

For fixed signal samples every term is linear in y, which is what the sample
bank below exploits: ``Xi(y) = K + <C, y at the Riemann points>``.
"""

from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import CapabilityError, RejectedInput
from .likelihood import (bank_chunk, chunk_ranges, default_chunk, gamma_trunc, make_functional,
                         map_chunks, weighted_estimate)
from .paths import FineGrid, ObservationRecord, Partition, read_table
from .taylor import TaylorBlock, _level_indices, boundary_pairing, eval_kappa


@dataclass(frozen=True, eq=False)
class ObservationPath:
    """A time-stamped polyline on [0, t], evaluated by linear interpolation."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or len(times) != len(values) or len(times) < 2:
            raise RejectedInput("polyline needs matching times and values (at least two points)")
        if np.any(np.diff(times) <= 0):
            raise RejectedInput("polyline times must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise RejectedInput("polyline values must be finite")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_record(cls, record):
        return cls(record.grid.times, record.Y)

    @classmethod
    def read(cls, location):
        _, times, values = read_table(location)
        return cls(times, values)

    @property
    def d_Y(self):
        return self.values.shape[1]

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if s.size and (s.min() < self.times[0] - 1e-12 or s.max() > self.times[-1] + 1e-12):
            raise RejectedInput("path evaluated outside its time range")
        return np.stack([np.interp(s, self.times, self.values[:, i]) for i in range(self.d_Y)],
                        axis=-1)

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def shifted(self, c):
        return ObservationPath(self.times, self.values + np.asarray(c, dtype=float))


def as_path(y):
    if isinstance(y, ObservationPath):
        return y
    if isinstance(y, ObservationRecord):
        return ObservationPath.from_record(y)
    raise RejectedInput(f"cannot use {type(y).__name__} as an observation path")


def sup_distance(y1, y2, t=None):
    """max_i sup_s |y1_i(s) - y2_i(s)| over the union of both paths' knots."""
    y1, y2 = as_path(y1), as_path(y2)
    lo = max(y1.times[0], y2.times[0])
    hi = min(y1.times[-1], y2.times[-1]) if t is None else t
    knots = np.union1d(y1.times, y2.times)
    knots = np.union1d(knots[(knots >= lo) & (knots <= hi)], [lo, hi])
    return float(np.max(np.abs(y1(knots) - y2(knots))))


def _riemann_stride(k_fine, k):
    if k is None:
        return 1
    k = int(k)
    if k < 1 or k & (k - 1):
        raise RejectedInput(f"Riemann level {k} must be a power of two")
    if k > k_fine:
        raise RejectedInput(f"Riemann level {k} exceeds the fine resolution {k_fine}")
    if k_fine % k:
        raise RejectedInput(f"Riemann level {k} does not divide the fine resolution {k_fine}")
    return k_fine // k


# ---------------------------------------------------------------------------
# single-sample operations


def pathwise_eta_integral(table, oracle, x_tj, y, j, l, m, k=None):
    """J_j(y): Riemann sum of <y, d eta_j^{l,m}> on subinterval j.

    The eta increments stay at the table's fine resolution; ``k`` only
    controls where y is sampled (at the dyadic points s_i).
    """
    y = as_path(y)
    if table.j != j:
        raise RejectedInput(f"table is for subinterval {table.j}, not {j}")
    k_fine = table.values.shape[-2] - 1
    stride = _riemann_stride(k_fine, k)
    sel = _level_indices(table.indices, l, m)
    if not sel:
        return np.zeros(np.shape(x_tj)[:-1])
    coeff = oracle.sensor_table([table.indices[a] for a in sel], x_tj)
    d_eta = np.einsum("...ka,...ai->...ki", table.increments[..., sel], coeff)
    # y frozen at the left dyadic point of each fine step
    left = table.times[:-1][(np.arange(k_fine) // stride) * stride]
    return np.einsum("ki,...ki->...", y(left), d_eta)


def _eta_end(table, oracle, x_tj, l, m):
    sel = _level_indices(table.indices, l, m)
    if not sel:
        return np.zeros(np.shape(x_tj)[:-1] + (oracle.d_Y,))
    coeff = oracle.sensor_table([table.indices[a] for a in sel], x_tj)
    return np.einsum("...a,...ai->...i", table.values[..., -1, sel], coeff)


def robust_log_weight(tables, oracle, signal, y, partition, m, k=None):
    """Xi_bar^{tau,m}(y) for one signal sample.

    ``signal.grid`` (or ``partition``) fixes tau; ``tables[j]`` must be the
    iterated-integral table of subinterval j with order at least m.
    """
    y = as_path(y)
    grid = signal.grid.with_partition(partition)
    times = grid.base.times
    m0 = min(m, 2)
    total = 0.0
    trunc = 0.0
    for j in range(grid.base.n):
        table = tables[j]
        if table.values.shape[-2] != grid.refine_factor + 1:
            raise RejectedInput("table resolution does not match the partition")
        x_tj = signal.X[..., grid.base_index(j), :]
        y0, y1 = y(times[j:j + 2])
        h = oracle.sensor_table([()], x_tj)[..., 0, :]
        total = total + (eval_kappa(table, oracle, x_tj, 0, m0)
                         + _eta_end(table, oracle, x_tj, 0, m0) @ y1 - h @ y0
                         - pathwise_eta_integral(table, oracle, x_tj, y, j, 0, m0, k))
        if m > 2:
            M_j = (eval_kappa(table, oracle, x_tj, 2, m) + _eta_end(table, oracle, x_tj, 2, m) @ y1
                   - pathwise_eta_integral(table, oracle, x_tj, y, j, 2, m, k))
            trunc = trunc + gamma_trunc(m, times[j + 1] - times[j], M_j)
    return total + trunc


# ---------------------------------------------------------------------------
# batched evaluation


def _linear_coefficients(eta):
    """C such that <eta_end, y_end> - <eta_start, y_start> - sum_i <y_i, d eta_i> = <C, y>."""
    d = np.diff(eta, axis=-2)
    C = np.zeros_like(eta)
    C[..., :-1, :] -= d
    C[..., 0, :] -= eta[..., 0, :]
    C[..., -1, :] += eta[..., -1, :]
    return C


def riemann_points(grid, stride):
    """Fine indices of the dyadic points, shape (n, k + 1)."""
    k = grid.refine_factor
    return (np.arange(grid.base.n)[:, None] * k + np.arange(0, k + 1, stride)[None, :])


@dataclass(frozen=True, eq=False)
class _Coefficients:
    """Xi_j(y) = K_j + <H_j, y_{t_{j+1}} - y_{t_j}> + <C_j, y at the Riemann points>.

    The split keeps the empty-index term in the same form the stochastic
    integral version uses, so the two agree bit for bit when m = 1.
    """

    K: np.ndarray
    H: np.ndarray
    C: np.ndarray | None
    K2: np.ndarray | None = None
    C2: np.ndarray | None = None


def _block_coefficients(block, m, stride):
    m0 = min(m, 2)
    C = _linear_coefficients(block.eta_path(1, m0, stride)) if m0 > 1 else None
    coef = _Coefficients(block.kappa(0, m0), block.sensor[..., 0, :], C)
    if m <= 2:
        return coef
    return replace(coef, K2=block.kappa(2, m),
                   C2=_linear_coefficients(block.eta_path(2, m, stride)))


def _evaluate(coef, y_pts, m, deltas):
    y_base = np.concatenate([y_pts[:, 0], y_pts[-1:, -1]])
    xi = coef.K + boundary_pairing(coef.H, y_base)
    if coef.C is not None:
        xi = xi + np.einsum("...nki,nki->...n", coef.C, y_pts)
    xi = xi.sum(axis=-1)
    if m <= 2:
        return xi
    M = coef.K2 + np.einsum("...nki,nki->...n", coef.C2, y_pts)
    return xi + sum(gamma_trunc(m, d, M[..., j]) for j, d in enumerate(deltas))


@dataclass(frozen=True)
class RobustEstimate:
    G: float
    G_se: float
    F: float
    F_se: float
    N: int
    k: int
    m: int
    ess: float = 0.0

    def to_json(self):
        return asdict(self)


def _grid_for(y, partition, k_fine, t=None):
    if isinstance(y, ObservationRecord):
        return y.grid.with_partition(partition)
    if k_fine is None:
        raise RejectedInput("k_fine is required for polyline observation paths")
    if not isinstance(partition, Partition):
        t = float(y.times[-1]) if t is None else t
        partition = Partition.uniform(t, int(partition))
    return FineGrid(partition, k_fine)


def _y_points(y, grid, stride):
    pts = riemann_points(grid, stride)
    if isinstance(y, ObservationRecord):
        return y.Y[pts]
    return as_path(y)(grid.times)[pts]


class RobustBank:
    """Materialised signal samples for evaluating many paths on shared randomness."""

    def __init__(self, model, grid, m, N, root_seed, riemann_k=None, bank=0, threads=1,
                 chunk_size=None):
        if N < 2:
            raise RejectedInput("need at least two samples")
        self.model, self.grid, self.m, self.N = model, grid, m, N
        self.stride = _riemann_stride(grid.refine_factor, riemann_k)
        self.k = grid.refine_factor // self.stride
        self.deltas = np.diff(grid.base.times)
        chunk_size = chunk_size or default_chunk(grid.n_steps)

        def work(idx):
            X, dV = bank_chunk(model, grid, root_seed, idx, bank)
            block = TaylorBlock(model.oracle, grid, X, dV, m)
            return _block_coefficients(block, m, self.stride), X[:, -1, :].copy()

        parts = map_chunks(work, chunk_ranges(N, chunk_size), threads)
        fields = {}
        for name in ("K", "H", "C", "K2", "C2"):
            pieces = [getattr(p[0], name) for p in parts]
            fields[name] = None if pieces[0] is None else np.concatenate(pieces)
        self.coef = _Coefficients(**fields)
        self.x_t = np.concatenate([p[1] for p in parts])

    def log_weights(self, y):
        return _evaluate(self.coef, _y_points(y, self.grid, self.stride), self.m, self.deltas)

    def estimate(self, y, phi):
        phi = make_functional(phi)
        G, G_se, F, F_se, ess = weighted_estimate(self.log_weights(y), phi(self.x_t))
        return RobustEstimate(G, G_se, F, F_se, self.N, self.k, self.m, ess)


def robust_log_weights(model, y, partition, m, phi, N, root_seed, k_fine=None, riemann_k=None,
                       bank=0, threads=1, chunk_size=None):
    """Per-sample ``Xi_bar(y)`` and ``phi(X_t)`` for N bank samples, plus the Riemann level."""
    phi = make_functional(phi)
    if not isinstance(y, ObservationRecord):
        y = as_path(y)
    if m - 1 > model.oracle.max_order:
        raise CapabilityError(f"operator oracle supports m <= {model.oracle.max_order + 1}")
    grid = _grid_for(y, partition, k_fine)
    stride = _riemann_stride(grid.refine_factor, riemann_k)
    y_pts = _y_points(y, grid, stride)
    deltas = np.diff(grid.base.times)
    chunk_size = chunk_size or default_chunk(grid.n_steps)

    def work(idx):
        X, dV = bank_chunk(model, grid, root_seed, idx, bank)
        block = TaylorBlock(model.oracle, grid, X, dV, m)
        return _evaluate(_block_coefficients(block, m, stride), y_pts, m, deltas), phi(X[:, -1, :])

    parts = map_chunks(work, chunk_ranges(N, chunk_size), threads)
    return (np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
            grid.refine_factor // stride)


def estimate_robust(model, y, partition, m, phi, N, root_seed, k_fine=None, riemann_k=None,
                    bank=0, threads=1, chunk_size=None):
    """Monte Carlo estimate of G^{tau,m}_phi(y) and F^{tau,m}_phi(y).

    ``y`` is an ObservationRecord (its fine grid is used) or an
    ObservationPath, in which case ``k_fine`` sets the fine resolution.
    """
    if N < 2:
        raise RejectedInput("need at least two samples")
    log_w, vals, k = robust_log_weights(model, y, partition, m, phi, N, root_seed, k_fine,
                                        riemann_k, bank, threads, chunk_size)
    G, G_se, F, F_se, ess = weighted_estimate(log_w, vals)
    return RobustEstimate(G, G_se, F, F_se, N, k, m, ess)


def lipschitz_probe(model, y1, y2, partition, m, phi, N, root_seed, k_fine=None, riemann_k=None,
                    bank=None, t=None):
    """``(|F(y1) - F(y2)|, ||y1 - y2||_inf, ratio)`` on one shared sample bank.

    Pass a prebuilt :class:`RobustBank` as ``bank`` to reuse samples across
    many probes. The ratio is 0 when the paths coincide.
    """
    if bank is None:
        grid = _grid_for(y1 if isinstance(y1, ObservationRecord) else as_path(y1), partition,
                         k_fine, t)
        bank = RobustBank(model, grid, m, N, root_seed, riemann_k)
    F1 = bank.estimate(y1, phi).F
    F2 = bank.estimate(y2, phi).F
    dist = sup_distance(y1, y2, bank.grid.t)
    diff = abs(F1 - F2)
    return diff, dist, (diff / dist if dist > 0 else 0.0)
