"""Discretised log-likelihood, truncation, and Monte Carlo filter estimates.

Given a fixed observation record, the filter at order m is estimated by
drawing signal/noise samples independent of the observation and weighting
``phi(X_t)`` with ``exp(xi_bar)`` where

    xi^{m}(j) = kappa_j^{0,m} + sum_steps <eta_j^{0,m}(left), dY>,
    mu^{m}(j) = kappa_j^{2,m} + sum_steps <eta_j^{2,m}(left), dY>       (m > 2),
    xi_bar = sum_j xi^{m}(j)                                            (m <= 2),
    xi_bar = sum_j [xi^{2}(j) + Gamma_{m, t_{j+1} - t_j}(mu^{m}(j))]    (m > 2).
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import streams
from .errors import CapabilityError, RejectedInput
from .paths import brownian_increments, euler_maruyama
from .taylor import TaylorBlock, boundary_pairing, enumerate_indices, eval_kappa

# ---------------------------------------------------------------------------
# truncation


def gamma_trunc(q, delta, z):
    """Gamma_{q,delta}(z) = z / (1 + (z/delta)^{2q})."""
    if q < 1 or int(q) != q:
        raise RejectedInput("truncation order q must be a positive integer")
    if not delta > 0:
        raise RejectedInput("truncation scale delta must be positive")
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore"):
        return z / (1.0 + (z / delta) ** (2 * int(q)))


def gamma_bound(q, delta):
    """Upper bound delta (2q - 1)^{-1/(2q)} on |Gamma_{q,delta}|.

    This is the location of the maximiser, not the maximum; see gamma_sup.
    """
    return delta / (2 * q - 1) ** (1.0 / (2 * q))


def gamma_sup(q, delta):
    """Exact sup_z |Gamma_{q,delta}(z)| = gamma_bound(q, delta) * (2q - 1) / (2q)."""
    return gamma_bound(q, delta) * (2 * q - 1) / (2 * q)


def gamma_min_slope(q):
    """Smallest derivative of Gamma_{q,delta}, -(2q - 1)^2 / (8q), for every delta.

    It lies above (q(1 - q) - 1)/(2q); the largest derivative is 1, at z = 0.
    """
    return -(2 * q - 1) ** 2 / (8 * q)


# ---------------------------------------------------------------------------
# test functionals


@dataclass(frozen=True)
class Functional:
    name: str
    index: int = 0
    lower: float = -np.inf
    upper: float = np.inf

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.name == "one":
            return np.ones(x.shape[:-1])
        xi = x[..., self.index]
        if self.name == "coordinate":
            return xi.copy()
        if self.name == "bounded":
            return np.tanh(xi)
        if self.name == "indicator":
            return ((xi >= self.lower) & (xi <= self.upper)).astype(float)
        raise RejectedInput(f"unknown functional {self.name!r}")

    @property
    def bounded(self):
        return self.name != "coordinate"


_ALIASES = {"1": "one", "x": "coordinate", "tanh": "bounded", "box": "indicator"}


def make_functional(spec):
    """From a registry name (``"one"``, ``"coordinate"``, ``"bounded"``,
    ``"indicator"`` or aliases) or a dict with ``name`` and parameters."""
    if isinstance(spec, Functional):
        return spec
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    raw = spec.get("name", "one")
    name = _ALIASES.get(raw, raw)
    f = Functional(name=name, index=int(spec.get("index", 0)),
                   lower=float(spec.get("lower", -np.inf)), upper=float(spec.get("upper", np.inf)))
    if name not in ("one", "coordinate", "bounded", "indicator"):
        raise RejectedInput(f"unknown functional {name!r}")
    return f


# ---------------------------------------------------------------------------
# per-subinterval quantities


@dataclass(frozen=True, eq=False)
class LikelihoodResult:
    xi: np.ndarray
    mu: np.ndarray | None
    xi_bar: np.ndarray

    @property
    def log_Z(self):
        return self.xi_bar

    @property
    def Z(self):
        return np.exp(self.xi_bar)


def _table_for(tables, j):
    if hasattr(tables, "values"):
        if tables.j != j:
            raise RejectedInput(f"table is for subinterval {tables.j}, not {j}")
        return tables
    return tables[j]


def _check_grids(signal, observation):
    if not signal.grid.same_as(observation.grid):
        raise RejectedInput("signal and observation are on different fine grids")


def _itosum_eta(table, oracle, x_tj, Y_seg, l, m):
    """Left-point sum of <eta_j^{l,m}, dY> over one subinterval; ``Y_seg`` is (k + 1, d_Y)."""
    sel = [a for a, alpha in enumerate(table.indices) if l <= len(alpha) <= m - 1]
    if not sel:
        return np.zeros(np.shape(x_tj)[:-1])
    coeff = oracle.sensor_table([table.indices[a] for a in sel], x_tj)
    out = np.zeros(np.shape(x_tj)[:-1])
    dY = np.diff(Y_seg, axis=0)
    for p, a in enumerate(sel):
        if not table.indices[a]:
            # telescoped: the empty index has integrand 1
            out = out + boundary_pairing(coeff[..., p:p + 1, :], Y_seg[[0, -1]])[..., 0]
        else:
            out = out + np.einsum("...k,ki,...i->...", table.values[..., :-1, a], dY,
                                  coeff[..., p, :])
    return out


def _increment(tables, oracle, signal, observation, j, m, l):
    _check_grids(signal, observation)
    grid = observation.grid
    table = _table_for(tables, j)
    if table.values.shape[-2] != grid.refine_factor + 1:
        raise RejectedInput("table resolution does not match the observation grid")
    x_tj = signal.X[..., grid.base_index(j), :]
    s = grid.steps(j)
    Y_seg = observation.Y[s.start:s.stop + 1]
    return eval_kappa(table, oracle, x_tj, l, m) + _itosum_eta(table, oracle, x_tj, Y_seg, l, m)


def xi_increment(tables, oracle, signal, observation, j, m):
    """xi^{tau,m}(j) for one sample; ``observation.grid`` must be split by tau."""
    return _increment(tables, oracle, signal, observation, j, m, 0)


def mu_increment(tables, oracle, signal, observation, j, m):
    if m <= 2:
        raise RejectedInput("mu is only defined for m > 2")
    return _increment(tables, oracle, signal, observation, j, m, 2)


def xi_bar(xi, mu, partition, m):
    """Truncated log-likelihood from per-subinterval increments (last axis = j).

    For m <= 2 ``xi`` holds xi^{tau,m}(j) and ``mu`` is ignored; for m > 2
    ``xi`` holds xi^{tau,2}(j) and ``mu`` holds mu^{tau,m}(j).
    """
    xi = np.asarray(xi, dtype=float)
    if m <= 2:
        return xi.sum(axis=-1)
    deltas = np.diff(partition.times) if hasattr(partition, "times") else np.asarray(partition)
    mu = np.asarray(mu, dtype=float)
    if xi.shape[-1] != len(deltas) or mu.shape[-1] != len(deltas):
        raise RejectedInput("increment arrays do not match the partition")
    trunc = np.stack([gamma_trunc(m, d, mu[..., j]) for j, d in enumerate(deltas)], axis=-1)
    return (xi + trunc).sum(axis=-1)


def block_likelihood(block, Y, m, deltas):
    """LikelihoodResult for every sample of a TaylorBlock; ``Y`` is the observation path."""
    if m <= 2:
        xi = block.kappa(0, m) + block.ito_sum(0, m, Y)
        return LikelihoodResult(xi, None, xi.sum(axis=-1))
    xi2 = block.kappa(0, 2) + block.ito_sum(0, 2, Y)
    mu = block.kappa(2, m) + block.ito_sum(2, m, Y)
    return LikelihoodResult(xi2 + mu, mu, xi_bar(xi2, mu, deltas, m))


# ---------------------------------------------------------------------------
# sample banks


def default_chunk(n_steps):
    return int(np.clip(2 ** 24 // max(n_steps, 1), 64, 16384))


def bank_chunk(model, grid, root_seed, indices, bank=0):
    """Signal states (B, M + 1, d_X) and increments (B, M, d_V) of bank samples."""
    dV = brownian_increments(grid, root_seed, indices, model.d_V, streams.LANE_V,
                             streams.BANK, bank)
    z = streams.normals_batch(root_seed, streams.BANK, indices, streams.LANE_X0,
                              (model.d_X,), bank)
    X = euler_maruyama(model, model.initial_law.transform(z), dV, grid.dt)
    return X, dV


def chunk_ranges(N, chunk_size):
    return [range(s, min(N, s + chunk_size)) for s in range(0, N, chunk_size)]


def map_chunks(fn, ranges, threads=1):
    """Apply ``fn`` to each index range; results come back in range order."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, ranges))
    return [fn(r) for r in ranges]


# ---------------------------------------------------------------------------
# weighted estimates


@dataclass(frozen=True)
class FilterEstimate:
    rho: float
    rho_se: float
    pi: float
    pi_se: float
    n_samples: int
    ess: float
    m: int = 0
    n_intervals: int = 0
    k_fine: int = 0
    seed: int = 0

    def to_json(self):
        return asdict(self)


def weighted_estimate(log_w, values):
    """Self-normalised and unnormalised estimates with log-sum-exp shifting.

    Returns ``(rho, rho_se, pi, pi_se, ess)``; ``pi_se`` is the delta-method
    standard error of the ratio.
    """
    log_w = np.asarray(log_w, dtype=float)
    values = np.asarray(values, dtype=float)
    N = len(log_w)
    if N < 2:
        raise RejectedInput("need at least two samples")
    shift = np.max(log_w)
    w = np.exp(log_w - shift)
    wv = w * values
    S = np.sum(w)
    pi = np.sum(wv) / S
    pi_se = np.sqrt(np.sum((w * (values - pi)) ** 2)) / S
    ess = S * S / np.sum(w * w)
    scale = np.exp(shift)
    rho = scale * np.mean(wv)
    rho_se = scale * np.std(wv, ddof=1) / np.sqrt(N)
    return float(rho), float(rho_se), float(pi), float(pi_se), float(ess)


def _check_order(model, m):
    if m - 1 > model.oracle.max_order:
        raise CapabilityError(f"operator oracle supports m <= {model.oracle.max_order + 1}")


def shared_log_weights(model, observation, specs, phi, N, root_seed, bank=0, threads=1,
                       chunk_size=None):
    """Per-sample ``xi_bar`` for several ``(partition, m)`` pairs on one sample bank.

    Every partition must sit on the observation's fine grid. Returns a list of
    log-weight arrays in ``specs`` order and ``phi(X_t)``.
    """
    phi = make_functional(phi)
    if observation.Y.ndim != 2:
        raise RejectedInput("expected a single observation record")
    Y = observation.Y
    plans = {}
    for partition, m in specs:
        _check_order(model, m)
        grid = observation.grid.with_partition(partition)
        key = tuple(grid.base.times)
        entry = plans.setdefault(key, [grid, 1, []])
        entry[1] = max(entry[1], m)
    for i, (partition, m) in enumerate(specs):
        plans[tuple(observation.grid.with_partition(partition).base.times)][2].append((i, m))
    chunk_size = chunk_size or default_chunk(observation.grid.n_steps)

    # coefficients once at the union of all start states, sliced per partition
    starts = sorted({s for grid, _, _ in plans.values()
                     for s in range(0, grid.n_steps, grid.refine_factor)})
    where = {s: p for p, s in enumerate(starts)}
    top = max(m for _, m in specs)
    alphas = enumerate_indices(0, top - 1, model.d_V)

    def work(idx):
        X, dV = bank_chunk(model, observation.grid, root_seed, idx, bank)
        sensor, hh = model.oracle.coefficient_tables(alphas, X[:, starts, :])
        out = [None] * len(specs)
        for grid, m_max, wanted in plans.values():
            pick = [where[s] for s in range(0, grid.n_steps, grid.refine_factor)]
            block = TaylorBlock(model.oracle, grid, X, dV, m_max,
                                coefficients=(sensor[:, pick], hh[:, pick]))
            deltas = np.diff(grid.base.times)
            for i, m in wanted:
                out[i] = block_likelihood(block, Y, m, deltas).xi_bar
        return out, phi(X[:, -1, :])

    parts = map_chunks(work, chunk_ranges(N, chunk_size), threads)
    log_ws = [np.concatenate([p[0][i] for p in parts]) for i in range(len(specs))]
    return log_ws, np.concatenate([p[1] for p in parts])


def filter_log_weights(model, observation, partition, m, phi, N, root_seed, bank=0,
                       threads=1, chunk_size=None):
    """Per-sample ``xi_bar`` and ``phi(X_t)`` for N bank samples."""
    log_ws, vals = shared_log_weights(model, observation, [(partition, m)], phi, N, root_seed,
                                      bank, threads, chunk_size)
    return log_ws[0], vals


def estimate_filter(model, observation, partition, m, phi, N, root_seed, bank=0, threads=1,
                    chunk_size=None):
    """Monte Carlo estimate of rho^{tau,m}(phi) and pi^{tau,m}(phi) given a fixed observation.

    ``partition`` is a Partition or a number of uniform subintervals; its
    times must lie on the observation's fine grid.
    """
    if N < 2:
        raise RejectedInput("need at least two samples")
    log_w, vals = filter_log_weights(model, observation, partition, m, phi, N, root_seed,
                                     bank, threads, chunk_size)
    rho, rho_se, pi, pi_se, ess = weighted_estimate(log_w, vals)
    grid = observation.grid.with_partition(partition)
    return FilterEstimate(rho, rho_se, pi, pi_se, N, ess, m, grid.base.n, grid.refine_factor,
                          int(root_seed))
