"""Partitions, fine grids, Brownian draws, signal and observation paths.

Arrays of path values carry an optional leading batch axis: a single
sample's signal is ``(M + 1, d_X)``, a chunk of samples ``(B, M + 1, d_X)``.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import streams
from .errors import NumericBlowUp, PathParseError, RejectedInput


@dataclass(frozen=True, eq=False)
class Partition:
    times: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise RejectedInput("a partition needs at least two times")
        if times[0] != 0.0:
            raise RejectedInput("a partition must start at 0")
        if np.any(np.diff(times) <= 0):
            raise RejectedInput("partition times must be strictly increasing")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, t, n):
        if n < 1 or t <= 0:
            raise RejectedInput("uniform partition needs n >= 1 and t > 0")
        times = np.linspace(0.0, t, n + 1)
        times[-1] = t
        return cls(times)

    @property
    def n(self):
        return len(self.times) - 1

    @property
    def t(self):
        return float(self.times[-1])

    @property
    def meshsize(self):
        return float(np.max(np.diff(self.times)))


@dataclass(frozen=True, eq=False)
class FineGrid:
    """Each base subinterval split into ``refine_factor`` equal fine steps."""

    base: Partition
    refine_factor: int

    def __post_init__(self):
        if int(self.refine_factor) < 1:
            raise RejectedInput("refine_factor must be >= 1")
        object.__setattr__(self, "refine_factor", int(self.refine_factor))
        k = self.refine_factor
        tb = self.base.times
        frac = np.arange(k) / k
        inner = (tb[:-1, None] + frac[None, :] * np.diff(tb)[:, None]).ravel()
        object.__setattr__(self, "times", np.append(inner, tb[-1]))
        object.__setattr__(self, "dt", np.repeat(np.diff(tb) / k, k))

    @property
    def n_steps(self):
        return self.base.n * self.refine_factor

    @property
    def t(self):
        return self.base.t

    def base_index(self, j):
        """Fine index of base time t_j."""
        return j * self.refine_factor

    def steps(self, j):
        """Slice of fine steps making up subinterval j."""
        k = self.refine_factor
        return slice(j * k, (j + 1) * k)

    def same_as(self, other):
        return self.n_steps == other.n_steps and np.array_equal(self.times, other.times)

    def with_partition(self, partition):
        """The same fine times viewed as a refinement of a coarser partition.

        ``partition`` may be a Partition or an integer n (uniform). Every
        partition time must be a fine time and all subintervals must hold the
        same number of fine steps.
        """
        if not isinstance(partition, Partition):
            n = int(partition)
            if n < 1 or self.n_steps % n:
                raise RejectedInput(f"{self.n_steps} fine steps cannot be split into {n} intervals")
            idx = np.arange(n + 1) * (self.n_steps // n)
            partition = Partition(self.times[idx])
        else:
            idx = np.searchsorted(self.times, partition.times)
            idx = np.clip(idx, 0, self.n_steps)
            if not np.allclose(self.times[idx], partition.times, rtol=0, atol=1e-12 * self.t):
                raise RejectedInput("partition times are not fine-grid times")
            strides = np.diff(idx)
            if len(set(strides.tolist())) != 1:
                raise RejectedInput("partition subintervals must span equal numbers of fine steps")
            partition = Partition(self.times[idx])
        k = self.n_steps // partition.n
        grid = FineGrid(partition, k)
        grid_times = grid.times
        object.__setattr__(grid, "times", self.times)
        object.__setattr__(grid, "dt", self.dt)
        if not np.allclose(grid_times, self.times, rtol=0, atol=1e-12 * self.t):
            raise RejectedInput("fine steps inside a subinterval are not equal")
        return grid

    def coarsen(self, factor):
        """Grid with ``refine_factor / factor`` steps per base interval."""
        if factor < 1 or self.refine_factor % factor:
            raise RejectedInput(f"cannot coarsen refine_factor {self.refine_factor} by {factor}")
        return FineGrid(self.base, self.refine_factor // factor)


def uniform_grid(t, n, k_fine):
    return FineGrid(Partition.uniform(t, n), k_fine)


def aggregate_increments(incr, factor):
    """Sum consecutive groups of ``factor`` increments along the step axis (-2)."""
    incr = np.asarray(incr)
    M = incr.shape[-2]
    if factor < 1 or M % factor:
        raise RejectedInput(f"{M} steps cannot be aggregated by {factor}")
    return incr.reshape(incr.shape[:-2] + (M // factor, factor, incr.shape[-1])).sum(axis=-2)


@dataclass(frozen=True, eq=False)
class BrownianRecord:
    grid: FineGrid
    V_incr: np.ndarray
    W_incr: np.ndarray | None
    root_seed: int | None = None
    sample_index: int | None = None

    def __post_init__(self):
        if self.V_incr.shape[-2] != self.grid.n_steps:
            raise RejectedInput("increment count does not match the grid")
        if self.W_incr is not None and self.W_incr.shape[-2] != self.grid.n_steps:
            raise RejectedInput("increment count does not match the grid")

    def coarsen(self, factor):
        W = None if self.W_incr is None else aggregate_increments(self.W_incr, factor)
        return BrownianRecord(self.grid.coarsen(factor), aggregate_increments(self.V_incr, factor),
                              W, self.root_seed, self.sample_index)

    def V_path(self):
        return _cumulative(self.V_incr)

    def W_path(self):
        return _cumulative(self.W_incr)


def _cumulative(incr):
    zero = np.zeros(incr.shape[:-2] + (1, incr.shape[-1]))
    return np.concatenate([zero, np.cumsum(incr, axis=-2)], axis=-2)


def brownian_increments(grid, root_seed, indices, dim, lane, stream=streams.SCENARIO, bank=0):
    """Increments of shape (len(indices), M, dim); row r depends only on indices[r]."""
    z = streams.normals_batch(root_seed, stream, indices, lane, (grid.n_steps, dim), bank)
    return z * np.sqrt(grid.dt)[:, None]


def sample_brownian(grid, root_seed, sample_index, d_V=1, d_Y=1, stream=streams.SCENARIO, bank=0):
    """Deterministic in (root_seed, sample_index, stream, bank) only."""
    sq = np.sqrt(grid.dt)[:, None]
    V = streams.normals(root_seed, stream, sample_index, streams.LANE_V, (grid.n_steps, d_V), bank) * sq
    W = streams.normals(root_seed, stream, sample_index, streams.LANE_W, (grid.n_steps, d_Y), bank) * sq
    return BrownianRecord(grid, V, W, root_seed, sample_index)


@dataclass(frozen=True, eq=False)
class SignalRecord:
    grid: FineGrid
    X: np.ndarray

    @property
    def x0(self):
        return self.X[..., 0, :]

    def at_base_times(self, grid=None):
        grid = grid or self.grid
        return self.X[..., ::grid.refine_factor, :]


@dataclass(frozen=True, eq=False)
class ObservationRecord:
    grid: FineGrid
    Y: np.ndarray

    def __post_init__(self):
        if self.Y.shape[-2] != self.grid.n_steps + 1:
            raise RejectedInput("observation values do not match the grid")
        if np.any(self.Y[..., 0, :] != 0.0):
            raise RejectedInput("observation paths start at Y_0 = 0")

    @property
    def increments(self):
        return np.diff(self.Y, axis=-2)

    def with_partition(self, partition):
        return ObservationRecord(self.grid.with_partition(partition), self.Y)


def euler_maruyama(model, x0, dV, dt, check_every=1):
    """X_{s+h} = X_s + f(X_s) h + sigma(X_s) dV on the given steps.

    ``x0`` has shape (..., d_X), ``dV`` shape (..., M, d_V), ``dt`` shape (M,).
    """
    x = np.array(np.broadcast_to(x0, dV.shape[:-2] + (model.d_X,)), dtype=float)
    M = dV.shape[-2]
    # time-major working layout keeps every per-step slice contiguous
    steps = np.ascontiguousarray(np.moveaxis(dV, -2, 0))
    out = np.empty((M + 1,) + x.shape)
    out[0] = x
    scalar_noise = model.d_V == 1
    for s in range(M):
        sig = model.diffusion(x)
        if scalar_noise:
            noise = sig[..., 0] * steps[s]
        else:
            noise = np.einsum("...kr,...r->...k", sig, steps[s])
        x = x + model.drift(x) * dt[s] + noise
        if check_every and (s % check_every == 0 or s == M - 1) and not np.all(np.isfinite(x)):
            raise NumericBlowUp(f"non-finite signal state at fine step {s}")
        out[s + 1] = x
    return np.moveaxis(out, 0, -2)


def simulate_signal(model, brownian, x0):
    x0 = np.asarray(x0, dtype=float)
    if x0.shape[-1] != model.d_X or brownian.V_incr.shape[-1] != model.d_V:
        raise RejectedInput("signal dimensions are inconsistent with the model")
    X = euler_maruyama(model, x0, brownian.V_incr, brownian.grid.dt)
    return SignalRecord(brownian.grid, X)


def simulate_observation(model, signal, brownian):
    """Y_{s+h} = Y_s + h(X_s) h + dW (left-point rule), Y_0 = 0."""
    if not signal.grid.same_as(brownian.grid):
        raise RejectedInput("signal and Brownian record live on different grids")
    if brownian.W_incr is None:
        raise RejectedInput("Brownian record carries no observation noise")
    hX = model.sensor(signal.X[..., :-1, :])
    dY = hX * signal.grid.dt[:, None] + brownian.W_incr
    return ObservationRecord(signal.grid, _cumulative(dY))


def simulate_scenario(model, grid, root_seed, index):
    """Signal, observation and Brownian record of one ground-truth scenario."""
    bm = sample_brownian(grid, root_seed, index, model.d_V, model.d_Y, stream=streams.SCENARIO)
    x0 = model.initial_law.sample(root_seed, index, stream=streams.SCENARIO)
    signal = simulate_signal(model, bm, x0)
    return signal, simulate_observation(model, signal, bm), bm


# --------------------------------------------------------------------------
# CSV persistence

def _fmt(v):
    return repr(float(v))


def write_table(location, header, times, values, comments=()):
    """``comments`` become leading ``# ...`` lines, which readers skip."""
    with open(location, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for s, row in zip(times, values):
            w.writerow([_fmt(s)] + [_fmt(v) for v in row])


def read_table(location):
    """Return ``(header, times, values)``; times must be strictly increasing."""
    with open(location, newline="") as fh:
        rows = [(ln, row) for ln, row in enumerate(csv.reader(fh), start=1)
                if not (row and row[0].lstrip().startswith("#"))]
    if not rows:
        raise PathParseError("empty file", line=1)
    hline, header = rows[0][0], [h.strip() for h in rows[0][1]]
    if not header or header[0] != "time" or len(header) < 2:
        raise PathParseError("header must be 'time' followed by component names", line=hline)
    times, values = [], []
    for ln, row in rows[1:]:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise PathParseError(f"expected {len(header)} fields, got {len(row)}", line=ln)
        try:
            nums = [float(c) for c in row]
        except ValueError as exc:
            raise PathParseError(str(exc), line=ln) from None
        if not all(np.isfinite(nums)):
            raise PathParseError("non-finite value", line=ln)
        if times and nums[0] <= times[-1]:
            raise PathParseError("times must be strictly increasing", line=ln)
        times.append(nums[0])
        values.append(nums[1:])
    if not times:
        raise PathParseError("no data rows", line=hline + 1)
    return header, np.array(times), np.array(values).reshape(len(times), len(header) - 1)


def write_path(record, location, comments=()):
    """Persist a single-sample record as CSV (time, then components)."""
    if isinstance(record, ObservationRecord):
        header = ["time"] + [f"y{i + 1}" for i in range(record.Y.shape[-1])]
        write_table(location, header, record.grid.times, record.Y, comments)
    elif isinstance(record, SignalRecord):
        header = ["time"] + [f"x{i + 1}" for i in range(record.X.shape[-1])]
        write_table(location, header, record.grid.times, record.X, comments)
    elif isinstance(record, BrownianRecord):
        W = record.W_incr if record.W_incr is not None else np.zeros((record.grid.n_steps, 0))
        header = (["time"] + [f"dV{i + 1}" for i in range(record.V_incr.shape[-1])]
                  + [f"dW{i + 1}" for i in range(W.shape[-1])])
        # row s holds the increment over the step ending at time s; row 0 is zero
        incr = np.vstack([np.zeros((1, len(header) - 1)), np.hstack([record.V_incr, W])])
        write_table(location, header, record.grid.times, incr, comments)
    else:
        raise RejectedInput(f"cannot persist {type(record).__name__}")


def _grid_from_times(times):
    grid = FineGrid(Partition(times), 1)
    object.__setattr__(grid, "times", np.asarray(times, dtype=float))
    return grid


def read_path(location):
    """Inverse of :func:`write_path`; the grid is rebuilt with refine_factor 1."""
    header, times, values = read_table(location)
    kinds = {h.rstrip("0123456789") for h in header[1:]}
    if kinds == {"y"}:
        if times[0] != 0.0:
            raise PathParseError("observation paths must start at time 0", line=2)
        if np.any(values[0] != 0.0):
            raise PathParseError("observation paths start at Y_0 = 0", line=2)
        return ObservationRecord(_grid_from_times(times), values)
    if kinds == {"x"}:
        return SignalRecord(_grid_from_times(times), values)
    if kinds <= {"dV", "dW"}:
        nV = sum(h.startswith("dV") for h in header[1:])
        if len(times) < 2:
            raise PathParseError("need at least one increment", line=2)
        if np.any(values[0] != 0.0):
            raise PathParseError("first increment row must be zero", line=2)
        grid = _grid_from_times(times)
        W = values[1:, nV:] if values.shape[1] > nV else None
        return BrownianRecord(grid, values[1:, :nV], W)
    raise PathParseError(f"unrecognised column names {header[1:]}", line=1)
