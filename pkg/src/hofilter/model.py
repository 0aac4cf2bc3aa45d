"""Partially observed systems and the differential operators L^alpha.

A model is the signal/observation pair

    dX = f(X) dt + sigma(X) dV,    dY = h(X) dt + dW,    Y_0 = 0,

with V, W independent standard Brownian motions. All coefficient evaluators
are vectorised over leading axes: ``x`` has shape ``(..., d_X)``.

The generator-type operator is ``L^0 g = f . grad g + 1/2 tr(sigma sigma^T hess g)``
and the directional ones are ``L^r g = sigma[:, r] . grad g``; a multi-index
``alpha = (a_1, ..., a_k)`` denotes the composition ``L^{a_1} o ... o L^{a_k}``
so the last entry is applied first.
"""

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import streams
from .errors import CapabilityError, RejectedInput

EPS = np.finfo(float).eps


@dataclass(frozen=True)
class InitialLaw:
    """Point mass (``cov`` is None) or Gaussian law of X_0."""

    mean: np.ndarray
    cov: np.ndarray | None = None

    @property
    def kind(self):
        return "point" if self.cov is None else "gaussian"

    def transform(self, z):
        """Map standard normals ``z`` of shape (..., d_X) to draws of X_0."""
        z = np.asarray(z, dtype=float)
        if self.cov is None:
            return np.broadcast_to(self.mean, z.shape).copy()
        w, v = np.linalg.eigh(self.cov)
        root = v * np.sqrt(np.clip(w, 0.0, None))
        return self.mean + z @ root.T

    def sample(self, root_seed, index=0, stream=streams.BANK, bank=0):
        z = streams.normals(root_seed, stream, index, streams.LANE_X0, (len(self.mean),), bank)
        return self.transform(z)


def point_mass(x0):
    return InitialLaw(np.atleast_1d(np.asarray(x0, dtype=float)))


def gaussian(mean, cov):
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if cov.shape != (len(mean), len(mean)):
        raise RejectedInput("initial covariance shape does not match the mean")
    if np.any(np.linalg.eigvalsh(cov) < 0):
        raise RejectedInput("initial covariance is not positive semidefinite")
    return InitialLaw(mean, cov)


@dataclass(frozen=True)
class LinearGaussianParams:
    A: np.ndarray
    B: np.ndarray
    H: np.ndarray
    mean0: np.ndarray
    cov0: np.ndarray


class OperatorOracle:
    """Evaluates ``L^alpha h_i`` and ``L^alpha <h, h>`` at states ``x``.

    Component indices ``i`` are zero-based. Subclasses implement ``_sensor``
    and ``_hh``; range and order checks happen here.
    """

    max_order = 0

    def __init__(self, d_V, d_Y):
        self.d_V = d_V
        self.d_Y = d_Y

    def _check(self, alpha):
        alpha = tuple(alpha)
        if any(a < 0 or a > self.d_V for a in alpha):
            raise RejectedInput(f"multi-index {alpha} has entries outside 0..{self.d_V}")
        if len(alpha) > self.max_order:
            raise CapabilityError(
                f"|alpha| = {len(alpha)} exceeds the oracle's max_order {self.max_order}")
        return alpha

    def apply_to_sensor(self, alpha, i, x):
        alpha = self._check(alpha)
        if not 0 <= i < self.d_Y:
            raise RejectedInput(f"sensor component {i} outside 0..{self.d_Y - 1}")
        return self._sensor(alpha, i, np.asarray(x, dtype=float))

    def apply_to_hh(self, alpha, x):
        return self._hh(self._check(alpha), np.asarray(x, dtype=float))

    def sensor_table(self, alphas, x):
        """``L^alpha h_i(x)`` for every alpha in ``alphas``; shape (..., len(alphas), d_Y)."""
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (len(alphas), self.d_Y))
        for a, alpha in enumerate(alphas):
            for i in range(self.d_Y):
                out[..., a, i] = self.apply_to_sensor(alpha, i, x)
        return out

    def hh_table(self, alphas, x):
        x = np.asarray(x, dtype=float)
        out = np.empty(x.shape[:-1] + (len(alphas),))
        for a, alpha in enumerate(alphas):
            out[..., a] = self.apply_to_hh(alpha, x)
        return out

    def coefficient_tables(self, alphas, x):
        """``(sensor_table, hh_table)`` in one call; subclasses may share work."""
        return self.sensor_table(alphas, x), self.hh_table(alphas, x)

    def _sensor(self, alpha, i, x):
        raise NotImplementedError

    def _hh(self, alpha, x):
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class ModelSpec:
    name: str
    d_X: int
    d_V: int
    d_Y: int
    drift: object
    diffusion: object
    sensor: object
    initial_law: InitialLaw
    operator_oracle: OperatorOracle | None = None
    linear_gaussian_params: LinearGaussianParams | None = None
    params: dict = field(default_factory=dict)

    def hh(self, x):
        return np.sum(self.sensor(x) ** 2, axis=-1)

    @property
    def oracle(self):
        if self.operator_oracle is None:
            return FiniteDifferenceOracle(self)
        return self.operator_oracle


def eval_coefficients(model, x):
    """Return ``(f(x), sigma(x), h(x))`` for a single state or a batch."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != model.d_X:
        raise RejectedInput(f"state must have trailing dimension d_X={model.d_X}, got shape {x.shape}")
    return model.drift(x), model.diffusion(x), model.sensor(x)


def apply_operator(oracle, alpha, target, x):
    """``L^alpha h_i(x)`` when ``target`` is an int ``i``, ``L^alpha <h,h>(x)`` when it is ``"hh"``."""
    if target == "hh":
        return oracle.apply_to_hh(alpha, x)
    return oracle.apply_to_sensor(alpha, int(target), x)


# --------------------------------------------------------------------------
# linear-Gaussian models: polynomial recursion

def _lin_apply(alpha, c, d, A, B):
    """L^alpha of the affine map x -> c.x + d, returned as a new (c, d)."""
    for r in reversed(alpha):
        if r == 0:
            c, d = A.T @ c, 0.0
        else:
            c, d = np.zeros_like(c), float(c @ B[:, r - 1])
    return c, d


def _quad_apply(alpha, Q, c, d, A, B):
    """L^alpha of x -> x^T Q x + c.x + d with Q symmetric."""
    for r in reversed(alpha):
        if r == 0:
            Q, c, d = A.T @ Q + Q @ A, A.T @ c, float(np.trace(B @ B.T @ Q))
        else:
            b = B[:, r - 1]
            Q, c, d = np.zeros_like(Q), 2.0 * Q @ b, float(b @ c)
    return Q, c, d


class LinearGaussianOracle(OperatorOracle):
    max_order = 16

    def __init__(self, A, B, H):
        super().__init__(B.shape[1], H.shape[0])
        self.A, self.B, self.H = A, B, H

    def _sensor(self, alpha, i, x):
        c, d = _lin_apply(alpha, self.H[i].copy(), 0.0, self.A, self.B)
        return x @ c + d

    def _hh(self, alpha, x):
        Q, c, d = _quad_apply(alpha, self.H.T @ self.H, np.zeros(self.A.shape[0]), 0.0,
                              self.A, self.B)
        return np.einsum("...k,kl,...l->...", x, Q, x) + x @ c + d


def linear_gaussian(A, B, H, initial_law, name="linear_gaussian"):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    d_X = A.shape[0]
    if A.shape != (d_X, d_X) or B.shape[0] != d_X or H.shape[1] != d_X:
        raise RejectedInput("inconsistent linear-Gaussian matrix shapes")
    if len(initial_law.mean) != d_X:
        raise RejectedInput("initial law dimension does not match d_X")
    cov0 = initial_law.cov if initial_law.cov is not None else np.zeros((d_X, d_X))

    def drift(x):
        return np.asarray(x) @ A.T

    def diffusion(x):
        x = np.asarray(x)
        return np.broadcast_to(B, x.shape[:-1] + B.shape)

    def sensor(x):
        return np.asarray(x) @ H.T

    return ModelSpec(
        name=name, d_X=d_X, d_V=B.shape[1], d_Y=H.shape[0],
        drift=drift, diffusion=diffusion, sensor=sensor, initial_law=initial_law,
        operator_oracle=LinearGaussianOracle(A, B, H),
        linear_gaussian_params=LinearGaussianParams(A, B, H, initial_law.mean.copy(), cov0),
    )


# --------------------------------------------------------------------------
# scalar models: derivative jets
#
# A jet is an array J with J[n] = n-th derivative at x, n = 0..K, carried
# over arbitrary trailing shape.

def jet_mul(a, b):
    K = min(len(a), len(b)) - 1
    out = np.zeros((K + 1,) + np.broadcast_shapes(a.shape[1:], b.shape[1:]))
    for n in range(K + 1):
        for k in range(n + 1):
            out[n] += comb(n, k) * a[k] * b[n - k]
    return out


def jet_deriv(a):
    return a[1:]


def _scalar_L(r, g, f_jet, sigma_jet, ss_jet):
    if r == 0:
        second = 0.5 * jet_mul(ss_jet, jet_deriv(jet_deriv(g)))
        return jet_mul(f_jet, jet_deriv(g))[:len(second)] + second
    return jet_mul(sigma_jet, jet_deriv(g))


def _alpha_weight(alpha):
    return sum(2 if a == 0 else 1 for a in alpha)


def tanh_jet(x, K):
    """Derivatives of tanh as polynomials in t = tanh(x): d/dx P(t) = P'(t)(1 - t^2)."""
    t = np.tanh(x)
    poly = np.polynomial.Polynomial([0.0, 1.0])
    one_minus = np.polynomial.Polynomial([1.0, 0.0, -1.0])
    out = np.empty((K + 1,) + np.shape(x))
    for n in range(K + 1):
        out[n] = poly(t)
        poly = poly.deriv() * one_minus
    return out


def lorentz_jet(x, K):
    """Derivatives of u = 1/(1+x^2) from (1+x^2) u^(n) + 2n x u^(n-1) + n(n-1) u^(n-2) = 0."""
    x = np.asarray(x, dtype=float)
    q = 1.0 + x * x
    out = np.empty((K + 1,) + x.shape)
    out[0] = 1.0 / q
    for n in range(1, K + 1):
        acc = 2.0 * n * x * out[n - 1]
        if n >= 2:
            acc = acc + n * (n - 1) * out[n - 2]
        out[n] = -acc / q
    return out


class ScalarJetOracle(OperatorOracle):
    """Closed-form L^alpha for d_X = d_V = 1 from hand-coded derivative jets.

    ``coefficient_jets(x, K)`` must return jets ``(f, sigma, h_list)`` of order K,
    ``h_list`` holding one jet per sensor component.
    """

    def __init__(self, coefficient_jets, d_Y, max_order):
        super().__init__(1, d_Y)
        self.coefficient_jets = coefficient_jets
        self.max_order = max_order

    def _jets(self, x, K):
        f_jet, s_jet, h_jets = self.coefficient_jets(x, K)
        return f_jet, s_jet, jet_mul(s_jet, s_jet), h_jets

    def _apply(self, alpha, g, jets):
        f_jet, s_jet, ss_jet, _ = jets
        for r in reversed(alpha):
            g = _scalar_L(r, g, f_jet, s_jet, ss_jet)
        return g[0]

    def _sensor(self, alpha, i, x):
        jets = self._jets(x[..., 0], _alpha_weight(alpha))
        return self._apply(alpha, jets[3][i], jets)

    def _hh(self, alpha, x):
        jets = self._jets(x[..., 0], _alpha_weight(alpha))
        return self._apply(alpha, sum(jet_mul(h, h) for h in jets[3]), jets)

    def sensor_table(self, alphas, x):
        alphas = [self._check(a) for a in alphas]
        x = np.asarray(x, dtype=float)
        jets = self._jets(x[..., 0], max(map(_alpha_weight, alphas), default=0))
        out = np.empty(x.shape[:-1] + (len(alphas), self.d_Y))
        for a, alpha in enumerate(alphas):
            for i in range(self.d_Y):
                out[..., a, i] = self._apply(alpha, jets[3][i], jets)
        return out

    def hh_table(self, alphas, x):
        return self.coefficient_tables(alphas, x)[1]

    def coefficient_tables(self, alphas, x):
        alphas = [self._check(a) for a in alphas]
        x = np.asarray(x, dtype=float)
        jets = self._jets(x[..., 0], max(map(_alpha_weight, alphas), default=0))
        hh = sum(jet_mul(h, h) for h in jets[3])
        sensor = np.empty(x.shape[:-1] + (len(alphas), self.d_Y))
        hh_out = np.empty(x.shape[:-1] + (len(alphas),))
        for a, alpha in enumerate(alphas):
            for i in range(self.d_Y):
                sensor[..., a, i] = self._apply(alpha, jets[3][i], jets)
            hh_out[..., a] = self._apply(alpha, hh, jets)
        return sensor, hh_out


def bounded_sensor(initial_law, gain=1.0, name="bounded_sensor"):
    """f(x) = -x/(1+x^2), sigma(x) = 1 + 1/(2(1+x^2)), h(x) = gain * tanh(x)."""
    if len(initial_law.mean) != 1:
        raise RejectedInput("bounded_sensor is scalar; initial law must be 1-dimensional")

    def drift(x):
        x = np.asarray(x)
        return -x / (1.0 + x * x)

    def diffusion(x):
        x = np.asarray(x)
        return (1.0 + 0.5 / (1.0 + x * x))[..., None]

    def sensor(x):
        return gain * np.tanh(np.asarray(x))

    def jets(x, K):
        u = lorentz_jet(x, K)
        f = np.empty_like(u)
        f[0] = -x * u[0]
        for n in range(1, K + 1):
            f[n] = -(x * u[n] + n * u[n - 1])
        s = 0.5 * u
        s[0] += 1.0
        return f, s, [gain * tanh_jet(x, K)]

    return ModelSpec(
        name=name, d_X=1, d_V=1, d_Y=1, drift=drift, diffusion=diffusion, sensor=sensor,
        initial_law=initial_law, operator_oracle=ScalarJetOracle(jets, 1, max_order=4),
        params={"gain": gain},
    )


# --------------------------------------------------------------------------
# generic fallback: nested central differences

def _fd_grad_hess(g, x, h, need_hess):
    """Fourth-order central differences; ``h`` has the shape of ``x``."""
    d = x.shape[-1]
    grad = np.empty(x.shape)
    hess = np.empty(x.shape + (d,)) if need_hess else None
    g0 = g(x) if need_hess else None
    for k in range(d):
        e = np.zeros(x.shape)
        e[..., k] = h[..., k]
        gp1, gm1, gp2, gm2 = g(x + e), g(x - e), g(x + 2 * e), g(x - 2 * e)
        grad[..., k] = (8.0 * (gp1 - gm1) - (gp2 - gm2)) / (12.0 * h[..., k])
        if need_hess:
            hess[..., k, k] = (16.0 * (gp1 + gm1) - (gp2 + gm2) - 30.0 * g0) / (12.0 * h[..., k] ** 2)
    if need_hess:
        for k in range(d):
            for l in range(k + 1, d):
                v = np.zeros(x.shape)
                w = np.zeros(x.shape)
                v[..., k] = w[..., k] = h[..., k]
                v[..., l] = h[..., l]
                w[..., l] = -h[..., l]

                def second(u):
                    return (16.0 * (g(x + u) + g(x - u)) - (g(x + 2 * u) + g(x - 2 * u))
                            - 30.0 * g0) / 12.0

                hess[..., k, l] = hess[..., l, k] = (second(v) - second(w)) / (
                    4.0 * h[..., k] * h[..., l])
    return grad, hess


def fd_apply(model, alpha, g, x, base_step=None):
    """L^alpha g(x) by recursive central differences of the coefficient functions.

    The step is ``base_step * (1 + |x_k|)``; by default ``base_step`` is
    ``eps ** (1 / (D + 4))`` with D the total derivative order of alpha, which
    balances the fourth-order truncation against round-off amplification.
    """
    alpha = tuple(alpha)
    x = np.asarray(x, dtype=float)
    if not alpha:
        return g(x)
    if base_step is None:
        base_step = EPS ** (1.0 / (_alpha_weight(alpha) + 4))
    r, rest = alpha[0], alpha[1:]

    def inner(z):
        return fd_apply(model, rest, g, z, base_step)

    h = base_step * (1.0 + np.abs(x))
    grad, hess = _fd_grad_hess(inner, x, h, need_hess=(r == 0))
    sig = model.diffusion(x)
    if r == 0:
        return (np.einsum("...k,...k->...", model.drift(x), grad)
                + 0.5 * np.einsum("...kr,...lr,...kl->...", sig, sig, hess))
    return np.einsum("...k,...k->...", sig[..., r - 1], grad)


class FiniteDifferenceOracle(OperatorOracle):
    max_order = 2

    def __init__(self, model, max_order=2):
        super().__init__(model.d_V, model.d_Y)
        self.model = model
        self.max_order = max_order

    def _sensor(self, alpha, i, x):
        return fd_apply(self.model, alpha, lambda z: self.model.sensor(z)[..., i], x)

    def _hh(self, alpha, x):
        return fd_apply(self.model, alpha, self.model.hh, x)


def with_fd_oracle(model, max_order=2):
    """Copy of ``model`` whose operator oracle is the finite-difference fallback."""
    from dataclasses import replace
    return replace(model, operator_oracle=FiniteDifferenceOracle(model, max_order))


# --------------------------------------------------------------------------
# registry used by configuration files

def _initial_law_from(params, d_X):
    spec = params.get("x0", {"kind": "point", "value": [0.0] * d_X})
    if isinstance(spec, (int, float)):
        return point_mass([float(spec)] * d_X)
    kind = spec.get("kind", "point")
    if kind == "point":
        return point_mass(spec.get("value", [0.0] * d_X))
    if kind == "gaussian":
        mean = np.atleast_1d(np.asarray(spec.get("mean", [0.0] * d_X), dtype=float))
        cov = spec.get("cov", spec.get("var", 1.0))
        cov = np.asarray(cov, dtype=float)
        if cov.ndim < 2:
            cov = np.diag(np.broadcast_to(cov, mean.shape))
        return gaussian(mean, cov)
    raise RejectedInput(f"unknown initial law kind {kind!r}")


def make_model(name, params=None):
    """Build a shipped model from its registry name and parameter block.

    ``linear_gaussian`` takes scalars ``a, b, c`` or matrices ``A, B, H``;
    ``linear_gaussian_2d`` defaults to a damped rotation observed in its
    first coordinate; ``bounded_sensor`` takes an optional ``gain``. All take
    ``x0`` as ``{"kind": "point", "value": [...]}`` or
    ``{"kind": "gaussian", "mean": [...], "cov": ...}``.
    """
    params = dict(params or {})
    if name == "linear_gaussian":
        if "A" in params:
            A = np.atleast_2d(np.asarray(params["A"], dtype=float))
            B, H = params["B"], params["H"]
        else:
            A = [[float(params.get("a", -1.0))]]
            B = [[float(params.get("b", 1.0))]]
            H = [[float(params.get("c", 1.0))]]
        A = np.atleast_2d(np.asarray(A, dtype=float))
        law = _initial_law_from(params, A.shape[0])
        m = linear_gaussian(A, B, H, law, name=name)
    elif name == "linear_gaussian_2d":
        A = params.get("A", [[-1.0, 1.0], [-1.0, -1.0]])
        B = params.get("B", [[1.0, 0.0], [0.0, 0.5]])
        H = params.get("H", [[1.0, 0.0]])
        law = _initial_law_from(params, 2)
        m = linear_gaussian(A, B, H, law, name=name)
    elif name == "bounded_sensor":
        law = _initial_law_from(params, 1)
        m = bounded_sensor(law, gain=float(params.get("gain", 1.0)), name=name)
    else:
        raise RejectedInput(f"unknown model {name!r}")
    return m
