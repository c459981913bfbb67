"""Constructive two-layer approximation of sine-series functions.

A function ``u(x) = sum_k u_hat(k) prod_j sin(k_j pi x_j)`` on ``(0,1)^d``
vanishes on the boundary, and ``u / phi`` (``phi`` the sine cutoff) has a
finite cosine/sine expansion.  Three constructions approximate ``u`` by
``phi * v`` with ``v`` a shallow network:

* :func:`maurey_sample`: ``m`` i.i.d. trigonometric atoms, equal weights.
* :func:`relu_pipeline`: each trigonometric ridge profile is replaced by
  its piecewise-linear ReLU interpolant (:func:`relu_interpolate`) before
  sampling single neurons.
* :func:`softplus_pipeline`: the same with scaled Softplus activations
  (:func:`softplus_replace`).

:func:`h1_error` measures ``||u - phi v||_{H^1}`` by tensor quadrature.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .cutoff import make_cutoff
from .net import TrialFn, TwoLayerNet
from .problem import Domain, make_rng
from .quadrature import tensor_gauss_legendre

H1_NODES = 64
H1_CHUNK_ENTRIES = 4_000_000


# ---------------------------------------------------------------------------
# Series types
# ---------------------------------------------------------------------------


class SineSeries:
    """Finite sine series ``u(x) = sum_k c_k prod_j sin(k_j pi x_j)`` on ``(0,1)^d``.

    Args:
        coefficients: Mapping from positive integer multi-indices to
            coefficients.  Zero coefficients are dropped.
    """

    def __init__(self, coefficients: Mapping[tuple, float]):
        items = {}
        dim = None
        for k, c in coefficients.items():
            k = tuple(int(v) for v in k)
            if dim is None:
                dim = len(k)
            if len(k) != dim:
                raise ValueError("multi-indices must share one dimension")
            if min(k) < 1:
                raise ValueError(f"sine multi-indices must be positive, got {k}")
            if c != 0:
                items[k] = items.get(k, 0.0) + float(c)
        if dim is None:
            raise ValueError("empty series")
        self.coefficients = {k: c for k, c in items.items() if c != 0}
        self.dim = dim

    def __len__(self) -> int:
        return len(self.coefficients)

    def evaluate(self, x: np.ndarray):
        """``(u, grad u)`` at points ``(n, d)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        val = np.zeros(n)
        grad = np.zeros((n, d))
        for k, c in self.coefficients.items():
            karr = np.asarray(k, dtype=float)
            arg = np.pi * x * karr
            s, co = np.sin(arg), np.cos(arg)
            prod = np.prod(s, axis=1)
            val += c * prod
            for j in range(d):
                others = np.prod(np.delete(s, j, axis=1), axis=1)
                grad[:, j] += c * np.pi * karr[j] * co[:, j] * others
        return val, grad

    def value(self, x):
        return self.evaluate(x)[0]

    def __call__(self, x):
        return self.value(x)

    @classmethod
    def from_rows(cls, rows) -> "SineSeries":
        """Build from rows ``(k_1, ..., k_d, coefficient)``."""
        return cls({tuple(int(v) for v in row[:-1]): float(row[-1]) for row in rows})


def barron_norm(u: SineSeries, s: float) -> float:
    """``sum_k (1 + pi^s |k|_1^s) |u_hat(k)|``."""
    if s < 0:
        raise ValueError("s must be nonnegative")
    return float(sum((1.0 + math.pi ** s * sum(k) ** s) * abs(c) for k, c in u.coefficients.items()))


class CosSinSeries:
    """Series ``sum_{(k,i)} v(k,i) cos(k_i pi x_i) prod_{j != i} sin(k_j pi x_j)``.

    Keys are ``(k, i)`` with ``k`` a nonnegative multi-index and ``i`` a
    0-based axis; ``k`` may vanish only at position ``i``.
    """

    def __init__(self, coefficients: Mapping[tuple, float], dim: int):
        self.dim = dim
        self.coefficients = {}
        for (k, i), c in coefficients.items():
            k = tuple(int(v) for v in k)
            if len(k) != dim or not 0 <= i < dim:
                raise ValueError(f"bad key {(k, i)}")
            if any(k[j] < 1 for j in range(dim) if j != i) or k[i] < 0:
                raise ValueError(f"multi-index {k} may be zero only at axis {i}")
            if c != 0:
                self.coefficients[(k, i)] = float(c)

    def __len__(self) -> int:
        return len(self.coefficients)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x.shape[0])
        for (k, i), c in self.coefficients.items():
            arg = np.pi * x * np.asarray(k, dtype=float)
            factors = np.sin(arg)
            factors[:, i] = np.cos(arg[:, i])
            out += c * np.prod(factors, axis=1)
        return out

    def weighted_sum(self, s: float) -> float:
        """``sum (1 + pi^s |k|_1^s) |v(k,i)|``."""
        return float(sum((1.0 + math.pi ** s * sum(k) ** s) * abs(c) for (k, _), c in self.coefficients.items()))


def expand_over_cutoff(u: SineSeries) -> CosSinSeries:
    """Expansion of ``u / phi`` for the sine cutoff ``phi``.

    Uses ``sin(m pi t) / sin(pi t) = sum_{r} (1 + [r >= 1]) cos(r pi t)`` over
    ``r = m-1, m-3, ... >= 0``, applied along each axis of each term.
    """
    out: dict[tuple, float] = {}
    d = u.dim
    for k, c in u.coefficients.items():
        for i in range(d):
            for r in range(k[i] - 1, -1, -2):
                key = (k[:i] + (r,) + k[i + 1:], i)
                out[key] = out.get(key, 0.0) + (2.0 if r >= 1 else 1.0) * c
    return CosSinSeries(out, d)


def coefficient_bound_factor(dim: int, s: float) -> float:
    """``1 + 2 d / (pi s)``, the factor relating ``u``'s norm to ``v``'s weighted sum."""
    return 1.0 + 2.0 * dim / (math.pi * s)


# ---------------------------------------------------------------------------
# Trigonometric atoms
# ---------------------------------------------------------------------------


def _sign_vectors(d: int) -> np.ndarray:
    return np.array(list(itertools.product((1, -1), repeat=d)), dtype=float)


def _parity_feature(k: np.ndarray, i: int, xi: np.ndarray, theta: int):
    """Frequency vector, activation and phase ``b in {0,1}`` of one cosine term.

    The term ``cos(pi (k_xi . x - S/2 + theta))``, ``S = sum_{j != i} xi_j``,
    is rewritten as ``cos(pi (w . x + b))`` for odd ``d`` and
    ``sin(pi (w . x + b))`` for even ``d``.
    """
    w = xi * k
    S = int(round(xi.sum() - xi[i]))
    d = k.shape[0]
    if d % 2 == 1:
        p = -S // 2 + theta
        return w, "cos", float(p % 2)
    q = (-S - 1) // 2 + theta     # -S/2 + theta = q + 1/2
    return w, "sin", float((q + 1) % 2)


@dataclass
class AtomTable:
    """Sampling measure over ``(k, i)`` for a cosine/sine series."""

    keys: list
    probs: np.ndarray
    signs: np.ndarray
    weights: np.ndarray        # 1 + pi^s |k|_1^s
    total: float               # Z_v
    dim: int
    s: float


def atom_table(v: CosSinSeries, s: float) -> AtomTable:
    if len(v) == 0:
        raise ValueError("empty series")
    keys = sorted(v.coefficients)
    coef = np.array([v.coefficients[key] for key in keys])
    weights = np.array([1.0 + math.pi ** s * sum(k) ** s for k, _ in keys])
    mass = np.abs(coef) * weights
    total = float(mass.sum())
    return AtomTable(keys, mass / total, np.sign(coef), weights, total, v.dim, s)


def _cosine_neurons(table: AtomTable, index: int, scale: float):
    (k, i) = table.keys[index]
    karr = np.asarray(k, dtype=float)
    theta = 0 if table.signs[index] > 0 else 1
    amp = scale * table.total / table.weights[index] / 2 ** table.dim
    feats = [_parity_feature(karr, i, xi, theta) for xi in _sign_vectors(table.dim)]
    return [(amp, w, act, b) for (w, act, b) in feats]


def maurey_sample(u: SineSeries, s: float, m: int, seed: int) -> TwoLayerNet:
    """Average of ``m`` i.i.d. trigonometric atoms approximating ``u / phi``.

    Atoms ``(k, i)`` are drawn with probability proportional to
    ``|v(k,i)| (1 + pi^s |k|_1^s)``; each contributes its ``2^d`` ridge
    terms with coefficient ``Z_v / ((1 + pi^s |k|_1^s) 2^d m)``.

    Returns:
        A trigonometric :class:`TwoLayerNet` (``cos`` features for odd ``d``,
        ``sin`` for even ``d``) with ``2^d m`` neurons and ``c = 0``.
    """
    if m < 1:
        raise ValueError("m must be positive")
    table = atom_table(expand_over_cutoff(u), s)
    rng = make_rng(seed, 31)
    draws = rng.choice(len(table.keys), size=m, p=table.probs)
    gammas, weights, biases = [], [], []
    activation = "cos" if table.dim % 2 == 1 else "sin"
    for idx in draws:
        for amp, w, act, b in _cosine_neurons(table, int(idx), 1.0 / m):
            assert act == activation
            gammas.append(amp)
            weights.append(w)
            biases.append(b)
    return TwoLayerNet(0.0, np.array(gammas), np.array(weights), np.array(biases), activation=activation)


def network_budget(u: SineSeries, s: float) -> float:
    """``B = (1 + 2d / (pi s)) ||u||_{B^s}``."""
    return coefficient_bound_factor(u.dim, s) * barron_norm(u, s)


# ---------------------------------------------------------------------------
# Univariate ReLU / Softplus interpolation
# ---------------------------------------------------------------------------


@dataclass
class UnivariatePiece:
    """Ridge profile ``g(z) = A f(pi (F z + b))`` on ``[-1, 1]``.

    ``f`` is ``cos`` or ``sin`` (``parity``); ``rho`` is a point with
    ``g'(rho) = 0``; ``bound`` bounds ``|g|``, ``|g'|`` and ``|g''|``.
    """

    amplitude: float
    frequency: float
    phase: float
    parity: str

    @property
    def rho(self) -> float:
        if self.frequency == 0 or self.parity == "cos":
            # cos(pi (F z + b)) with integer b is stationary at z = 0.
            return 0.0
        return 1.0 / (2.0 * self.frequency)

    @property
    def bound(self) -> float:
        pf = math.pi * self.frequency
        return abs(self.amplitude) * max(1.0, pf, pf * pf)

    def __call__(self, z):
        arg = np.pi * (self.frequency * np.asarray(z, dtype=float) + self.phase)
        return self.amplitude * (np.cos(arg) if self.parity == "cos" else np.sin(arg))

    def derivative(self, z):
        arg = np.pi * (self.frequency * np.asarray(z, dtype=float) + self.phase)
        scale = self.amplitude * np.pi * self.frequency
        return -scale * np.sin(arg) if self.parity == "cos" else scale * np.cos(arg)


@dataclass
class CallablePiece:
    """Generic profile with a user-supplied stationary point and bound."""

    func: object
    deriv: object
    rho: float
    bound: float

    def __call__(self, z):
        return self.func(np.asarray(z, dtype=float))

    def derivative(self, z):
        return self.deriv(np.asarray(z, dtype=float))


def interpolation_grid(rho: float, m: int) -> np.ndarray:
    """Knots ``z_0 = -1 < ... < z_m = rho < ... < z_{2m} = 1``."""
    left = np.linspace(-1.0, rho, m + 1)
    right = np.linspace(rho, 1.0, m + 1)
    return np.concatenate([left, right[1:]])


def relu_interpolate(g, m: int) -> TwoLayerNet:
    """Piecewise-linear interpolant of ``g`` as a one-input ReLU network.

    ``g_m(z) = c + sum_{i<=m} a_i ReLU(z_i - z) + sum_{i>m} a_i ReLU(z - z_{i-1})``
    with ``c = g(rho)``.  The first-order coefficients next to ``rho`` are
    one-sided slopes and the rest are second differences over the step.

    Returns:
        A constrained :class:`TwoLayerNet` of input dimension 1 and width
        ``2m`` with budget ``g.bound``.
    """
    if m < 1:
        raise ValueError("m must be positive")
    rho = float(g.rho)
    z = interpolation_grid(rho, m)
    gv = np.asarray(g(z), dtype=float)
    h1 = (rho + 1.0) / m
    h2 = (1.0 - rho) / m
    a = np.zeros(2 * m + 1)          # 1-based: a[1..2m]
    a[m + 1] = (gv[m + 1] - gv[m]) / h2
    a[m] = (gv[m - 1] - gv[m]) / h1
    for i in range(m + 2, 2 * m + 1):
        a[i] = (gv[i] - 2.0 * gv[i - 1] + gv[i - 2]) / h2
    for i in range(1, m):
        a[i] = (gv[i - 1] - 2.0 * gv[i] + gv[i + 1]) / h1
    coeffs = a[1:]
    weights = np.concatenate([-np.ones(m), np.ones(m)])[:, None]
    biases = np.concatenate([z[1:m + 1], -z[m:2 * m]])
    return TwoLayerNet(float(gv[m]), coeffs, weights, biases, activation="relu",
                       budget=float(g.bound), constrained=True)


def softplus_replace(g_m: TwoLayerNet, tau: float) -> TwoLayerNet:
    """Same coefficients as ``g_m`` with ``ReLU`` replaced by ``SP_tau``."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return TwoLayerNet(g_m.c, g_m.gammas.copy(), g_m.weights.copy(), g_m.biases.copy(),
                       activation="softplus", tau=float(tau), budget=g_m.budget,
                       constrained=g_m.constrained, relaxed=g_m.relaxed)


def w1inf_error(g, g_net: TwoLayerNet, n_grid: int = 10_000) -> float:
    """``sup|g - g_net| + sup|g' - g_net'|`` on a uniform grid of ``[-1, 1]``."""
    z = np.linspace(-1.0, 1.0, n_grid)
    vals, grads, _ = g_net.forward(z[:, None])
    return float(np.max(np.abs(g(z) - vals)) + np.max(np.abs(g.derivative(z) - grads[:, 0])))


# ---------------------------------------------------------------------------
# ReLU / Softplus pipelines
# ---------------------------------------------------------------------------


def _ridge_profile(table: AtomTable, index: int, xi: np.ndarray):
    (k, i) = table.keys[index]
    karr = np.asarray(k, dtype=float)
    theta = 0 if table.signs[index] > 0 else 1
    w, act, b = _parity_feature(karr, i, xi, theta)
    freq = float(np.abs(karr).sum())
    amp = table.total / table.weights[index]
    if freq == 0:
        # Constant atom (d = 1, k = 0): f(pi b) with b in {0, 1}.
        const = amp * (np.cos(np.pi * b) if act == "cos" else np.sin(np.pi * b))
        return np.zeros_like(w), UnivariatePiece(const, 0.0, 0.0, "cos")
    return w / freq, UnivariatePiece(amp, freq, b, act)


def _ridge_pipeline(u: SineSeries, s: float, m: int, seed: int, activation: str,
                    tau: float | None = None, resolution: int | None = None) -> TwoLayerNet:
    """Sample ``m`` single-neuron atoms from the interpolated ridge profiles."""
    if s < 3:
        raise ValueError("the ReLU/Softplus constructions need s >= 3")
    if m < 1:
        raise ValueError("m must be positive")
    resolution = m if resolution is None else resolution
    table = atom_table(expand_over_cutoff(u), s - 1)
    d = table.dim
    signs = _sign_vectors(d)
    rng = make_rng(seed, 37)
    atom_idx = rng.choice(len(table.keys), size=m, p=table.probs)
    xi_idx = rng.integers(0, signs.shape[0], size=m)
    piece_u = rng.random(m)
    cache: dict = {}
    consts = np.empty(m)
    gammas = np.empty(m)
    weights = np.empty((m, d))
    biases = np.empty(m)
    for t in range(m):
        key = (int(atom_idx[t]), int(xi_idx[t]))
        if key not in cache:
            w, piece = _ridge_profile(table, key[0], signs[key[1]])
            if piece.frequency == 0:
                cache[key] = (w, piece.amplitude, None)
            else:
                cache[key] = (w, None, relu_interpolate(piece, resolution))
        w, const, gnet = cache[key]
        if gnet is None:
            consts[t] = const
            gammas[t] = 0.0
            weights[t] = np.full(d, 1.0 / d)
            biases[t] = 0.0
            continue
        mass = np.abs(gnet.gammas)
        total = mass.sum()
        consts[t] = gnet.c
        if total == 0:
            gammas[t] = 0.0
            weights[t] = np.full(d, 1.0 / d)
            biases[t] = 0.0
            continue
        j = min(int(np.searchsorted(np.cumsum(mass) / total, piece_u[t], side="right")), mass.size - 1)
        gammas[t] = total * np.sign(gnet.gammas[j]) / m
        weights[t] = gnet.weights[j, 0] * w
        biases[t] = gnet.biases[j]
    budget = network_budget(u, s)
    kwargs = dict(activation=activation, budget=budget, constrained=True)
    if tau is not None:
        kwargs["tau"] = tau
    return TwoLayerNet(float(consts.mean()), gammas, weights, biases, **kwargs)


def relu_pipeline(u: SineSeries, s: float, m: int, seed: int, resolution: int | None = None) -> TwoLayerNet:
    """ReLU network with ``m`` neurons approximating ``u / phi`` (``u`` in ``B^s``, ``s >= 3``)."""
    return _ridge_pipeline(u, s, m, seed, "relu", resolution=resolution)


def softplus_pipeline(u: SineSeries, s: float, m: int, seed: int, tau: float | None = None,
                      resolution: int | None = None) -> TwoLayerNet:
    """Softplus counterpart of :func:`relu_pipeline`; ``tau`` defaults to ``9 sqrt(m)``."""
    tau = 9.0 * math.sqrt(m) if tau is None else tau
    return _ridge_pipeline(u, s, m, seed, "softplus", tau=tau, resolution=resolution)


# ---------------------------------------------------------------------------
# H1 error
# ---------------------------------------------------------------------------


def unit_cube(dim: int) -> Domain:
    return Domain.hypercube(0.0, 1.0, dim)


def as_trial(v: TwoLayerNet) -> TrialFn:
    """``phi * v`` with the sine cutoff on the unit cube."""
    return TrialFn(v, make_cutoff("sine", unit_cube(v.dim)))


def h1_error(u: SineSeries, v, method: str = "quadrature", nodes: int = H1_NODES,
             n_points: int = 200_000, seed: int = 0):
    """``||u - v||_{H^1((0,1)^d)}`` for a trial function ``v``.

    Args:
        u: Target series.
        v: Trial function (anything with ``evaluate``); a bare
            :class:`TwoLayerNet` is multiplied by the sine cutoff first.
        method: ``"quadrature"`` (tensor Gauss-Legendre, ``nodes`` per axis)
            or ``"mc"``.

    Returns:
        The error for quadrature; ``(error, stderr)`` for Monte Carlo.
    """
    if isinstance(v, TwoLayerNet):
        v = as_trial(v)
    d = u.dim
    if method == "quadrature":
        pts, w = tensor_gauss_legendre(0.0, 1.0, d, nodes)
    elif method == "mc":
        pts = make_rng(seed, 41).random((n_points, d))
        w = np.full(n_points, 1.0 / n_points)
    else:
        raise ValueError(f"unknown method {method!r}")
    # Bounded memory for wide networks: about H1_CHUNK_ENTRIES hidden activations at once.
    width = max(getattr(getattr(v, "net", v), "width", 1), 1)
    step = max(1, H1_CHUNK_ENTRIES // (width * (d + 1)))
    dens = np.empty(len(pts))
    for lo in range(0, len(pts), step):
        chunk = pts[lo:lo + step]
        uv, ug = u.evaluate(chunk)
        vv, vg = v.evaluate(chunk)
        dens[lo:lo + step] = (uv - vv) ** 2 + np.sum((ug - vg) ** 2, axis=1)
    err = float(math.sqrt(max(w @ dens, 0.0)))
    if method == "quadrature":
        return err
    stderr = float(np.std(dens) / math.sqrt(n_points) / (2 * err)) if err > 0 else 0.0
    return err, stderr


def fit_loglog_slope(ms, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(m)``."""
    return float(np.polyfit(np.log(np.asarray(ms, float)), np.log(np.asarray(errors, float)), 1)[0])
