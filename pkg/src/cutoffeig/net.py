"""Trial-function networks with exact spatial and parameter derivatives.

Two network families are provided:

* :class:`MLP`: the deep tanh network used for training.  Its forward
  pass carries forward-mode tangents for every spatial direction, and its
  backward pass differentiates both the value and those tangents with
  respect to the parameters (double backpropagation).  The arithmetic
  lives in the compiled kernel or its numpy fallback (``_backend``).
* :class:`TwoLayerNet`: shallow nets ``c + sum_i gamma_i act(w_i . x + b_i)``
  that the constructive approximation toolkit produces.

:class:`TrialFn` multiplies either network by a cutoff:
``u = phi * N`` and ``grad u = N grad phi + phi grad N``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._backend import kernels
from .cutoff import CutoffFn

PARAM_FILE_VERSION = 1


def softplus_scaled(z, tau: float):
    """Scaled Softplus ``tau^{-1} ln(1 + exp(tau z))`` in overflow-safe form."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    z = np.asarray(z, dtype=float)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-tau * np.abs(z))) / tau


def _sigmoid(t):
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


# ---------------------------------------------------------------------------
# Deep tanh MLP
# ---------------------------------------------------------------------------


class MLP:
    """Dense tanh network ``R^d -> R`` with ``depth`` hidden layers of ``width``.

    Parameters live in one flat float64 vector; the weight matrices and
    biases are views into it in the order
    ``W_1, b_1, ..., W_depth, b_depth, w_out, b_out``.

    Args:
        dim: Input dimension.
        width: Hidden width.
        depth: Number of hidden layers.
        params: Optional flat parameter vector (copied).
        init_seed: Seed recorded with the parameters (informational when
            ``params`` is given).
    """

    kind = "mlp"

    def __init__(self, dim: int, width: int = 40, depth: int = 3,
                 params: np.ndarray | None = None, init_seed: int | None = None):
        if dim < 1 or width < 1 or depth < 1:
            raise ValueError("dim, width and depth must be positive")
        self.dim = int(dim)
        self.width = int(width)
        self.depth = int(depth)
        self.init_seed = init_seed
        self.shapes = self._shapes()
        self.n_params = int(sum(int(np.prod(s)) for s in self.shapes))
        self.params = np.zeros(self.n_params)
        self._bind(self.params)
        if params is not None:
            self.set_params(params)
        self._workspace: dict = {}

    def _shapes(self):
        m, d = self.width, self.dim
        shapes = []
        for i in range(self.depth):
            shapes.append((m, d if i == 0 else m))
            shapes.append((m,))
        shapes.append((m,))
        shapes.append((1,))
        return shapes

    @staticmethod
    def _views(flat: np.ndarray, shapes):
        views = []
        offset = 0
        for shape in shapes:
            size = int(np.prod(shape))
            views.append(flat[offset:offset + size].reshape(shape))
            offset += size
        return views

    def _bind(self, flat):
        views = self._views(flat, self.shapes)
        self.weights = views[0:2 * self.depth:2]
        self.biases = views[1:2 * self.depth:2]
        self.w_out = views[-2]
        self._b_out = views[-1]

    @property
    def b_out(self) -> float:
        return float(self._b_out[0])

    @classmethod
    def initialize(cls, dim: int, width: int = 40, depth: int = 3, seed: int = 0) -> "MLP":
        """Symmetric uniform initialization ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
        from .problem import make_rng

        net = cls(dim, width, depth, init_seed=seed)
        rng = make_rng(seed, 7)
        views = cls._views(net.params, net.shapes)
        fan_ins = []
        for i in range(depth):
            fan = dim if i == 0 else width
            fan_ins += [fan, fan]
        fan_ins += [width, width]
        for view, fan in zip(views, fan_ins):
            bound = 1.0 / np.sqrt(fan)
            view[...] = rng.uniform(-bound, bound, size=view.shape)
        return net

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {flat.shape}")
        self.params[...] = flat

    def copy(self) -> "MLP":
        return MLP(self.dim, self.width, self.depth, params=self.params.copy(), init_seed=self.init_seed)

    def forward(self, x: np.ndarray, reuse_workspace: bool = False):
        """Values ``(n,)``, spatial gradients ``(n, d)`` and a backward cache.

        With ``reuse_workspace`` the compiled kernel recycles scratch
        buffers owned by this net; the returned cache is then only valid
        until the next reusing call.
        """
        x = np.ascontiguousarray(x, dtype=float)
        ws = self._workspace if reuse_workspace else None
        return kernels.mlp_forward(x, self.weights, self.biases, self.w_out, self.b_out, ws)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        return np.asarray(kernels.mlp_value(x, self.weights, self.biases, self.w_out, self.b_out))

    def backward(self, cache, alpha: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        """Gradient of ``sum_i alpha_i N(x_i) + gamma_i . grad N(x_i)`` w.r.t. params."""
        alpha = np.ascontiguousarray(alpha, dtype=float)
        gamma = np.ascontiguousarray(gamma, dtype=float)
        n, d = cache[0].shape
        if alpha.shape != (n,) or gamma.shape != (n, d):
            raise ValueError(f"sensitivity shapes {alpha.shape}, {gamma.shape} do not match batch ({n}, {d})")
        grad = np.zeros(self.n_params)
        views = self._views(grad, self.shapes)
        grad_w = views[0:2 * self.depth:2]
        grad_b = views[1:2 * self.depth:2]
        grad_out = grad[-(self.width + 1):]
        kernels.mlp_backward(cache, self.weights, self.w_out, alpha, gamma, grad_w, grad_b, grad_out)
        return grad

    def header(self) -> dict:
        return {
            "kind": self.kind, "dim": self.dim, "width": self.width, "depth": self.depth,
            "init_seed": self.init_seed, "shapes": [list(s) for s in self.shapes],
        }


# ---------------------------------------------------------------------------
# Two-layer networks
# ---------------------------------------------------------------------------

ACTIVATIONS = ("relu", "softplus", "cos", "sin")


@dataclass
class TwoLayerNet:
    """Shallow network ``N(x) = c + sum_i gamma_i act(w_i . x + b_i)``.

    ``act`` is ReLU, the scaled Softplus ``SP_tau``, or ``cos(pi z)`` /
    ``sin(pi z)`` for trigonometric features.  For ReLU/Softplus nets the
    usual offset notation ``act(w . x - t)`` corresponds to ``b = -t``.

    When ``constrained`` is set the construction validates the budget
    ``|c| <= B``, ``|w_i|_1 = 1`` (``<= 1`` if ``relaxed``), ``|b_i| <= 1`` and
    ``sum |gamma_i| <= 4B``.
    """

    c: float
    gammas: np.ndarray
    weights: np.ndarray
    biases: np.ndarray
    activation: str = "relu"
    tau: float = 1.0
    budget: float = np.inf
    constrained: bool = False
    relaxed: bool = False
    kind: str = field(default="two_layer", init=False)

    def __post_init__(self):
        self.gammas = np.asarray(self.gammas, dtype=float).reshape(-1)
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        self.biases = np.asarray(self.biases, dtype=float).reshape(-1)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        m = self.gammas.shape[0]
        if self.weights.shape[0] != m or self.biases.shape[0] != m:
            raise ValueError("gammas, weights and biases must have matching lengths")
        if self.constrained:
            problems = self.constraint_violations()
            if problems:
                raise ValueError("two-layer net violates its budget: " + "; ".join(problems))

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    @property
    def width(self) -> int:
        return self.gammas.shape[0]

    @property
    def n_params(self) -> int:
        return 1 + self.width * (self.dim + 2)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([[self.c], self.gammas, self.weights.ravel(), self.biases])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        m, d = self.width, self.dim
        self.c = float(flat[0])
        self.gammas = flat[1:1 + m].copy()
        self.weights = flat[1 + m:1 + m + m * d].reshape(m, d).copy()
        self.biases = flat[1 + m + m * d:].copy()

    def constraint_violations(self, tol: float = 1e-12) -> list[str]:
        B = self.budget
        out = []
        if abs(self.c) > B * (1 + tol):
            out.append(f"|c|={abs(self.c):.6g} > B={B:.6g}")
        l1 = np.abs(self.weights).sum(axis=1)
        if self.relaxed:
            if np.any(l1 > 1 + tol):
                out.append("some |w_i|_1 > 1")
        elif self.width and np.any(np.abs(l1 - 1) > tol):
            out.append("some |w_i|_1 != 1")
        if np.any(np.abs(self.biases) > 1 + tol):
            out.append("some |t_i| > 1")
        total = np.abs(self.gammas).sum()
        if total > 4 * B * (1 + tol):
            out.append(f"sum|gamma|={total:.6g} > 4B={4 * B:.6g}")
        return out

    def project(self) -> None:
        """Project parameters back onto the constrained set (in place)."""
        B = self.budget
        self.c = float(np.clip(self.c, -B, B))
        l1 = np.abs(self.weights).sum(axis=1, keepdims=True)
        if self.relaxed:
            self.weights = np.array([_project_l1_ball(w, 1.0) for w in self.weights])
        else:
            safe = np.where(l1 > 0, l1, 1.0)
            self.weights = np.where(l1 > 0, self.weights / safe, 1.0 / self.dim)
        self.biases = np.clip(self.biases, -1.0, 1.0)
        if np.isfinite(B):
            self.gammas = _project_l1_ball(self.gammas, 4 * B)

    def _act(self, z):
        """Activation and its first two derivatives."""
        a = self.activation
        if a == "relu":
            pos = (z > 0).astype(float)
            return np.maximum(z, 0.0), pos, np.zeros_like(z)
        if a == "softplus":
            sig = _sigmoid(self.tau * z)
            return softplus_scaled(z, self.tau), sig, self.tau * sig * (1 - sig)
        pz = np.pi * z
        c, s = np.cos(pz), np.sin(pz)
        if a == "cos":
            return c, -np.pi * s, -np.pi ** 2 * c
        return s, np.pi * c, -np.pi ** 2 * s

    def forward(self, x: np.ndarray, reuse_workspace: bool = False):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = x @ self.weights.T + self.biases
        f, f1, f2 = self._act(z)
        values = self.c + f @ self.gammas
        grads = (f1 * self.gammas) @ self.weights
        return values, grads, (x, f, f1, f2)

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.c + self._act(x @ self.weights.T + self.biases)[0] @ self.gammas

    def backward(self, cache, alpha: np.ndarray, gamma: np.ndarray) -> np.ndarray:
        x, f, f1, f2 = cache
        alpha = np.asarray(alpha, dtype=float)
        gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
        if alpha.shape != (x.shape[0],) or gamma.shape != x.shape:
            raise ValueError("sensitivity shapes do not match the batch")
        proj = gamma @ self.weights.T               # (n, m): Gamma . w_i
        g_c = alpha.sum()
        g_gamma = alpha @ f + np.sum(f1 * proj, axis=0)
        coef = (alpha[:, None] * f1 + f2 * proj) * self.gammas   # d/dz of the contribution
        g_b = coef.sum(axis=0)
        g_w = coef.T @ x + (f1 * self.gammas).T @ gamma
        return np.concatenate([[g_c], g_gamma, g_w.ravel(), g_b])

    def header(self) -> dict:
        return {
            "kind": self.kind, "dim": self.dim, "width": self.width, "activation": self.activation,
            "tau": self.tau, "budget": None if not np.isfinite(self.budget) else self.budget,
            "constrained": self.constrained, "relaxed": self.relaxed,
        }


def _project_l1_ball(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{|v|_1 <= radius}`` (sort-based)."""
    if np.abs(v).sum() <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, u.size + 1)
    rho = np.nonzero(u * idx > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


# ---------------------------------------------------------------------------
# Trial functions
# ---------------------------------------------------------------------------


class TrialFn:
    """``u(x) = phi(x) N(x; theta)`` for a network ``N`` and cutoff ``phi``."""

    def __init__(self, net, cutoff: CutoffFn):
        if net.dim != cutoff.dim:
            raise ValueError(f"net dimension {net.dim} does not match cutoff dimension {cutoff.dim}")
        self.net = net
        self.cutoff = cutoff

    @property
    def dim(self) -> int:
        return self.net.dim

    @property
    def params(self) -> np.ndarray:
        return self.net.params

    @property
    def n_params(self) -> int:
        return self.net.n_params

    def forward(self, x: np.ndarray, reuse_workspace: bool = False):
        """Values, spatial gradients and a cache for :meth:`backward`."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        phi, dphi = self.cutoff.value_and_grad(x)
        N, dN, net_cache = self.net.forward(x, reuse_workspace=reuse_workspace)
        u = phi * N
        du = N[:, None] * dphi + phi[:, None] * dN
        return u, du, (net_cache, phi, dphi)

    def evaluate(self, x: np.ndarray):
        """``(u, grad u)`` at points ``(n, d)``."""
        u, du, _ = self.forward(x)
        return u, du

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.cutoff(x) * self.net.value(x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.value(x)

    def backward(self, cache, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Parameter gradient of ``sum_i a_i u(x_i) + b_i . grad u(x_i)``."""
        net_cache, phi, dphi = cache
        a = np.asarray(a, dtype=float)
        b = np.atleast_2d(np.asarray(b, dtype=float))
        if a.shape != phi.shape or b.shape != dphi.shape:
            raise ValueError(f"sensitivity shapes {a.shape}, {b.shape} do not match batch {dphi.shape}")
        alpha = a * phi + np.einsum("ij,ij->i", b, dphi)
        gamma = phi[:, None] * b
        return self.net.backward(net_cache, alpha, gamma)

    def param_hash(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.net.params).tobytes()).hexdigest()


def forward_with_spatial_grad(u: TrialFn, x: np.ndarray):
    """``(u(x), grad u(x))`` for a trial function."""
    return u.evaluate(x)


def backward_params(u: TrialFn, cache, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Parameter gradient given value/gradient sensitivities (see :meth:`TrialFn.backward`)."""
    return u.backward(cache, a, b)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def save_params(path, net) -> None:
    """Write a net as ``.npz`` with a flat ``params`` array and a JSON ``header``."""
    header = dict(net.header(), version=PARAM_FILE_VERSION, n_params=int(net.n_params))
    with open(Path(path), "wb") as fh:
        np.savez(fh, params=np.asarray(net.params, dtype=np.float64), header=np.array(json.dumps(header, sort_keys=True)))


def load_params(path):
    """Rebuild a net written by :func:`save_params`."""
    with np.load(Path(path), allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        flat = data["params"].copy()
    if header.get("version") != PARAM_FILE_VERSION:
        raise ValueError(f"unsupported parameter file version {header.get('version')}")
    if flat.shape != (header["n_params"],):
        raise ValueError("parameter count does not match the header")
    if header["kind"] == "mlp":
        return MLP(header["dim"], header["width"], header["depth"], params=flat, init_seed=header["init_seed"])
    if header["kind"] == "two_layer":
        m, d = header["width"], header["dim"]
        budget = header["budget"] if header["budget"] is not None else np.inf
        return TwoLayerNet(
            c=float(flat[0]), gammas=flat[1:1 + m], weights=flat[1 + m:1 + m + m * d].reshape(m, d),
            biases=flat[1 + m + m * d:], activation=header["activation"], tau=header["tau"],
            budget=budget, constrained=header["constrained"], relaxed=header["relaxed"],
        )
    raise ValueError(f"unknown net kind {header['kind']!r}")
