"""Cut-off functions that vanish on the boundary, with exact gradients.

A trial function ``u = phi * N`` inherits homogeneous Dirichlet data from
``phi``.  Two algebraic families cover the hypercube kinds:

* product forms ``phi = prod_i s(x_i)``
* reciprocal forms ``phi = (sum_i 1 / s(x_i))^{-1}``

where ``s`` is a one-dimensional profile vanishing at both ends.  For the
reciprocal forms the gradient is evaluated in the quotient form
``d phi / d x_i = s'(x_i) * (P_i / S)^2`` with ``P_i = prod_{j != i} s(x_j)``
and ``S = sum_l P_l``.  This avoids dividing by ``s(x_i)`` and stays finite
next to a face.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .problem import Domain, sample_interior

FACE_GUARD = 1e-12

CUTOFF_NAMES = ("sine", "phi_a", "phi_b", "phi_c", "phi_d", "ball", "shell", "none")


class CutoffDomainError(ValueError):
    """Raised for a cutoff/domain mismatch or a gradient request on the boundary."""


def _profile(name: str) -> tuple[Callable, Callable]:
    half_pi = 0.5 * np.pi
    if name == "sine":
        return (lambda t: np.sin(np.pi * t)), (lambda t: np.pi * np.cos(np.pi * t))
    if name == "quadratic":
        return (lambda t: 1.0 - t * t), (lambda t: -2.0 * t)
    if name == "cosine":
        return (lambda t: np.cos(half_pi * t)), (lambda t: -half_pi * np.sin(half_pi * t))
    raise ValueError(name)


# name -> (profile, combination, required (lo, hi))
_HYPERCUBE_KINDS = {
    "sine": ("sine", "reciprocal", (0.0, 1.0)),
    "phi_a": ("quadratic", "product", (-1.0, 1.0)),
    "phi_b": ("quadratic", "reciprocal", (-1.0, 1.0)),
    "phi_c": ("cosine", "product", (-1.0, 1.0)),
    "phi_d": ("cosine", "reciprocal", (-1.0, 1.0)),
}

# Long descriptive aliases accepted by :func:`make_cutoff`.
ALIASES = {
    "sine_reciprocal": "sine",
    "product_quadratic": "phi_a",
    "reciprocal_quadratic": "phi_b",
    "product_cosine": "phi_c",
    "reciprocal_cosine": "phi_d",
    "ball_quadratic": "ball",
    "shell_quadratic": "shell",
    "identity": "none",
}


def _prefix_suffix_products(s: np.ndarray) -> np.ndarray:
    """``P[:, i] = prod_{j != i} s[:, j]`` without divisions."""
    n, d = s.shape
    prefix = np.ones((n, d))
    suffix = np.ones((n, d))
    for i in range(1, d):
        prefix[:, i] = prefix[:, i - 1] * s[:, i - 1]
        suffix[:, d - 1 - i] = suffix[:, d - i] * s[:, d - i]
    return prefix * suffix


@dataclass(frozen=True)
class CutoffFn:
    """A cut-off function tied to a domain.

    Build instances with :func:`make_cutoff`.  Calling the object returns
    values; :meth:`value_and_grad` also returns the analytic gradient.
    """

    name: str
    domain: Domain

    def __post_init__(self):
        if self.name in _HYPERCUBE_KINDS:
            lo, hi = _HYPERCUBE_KINDS[self.name][2]
            if self.domain.kind != "hypercube" or (self.domain.lo, self.domain.hi) != (lo, hi):
                raise CutoffDomainError(
                    f"cutoff {self.name!r} is defined on ({lo:g},{hi:g})^d, got {self.domain.describe()}"
                )
        elif self.name == "ball":
            if self.domain.kind != "ball":
                raise CutoffDomainError(f"cutoff 'ball' needs a ball domain, got {self.domain.describe()}")
        elif self.name == "shell":
            if self.domain.kind != "shell":
                raise CutoffDomainError(f"cutoff 'shell' needs a shell domain, got {self.domain.describe()}")
        elif self.name != "none":
            raise CutoffDomainError(f"unknown cutoff {self.name!r}; expected one of {CUTOFF_NAMES}")

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def is_identity(self) -> bool:
        return self.name == "none"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Values at points ``(n, d)``; zero on and outside the boundary."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.name == "none":
            return np.ones(x.shape[0])
        if self.name in _HYPERCUBE_KINDS:
            prof, combo, _ = _HYPERCUBE_KINDS[self.name]
            s, _ = _profile(prof)
            sv = s(x)
            if combo == "product":
                val = np.prod(sv, axis=1)
            else:
                others = _prefix_suffix_products(sv)
                total = others.sum(axis=1)
                with np.errstate(invalid="ignore", divide="ignore"):
                    val = np.prod(sv, axis=1) / total
                val = np.where(total > 0, val, 0.0)
        else:
            val = self._radial(x)[0]
        return np.where(self.domain.distance_to_boundary(x) > FACE_GUARD, val, 0.0)

    def _radial(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        r2 = np.einsum("ij,ij->i", x, x)
        big = self.domain.radius ** 2
        if self.name == "ball":
            return big - r2, -2.0 * x
        small = self.domain.inner_radius ** 2
        outer = big - r2
        inner = r2 - small
        return outer * inner, (2.0 * (outer - inner))[:, None] * x

    def value_and_grad(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(n,)`` and gradients ``(n, d)`` at interior points.

        Raises:
            CutoffDomainError: for ``sine`` points within ``FACE_GUARD`` of a
                face, where the reciprocal form degenerates.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        if self.name == "none":
            return np.ones(n), np.zeros((n, d))
        if self.name in ("ball", "shell"):
            return self._radial(x)
        prof, combo, _ = _HYPERCUBE_KINDS[self.name]
        s, ds = _profile(prof)
        sv = s(x)
        dsv = ds(x)
        others = _prefix_suffix_products(sv)
        if combo == "product":
            return np.prod(sv, axis=1), dsv * others
        if self.name == "sine" and np.any(self.domain.distance_to_boundary(x) <= FACE_GUARD):
            raise CutoffDomainError("sine cutoff gradient requested within 1e-12 of a face")
        total = others.sum(axis=1)
        ratio = others / total[:, None]
        return sv[:, 0] * ratio[:, 0], dsv * ratio * ratio

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.value_and_grad(x)[1]


def make_cutoff(name: str, domain: Domain) -> CutoffFn:
    """Look up a cutoff by configuration name (or a descriptive alias)."""
    key = ALIASES.get(name, name)
    return CutoffFn(key, domain)


def eval_cutoff(phi: CutoffFn, x: np.ndarray):
    """Evaluate a cutoff with explicit boundary handling.

    Args:
        phi: The cutoff.
        x: Points, shape ``(n, d)``.

    Returns:
        ``(values, gradients, on_boundary)``.  Points on or outside the
        boundary get value 0 and a zero gradient row, and are flagged in
        ``on_boundary``.

    Raises:
        CutoffDomainError: for the ``sine`` cutoff when any point is on or
            outside the boundary.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    on_boundary = ~phi.domain.contains(x)
    if np.any(on_boundary) and phi.name == "sine":
        raise CutoffDomainError("sine cutoff cannot be differentiated on the boundary")
    values = np.zeros(x.shape[0])
    grads = np.zeros_like(x)
    inside = ~on_boundary
    if np.any(inside):
        v, g = phi.value_and_grad(x[inside])
        values[inside] = v
        grads[inside] = g
    if phi.is_identity:
        values[on_boundary] = 1.0
    return values, grads, on_boundary


@dataclass
class CutoffBoundsReport:
    """Observed extremes of a sine cutoff over a sample."""

    n: int
    min_value: float
    max_value: float
    max_grad_norm: float
    value_bound: float
    grad_bound: float
    violations: np.ndarray

    @property
    def ok(self) -> bool:
        return self.violations.shape[0] == 0


def cutoff_bounds_check(phi: CutoffFn, n: int, seed: int) -> CutoffBoundsReport:
    """Check ``0 < phi < 1/d`` and ``|grad phi| < pi`` on uniform samples.

    Only meaningful for the ``sine`` cutoff on the unit hypercube.  For
    ``d = 1`` the value bound is ``phi <= 1`` since ``phi = sin(pi x)``.
    """
    if phi.name != "sine":
        raise CutoffDomainError("bounds check applies to the sine cutoff on (0,1)^d")
    x = sample_interior(phi.domain, n, seed).points
    val, grad = phi.value_and_grad(x)
    gnorm = np.linalg.norm(grad, axis=1)
    d = phi.dim
    vbound = 1.0 / d
    bad = (val <= 0) | (gnorm >= np.pi)
    bad |= (val > vbound) if d == 1 else (val >= vbound)
    return CutoffBoundsReport(
        n=n,
        min_value=float(val.min()),
        max_value=float(val.max()),
        max_grad_norm=float(gnorm.max()),
        value_bound=vbound,
        grad_bound=float(np.pi),
        violations=x[bad],
    )

