"""Sine-Galerkin reference spectra for separable potentials.

On an interval ``(a, b)`` the basis ``e_m(x) = sin(m pi (x - a) / L)``,
``L = b - a``, diagonalizes the Laplacian.  Dividing the Galerkin system
by the common mass ``L / 2`` gives the symmetric matrix

    A[m, n] = delta_mn (m pi / L)^2 + (2 / L) * integral V e_m e_n

whose eigenpairs approximate the one-dimensional Dirichlet problem.  For
``V(x) = sum_i V_i(x_i)`` on a hypercube the d-dimensional spectrum is the
set of sums of axis eigenvalues, enumerated here in ascending order with
multiplicities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._backend import kernels
from .problem import Domain, Potential
from .quadrature import composite_gauss_legendre

CLUSTER_RTOL = 1e-9
RESIDUAL_RTOL = 1e-10


class JacobiConvergenceError(RuntimeError):
    """Raised when the Jacobi sweep cap is reached."""


class TruncationError(ValueError):
    """Raised when a requested eigenvalue needs more basis functions."""


def jacobi_eigh(A: np.ndarray, tol: float = 1e-14, max_sweeps: int = 60):
    """Symmetric eigensolve by cyclic Jacobi rotations.

    Returns:
        ``(eigenvalues, eigenvectors)`` sorted ascending; eigenvectors are
        the columns of the second array.

    Raises:
        JacobiConvergenceError: if ``max_sweeps`` sweeps do not suffice.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, rtol=0, atol=1e-13 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix must be symmetric")
    w, V, sweeps = kernels.jacobi_eigh(0.5 * (A + A.T), tol, max_sweeps)
    if sweeps < 0:
        raise JacobiConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


@dataclass
class Spectrum1D:
    """Galerkin eigenpairs on one interval.

    Attributes:
        a, b: Interval.
        eigenvalues: Ascending, shape ``(M,)``.
        coefficients: Column ``j`` holds the sine coefficients of the
            ``j``-th eigenfunction (unit Euclidean norm).
        matrix: The assembled Galerkin matrix.
    """

    a: float
    b: float
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    matrix: np.ndarray

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def trusted_size(self) -> int:
        """Number of modes treated as resolved (the lower half)."""
        return self.size // 2

    def _basis(self, t: np.ndarray):
        L = self.b - self.a
        m = np.arange(1, self.size + 1)
        arg = np.pi * np.outer(t - self.a, m) / L
        return np.sin(arg), np.cos(arg) * (np.pi * m / L)

    def eigenfunction(self, j: int, t: np.ndarray, derivative: bool = False):
        """L2-normalized eigenfunction ``j`` (0-based), optionally with its derivative."""
        scale = np.sqrt(2.0 / (self.b - self.a))
        s, ds = self._basis(np.asarray(t, dtype=float).ravel())
        c = self.coefficients[:, j]
        if derivative:
            return scale * (s @ c), scale * (ds @ c)
        return scale * (s @ c)


def solve_1d(potential_1d: Callable[[np.ndarray], np.ndarray], interval: tuple[float, float],
             M: int, Q: int | None = None) -> Spectrum1D:
    """Sine-Galerkin eigenpairs of ``-u'' + V u`` on an interval.

    Args:
        potential_1d: Vectorized ``V(t)``.
        interval: ``(a, b)``.
        M: Number of sine modes (at least 4).
        Q: Total quadrature nodes (at least ``4 M``; default ``8 M``),
            spread over a composite 8-point Gauss-Legendre rule.
    """
    a, b = map(float, interval)
    if M < 4:
        raise ValueError("M must be at least 4")
    Q = 8 * M if Q is None else int(Q)
    if Q < 4 * M:
        raise ValueError("need at least 4M quadrature nodes")
    panels = -(-Q // 8)
    t, w = composite_gauss_legendre(a, b, panels, 8)
    L = b - a
    m = np.arange(1, M + 1)
    basis = np.sin(np.pi * np.outer(t - a, m) / L)
    v = np.asarray(potential_1d(t), dtype=float)
    A = (2.0 / L) * (basis.T * (w * v)) @ basis
    A[np.diag_indices(M)] += (m * np.pi / L) ** 2
    A = 0.5 * (A + A.T)
    vals, vecs = jacobi_eigh(A)
    # Fix the sign so the first nonzero coefficient is positive.
    lead = vecs[np.argmax(np.abs(vecs) > 1e-12, axis=0), np.arange(M)]
    vecs = vecs * np.where(lead < 0, -1.0, 1.0)
    resid = np.linalg.norm(A - (vecs * vals) @ vecs.T)
    if resid > RESIDUAL_RTOL * np.linalg.norm(A):
        raise JacobiConvergenceError(f"eigen-decomposition residual {resid:.2e} too large")
    return Spectrum1D(a, b, vals, vecs, A)


@dataclass
class Spectrum:
    """Ascending separable spectrum with multi-index bookkeeping.

    Attributes:
        values: ``lambda_1 <= ... <= lambda_K``.
        indices: Multi-index (0-based axis mode numbers) attached to each
            position; within a degenerate cluster they appear in
            lexicographic order.
        axes: One :class:`Spectrum1D` per coordinate.
        cluster_of: Cluster id of each position (equal values share an id).
    """

    values: np.ndarray
    indices: list[tuple[int, ...]]
    axes: list[Spectrum1D]
    cluster_of: np.ndarray
    domain: Domain | None = None
    extra: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    def multiplicity(self, k: int) -> int:
        """Multiplicity of ``lambda_k`` (1-based)."""
        return int(np.sum(self.cluster_of == self.cluster_of[k - 1]))

    def cluster_members(self, k: int) -> list[int]:
        """1-based positions sharing ``lambda_k``.

        Only positions within the first ``K`` are listed; the spectrum is
        always enumerated through the end of the last cluster, so clusters
        are complete.
        """
        cid = self.cluster_of[k - 1]
        return [int(i) + 1 for i in np.nonzero(self.cluster_of == cid)[0]]

    def next_distinct(self, k: int) -> float:
        """Smallest eigenvalue strictly above ``lambda_k`` (``inf`` if unknown)."""
        above = self.values[self.cluster_of > self.cluster_of[k - 1]]
        return float(above[0]) if above.size else float("inf")


def _k_smallest_sums(axis_values: Sequence[np.ndarray], K: int) -> float:
    sums = np.array([0.0])
    for vals in axis_values:
        sums = np.sort(np.add.outer(sums, vals[:K]).ravel())[:K]
    return float(sums[K - 1])


def separable_spectrum(axes: Sequence[Spectrum1D], K: int, domain: Domain | None = None) -> Spectrum:
    """First ``K`` eigenvalues of a separable problem from its axis spectra.

    Enumerates every multi-index whose sum is at most the ``K``-th smallest
    sum (plus a clustering tolerance), so that degenerate clusters are
    complete; the result may therefore hold more than ``K`` entries.

    Raises:
        TruncationError: if an enumerated multi-index uses an axis mode
            beyond the trusted (lower half) part of that axis spectrum.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    axes = list(axes)
    d = len(axes)
    axis_values = [ax.eigenvalues for ax in axes]
    if d == 0:
        raise ValueError("need at least one axis")
    if K > np.prod([float(v.size) for v in axis_values]):
        raise TruncationError("K exceeds the number of available products")
    lam_k = _k_smallest_sums(axis_values, K)
    thresh = lam_k + CLUSTER_RTOL * max(1.0, abs(lam_k))
    mins = [float(v[0]) for v in axis_values]
    rest_min = np.concatenate([np.cumsum(mins[::-1])[::-1][1:], [0.0]])

    found: list[tuple[float, tuple[int, ...]]] = []

    def walk(axis: int, partial: float, prefix: tuple[int, ...]):
        if axis == d:
            found.append((partial, prefix))
            return
        vals = axis_values[axis]
        for j in range(vals.size):
            total = partial + vals[j]
            if total + rest_min[axis] > thresh:
                break
            walk(axis + 1, total, prefix + (j,))

    walk(0, 0.0, ())
    found.sort(key=lambda item: item[0])

    for _, idx in found:
        for axis, j in enumerate(idx):
            if j >= axes[axis].trusted_size:
                raise TruncationError(
                    f"eigenvalue {lam_k:.6g} needs mode {j + 1} on axis {axis}, beyond the "
                    f"trusted {axes[axis].trusted_size} of M={axes[axis].size}; increase M"
                )

    values = np.array([v for v, _ in found])
    cluster = np.zeros(values.size, dtype=int)
    for i in range(1, values.size):
        same = abs(values[i] - values[i - 1]) <= CLUSTER_RTOL * max(1.0, abs(values[i]))
        cluster[i] = cluster[i - 1] + (0 if same else 1)
    indices: list[tuple[int, ...]] = []
    ordered_values = np.empty_like(values)
    for cid in np.unique(cluster):
        members = np.nonzero(cluster == cid)[0]
        group = sorted(found[i][1] for i in members)
        indices.extend(group)
        ordered_values[members] = np.sort(values[members])
    return Spectrum(ordered_values, indices, axes, cluster, domain)


def solve_separable(domain: Domain, potential: Potential, K: int, M: int = 32,
                    Q: int | None = None) -> Spectrum:
    """Reference spectrum for a separable potential on a hypercube."""
    if domain.kind != "hypercube":
        raise ValueError("separable reference solves need a hypercube domain")
    funcs = potential.axis_potentials(domain.dim)
    cache: dict[int, Spectrum1D] = {}
    axes = []
    for f in funcs:
        key = id(f)
        if key not in cache:
            cache[key] = solve_1d(f, (domain.lo, domain.hi), M, Q)
        axes.append(cache[key])
    return separable_spectrum(axes, K, domain)


def reference_eigenfunction(spectrum: Spectrum, k: int, x: np.ndarray, gradient: bool = False):
    """Evaluate the normalized reference eigenfunction at position ``k`` (1-based).

    Args:
        spectrum: A separable spectrum.
        k: 1-based position; degenerate clusters use their lexicographic
            representatives in order.
        x: Points, shape ``(n, d)``.
        gradient: Also return the gradient, shape ``(n, d)``.
    """
    if not 1 <= k <= spectrum.K:
        raise IndexError(f"k={k} outside the computed range 1..{spectrum.K}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    idx = spectrum.indices[k - 1]
    factors = []
    derivs = []
    for axis, j in enumerate(idx):
        f, df = spectrum.axes[axis].eigenfunction(j, x[:, axis], derivative=True)
        factors.append(f)
        derivs.append(df)
    factors = np.stack(factors, axis=1)
    value = np.prod(factors, axis=1)
    if not gradient:
        return value
    grads = np.empty_like(x)
    for axis in range(x.shape[1]):
        others = np.prod(np.delete(factors, axis, axis=1), axis=1)
        grads[:, axis] = derivs[axis] * others
    return value, grads


class ReferenceEigenfunction:
    """Callable wrapper exposing ``evaluate``/``value`` like a trial function."""

    def __init__(self, spectrum: Spectrum, k: int):
        self.spectrum = spectrum
        self.k = k
        self.eigenvalue = float(spectrum.values[k - 1])

    @property
    def dim(self) -> int:
        return self.spectrum.dim

    def evaluate(self, x):
        return reference_eigenfunction(self.spectrum, self.k, x, gradient=True)

    def value(self, x):
        return reference_eigenfunction(self.spectrum, self.k, x)

    def __call__(self, x):
        return self.value(x)


# Reference values for the non-separable fixtures, keyed by (kind, c): k -> value.
_FIXTURES = {
    ("ball", 1.0 / 3.0): {1: 10.7836, 2: 20.6206, 3: 20.6206, 5: 33.5352, 10: 41.3859},
    ("shell", 0.5): {1: 39.9433, 2: 43.6545, 3: 43.6545, 5: 51.0341, 9: 51.0341},
}


def fixture_reference(kind: str, c: float) -> dict[int, float]:
    """Published reference eigenvalues for the inverse-square fixtures.

    Supported: ``("ball", 1/3)`` on the unit ball and ``("shell", 1/2)`` on
    the shell ``1/2 < |x| < 1``.
    """
    for (fk, fc), table in _FIXTURES.items():
        if fk == kind and abs(fc - c) < 1e-12:
            return dict(table)
    raise KeyError(f"no reference fixture for kind={kind!r}, c={c}")
