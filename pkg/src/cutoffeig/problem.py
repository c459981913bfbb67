"""Domains, potentials and uniform samplers.

Every Monte Carlo estimate in the package is driven by the batches
produced here.  Random streams come from numpy's counter-based Philox
generator keyed by a :class:`numpy.random.SeedSequence`, so a batch is a
pure function of ``(seed, stream, n, region)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

BOUNDARY_TOL = 1e-12
MAX_CONSECUTIVE_REJECTIONS = 1_000_000
ORIGIN_EXCLUSION_RADIUS = 1e-8


class SingularPotentialError(ValueError):
    """Raised when a potential is evaluated at its singular point."""


class SamplingError(RuntimeError):
    """Raised when rejection sampling exceeds its retry cap."""


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Domain:
    """A bounded open region in R^d.

    Use the constructors :meth:`hypercube`, :meth:`ball` and :meth:`shell`
    rather than building instances by hand.

    Attributes:
        kind: ``"hypercube"``, ``"ball"`` or ``"shell"``.
        dim: Spatial dimension.
        lo, hi: Hypercube bounds (each axis is ``(lo, hi)``).
        radius: Ball radius, or the outer radius of a shell.
        inner_radius: Inner radius of a shell (0 otherwise).
    """

    kind: str
    dim: int
    lo: float = 0.0
    hi: float = 1.0
    radius: float = 0.0
    inner_radius: float = 0.0

    @classmethod
    def hypercube(cls, lo: float, hi: float, dim: int) -> "Domain":
        if not lo < hi:
            raise ValueError(f"hypercube needs lo < hi, got lo={lo}, hi={hi}")
        if dim < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        return cls("hypercube", int(dim), lo=float(lo), hi=float(hi))

    @classmethod
    def ball(cls, radius: float, dim: int = 3) -> "Domain":
        if not radius > 0:
            raise ValueError(f"ball radius must be positive, got {radius}")
        if dim != 3:
            raise ValueError("ball domains are three-dimensional")
        return cls("ball", 3, lo=-float(radius), hi=float(radius), radius=float(radius))

    @classmethod
    def shell(cls, r_inner: float, r_outer: float, dim: int = 3) -> "Domain":
        if not 0 < r_inner < r_outer:
            raise ValueError(f"shell needs 0 < r_inner < r_outer, got ({r_inner}, {r_outer})")
        if dim != 3:
            raise ValueError("shell domains are three-dimensional")
        return cls(
            "shell", 3, lo=-float(r_outer), hi=float(r_outer),
            radius=float(r_outer), inner_radius=float(r_inner),
        )

    @property
    def volume(self) -> float:
        """Lebesgue measure of the region."""
        if self.kind == "hypercube":
            return (self.hi - self.lo) ** self.dim
        ball = 4.0 / 3.0 * math.pi
        if self.kind == "ball":
            return ball * self.radius ** 3
        return ball * (self.radius ** 3 - self.inner_radius ** 3)

    @property
    def bounding_box(self) -> tuple[float, float]:
        """Per-axis bounds of the smallest enclosing cube."""
        return self.lo, self.hi

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership test; points within ``BOUNDARY_TOL`` of the boundary are excluded.

        Args:
            x: Points, shape ``(n, d)``.

        Returns:
            Boolean array of shape ``(n,)``.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "hypercube":
            return np.all((x > self.lo + BOUNDARY_TOL) & (x < self.hi - BOUNDARY_TOL), axis=1)
        r = np.linalg.norm(x, axis=1)
        inside = r < self.radius - BOUNDARY_TOL
        if self.kind == "shell":
            inside &= r > self.inner_radius + BOUNDARY_TOL
        return inside

    def distance_to_boundary(self, x: np.ndarray) -> np.ndarray:
        """Euclidean distance to the boundary (for interior points)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "hypercube":
            return np.minimum(x - self.lo, self.hi - x).min(axis=1)
        r = np.linalg.norm(x, axis=1)
        dist = self.radius - r
        if self.kind == "shell":
            dist = np.minimum(dist, r - self.inner_radius)
        return dist

    def describe(self) -> str:
        if self.kind == "hypercube":
            return f"({self.lo:g},{self.hi:g})^{self.dim}"
        if self.kind == "ball":
            return f"ball(R={self.radius:g})"
        return f"shell({self.inner_radius:g},{self.radius:g})"


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Potential:
    """A scalar potential V(x).

    Attributes:
        kind: ``"zero"``, ``"constant"``, ``"separable_cosine"``,
            ``"inverse_square"`` or ``"custom_separable"``.
        c: Parameter of the constant and inverse-square kinds.
        axis_functions: One vectorized callable per axis for the custom
            separable kind; ``V(x) = sum_i f_i(x_i)``.
    """

    kind: str
    c: float = 0.0
    axis_functions: tuple = field(default=(), compare=False)

    @classmethod
    def zero(cls) -> "Potential":
        return cls("zero")

    @classmethod
    def constant(cls, c: float) -> "Potential":
        return cls("constant", c=float(c))

    @classmethod
    def separable_cosine(cls) -> "Potential":
        """``V(x) = (1/d) sum_i cos(pi x_i + pi)``."""
        return cls("separable_cosine")

    @classmethod
    def inverse_square(cls, c: float) -> "Potential":
        """``V(x) = c^2 / |x|^2``."""
        return cls("inverse_square", c=float(c))

    @classmethod
    def custom_separable(cls, functions: Sequence[Callable[[np.ndarray], np.ndarray]]) -> "Potential":
        return cls("custom_separable", axis_functions=tuple(functions))

    @property
    def singular_at_origin(self) -> bool:
        return self.kind == "inverse_square" and self.c != 0.0

    @property
    def is_separable(self) -> bool:
        return self.kind != "inverse_square"

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate V on a batch of points, shape ``(n, d)`` -> ``(n,)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        if self.kind == "zero":
            return np.zeros(n)
        if self.kind == "constant":
            return np.full(n, self.c)
        if self.kind == "separable_cosine":
            return np.cos(np.pi * x + np.pi).sum(axis=1) / d
        if self.kind == "inverse_square":
            r2 = np.einsum("ij,ij->i", x, x)
            if np.any(r2 == 0.0):
                raise SingularPotentialError("inverse-square potential evaluated at the origin")
            return self.c * self.c / r2
        if self.kind == "custom_separable":
            if len(self.axis_functions) != d:
                raise ValueError(f"custom potential has {len(self.axis_functions)} axis functions, points have d={d}")
            return sum(np.asarray(f(x[:, i]), dtype=float) for i, f in enumerate(self.axis_functions))
        raise ValueError(f"unknown potential kind {self.kind!r}")

    def axis_potentials(self, dim: int) -> list[Callable[[np.ndarray], np.ndarray]]:
        """One-dimensional factors ``V_i`` with ``V(x) = sum_i V_i(x_i)``.

        Raises:
            ValueError: if the potential is not separable.
        """
        if self.kind == "zero":
            return [lambda t: np.zeros_like(t)] * dim
        if self.kind == "constant":
            share = self.c / dim
            return [lambda t, share=share: np.full_like(t, share)] * dim
        if self.kind == "separable_cosine":
            return [lambda t: np.cos(np.pi * t + np.pi) / dim] * dim
        if self.kind == "custom_separable":
            if len(self.axis_functions) != dim:
                raise ValueError("axis function count does not match the dimension")
            return list(self.axis_functions)
        raise ValueError(f"potential {self.kind!r} is not separable")

    def bounds(self, domain: Domain) -> tuple[float, float]:
        """Closed-form (or sampled, for custom kinds) range of V over the domain."""
        if self.kind == "zero":
            return 0.0, 0.0
        if self.kind == "constant":
            return self.c, self.c
        if self.kind == "separable_cosine" and domain.kind == "hypercube":
            grid = np.linspace(domain.lo, domain.hi, 20001)
            axis = np.cos(np.pi * grid + np.pi)
            return float(axis.min()), float(axis.max())
        if self.kind == "inverse_square":
            c2 = self.c * self.c
            rmax = domain.radius if domain.kind != "hypercube" else math.sqrt(domain.dim) * max(abs(domain.lo), abs(domain.hi))
            rmin = domain.inner_radius
            return c2 / rmax ** 2, (math.inf if rmin == 0 else c2 / rmin ** 2)
        grid = np.linspace(domain.lo, domain.hi, 2001)[1:-1]
        per_axis = [f(grid) for f in self.axis_potentials(domain.dim)]
        return float(sum(a.min() for a in per_axis)), float(sum(a.max() for a in per_axis))


def evaluate_potential(potential: Potential, x: np.ndarray) -> np.ndarray:
    """Evaluate ``potential`` at one point ``(d,)`` or a batch ``(n, d)``."""
    x = np.asarray(x, dtype=float)
    values = potential(np.atleast_2d(x))
    return values[0] if x.ndim == 1 else values


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, *stream)``.

    Distinct stream tuples give statistically independent generators, which
    is how epochs, eigen-indices and boundary/interior draws are separated.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class SampleBatch:
    """A batch of points drawn from a region."""

    points: np.ndarray
    seed: int
    region: Domain
    stream: tuple = ()

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _draw_box(rng: np.random.Generator, n: int, dim: int, lo: float, hi: float) -> np.ndarray:
    return lo + (hi - lo) * rng.random((n, dim))


def sample_interior(region: Domain, n: int, seed: int, stream: Sequence[int] = (),
                    exclude_radius: float = 0.0) -> SampleBatch:
    """Draw ``n`` i.i.d. uniform points from the interior of ``region``.

    Points are drawn from the bounding box and rejected until they pass the
    membership test (for hypercubes that only discards the measure-zero
    boundary layer).

    Args:
        region: Domain to sample.
        n: Number of points, at least 1.
        seed: Base seed.
        stream: Extra integers selecting an independent sub-stream.
        exclude_radius: Also reject points with ``|x| < exclude_radius``.

    Raises:
        SamplingError: after ``MAX_CONSECUTIVE_REJECTIONS`` rejections in a row.
    """
    if n < 1:
        raise ValueError("sample count must be at least 1")
    rng = make_rng(seed, 0, *stream)
    lo, hi = region.bounding_box
    out = np.empty((n, region.dim))
    filled = 0
    rejected_run = 0
    while filled < n:
        need = n - filled
        chunk = max(16, int(need * (1.1 if region.kind == "hypercube" else 2.2)))
        cand = _draw_box(rng, chunk, region.dim, lo, hi)
        ok = region.contains(cand)
        if exclude_radius > 0.0:
            ok &= np.linalg.norm(cand, axis=1) >= exclude_radius
        # Count rejections that precede the first acceptance of this chunk
        # so the cap measures consecutive failures.
        accepted = cand[ok]
        if accepted.shape[0] == 0:
            rejected_run += chunk
            if rejected_run >= MAX_CONSECUTIVE_REJECTIONS:
                raise SamplingError(f"rejection sampling stalled on {region.describe()}")
            continue
        rejected_run = 0
        take = min(need, accepted.shape[0])
        out[filled:filled + take] = accepted[:take]
        filled += take
    return SampleBatch(out, int(seed), region, tuple(stream))


def sample_boundary(region: Domain, n: int, seed: int, stream: Sequence[int] = ()) -> SampleBatch:
    """Draw ``n`` points uniformly on the boundary of ``region``.

    Hypercubes pick a face with probability proportional to its area (all
    faces are congruent, so uniformly) and then a uniform point on it.
    Balls and shells normalize isotropic Gaussian directions and scale them
    to a sphere component picked in proportion to its area.
    """
    if n < 1:
        raise ValueError("sample count must be at least 1")
    rng = make_rng(seed, 1, *stream)
    d = region.dim
    if region.kind == "hypercube":
        pts = _draw_box(rng, n, d, region.lo, region.hi)
        face = rng.integers(0, 2 * d, size=n)
        axis = face // 2
        side = np.where(face % 2 == 0, region.lo, region.hi)
        pts[np.arange(n), axis] = side
        return SampleBatch(pts, int(seed), region, tuple(stream))
    dirs = rng.standard_normal((n, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.full(n, region.radius)
    if region.kind == "shell":
        outer_share = region.radius ** 2 / (region.radius ** 2 + region.inner_radius ** 2)
        on_inner = rng.random(n) >= outer_share
        radii[on_inner] = region.inner_radius
    return SampleBatch(dirs * radii[:, None], int(seed), region, tuple(stream))


@dataclass(frozen=True)
class Problem:
    """Eigenvalue problem ``-Laplace u + V u = lambda u`` with zero Dirichlet data."""

    domain: Domain
    potential: Potential

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def exclude_radius(self) -> float:
        return ORIGIN_EXCLUSION_RADIUS if self.potential.singular_at_origin else 0.0

    def sample_interior(self, n: int, seed: int, stream: Sequence[int] = ()) -> SampleBatch:
        return sample_interior(self.domain, n, seed, stream, exclude_radius=self.exclude_radius)

    def sample_boundary(self, n: int, seed: int, stream: Sequence[int] = ()) -> SampleBatch:
        return sample_boundary(self.domain, n, seed, stream)
