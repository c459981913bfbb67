"""Gauss-Legendre rules on intervals and tensor grids."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=64)
def _reference_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a: float, b: float, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the ``nodes``-point rule on ``[a, b]``."""
    x, w = _reference_rule(int(nodes))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss_legendre(a: float, b: float, panels: int, nodes_per_panel: int = 8):
    """Composite rule: ``panels`` equal subintervals with a Gauss rule on each."""
    edges = np.linspace(a, b, panels + 1)
    x, w = _reference_rule(int(nodes_per_panel))
    half = 0.5 * np.diff(edges)
    pts = edges[:-1, None] + half[:, None] * (x[None, :] + 1.0)
    wts = half[:, None] * w[None, :]
    return pts.ravel(), wts.ravel()


def tensor_gauss_legendre(lo: float, hi: float, dim: int, nodes: int):
    """Tensor-product rule on ``(lo, hi)^dim``.

    Returns:
        ``(points, weights)`` with shapes ``(nodes**dim, dim)`` and
        ``(nodes**dim,)``; the weights sum to the cube volume.
    """
    x, w = gauss_legendre(lo, hi, nodes)
    grids = np.meshgrid(*([x] * dim), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wgrids = np.meshgrid(*([w] * dim), indexing="ij")
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts
