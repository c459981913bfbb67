"""Independent reference computations used by the tests.

Nothing here imports the package under test.
"""

import itertools

import numpy as np


def householder_tridiagonal(A):
    """Reduce a symmetric matrix to tridiagonal form; returns ``(diag, offdiag)``."""
    a = np.array(A, dtype=float)
    n = a.shape[0]
    for k in range(n - 2):
        x = a[k + 1:, k].copy()
        alpha = -np.copysign(np.linalg.norm(x), x[0] if x[0] != 0 else 1.0)
        v = x.copy()
        v[0] -= alpha
        vn = np.linalg.norm(v)
        if vn == 0:
            continue
        v /= vn
        H = np.eye(n)
        H[k + 1:, k + 1:] -= 2.0 * np.outer(v, v)
        a = H @ a @ H
    return np.diag(a).copy(), np.diag(a, 1).copy()


def sturm_count(diag, off, x):
    """Number of eigenvalues of the tridiagonal matrix below ``x``."""
    count = 0
    q = diag[0] - x
    if q < 0:
        count += 1
    for i in range(1, len(diag)):
        if q == 0:
            q = 1e-300
        q = diag[i] - x - off[i - 1] ** 2 / q
        if q < 0:
            count += 1
    return count


def sturm_eigenvalues(A, tol=1e-13):
    """All eigenvalues of a symmetric matrix by bisection on Sturm counts."""
    diag, off = householder_tridiagonal(A)
    n = len(diag)
    radius = np.max(np.abs(diag)) + 2 * (np.max(np.abs(off)) if n > 1 else 0.0) + 1.0
    out = []
    for j in range(n):
        lo, hi = -radius, radius
        while hi - lo > tol * max(1.0, abs(lo) + abs(hi)):
            mid = 0.5 * (lo + hi)
            if sturm_count(diag, off, mid) > j:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return np.array(out)


def laplacian_spectrum_bruteforce(d, count, nmax=12):
    """First ``count`` Dirichlet Laplacian eigenvalues on ``(0,1)^d`` by enumeration."""
    vals = sorted(np.pi ** 2 * sum(k * k for k in ks)
                  for ks in itertools.product(range(1, nmax + 1), repeat=d))
    return np.array(vals[:count])


def central_difference(f, x, h=1e-6):
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def spatial_central_difference(f, x, h=1e-6):
    """Per-point central-difference gradient of a batched scalar field ``f: (n,d)->(n,)``."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[j] = h
        g[:, j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))
