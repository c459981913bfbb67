"""Pure numpy implementations of the hot kernels.

These are the reference versions of the routines in ``_kernels.pyx``.
Both modules expose the same functions with the same signatures; the
package picks one at import time (see ``cutoffeig._backend``).

Memory layout shared by both backends
-------------------------------------
For a batch of ``n`` points in ``d`` dimensions and hidden width ``m``,
every hidden layer keeps a stacked activation block of shape
``((d + 1) * n, m)``.  Rows ``0:n`` hold the activations ``a`` and rows
``(1 + j) * n:(2 + j) * n`` hold the forward-mode tangents ``da/dx_j``.
Stacking lets a single GEMM advance the value and all ``d`` tangent
streams through a dense layer.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def mlp_forward(x, weights, biases, w_out, b_out, workspace=None):
    """Evaluate a tanh MLP together with its spatial gradient.

    Args:
        x: Points, shape ``(n, d)``, C-contiguous float64.
        weights: Hidden weight matrices; ``weights[0]`` is ``(m, d)`` and the
            rest are ``(m, m)``.
        biases: Hidden biases, each of shape ``(m,)``.
        w_out: Output weights, shape ``(m,)``.
        b_out: Output bias (float).
        workspace: Optional dict of scratch buffers.  The compiled backend
            reuses them between calls; this backend ignores it.

    Returns:
        Tuple ``(values, grads, cache)`` with ``values`` of shape ``(n,)``,
        ``grads`` of shape ``(n, d)`` and an opaque cache for
        :func:`mlp_backward`.
    """
    n, d = x.shape
    m = weights[0].shape[0]
    stacks = []
    pre_tangents = []

    z = x @ weights[0].T + biases[0]
    a = np.tanh(z)
    s = 1.0 - a * a
    stack = np.empty(((d + 1) * n, m))
    stack[:n] = a
    for j in range(d):
        stack[(1 + j) * n:(2 + j) * n] = s * weights[0][:, j]
    stacks.append(stack)
    pre_tangents.append(None)

    for W, b in zip(weights[1:], biases[1:]):
        Z = stack @ W.T
        a = np.tanh(Z[:n] + b)
        s = 1.0 - a * a
        stack = np.empty_like(Z)
        stack[:n] = a
        stack[n:] = (Z[n:].reshape(d, n, m) * s).reshape(d * n, m)
        stacks.append(stack)
        pre_tangents.append(Z[n:])

    out = stack @ w_out
    values = out[:n] + b_out
    grads = np.ascontiguousarray(out[n:].reshape(d, n).T)
    return values, grads, (x, stacks, pre_tangents, workspace)


def mlp_value(x, weights, biases, w_out, b_out, workspace=None):
    """Value-only MLP evaluation, shape ``(n,)``."""
    h = x
    for W, b in zip(weights, biases):
        h = np.tanh(h @ W.T + b)
    return h @ w_out + b_out


def mlp_backward(cache, weights, w_out, alpha, gamma, grad_weights, grad_biases, grad_out):
    """Reverse pass through the value and spatial-gradient paths.

    Computes the gradient of ``sum_i alpha_i N(x_i) + gamma_i . grad_x N(x_i)``
    with respect to every parameter and writes it into the supplied buffers.

    Args:
        cache: Cache returned by :func:`mlp_forward`.
        weights: Hidden weight matrices used in the forward pass.
        w_out: Output weights used in the forward pass.
        alpha: Value sensitivities, shape ``(n,)``.
        gamma: Spatial-gradient sensitivities, shape ``(n, d)``.
        grad_weights: Output buffers matching ``weights``.
        grad_biases: Output buffers matching the hidden biases.
        grad_out: Output buffer of shape ``(m + 1,)`` for ``w_out`` and ``b_out``.
    """
    x, stacks, pre_tangents, _ = cache
    n, d = x.shape
    m = w_out.shape[0]
    depth = len(weights)

    seed = np.concatenate([alpha, gamma.T.ravel()])
    grad_out[:m] = stacks[-1].T @ seed
    grad_out[m] = alpha.sum()
    adj = np.multiply.outer(seed, w_out)

    for i in range(depth - 1, -1, -1):
        a = stacks[i][:n]
        s = 1.0 - a * a
        adj_t = adj[n:].reshape(d, n, m)
        if i > 0:
            zt = pre_tangents[i].reshape(d, n, m)
        else:
            zt = np.broadcast_to(weights[0].T[:, None, :], (d, n, m))
        s_bar = np.einsum("jnm,jnm->nm", adj_t, zt)
        zbar = np.empty_like(adj)
        zbar[:n] = s * (adj[:n] - 2.0 * a * s_bar)
        zbar[n:] = (adj_t * s).reshape(d * n, m)
        grad_biases[i][...] = zbar[:n].sum(axis=0)
        if i > 0:
            grad_weights[i][...] = zbar.T @ stacks[i - 1]
            adj = zbar @ weights[i]
        else:
            grad_weights[0][...] = zbar[:n].T @ x + zbar[n:].reshape(d, n, m).sum(axis=1).T


def jacobi_eigh(A, tol=1e-15, max_sweeps=100):
    """Cyclic Jacobi eigensolver for a dense symmetric matrix.

    Args:
        A: Symmetric matrix, shape ``(M, M)``.
        tol: Stop once the off-diagonal Frobenius norm falls below
            ``tol * ||A||_F``.
        max_sweeps: Sweep cap.

    Returns:
        ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues in the
        order of the converged diagonal (unsorted) and eigenvectors as
        columns. ``sweeps`` is ``-1`` if the cap was hit.
    """
    a = np.array(A, dtype=float, copy=True)
    size = a.shape[0]
    v = np.eye(size)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return np.zeros(size), v, 0
    for sweep in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            return np.diag(a).copy(), v, sweep
        for p in range(size - 1):
            for q in range(p + 1, size):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                sn = t * c
                # Rotate rows/columns p and q: A <- J^T A J.
                ap = a[:, p].copy()
                aq = a[:, q]
                a[:, p] = c * ap - sn * aq
                a[:, q] = sn * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :]
                a[p, :] = c * ap - sn * aq
                a[q, :] = sn * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                v[:, p] = c * vp - sn * v[:, q]
                v[:, q] = sn * vp + c * v[:, q]
    if np.linalg.norm(a - np.diag(np.diag(a))) <= tol * scale:
        return np.diag(a).copy(), v, max_sweeps
    return np.diag(a).copy(), v, -1
