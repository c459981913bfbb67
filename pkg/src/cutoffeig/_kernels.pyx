# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: fused tanh-MLP forward/double-backward and cyclic Jacobi.

Mirrors ``_kernels_py`` function by function.  Dense products go through
BLAS (``scipy.linalg.cython_blas``); the elementwise tanh-derivative
bookkeeping that numpy would spread over many temporaries is fused into
single C loops here.
"""

import numpy as np
from libc.math cimport sqrt, fabs, copysign
from scipy.linalg.cython_blas cimport dgemm, dgemv

BACKEND_NAME = "compiled"


def _buffer(workspace, key, shape):
    # Reuse a cached scratch array of the right shape; fresh pages cost more
    # than the arithmetic at these sizes.
    if workspace is None:
        return np.empty(shape)
    arr = workspace.get(key)
    if arr is None or arr.shape != shape:
        arr = np.empty(shape)
        workspace[key] = arr
    return arr


cdef inline void _gemm_nt(double[:, ::1] X, double[:, ::1] W, double[:, ::1] Y) noexcept nogil:
    # Y (R x p) = X (R x q) @ W.T, with W of shape (p x q); all row-major.
    cdef int R = X.shape[0], q = X.shape[1], p = W.shape[0]
    cdef double one = 1.0, zero = 0.0
    cdef char ta = b'T', tb = b'N'
    dgemm(&ta, &tb, &p, &R, &q, &one, &W[0, 0], &q, &X[0, 0], &q, &zero, &Y[0, 0], &p)


cdef inline void _gemm_nn(double[:, ::1] X, double[:, ::1] W, double[:, ::1] Y) noexcept nogil:
    # Y (R x p) = X (R x q) @ W, with W of shape (q x p).
    cdef int R = X.shape[0], q = X.shape[1], p = W.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char ta = b'N', tb = b'N'
    dgemm(&ta, &tb, &p, &R, &q, &one, &W[0, 0], &p, &X[0, 0], &q, &zero, &Y[0, 0], &p)


cdef inline void _gemm_tn(double[:, ::1] Z, double[:, ::1] P, double[:, ::1] G) noexcept nogil:
    # G (p x q) = Z.T @ P, with Z of shape (R x p) and P of shape (R x q).
    cdef int R = Z.shape[0], p = Z.shape[1], q = P.shape[1]
    cdef double one = 1.0, zero = 0.0
    cdef char ta = b'N', tb = b'T'
    dgemm(&ta, &tb, &q, &p, &R, &one, &P[0, 0], &q, &Z[0, 0], &p, &zero, &G[0, 0], &q)


cdef inline void _gemv_t(double[:, ::1] X, double[::1] v, double[::1] y) noexcept nogil:
    # y (R) = X (R x q) @ v (q)
    cdef int R = X.shape[0], q = X.shape[1], inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char t = b'T'
    dgemv(&t, &q, &R, &one, &X[0, 0], &q, &v[0], &inc, &zero, &y[0], &inc)


cdef inline void _gemv_n(double[:, ::1] X, double[::1] v, double[::1] y) noexcept nogil:
    # y (q) = X.T (q x R) @ v (R)
    cdef int R = X.shape[0], q = X.shape[1], inc = 1
    cdef double one = 1.0, zero = 0.0
    cdef char t = b'N'
    dgemv(&t, &q, &R, &one, &X[0, 0], &q, &v[0], &inc, &zero, &y[0], &inc)


cdef inline void _tanh_tangents(double* a, double* s, double* z_t, double* out_t,
                                Py_ssize_t n, Py_ssize_t m, Py_ssize_t d) noexcept nogil:
    # s = 1 - a^2 ; out_t[j] = s * z_t[j] for every tangent block j.
    cdef Py_ssize_t idx, j, nm = n * m
    for idx in range(nm):
        s[idx] = 1.0 - a[idx] * a[idx]
    for j in range(d):
        for idx in range(nm):
            out_t[j * nm + idx] = s[idx] * z_t[j * nm + idx]


def mlp_forward(double[:, ::1] x, list weights, list biases, double[::1] w_out, double b_out,
                workspace=None):
    """Evaluate a tanh MLP with its spatial gradient (see ``_kernels_py``)."""
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t m = weights[0].shape[0]
    cdef Py_ssize_t depth = len(weights)
    cdef Py_ssize_t r, k, j, i, nm = n * m
    cdef double[:, ::1] W0 = weights[0]
    cdef double[::1] b
    cdef double[:, ::1] S, Z, prev
    cdef double* sp
    cdef double* zp
    cdef double* tp
    stacks = []
    pre_tangents = [None]
    deriv_arr = _buffer(workspace, "deriv", (n, m))
    cdef double[:, ::1] deriv = deriv_arr

    # First layer: the pre-activation tangent along x_j is the weight column j.
    first_t_arr = _buffer(workspace, "first_t", (d, n, m))
    cdef double[:, :, ::1] first_t = first_t_arr
    stack_arr = _buffer(workspace, "stack0", ((d + 1) * n, m))
    S = stack_arr
    b = biases[0]
    with nogil:
        for r in range(n):
            for k in range(m):
                S[r, k] = b[k]
            for j in range(d):
                for k in range(m):
                    S[r, k] += W0[k, j] * x[r, j]
        for j in range(d):
            for r in range(n):
                for k in range(m):
                    first_t[j, r, k] = W0[k, j]
    np.tanh(stack_arr[:n], out=stack_arr[:n])
    with nogil:
        _tanh_tangents(&S[0, 0], &deriv[0, 0], &first_t[0, 0, 0], &S[n, 0], n, m, d)
    stacks.append(stack_arr)

    for i in range(1, depth):
        prev = stack_arr
        z_arr = _buffer(workspace, ("pre", i), ((d + 1) * n, m))
        Z = z_arr
        _gemm_nt(prev, weights[i], Z)
        b = biases[i]
        stack_arr = _buffer(workspace, ("stack", i), ((d + 1) * n, m))
        S = stack_arr
        with nogil:
            for r in range(n):
                sp = &S[r, 0]
                zp = &Z[r, 0]
                for k in range(m):
                    sp[k] = zp[k] + b[k]
        np.tanh(stack_arr[:n], out=stack_arr[:n])
        with nogil:
            _tanh_tangents(&S[0, 0], &deriv[0, 0], &Z[n, 0], &S[n, 0], n, m, d)
        stacks.append(stack_arr)
        pre_tangents.append(z_arr[n:])

    out_arr = _buffer(workspace, "out", ((d + 1) * n,))
    cdef double[::1] out = out_arr
    _gemv_t(S, w_out, out)
    values = out_arr[:n] + b_out
    grads = np.ascontiguousarray(out_arr[n:].reshape(d, n).T)
    return values, grads, (np.asarray(x), stacks, pre_tangents, workspace)


def mlp_value(double[:, ::1] x, list weights, list biases, double[::1] w_out, double b_out,
              workspace=None):
    """Value-only MLP evaluation."""
    h = np.asarray(x)
    for W, bb in zip(weights, biases):
        h = np.tanh(h @ W.T + bb)
    return h @ np.asarray(w_out) + b_out


def mlp_backward(tuple cache, list weights, double[::1] w_out, double[::1] alpha,
                 double[:, ::1] gamma, list grad_weights, list grad_biases, double[::1] grad_out):
    """Reverse pass through value and spatial-gradient paths (see ``_kernels_py``)."""
    x_arr, stacks, pre_tangents, workspace = cache
    cdef double[:, ::1] x = x_arr
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t m = w_out.shape[0]
    cdef Py_ssize_t depth = len(weights)
    cdef Py_ssize_t r, k, j, i, row, idx, nm = n * m
    cdef double[:, ::1] S, ADJ, ZB, W0, GW0
    cdef double[::1] gb
    cdef double* ap
    cdef double* adjp
    cdef double* zbp
    cdef double* ztp
    cdef double* sbp
    cdef double av, sv, total

    seed_arr = _buffer(workspace, "seed", ((d + 1) * n,))
    cdef double[::1] seed = seed_arr
    with nogil:
        for r in range(n):
            seed[r] = alpha[r]
        for j in range(d):
            for r in range(n):
                seed[(1 + j) * n + r] = gamma[r, j]
    S = stacks[depth - 1]
    _gemv_n(S, seed, grad_out[:m])
    total = 0.0
    for r in range(n):
        total += alpha[r]
    grad_out[m] = total

    adj_arr = _buffer(workspace, "adj", ((d + 1) * n, m))
    ADJ = adj_arr
    with nogil:
        for row in range((d + 1) * n):
            for k in range(m):
                ADJ[row, k] = seed[row] * w_out[k]

    zbar_arr = _buffer(workspace, "zbar", ((d + 1) * n, m))
    ZB = zbar_arr
    sbar_arr = _buffer(workspace, "deriv", (n, m))
    cdef double[:, ::1] SB = sbar_arr
    first_t_arr = _buffer(workspace, "first_t", (d, n, m))
    cdef double[:, :, ::1] first_t = first_t_arr
    W0 = weights[0]
    if workspace is None:
        with nogil:
            for j in range(d):
                for r in range(n):
                    for k in range(m):
                        first_t[j, r, k] = W0[k, j]
    cdef double[:, ::1] ZT
    for i in range(depth - 1, -1, -1):
        S = stacks[i]
        gb = grad_biases[i]
        if i > 0:
            ZT = pre_tangents[i]
            ztp = &ZT[0, 0]
        else:
            ztp = &first_t[0, 0, 0]
        ap = &S[0, 0]
        adjp = &ADJ[0, 0]
        zbp = &ZB[0, 0]
        sbp = &SB[0, 0]
        with nogil:
            # s_bar = sum_j adj_t[j] * z_t[j]
            for idx in range(nm):
                sbp[idx] = 0.0
            for j in range(d):
                for idx in range(nm):
                    sbp[idx] += adjp[(1 + j) * nm + idx] * ztp[j * nm + idx]
            for j in range(d):
                for idx in range(nm):
                    av = ap[idx]
                    zbp[(1 + j) * nm + idx] = (1.0 - av * av) * adjp[(1 + j) * nm + idx]
            for idx in range(nm):
                av = ap[idx]
                zbp[idx] = (1.0 - av * av) * (adjp[idx] - 2.0 * av * sbp[idx])
            for k in range(m):
                gb[k] = 0.0
            for r in range(n):
                for k in range(m):
                    gb[k] += zbp[r * m + k]
        if i > 0:
            _gemm_tn(ZB, stacks[i - 1], grad_weights[i])
            _gemm_nn(ZB, weights[i], ADJ)
        else:
            GW0 = grad_weights[0]
            with nogil:
                for k in range(m):
                    for j in range(d):
                        GW0[k, j] = 0.0
                for r in range(n):
                    for j in range(d):
                        av = x[r, j]
                        for k in range(m):
                            GW0[k, j] += zbp[r * m + k] * av + zbp[(1 + j) * nm + r * m + k]


def jacobi_eigh(A, double tol=1e-15, int max_sweeps=100):
    """Cyclic Jacobi eigensolver (see ``_kernels_py.jacobi_eigh``)."""
    a_arr = np.array(A, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] a = a_arr
    cdef Py_ssize_t size = a.shape[0]
    v_arr = np.eye(size)
    cdef double[:, ::1] v = v_arr
    cdef Py_ssize_t p, q, r
    cdef int sweep, status = -1
    cdef double scale = np.linalg.norm(a_arr)
    cdef double off, apq, theta, t, c, sn, xp, xq
    if scale == 0.0:
        return np.zeros(size), v_arr, 0
    with nogil:
        for sweep in range(max_sweeps + 1):
            off = 0.0
            for p in range(size):
                for q in range(size):
                    if p != q:
                        off = off + a[p, q] * a[p, q]
            if sqrt(off) <= tol * scale:
                status = sweep
                break
            if sweep == max_sweeps:
                break
            for p in range(size - 1):
                for q in range(p + 1, size):
                    apq = a[p, q]
                    if apq == 0.0:
                        continue
                    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                    t = copysign(1.0, theta) / (fabs(theta) + sqrt(theta * theta + 1.0))
                    c = 1.0 / sqrt(t * t + 1.0)
                    sn = t * c
                    for r in range(size):
                        xp = a[r, p]
                        xq = a[r, q]
                        a[r, p] = c * xp - sn * xq
                        a[r, q] = sn * xp + c * xq
                    for r in range(size):
                        xp = a[p, r]
                        xq = a[q, r]
                        a[p, r] = c * xp - sn * xq
                        a[q, r] = sn * xp + c * xq
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    for r in range(size):
                        xp = v[r, p]
                        xq = v[r, q]
                        v[r, p] = c * xp - sn * xq
                        v[r, q] = sn * xp + c * xq
    return np.diag(a_arr).copy(), v_arr, status
