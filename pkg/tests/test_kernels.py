"""The compiled kernels and the numpy fallback must agree."""

import numpy as np
import pytest

from cutoffeig import _kernels_py
from cutoffeig._backend import BACKEND
from cutoffeig.net import MLP
from cutoffeig.problem import make_rng
from oracles import sturm_eigenvalues

compiled = pytest.importorskip("cutoffeig._kernels")


def test_backend_selected():
    assert BACKEND in ("compiled", "python")
    assert compiled.BACKEND_NAME == "compiled" and _kernels_py.BACKEND_NAME == "python"


@pytest.mark.parametrize("d,m,l,n", [(1, 3, 1, 5), (2, 40, 3, 257), (5, 16, 2, 64)])
def test_forward_backward_agree(d, m, l, n):
    net = MLP.initialize(d, m, l, seed=d + m)
    x = make_rng(0).uniform(-1, 1, (n, d))
    rng = make_rng(1)
    alpha, gamma = rng.normal(size=n), rng.normal(size=(n, d))
    out = {}
    for mod in (compiled, _kernels_py):
        for ws in (None, {}):
            vals, grads, cache = mod.mlp_forward(x, net.weights, net.biases, net.w_out, net.b_out, ws)
            gw = [np.zeros_like(w) for w in net.weights]
            gb = [np.zeros_like(b) for b in net.biases]
            go = np.zeros(m + 1)
            mod.mlp_backward(cache, net.weights, net.w_out, alpha, gamma, gw, gb, go)
            value_only = mod.mlp_value(x, net.weights, net.biases, net.w_out, net.b_out)
            out[(mod.BACKEND_NAME, ws is None)] = (vals.copy(), grads.copy(), np.concatenate(
                [np.concatenate([a.ravel(), b]) for a, b in zip(gw, gb)] + [go]), np.asarray(value_only))
    ref = out[("python", True)]
    for key, got in out.items():
        for a, b in zip(got, ref):
            assert np.allclose(a, b, rtol=1e-12, atol=1e-13), key


def test_workspace_reuse_is_repeatable():
    net = MLP.initialize(2, 12, 2, seed=0)
    x = make_rng(2).random((33, 2))
    ws = {}
    first = compiled.mlp_forward(x, net.weights, net.biases, net.w_out, net.b_out, ws)[0].copy()
    compiled.mlp_forward(x[:7], net.weights, net.biases, net.w_out, net.b_out, ws)
    again = compiled.mlp_forward(x, net.weights, net.biases, net.w_out, net.b_out, ws)[0]
    assert first.tobytes() == again.tobytes()


@pytest.mark.parametrize("n", [1, 2, 7, 24])
def test_jacobi_backends_and_sturm_oracle(n):
    A = make_rng(n).normal(size=(n, n))
    A = A + A.T
    oracle = sturm_eigenvalues(A)
    for mod in (compiled, _kernels_py):
        diag, V, sweeps = mod.jacobi_eigh(A.copy(), 1e-15, 100)
        assert sweeps >= 0
        order = np.argsort(diag)
        lam, V = np.asarray(diag)[order], np.asarray(V)[:, order]
        assert np.allclose(lam, oracle, atol=1e-10 * np.linalg.norm(A))
        resid = np.linalg.norm(A - V @ np.diag(lam) @ V.T)
        assert resid < 1e-10 * np.linalg.norm(A)
