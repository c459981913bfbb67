import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutoffeig.cutoff import make_cutoff
from cutoffeig.net import (
    MLP,
    TrialFn,
    TwoLayerNet,
    backward_params,
    forward_with_spatial_grad,
    load_params,
    save_params,
    softplus_scaled,
)
from cutoffeig.problem import Domain, make_rng, sample_boundary, sample_interior
from oracles import central_difference, rel_err, spatial_central_difference


def _random_two_layer(activation, m=5, d=2, seed=0, tau=3.0):
    rng = make_rng(seed)
    return TwoLayerNet(0.3, rng.normal(size=m), rng.normal(size=(m, d)), rng.normal(size=m),
                       activation=activation, tau=tau)


def _functional(trial, x, a, b):
    u, du = trial.evaluate(x)
    return float(a @ u + np.sum(b * du))


def test_softplus_examples():
    assert softplus_scaled(0.0, 9.0) == pytest.approx(np.log(2) / 9, abs=1e-15)
    assert abs(softplus_scaled(2.0, 100.0) - 2.0) < 1e-12
    z = np.linspace(-2, 2, 4001)
    gap = np.abs(np.maximum(z, 0) - softplus_scaled(z, 9.0))
    assert np.all(gap <= np.exp(-9 * np.abs(z)) / 9 + 1e-15)
    assert np.isfinite(softplus_scaled(1e4, 50.0)) and softplus_scaled(-1e4, 50.0) == 0.0


def test_mlp_default_shapes():
    net = MLP.initialize(5)
    assert [w.shape for w in net.weights] == [(40, 5), (40, 40), (40, 40)]
    assert net.w_out.shape == (40,)
    assert 3000 < net.n_params < 3600


def test_mlp_spatial_gradient_matches_fd():
    net = MLP.initialize(3, width=8, depth=3, seed=4)
    x = make_rng(1).uniform(-1, 1, (15, 3))
    _, grad, _ = net.forward(x)
    fd = spatial_central_difference(net.value, x, h=1e-5)
    assert rel_err(grad, fd) < 1e-7


def test_trial_spatial_gradient_matches_fd():
    dom = Domain.hypercube(-1, 1, 3)
    u = TrialFn(MLP.initialize(3, width=8, depth=2, seed=2), make_cutoff("phi_c", dom))
    x = sample_interior(dom, 20, seed=3).points * 0.95
    _, grad = forward_with_spatial_grad(u, x)
    fd = spatial_central_difference(u.value, x, h=1e-5)
    assert rel_err(grad, fd) < 1e-6


def test_constant_net_times_sine_cutoff():
    net = TwoLayerNet(1.0, np.zeros(1), np.zeros((1, 1)), np.zeros(1), activation="relu")
    u = TrialFn(net, make_cutoff("sine", Domain.hypercube(0, 1, 1)))
    x = np.linspace(0.01, 0.99, 50)[:, None]
    val, grad = u.evaluate(x)
    assert np.allclose(val, np.sin(np.pi * x[:, 0]), atol=1e-14)
    assert np.allclose(grad[:, 0], np.pi * np.cos(np.pi * x[:, 0]), atol=1e-13)


def test_trial_vanishes_on_faces():
    dom = Domain.hypercube(-1, 1, 2)
    u = TrialFn(MLP.initialize(2, 6, 2, seed=0), make_cutoff("phi_a", dom))
    y = sample_boundary(dom, 100, seed=0).points
    n_vals = np.abs(u.net.value(y))
    assert np.all(np.abs(u.value(y)) <= 1e-12 * n_vals + 1e-300)


def test_mlp_parameter_gradient_matches_fd():
    dom = Domain.hypercube(-1, 1, 2)
    u = TrialFn(MLP.initialize(2, width=4, depth=2, seed=9), make_cutoff("phi_d", dom))
    x = sample_interior(dom, 7, seed=1).points
    rng = make_rng(5)
    a, b = rng.normal(size=7), rng.normal(size=(7, 2))
    _, _, cache = u.forward(x)
    grad = backward_params(u, cache, a, b)
    p0 = u.net.params.copy()

    def f(p):
        u.net.set_params(p)
        return _functional(u, x, a, b)

    fd = central_difference(f, p0, h=1e-6)
    u.net.set_params(p0)
    assert rel_err(grad, fd) < 1e-5


def test_zero_sensitivities_give_zero_gradient():
    net = MLP.initialize(2, 5, 2, seed=0)
    x = make_rng(0).random((4, 2))
    _, _, cache = net.forward(x)
    assert np.all(net.backward(cache, np.zeros(4), np.zeros((4, 2))) == 0.0)


@pytest.mark.parametrize("activation", ["relu", "softplus", "cos", "sin"])
def test_two_layer_gradients_match_fd(activation):
    dom = Domain.hypercube(0, 1, 2)
    net = _random_two_layer(activation)
    u = TrialFn(net, make_cutoff("sine", dom))
    x = sample_interior(dom, 6, seed=2).points
    fd_x = spatial_central_difference(u.value, x, h=1e-6)
    assert rel_err(u.evaluate(x)[1], fd_x) < 1e-6
    rng = make_rng(3)
    a, b = rng.normal(size=6), rng.normal(size=(6, 2))
    _, _, cache = u.forward(x)
    grad = u.backward(cache, a, b)
    p0 = net.params.copy()

    def f(p):
        net.set_params(p)
        return _functional(u, x, a, b)

    fd = central_difference(f, p0, h=1e-6)
    net.set_params(p0)
    assert rel_err(grad, fd) < 1e-5


def test_single_cosine_neuron_by_hand():
    g, w, bias = 0.7, np.array([0.4, -1.3]), 0.25
    net = TwoLayerNet(0.0, np.array([g]), w[None, :], np.array([bias]), activation="cos")
    phi = make_cutoff("sine", Domain.hypercube(0, 1, 2))
    u = TrialFn(net, phi)
    x = np.array([[0.3, 0.6]])
    ph, dph = phi.value_and_grad(x)
    z = float(w @ x[0] + bias)
    # d/dgamma of a*u: a * cos(pi z) * phi
    _, _, cache = u.forward(x)
    grad = u.backward(cache, np.array([1.0]), np.zeros((1, 2)))
    assert grad[1] == pytest.approx(np.cos(np.pi * z) * ph[0], rel=1e-13)
    # d/db of u: -gamma * pi * sin(pi z) * phi
    assert grad[-1] == pytest.approx(-g * np.pi * np.sin(np.pi * z) * ph[0], rel=1e-13)


def test_two_layer_constraints_and_projection():
    net = TwoLayerNet(0.5, np.array([3.0, -3.0]), np.array([[0.6, 0.4], [2.0, 0.0]]), np.array([0.2, 1.5]),
                      budget=1.0)
    assert net.constraint_violations()
    net.project()
    assert net.constraint_violations() == []
    with pytest.raises(ValueError):
        TwoLayerNet(0.0, np.ones(1), np.array([[2.0, 0.0]]), np.zeros(1), budget=1.0, constrained=True)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 1000), st.sampled_from(["mlp", "relu", "cos"]))
def test_save_load_round_trip(tmp_path_factory, seed, kind):
    if kind == "mlp":
        net = MLP.initialize(3, 6, 2, seed=seed)
    else:
        net = _random_two_layer(kind, seed=seed)
    path = tmp_path_factory.mktemp("p") / "net.npz"
    save_params(path, net)
    back = load_params(path)
    assert back.params.tobytes() == net.params.tobytes()
    x = make_rng(seed).random((5, net.dim))
    assert np.array_equal(back.value(x), net.value(x))


def test_initialization_is_seed_deterministic():
    a = MLP.initialize(2, 10, 3, seed=42).params
    b = MLP.initialize(2, 10, 3, seed=42).params
    c = MLP.initialize(2, 10, 3, seed=43).params
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_param_hash_tracks_parameters():
    dom = Domain.hypercube(-1, 1, 2)
    u = TrialFn(MLP.initialize(2, 4, 1, seed=0), make_cutoff("phi_a", dom))
    h = u.param_hash()
    u.net.params[0] += 1e-12
    assert u.param_hash() != h
