import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cutoffeig import barron
from cutoffeig.barron import (
    CallablePiece,
    CosSinSeries,
    SineSeries,
    UnivariatePiece,
    barron_norm,
    coefficient_bound_factor,
    expand_over_cutoff,
    h1_error,
    maurey_sample,
    relu_interpolate,
    softplus_replace,
    w1inf_error,
)
from cutoffeig.cutoff import make_cutoff
from cutoffeig.problem import Domain, make_rng

TWO_TERM = SineSeries({(1, 1): 1.0, (3, 1): 0.5})


class SeriesTrial:
    def __init__(self, u):
        self.u = u

    def evaluate(self, x):
        return self.u.evaluate(x)


def test_series_validation():
    with pytest.raises(ValueError):
        SineSeries({(0, 1): 1.0})
    with pytest.raises(ValueError):
        SineSeries({(1,): 1.0, (1, 2): 1.0})
    assert len(SineSeries({(1,): 1.0, (2,): 0.0})) == 1
    with pytest.raises(ValueError):
        CosSinSeries({((0, 0), 0): 1.0}, 2)


def test_barron_norm_examples():
    u = SineSeries({(1,): 1.0})
    assert barron_norm(u, 0) == 2.0
    assert barron_norm(u, 2) == pytest.approx(1 + math.pi ** 2)
    assert barron_norm(TWO_TERM, 2) == pytest.approx((1 + 4 * math.pi ** 2) + 0.5 * (1 + 16 * math.pi ** 2))


def test_expand_examples():
    assert expand_over_cutoff(SineSeries({(1,): 1.0})).coefficients == {((0,), 0): 1.0}
    assert expand_over_cutoff(SineSeries({(3,): 1.0})).coefficients == {((0,), 0): 1.0, ((2,), 0): 2.0}


def _random_series(seed, d):
    rng = make_rng(seed)
    terms = {}
    for _ in range(rng.integers(1, 5)):
        terms[tuple(int(v) for v in rng.integers(1, 5, size=d))] = float(rng.normal())
    return SineSeries(terms)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_pointwise_reconstruction(seed, d):
    u = _random_series(seed, d)
    v = expand_over_cutoff(u)
    phi = make_cutoff("sine", Domain.hypercube(0, 1, d))
    x = make_rng(seed, 1).uniform(0.01, 0.99, (1000, d))
    uv = u.value(x)
    assert np.max(np.abs(phi(x) * v.value(x) - uv)) <= 1e-10 * max(1.0, np.max(np.abs(uv)))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 4), st.floats(0.5, 4.0))
def test_coefficient_weighted_sum_bound(seed, d, s):
    u = _random_series(seed, d)
    lhs = expand_over_cutoff(u).weighted_sum(s)
    assert lhs <= coefficient_bound_factor(d, s + 1) * barron_norm(u, s + 1) * (1 + 1e-12)


def test_series_gradient_matches_fd():
    x = make_rng(0).random((10, 2))
    _, grad = TWO_TERM.evaluate(x)
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (TWO_TERM.value(x + e) - TWO_TERM.value(x - e)) / (2 * h)
        assert np.allclose(grad[:, j], fd, rtol=1e-7, atol=1e-7)


def test_h1_error_of_exact_synthesis_is_zero():
    assert h1_error(TWO_TERM, SeriesTrial(TWO_TERM)) == 0.0


def test_h1_error_matches_closed_form():
    # ||sin(pi x)sin(pi y)||_{H1}^2 = 1/4 + 2 * pi^2 / 4
    zero = SeriesTrial(SineSeries({(1, 1): 1e-300}))
    err = h1_error(SineSeries({(1, 1): 1.0}), zero)
    assert err == pytest.approx(math.sqrt(0.25 + math.pi ** 2 / 2), rel=1e-12)
    mc, se = h1_error(SineSeries({(1, 1): 1.0}), zero, method="mc", n_points=100_000)
    assert abs(mc - err) < 4 * se


def test_single_term_maurey_is_exact():
    u = SineSeries({(1,): 1.0})
    for m in (1, 7, 64):
        assert h1_error(u, maurey_sample(u, 1, m, seed=m)) < 1e-10


def test_maurey_parity_and_size():
    v2 = maurey_sample(TWO_TERM, 2, 10, seed=0)
    assert v2.activation == "sin" and v2.width == 40
    assert set(np.unique(v2.biases)) <= {0.0, 1.0}
    u3 = SineSeries({(1, 2, 1): 1.0})
    v3 = maurey_sample(u3, 2, 5, seed=0)
    assert v3.activation == "cos" and v3.width == 40


def test_maurey_three_dimensional_reconstruction():
    u = SineSeries({(1, 2, 1): 1.0})
    # ||u||_{H1} is about 2.7, so a large-m sample must land well inside it.
    assert h1_error(u, maurey_sample(u, 2, 2000, seed=1), nodes=16) < 0.5


def test_maurey_rate_and_bound():
    s = 2
    b_u = coefficient_bound_factor(2, s + 1) * barron_norm(TWO_TERM, s + 1)
    ms = [8, 16, 32, 64, 128, 256, 512]
    means = []
    for m in ms:
        errs = [h1_error(TWO_TERM, maurey_sample(TWO_TERM, s, m, seed)) for seed in range(20)]
        assert max(errs) <= math.sqrt(6 / m) * b_u
        means.append(np.mean(errs))
    slope = barron.fit_loglog_slope(ms, means)
    assert -0.7 <= slope <= -0.3


def test_relu_interpolation_reproduces_affine():
    g = CallablePiece(lambda z: 2.0 * z + 1.0, lambda z: np.full_like(z, 2.0), rho=0.3, bound=2.0)
    gm = relu_interpolate(g, 5)
    z = np.linspace(-1, 1, 101)
    assert np.allclose(gm.value(z[:, None]), 2 * z + 1, atol=1e-13)


def test_relu_interpolation_cosine_bound():
    g = UnivariatePiece(1.0, 1.0, 0.0, "cos")
    assert g.rho == 0.0 and g.bound == pytest.approx(math.pi ** 2)
    gm = relu_interpolate(g, 64)
    assert w1inf_error(g, gm) <= 2 * g.bound / 64
    assert np.sum(np.abs(gm.gammas)) <= 4 * g.bound
    assert abs(gm.c) <= g.bound
    assert gm.constraint_violations() == []


def test_sine_piece_stationary_point():
    g = UnivariatePiece(-0.7, 3.0, 1.0, "sin")
    assert abs(g.derivative(np.array([g.rho]))[0]) < 1e-12
    gm = relu_interpolate(g, 40)
    assert w1inf_error(g, gm) <= 2 * g.bound / 40


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3).filter(lambda a: abs(a) > 1e-3), st.integers(1, 6),
       st.sampled_from([0.0, 1.0]), st.sampled_from(["cos", "sin"]), st.integers(1, 80))
def test_relu_budget_random_pieces(amp, freq, phase, parity, m):
    g = UnivariatePiece(amp, float(freq), phase, parity)
    gm = relu_interpolate(g, m)
    assert np.sum(np.abs(gm.gammas)) <= 4 * g.bound * (1 + 1e-12)
    assert abs(gm.c) <= g.bound
    assert w1inf_error(g, gm, n_grid=2001) <= 2 * g.bound / m * (1 + 1e-9)


def test_softplus_replacement():
    g = UnivariatePiece(1.0, 1.0, 0.0, "cos")
    gm = relu_interpolate(g, 64)
    tau = 9 * 8
    gs = softplus_replace(gm, tau)
    assert gs.gammas.tobytes() == gm.gammas.tobytes()
    assert gs.weights.tobytes() == gm.weights.tobytes() and gs.biases.tobytes() == gm.biases.tobytes()
    assert w1inf_error(g, gs) <= 4 * g.bound * (1 + 1 / tau) / tau
    z = np.linspace(-1, 1, 1001)[:, None]
    dev = [np.max(np.abs(softplus_replace(gm, t).value(z) - gm.value(z))) for t in (10.0, 1e3, 1e6)]
    assert dev[0] > dev[1] > dev[2] and dev[2] < 1e-4


def test_pipelines_respect_class_constraints():
    for net in (barron.relu_pipeline(TWO_TERM, 3, 32, 0), barron.softplus_pipeline(TWO_TERM, 3, 32, 0)):
        assert net.constraint_violations() == []
        assert np.allclose(np.abs(net.weights).sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        barron.relu_pipeline(TWO_TERM, 2, 8, 0)


def test_pipelines_are_seed_deterministic():
    a = barron.relu_pipeline(TWO_TERM, 3, 16, 5)
    b = barron.relu_pipeline(TWO_TERM, 3, 16, 5)
    assert a.params.tobytes() == b.params.tobytes()


def test_pipeline_one_dimensional_constant_atom():
    u = SineSeries({(1,): 1.0, (2,): 0.3})
    net = barron.relu_pipeline(u, 3, 64, 0)
    assert h1_error(u, net) <= 28 * barron.network_budget(u, 3) / 8
