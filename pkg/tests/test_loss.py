import numpy as np
import pytest

from cutoffeig.cutoff import make_cutoff
from cutoffeig.loss import (
    DeflationTerm,
    DegenerateTrialFunctionError,
    LossConfig,
    boundary_penalty,
    deflation_penalty,
    empirical_components,
    normalization_penalty,
    total_loss_and_sensitivities,
)
from cutoffeig.net import MLP, TrialFn
from cutoffeig.problem import Domain, Potential, make_rng, sample_boundary, sample_interior
from oracles import central_difference, rel_err


class SineProduct:
    """``prod_j sin(k_j pi x_j)`` with its gradient, scaled by ``amp``."""

    def __init__(self, ks, amp=1.0):
        self.ks = np.asarray(ks, dtype=float)
        self.amp = amp

    def evaluate(self, x):
        s = np.sin(np.pi * self.ks * x)
        c = np.cos(np.pi * self.ks * x)
        val = self.amp * np.prod(s, axis=1)
        grad = np.empty_like(x)
        for j in range(x.shape[1]):
            grad[:, j] = self.amp * np.pi * self.ks[j] * c[:, j] * np.prod(np.delete(s, j, axis=1), axis=1)
        return val, grad

    def value(self, x):
        return self.evaluate(x)[0]


def midpoint_grid(n, d=1):
    t = (np.arange(n) + 0.5) / n
    mesh = np.meshgrid(*([t] * d), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def test_rayleigh_of_first_sine_1d():
    e_v, e_2 = empirical_components(SineProduct([1]), midpoint_grid(10_000), Potential.zero())
    assert abs(e_v / e_2 - np.pi ** 2) < 1e-3


def test_rayleigh_of_sine_product_2d():
    e_v, e_2 = empirical_components(SineProduct([1, 1]), midpoint_grid(100, 2), Potential.zero())
    assert abs(e_v / e_2 - 2 * np.pi ** 2) < 1e-2


def test_components_scale_quadratically():
    x = midpoint_grid(50, 2)
    pot = Potential.constant(2.0)
    e_v, e_2 = empirical_components(SineProduct([1, 2]), x, pot)
    e_v5, e_25 = empirical_components(SineProduct([1, 2], amp=5.0), x, pot)
    assert e_v5 == pytest.approx(25 * e_v, rel=1e-14)
    assert e_25 == pytest.approx(25 * e_2, rel=1e-14)
    assert e_v5 / e_25 == pytest.approx(e_v / e_2, rel=1e-14)


def test_floor_raises():
    x = midpoint_grid(100)
    with pytest.raises(DegenerateTrialFunctionError):
        empirical_components(SineProduct([1], amp=1e-4), x, Potential.zero())


def test_deflation_examples():
    x = midpoint_grid(1000)
    u = SineProduct([1]).value(x)
    u2 = SineProduct([2]).value(x)
    value, sens, _ = deflation_penalty(u, [], 3.0)
    assert value == 0.0 and np.all(sens == 0.0)
    value, _, _ = deflation_penalty(u, [DeflationTerm(u2, float(np.mean(u2 ** 2)))], 3.0)
    assert abs(value) < 1e-12
    cfg = LossConfig(k=2, beta=1.0)
    comps, _ = total_loss_and_sensitivities(u, np.zeros((1000, 1)), np.zeros(1000), cfg,
                                            [DeflationTerm(u, float(np.mean(u ** 2)))])
    assert comps.deflation == pytest.approx(1.0, rel=1e-14)


def test_normalization_penalty_examples():
    assert normalization_penalty(1.0, 7.0) == 0.0
    assert normalization_penalty(0.0, 4.0) == 4.0


def test_boundary_penalty_examples():
    assert boundary_penalty(np.zeros(10), 1.0, 100.0) == 0.0
    assert boundary_penalty(np.ones(10), 1.0, 100.0) == 100.0


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(k=2, beta=0.0)
    with pytest.raises(ValueError):
        LossConfig(mode="boundary_penalty", gamma_bdry=0.0)
    with pytest.raises(ValueError):
        LossConfig(mode="other")


def _random_sample_data(n, d, seed):
    rng = make_rng(seed)
    return rng.normal(size=n), rng.normal(size=(n, d)), rng.uniform(-1, 1, n), rng.normal(size=n)


@pytest.mark.parametrize("mode", ["exact_bc", "boundary_penalty"])
def test_sensitivities_match_finite_differences(mode):
    n, d = 9, 2
    u, g, v, prev = _random_sample_data(n, d, 0)
    ub = make_rng(1).normal(size=5)
    cfg = LossConfig(k=2, beta=3.0, gamma_norm=0.7, gamma_bdry=2.0 if mode != "exact_bc" else 0.0, mode=mode)
    terms = [DeflationTerm(prev, float(np.mean(prev ** 2)))]
    _, sens = total_loss_and_sensitivities(u, g, v, cfg, terms, ub)

    def total(flat):
        uu, gg, bb = flat[:n], flat[n:n + n * d].reshape(n, d), flat[n + n * d:]
        return total_loss_and_sensitivities(uu, gg, v, cfg, terms, bb)[0].total

    flat = np.concatenate([u, g.ravel(), ub])
    fd = central_difference(total, flat, h=1e-6)
    analytic = np.concatenate([sens.values, sens.grads.ravel(),
                               sens.boundary_values if sens.boundary_values is not None else np.zeros(5)])
    assert rel_err(analytic, fd) < 1e-7


def test_scale_invariance_of_total_loss():
    n, d = 50, 3
    u, g, v, prev = _random_sample_data(n, d, 2)
    ub = make_rng(3).normal(size=20)
    cfg = LossConfig(k=3, beta=5.0, gamma_bdry=10.0, mode="boundary_penalty")
    terms = [DeflationTerm(prev, float(np.mean(prev ** 2))), DeflationTerm(prev ** 2, float(np.mean(prev ** 4)))]
    base = total_loss_and_sensitivities(u, g, v, cfg, terms, ub)[0].total
    for c in (2.0, 0.01, 37.0):
        scaled = total_loss_and_sensitivities(c * u, c * g, v, cfg, terms, c * ub)[0].total
        assert abs(scaled - base) <= 1e-10 * abs(base)


def test_parameter_gradient_of_loss_tiny_problem():
    dom = Domain.hypercube(0, 1, 1)
    u = TrialFn(MLP.initialize(1, width=4, depth=2, seed=3), make_cutoff("sine", dom))
    x = sample_interior(dom, 16, seed=0).points
    v = Potential.constant(1.5)(x)
    prev = np.sin(2 * np.pi * x[:, 0])
    cfg = LossConfig(k=2, beta=2.0, gamma_norm=1.0)
    terms = [DeflationTerm(prev, float(np.mean(prev ** 2)))]
    vals, grads, cache = u.forward(x)
    _, sens = total_loss_and_sensitivities(vals, grads, v, cfg, terms)
    analytic = u.backward(cache, sens.values, sens.grads)
    p0 = u.net.params.copy()

    def f(p):
        u.net.set_params(p)
        a, b = u.evaluate(x)
        return total_loss_and_sensitivities(a, b, v, cfg, terms)[0].total

    fd = central_difference(f, p0, h=1e-6)
    u.net.set_params(p0)
    assert rel_err(analytic, fd) < 1e-5


def test_parameter_gradient_boundary_penalty_mode():
    dom = Domain.hypercube(-1, 1, 2)
    u = TrialFn(MLP.initialize(2, width=4, depth=2, seed=5), make_cutoff("none", dom))
    x = sample_interior(dom, 12, seed=0).points
    y = sample_boundary(dom, 12, seed=0).points
    v = Potential.separable_cosine()(x)
    cfg = LossConfig(gamma_bdry=50.0, mode="boundary_penalty")
    pts = np.concatenate([x, y])
    vals, grads, cache = u.forward(pts)
    _, sens = total_loss_and_sensitivities(vals[:12], grads[:12], v, cfg, None, vals[12:])
    analytic = u.backward(cache, np.concatenate([sens.values, sens.boundary_values]),
                          np.concatenate([sens.grads, np.zeros((12, 2))]))
    p0 = u.net.params.copy()

    def f(p):
        u.net.set_params(p)
        a, b = u.evaluate(pts)
        return total_loss_and_sensitivities(a[:12], b[:12], v, cfg, None, a[12:])[0].total

    fd = central_difference(f, p0, h=1e-6)
    u.net.set_params(p0)
    assert rel_err(analytic, fd) < 1e-5


def test_rayleigh_stationary_at_eigenfunction():
    x = midpoint_grid(40, 2)
    ef = SineProduct([1, 1])
    vals, grads = ef.evaluate(x)
    comps, sens = total_loss_and_sensitivities(vals, grads, np.zeros(len(x)), LossConfig())
    assert comps.total == pytest.approx(2 * np.pi ** 2, rel=1e-3)
    # Directional derivative along a smooth perturbation h: sum(a h + b . grad h) ~ 0.
    hv, hg = SineProduct([1, 2]).evaluate(x)
    hv2, hg2 = SineProduct([2, 1]).evaluate(x)
    for pv, pg in ((hv, hg), (hv2, hg2)):
        slope = float(sens.values @ pv + np.sum(sens.grads * pg))
        assert abs(slope) < 1e-8
