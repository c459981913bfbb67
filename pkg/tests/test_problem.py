import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cutoffeig.problem import (
    Domain,
    Potential,
    Problem,
    SamplingError,
    SingularPotentialError,
    evaluate_potential,
    make_rng,
    sample_boundary,
    sample_interior,
)


def test_domain_validation():
    with pytest.raises(ValueError):
        Domain.hypercube(1.0, 0.0, 2)
    with pytest.raises(ValueError):
        Domain.ball(0.0)
    with pytest.raises(ValueError):
        Domain.shell(1.0, 0.5)


def test_membership_excludes_boundary():
    cube = Domain.hypercube(0.0, 1.0, 2)
    pts = np.array([[0.5, 0.5], [0.0, 0.5], [1.0, 0.3], [0.2, 1.0 - 1e-13]])
    assert cube.contains(pts).tolist() == [True, False, False, False]
    shell = Domain.shell(0.5, 1.0)
    pts = np.array([[0.75, 0, 0], [0.5, 0, 0], [1.0, 0, 0], [0.1, 0, 0]])
    assert shell.contains(pts).tolist() == [True, False, False, False]


def test_volumes():
    assert Domain.hypercube(-1, 1, 3).volume == 8.0
    assert Domain.ball(1.0).volume == pytest.approx(4 / 3 * np.pi)
    assert Domain.shell(0.5, 1.0).volume == pytest.approx(4 / 3 * np.pi * (1 - 0.125))


def test_potential_examples():
    assert evaluate_potential(Potential.zero(), np.array([0.3, 0.7])) == 0.0
    assert evaluate_potential(Potential.separable_cosine(), np.zeros(5)) == pytest.approx(-1.0, abs=1e-15)
    assert evaluate_potential(Potential.inverse_square(1 / 3), np.array([1.0, 0, 0])) == pytest.approx(1 / 9)


def test_inverse_square_at_origin_raises():
    with pytest.raises(SingularPotentialError):
        Potential.inverse_square(0.5)(np.zeros((1, 3)))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_separable_cosine_range(d, seed):
    x = make_rng(seed).uniform(-1, 1, size=(50, d))
    v = Potential.separable_cosine()(x)
    assert np.all(v >= -1.0) and np.all(v <= 1.0)


def test_potential_bounds():
    dom = Domain.hypercube(-1, 1, 5)
    assert Potential.separable_cosine().bounds(dom) == pytest.approx((-1.0, 1.0))
    lo, hi = Potential.inverse_square(0.5).bounds(Domain.shell(0.5, 1.0))
    assert (lo, hi) == pytest.approx((0.25, 1.0))


def test_interior_means_hypercube():
    pts = sample_interior(Domain.hypercube(0, 1, 2), 100_000, seed=3).points
    assert np.all(np.abs(pts.mean(axis=0) - 0.5) < 0.01)


def test_interior_ball_radius_cubed_is_uniform():
    pts = sample_interior(Domain.ball(1.0), 100_000, seed=4).points
    r3 = np.linalg.norm(pts, axis=1) ** 3
    assert abs(r3.mean() - 0.5) < 0.01


def test_interior_chi_square_uniformity():
    pts = sample_interior(Domain.hypercube(0, 1, 2), 100_000, seed=5).points
    counts, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=10, range=[[0, 1], [0, 1]])
    _, p = stats.chisquare(counts.ravel())
    assert p > 1e-3


@pytest.mark.parametrize("domain", [Domain.hypercube(-1, 1, 3), Domain.ball(1.0), Domain.shell(0.5, 1.0)])
def test_interior_points_are_interior(domain):
    pts = sample_interior(domain, 5000, seed=1).points
    assert np.all(domain.contains(pts))


def test_sampling_is_deterministic():
    for dom in (Domain.hypercube(0, 1, 2), Domain.shell(0.5, 1.0)):
        a = sample_interior(dom, 1, seed=11).points
        b = sample_interior(dom, 1, seed=11).points
        assert a.tobytes() == b.tobytes()
    a = sample_interior(Domain.hypercube(0, 1, 2), 100, seed=11, stream=(1, 2)).points
    b = sample_interior(Domain.hypercube(0, 1, 2), 100, seed=11, stream=(1, 3)).points
    assert not np.array_equal(a, b)


def test_exclusion_radius():
    prob = Problem(Domain.ball(1.0), Potential.inverse_square(1 / 3))
    pts = sample_interior(prob.domain, 2000, seed=0, exclude_radius=0.3).points
    assert np.all(np.linalg.norm(pts, axis=1) >= 0.3)
    assert prob.exclude_radius > 0


def test_rejection_cap():
    with pytest.raises(SamplingError):
        sample_interior(Domain.ball(1.0), 10, seed=0, exclude_radius=2.0)


def test_boundary_square_faces():
    pts = sample_boundary(Domain.hypercube(0, 1, 2), 1000, seed=0).points
    on_face = np.isin(pts, [0.0, 1.0])
    assert np.all(on_face.sum(axis=1) == 1)


def test_boundary_ball_sphere():
    pts = sample_boundary(Domain.ball(1.0), 1000, seed=0).points
    assert np.all(np.abs(np.linalg.norm(pts, axis=1) - 1.0) < 1e-12)


def test_boundary_shell_area_split():
    pts = sample_boundary(Domain.shell(0.5, 1.0), 100_000, seed=0).points
    outer = np.mean(np.abs(np.linalg.norm(pts, axis=1) - 1.0) < 1e-9)
    assert abs(outer - 0.8) < 0.02
