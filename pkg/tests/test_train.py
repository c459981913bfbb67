import numpy as np
import pytest

from cutoffeig import train as train_mod
from cutoffeig.cutoff import make_cutoff
from cutoffeig.loss import LossConfig
from cutoffeig.net import MLP, TrialFn
from cutoffeig.problem import Domain, Potential, Problem
from cutoffeig.spectral_ref import ReferenceEigenfunction, solve_separable
from cutoffeig.train import (
    AdamState,
    FrozenSolution,
    NonFiniteError,
    SolveAborted,
    TrainSchedule,
    adam_step,
    build_trial,
    evaluation_rule,
    rayleigh_quotient,
    solve_spectrum,
    train_kth,
)


def _unit_problem(d, potential=None):
    return Problem(Domain.hypercube(0, 1, d), potential or Potential.zero())


def test_schedule_steps():
    s = TrainSchedule(epochs_total=100, lr0=1e-2, points0=100, period=30, lr_factor=0.5, points_factor=2)
    assert [s.lr(e) for e in (0, 29, 30, 61, 99)] == [1e-2, 1e-2, 5e-3, 2.5e-3, 1.25e-3]
    assert [s.batch_size(e) for e in (0, 30, 60, 90)] == [100, 200, 400, 800]


def test_adam_zero_gradient():
    p = np.array([1.0, -2.0])
    st = AdamState(np.array([0.3, 0.1]), np.array([0.2, 0.4]), 5)
    new, st2 = adam_step(p, np.zeros(2), st, 0.0)
    assert np.array_equal(new, p)
    assert np.allclose(st2.m, 0.9 * st.m) and np.allclose(st2.v, 0.999 * st.v)


def test_adam_first_step():
    g = np.array([0.5, -3.0, 1e-3])
    new, _ = adam_step(np.zeros(3), g, AdamState.zeros(3), 0.1)
    assert np.allclose(new, -0.1 * g / (np.abs(g) + 1e-8), rtol=1e-12)


def test_adam_constant_gradient_limit():
    g = np.array([2.0, -0.01])
    p, st = np.zeros(2), AdamState.zeros(2)
    for _ in range(3000):
        prev = p
        p, st = adam_step(p, g, st, 1e-3)
    assert np.allclose(p - prev, -1e-3 * np.sign(g), rtol=1e-6)


def test_adam_rejects_non_finite():
    with pytest.raises(NonFiniteError):
        adam_step(np.zeros(2), np.array([1.0, np.nan]), AdamState.zeros(2), 1e-3)


def test_rayleigh_quotient_of_reference_eigenfunction():
    prob = Problem(Domain.hypercube(-1, 1, 2), Potential.separable_cosine())
    sp = solve_separable(prob.domain, prob.potential, 2)
    est = rayleigh_quotient(ReferenceEigenfunction(sp, 1), prob)
    assert est.method == "quadrature" and est.stderr == 0.0
    assert est.value == pytest.approx(sp.values[0], rel=1e-10)
    mc = rayleigh_quotient(ReferenceEigenfunction(sp, 1), prob, method="mc", n_points=200_000)
    assert abs(mc.value - sp.values[0]) < 4 * mc.stderr + 1e-12


def test_evaluation_rule_selection():
    assert evaluation_rule(Domain.hypercube(0, 1, 3))[2] == "quadrature"
    assert evaluation_rule(Domain.hypercube(0, 1, 4), n_points=10)[2] == "mc"
    assert evaluation_rule(Domain.ball(1.0), n_points=10)[2] == "mc"


def test_build_trial_modes():
    prob = _unit_problem(2)
    assert build_trial(prob, "sine").cutoff.name == "sine"
    assert build_trial(prob, "sine", mode="boundary_penalty").cutoff.is_identity


def test_ground_state_1d_tiny_schedule():
    prob = _unit_problem(1)
    trial = build_trial(prob, "sine", seed=1)
    sched = TrainSchedule(epochs_total=2000, period=2000, seed=0)
    res = train_kth(prob, trial, [], sched, LossConfig())
    assert abs(res.eigenvalue - np.pi ** 2) / np.pi ** 2 < 0.02
    assert all(row["deflation"] == 0.0 for row in res.trace)
    assert set(res.trace[0]) == set(train_mod.TRACE_COLUMNS)


def test_training_is_byte_deterministic():
    prob = _unit_problem(2, Potential.constant(1.0))
    sched = TrainSchedule(epochs_total=60, period=60, points0=64, seed=7)
    outs = []
    for _ in range(2):
        trial = build_trial(prob, "sine", width=8, depth=2, seed=3)
        res = train_kth(prob, trial, [], sched, LossConfig(), log_every=10)
        outs.append((trial.net.params.tobytes(), repr(res.trace), res.eigenvalue))
    assert outs[0] == outs[1]


def test_frozen_solutions_are_not_modified():
    prob = _unit_problem(1)
    first = build_trial(prob, "sine", width=6, depth=1, seed=0)
    frozen = FrozenSolution(first, 10.0, first.param_hash())
    second = build_trial(prob, "sine", width=6, depth=1, seed=1)
    sched = TrainSchedule(epochs_total=20, period=20, points0=32)
    res = train_kth(prob, second, [frozen], sched, LossConfig(k=2, beta=40.0), log_every=5)
    assert first.param_hash() == frozen.param_hash
    assert any(row["deflation"] > 0 for row in res.trace)


def test_boundary_penalty_needs_identity_cutoff():
    prob = _unit_problem(1)
    trial = build_trial(prob, "sine", seed=0)
    with pytest.raises(ValueError):
        train_kth(prob, trial, [], TrainSchedule(epochs_total=1), LossConfig(mode="boundary_penalty", gamma_bdry=1.0))


def test_exact_deflation_against_reference():
    prob = _unit_problem(1)
    sp = solve_separable(prob.domain, prob.potential, 2, M=16)
    trial = build_trial(prob, "sine", width=10, depth=2, seed=2)
    sched = TrainSchedule(epochs_total=1500, period=1500, points0=500)
    res = train_kth(prob, trial, [ReferenceEigenfunction(sp, 1)], sched,
                    LossConfig(k=2, beta=4 * np.pi ** 2), exact_deflation=True)
    assert abs(res.eigenvalue - 4 * np.pi ** 2) / (4 * np.pi ** 2) < 0.05


def test_solve_spectrum_single_pair_and_abort(monkeypatch):
    prob = _unit_problem(1)
    sched = TrainSchedule(epochs_total=30, period=30, points0=32)
    sol = solve_spectrum(prob, "sine", 1, sched, width=6, depth=1)
    assert len(sol.records) == 1 and sol.records[0].beta == 0.0

    real = train_mod.train_kth

    def failing(problem, trial, deflation, schedule, config, **kw):
        if config.k == 2:
            raise FloatingPointError("boom")
        return real(problem, trial, deflation, schedule, config, **kw)

    monkeypatch.setattr(train_mod, "train_kth", failing)
    with pytest.raises(SolveAborted) as info:
        solve_spectrum(prob, "sine", 3, sched, width=6, depth=1)
    assert len(info.value.partial.records) == 1


def test_monotonicity_flags():
    sol = train_mod.EigSolution()
    dummy = TrialFn(MLP(1, 2, 1), make_cutoff("sine", Domain.hypercube(0, 1, 1)))
    for k, lam in enumerate([1.0, 3.0, 2.0], start=1):
        sol.records.append(train_mod.EigRecord(k, lam, 0.0, 0.0, dummy, [], "", 0, 1.0))
    assert sol.monotonicity_violations() == [3]


@pytest.mark.slow
def test_ground_state_d5_desk_scale():
    prob = Problem(Domain.hypercube(-1, 1, 5), Potential.separable_cosine())
    trial = build_trial(prob, "phi_c", seed=train_mod.initialization_seed(0, 1))
    res = train_kth(prob, trial, [], TrainSchedule(epochs_total=3000, seed=0), LossConfig(), log_every=500)
    assert res.estimate.method == "mc"
    assert abs(res.eigenvalue - 11.8345) / 11.8345 <= 5e-3
