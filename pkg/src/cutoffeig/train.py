"""Adam training of trial functions and the deflation driver.

:func:`train_kth` minimizes the total loss for one eigenpair on fresh
uniform batches, one per epoch.  :func:`solve_spectrum` chains it for
``k = 1..K`` and freezes each result into the deflation set of the next
solve.  Final eigenvalue estimates are Rayleigh quotients evaluated on a
fixed quadrature grid (hypercubes with ``d <= 3``) or a fixed Monte Carlo
batch.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cutoff import CutoffFn, make_cutoff
from .loss import DeflationTerm, LossComponents, LossConfig, total_loss_and_sensitivities
from .net import MLP, TrialFn, TwoLayerNet
from .problem import Domain, Problem, make_rng
from .quadrature import tensor_gauss_legendre

log = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "epoch", "lr", "batch", "loss", "rayleigh", "deflation", "normalization",
    "boundary", "e2", "grad_norm",
)


class NonFiniteError(FloatingPointError):
    """Raised when a loss or gradient stops being finite.

    Attributes:
        dump: Dictionary with the state at the time of failure.
    """

    def __init__(self, message: str, dump: dict):
        super().__init__(f"{message}: {dump}")
        self.dump = dump


class SolveAborted(RuntimeError):
    """A k-th solve failed; ``partial`` holds the solutions finished before it."""

    def __init__(self, message: str, partial: "EigSolution"):
        super().__init__(message)
        self.partial = partial


# ---------------------------------------------------------------------------
# Schedule and optimizer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainSchedule:
    """Step schedule: every ``period`` epochs the learning rate is multiplied
    by ``lr_factor`` and the batch size by ``points_factor``."""

    epochs_total: int = 120_000
    lr0: float = 5e-3
    points0: int = 1000
    period: int = 20_000
    lr_factor: float = 0.25
    points_factor: int = 2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def stage(self, epoch: int) -> int:
        return epoch // self.period

    def lr(self, epoch: int) -> float:
        return self.lr0 * self.lr_factor ** self.stage(epoch)

    def batch_size(self, epoch: int) -> int:
        return int(self.points0 * self.points_factor ** self.stage(epoch))


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(np.zeros(size), np.zeros(size), 0)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update with bias correction.

    Returns:
        ``(new_params, new_state)``; inputs are not modified.

    Raises:
        NonFiniteError: if any gradient entry is not finite.
    """
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("params, grads and optimizer state must have matching shapes")
    if not np.all(np.isfinite(grads)):
        bad = np.nonzero(~np.isfinite(grads))[0]
        raise NonFiniteError("non-finite gradient", {"step": state.t, "bad_indices": bad[:10].tolist()})
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


# ---------------------------------------------------------------------------
# Rayleigh-quotient evaluation
# ---------------------------------------------------------------------------

QUADRATURE_NODES = 32
EVAL_POINTS = 1_000_000
EVAL_SEED = 20240917
EVAL_CHUNK = 50_000


@dataclass
class RayleighEstimate:
    """Rayleigh quotient with its ingredients.

    ``e_v`` and ``e_2`` are means under the uniform law on the domain;
    ``stderr`` is zero for quadrature.
    """

    value: float
    e_v: float
    e_2: float
    stderr: float
    method: str


def evaluation_rule(domain: Domain, method: str = "auto", nodes: int = QUADRATURE_NODES,
                    n_points: int = EVAL_POINTS, seed: int = EVAL_SEED, exclude_radius: float = 0.0):
    """Points and probability weights used for population-style averages.

    Returns:
        ``(points, weights, kind)`` with weights summing to 1; ``kind`` is
        ``"quadrature"`` or ``"mc"``.
    """
    if method == "auto":
        method = "quadrature" if domain.kind == "hypercube" and domain.dim <= 3 else "mc"
    if method == "quadrature":
        if domain.kind != "hypercube":
            raise ValueError("tensor quadrature needs a hypercube")
        pts, w = tensor_gauss_legendre(domain.lo, domain.hi, domain.dim, nodes)
        return pts, w / w.sum(), "quadrature"
    if method == "mc":
        from .problem import sample_interior

        pts = sample_interior(domain, n_points, seed, stream=(999,), exclude_radius=exclude_radius).points
        return pts, np.full(n_points, 1.0 / n_points), "mc"
    raise ValueError(f"unknown evaluation method {method!r}")


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def rayleigh_quotient(u, problem: Problem, method: str = "auto", nodes: int = QUADRATURE_NODES,
                      n_points: int = EVAL_POINTS, seed: int = EVAL_SEED) -> RayleighEstimate:
    """Rayleigh quotient ``<u, H u> / <u, u>`` of a trial function.

    Uses tensor Gauss-Legendre quadrature on hypercubes with ``d <= 3`` and
    a fixed-seed Monte Carlo batch otherwise (``method`` overrides).
    """
    pts, w, kind = evaluation_rule(problem.domain, method, nodes, n_points, seed, problem.exclude_radius)
    a_vals = np.empty(pts.shape[0])
    b_vals = np.empty(pts.shape[0])
    for sl in _chunks(pts.shape[0], EVAL_CHUNK):
        x = pts[sl]
        val, grad = u.evaluate(x)
        a_vals[sl] = np.einsum("ij,ij->i", grad, grad) + problem.potential(x) * val * val
        b_vals[sl] = val * val
    e_v = float(w @ a_vals)
    e_2 = float(w @ b_vals)
    ratio = e_v / e_2
    stderr = 0.0
    if kind == "mc":
        resid = a_vals - ratio * b_vals
        stderr = float(np.std(resid) / (math.sqrt(pts.shape[0]) * e_2))
    return RayleighEstimate(ratio, e_v, e_2, stderr, kind)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class FrozenSolution:
    """A trained trial function used for deflation, plus its eigenvalue."""

    trial: TrialFn
    eigenvalue: float
    param_hash: str


@dataclass
class TrainResult:
    eigenvalue: float
    trial: TrialFn
    trace: list[dict]
    estimate: RayleighEstimate
    final_components: LossComponents | None = None


def build_trial(problem: Problem, cutoff: str | CutoffFn, mode: str = "exact_bc", width: int = 40,
                depth: int = 3, seed: int = 0) -> TrialFn:
    """Fresh trial function with a randomly initialized MLP.

    In ``boundary_penalty`` mode the cutoff is replaced by the identity.
    """
    if mode == "boundary_penalty":
        phi = make_cutoff("none", problem.domain)
    else:
        phi = cutoff if isinstance(cutoff, CutoffFn) else make_cutoff(cutoff, problem.domain)
    net = MLP.initialize(problem.dim, width, depth, seed=seed)
    return TrialFn(net, phi)


def _deflation_terms(points: np.ndarray, frozen: list, exact_scale: float | None) -> list[DeflationTerm]:
    terms = []
    for f in frozen:
        fn = f.trial if isinstance(f, FrozenSolution) else f
        vals = np.asarray(fn.value(points), dtype=float)
        if exact_scale is not None:
            # Reference functions are L2-normalized; rescale to unit mean
            # square under the uniform law so the exact denominator is 1.
            terms.append(DeflationTerm(vals * exact_scale, 1.0))
        else:
            terms.append(DeflationTerm(vals, float(np.mean(vals * vals))))
    return terms


def train_kth(problem: Problem, trial: TrialFn, deflation: list, schedule: TrainSchedule,
              config: LossConfig, exact_deflation: bool = False, log_every: int = 100,
              evaluate: bool = True, callback: Callable[[int, LossComponents], None] | None = None) -> TrainResult:
    """Train one eigenpair.

    Args:
        problem: Domain and potential.
        trial: Trial function whose parameters are trained in place.
        deflation: Previously found eigenfunctions.  Items are
            :class:`FrozenSolution` objects or anything with ``value(x)``.
        schedule: Optimizer schedule; the interior batch of epoch ``e`` is
            drawn from stream ``(k, e)`` of ``schedule.seed``.
        config: Loss configuration.
        exact_deflation: Treat ``deflation`` items as L2-normalized exact
            eigenfunctions instead of numerical ones.
        log_every: Trace logging interval in epochs.
        evaluate: Compute the final Rayleigh quotient.
        callback: Called as ``callback(epoch, components)`` at each log row.

    Returns:
        :class:`TrainResult`; the trace holds one dict per logged epoch
        with keys :data:`TRACE_COLUMNS`.
    """
    if config.mode == "boundary_penalty" and not trial.cutoff.is_identity:
        raise ValueError("boundary_penalty mode trains the bare network; use an identity cutoff")
    net = trial.net
    state = AdamState.zeros(net.n_params)
    exact_scale = math.sqrt(problem.domain.volume) if exact_deflation else None
    hashes = [f.param_hash for f in deflation if isinstance(f, FrozenSolution)]
    trace: list[dict] = []
    comps = None
    for epoch in range(schedule.epochs_total):
        n = schedule.batch_size(epoch)
        lr = schedule.lr(epoch)
        x = problem.sample_interior(n, schedule.seed, stream=(config.k, epoch)).points
        boundary_pts = None
        if config.mode == "boundary_penalty":
            boundary_pts = problem.sample_boundary(n, schedule.seed, stream=(config.k, epoch)).points
            pts = np.concatenate([x, boundary_pts])
        else:
            pts = x
        u, du, cache = trial.forward(pts, reuse_workspace=True)
        ui, dui = u[:n], du[:n]
        terms = _deflation_terms(x, deflation, exact_scale) if deflation else None
        comps, sens = total_loss_and_sensitivities(
            ui, dui, problem.potential(x), config, terms,
            u[n:] if boundary_pts is not None else None,
        )
        if boundary_pts is not None:
            a = np.concatenate([sens.values, sens.boundary_values])
            b = np.concatenate([sens.grads, np.zeros_like(boundary_pts)])
        else:
            a, b = sens.values, sens.grads
        grad = trial.backward(cache, a, b)
        if not math.isfinite(comps.total):
            raise NonFiniteError("non-finite loss", {"epoch": epoch, "k": config.k, "components": comps})
        new_params, state = adam_step(net.params, grad, state, lr, schedule.beta1, schedule.beta2, schedule.eps)
        if epoch % log_every == 0 or epoch == schedule.epochs_total - 1:
            row = {
                "epoch": epoch, "lr": lr, "batch": n, "loss": comps.total, "rayleigh": comps.rayleigh,
                "deflation": comps.deflation, "normalization": comps.normalization,
                "boundary": comps.boundary, "e2": comps.e_2,
                "grad_norm": float(np.linalg.norm(grad)),
            }
            trace.append(row)
            if callback is not None:
                callback(epoch, comps)
        net.set_params(new_params)
        if isinstance(net, TwoLayerNet) and net.constrained:
            net.project()

    for f, h in zip([f for f in deflation if isinstance(f, FrozenSolution)], hashes):
        if f.trial.param_hash() != h:
            raise RuntimeError("a frozen deflation solution changed during training")
    if evaluate:
        est = rayleigh_quotient(trial, problem)
        eig = est.value
    else:
        est = RayleighEstimate(float("nan"), float("nan"), float("nan"), 0.0, "none")
        eig = float("nan")
    return TrainResult(eig, trial, trace, est, comps)


# ---------------------------------------------------------------------------
# Deflation driver
# ---------------------------------------------------------------------------


@dataclass
class EigRecord:
    k: int
    eigenvalue: float
    stderr: float
    beta: float
    trial: TrialFn
    trace: list[dict]
    param_hash: str
    init_seed: int
    e2_final: float
    diagnostics: dict = field(default_factory=dict)


@dataclass
class EigSolution:
    records: list[EigRecord] = field(default_factory=list)
    monotonicity_tol: float = 1e-6

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([r.eigenvalue for r in self.records])

    def monotonicity_violations(self) -> list[int]:
        """Indices ``k`` with ``lambda_k < lambda_{k-1}`` beyond the tolerance."""
        vals = self.eigenvalues
        return [k + 1 for k in range(1, len(vals))
                if vals[k] < vals[k - 1] - self.monotonicity_tol * max(1.0, abs(vals[k - 1]))]


def initialization_seed(seed: int, k: int) -> int:
    """Network initialization seed of the ``k``-th pair in a run seeded with ``seed``."""
    return int(make_rng(seed, 5, k).integers(2 ** 31))


def solve_spectrum(problem: Problem, cutoff: str | CutoffFn, K: int, schedule: TrainSchedule,
                   beta_factor: float = 4.0, beta_override: float | None = None, width: int = 40,
                   depth: int = 3, mode: str = "exact_bc", gamma_bdry: float = 0.0,
                   gamma_norm: float = 0.0, log_every: int = 100,
                   on_record: Callable[[EigRecord], None] | None = None) -> EigSolution:
    """Compute ``K`` eigenpairs by successive deflation.

    For ``k >= 2`` the deflation weight is ``beta_factor * lambda_{k-1}``
    (or ``beta_override`` if given).  Each finished pair is frozen and
    handed to ``on_record`` so callers can persist partial progress.

    Raises:
        SolveAborted: if any ``k`` fails; ``partial`` carries the finished pairs.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    solution = EigSolution()
    frozen: list[FrozenSolution] = []
    for k in range(1, K + 1):
        if k == 1:
            beta = 0.0
        else:
            beta = beta_override if beta_override is not None else beta_factor * frozen[-1].eigenvalue
        init_seed = initialization_seed(schedule.seed, k)
        trial = build_trial(problem, cutoff, mode, width, depth, seed=init_seed)
        config = LossConfig(k=k, beta=beta, gamma_norm=gamma_norm, gamma_bdry=gamma_bdry, mode=mode)
        try:
            result = train_kth(problem, trial, list(frozen), schedule, config, log_every=log_every)
        except Exception as exc:  # persist what we have, then report
            raise SolveAborted(f"solve for k={k} failed: {exc}", solution) from exc
        record = EigRecord(
            k=k, eigenvalue=result.eigenvalue, stderr=result.estimate.stderr, beta=beta, trial=trial,
            trace=result.trace, param_hash=trial.param_hash(), init_seed=init_seed,
            e2_final=result.estimate.e_2,
        )
        if k >= 2 and beta <= result.eigenvalue - solution.records[0].eigenvalue:
            log.warning("beta=%.4g is not above lambda_%d - lambda_1 estimate", beta, k)
        solution.records.append(record)
        frozen.append(FrozenSolution(trial, result.eigenvalue, record.param_hash))
        if on_record is not None:
            on_record(record)
        log.info("k=%d lambda=%.6f", k, result.eigenvalue)
    return solution
