"""Post-hoc diagnostics for computed eigenpairs.

All population quantities use the evaluation rule of
:func:`cutoffeig.train.evaluation_rule` (tensor quadrature on small
hypercubes, a fixed 10^6-point Monte Carlo batch otherwise), converted to
Lebesgue measure so inner products match ``L^2(Omega)``.

Checks that follow from proven inequalities report ``ok`` flags meant to be
asserted; heuristic quantities (the sup-norm ratio, the error growth
exponent) are reported only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .problem import Problem, make_rng
from .spectral_ref import ReferenceEigenfunction, Spectrum
from .train import evaluation_rule

INEQUALITY_RTOL = 1e-9
INEQUALITY_ATOL = 1e-12
GROWTH_SOFT_LIMIT = 2.5


def _holds(lhs: float, rhs: float) -> bool:
    return lhs <= rhs * (1.0 + INEQUALITY_RTOL) + INEQUALITY_ATOL


# ---------------------------------------------------------------------------
# Population inner products
# ---------------------------------------------------------------------------


@dataclass
class _Moments:
    norm_sq: float             # ||u||^2
    energy: float              # <u, H u>
    grad_sq: float             # ||grad u||^2
    coeffs: np.ndarray         # <u, psi_j> for the requested reference indices
    perp_sq: float             # ||P u||^2 with P off the span of ``perp_basis``
    perp_grad_sq: float        # ||grad P u||^2


def _moments(u, problem: Problem, spectrum: Spectrum, coeff_idx, perp_idx, points, weights) -> _Moments:
    """Inner products of ``u`` with reference eigenfunctions on a fixed rule."""
    vol = problem.domain.volume
    w = weights * vol
    uv, ug = u.evaluate(points)
    pot = problem.potential(points)
    norm_sq = float(w @ (uv * uv))
    grad_sq = float(w @ np.einsum("ij,ij->i", ug, ug))
    energy = grad_sq + float(w @ (pot * uv * uv))
    all_idx = sorted(set(coeff_idx) | set(perp_idx))
    cache = {j: ReferenceEigenfunction(spectrum, j).evaluate(points) for j in all_idx}
    coeffs = np.array([w @ (uv * cache[j][0]) for j in coeff_idx])
    pv, pg = uv.copy(), ug.copy()
    for j in perp_idx:
        c = float(w @ (uv * cache[j][0]))
        pv -= c * cache[j][0]
        pg -= c * cache[j][1]
    return _Moments(norm_sq, energy, grad_sq, coeffs, float(w @ (pv * pv)),
                    float(w @ np.einsum("ij,ij->i", pg, pg)))


def solution_space(spectrum: Spectrum, k: int) -> list[int]:
    """1-based reference positions spanning ``U_k``.

    ``U_k`` is the eigenspace of ``lambda_k`` with the first ``k - 1``
    eigenfunctions removed, i.e. the cluster members at positions ``>= k``.
    """
    return [j for j in spectrum.cluster_members(k) if j >= k]


def population_loss(u, problem: Problem, spectrum: Spectrum, k: int, beta: float,
                    method: str = "auto", **rule) -> float:
    """``L_k(u) = (<u, Hu> + beta sum_{j<k} <u, psi_j>^2) / ||u||^2`` with reference ``psi_j``."""
    pts, w, _ = evaluation_rule(problem.domain, method, exclude_radius=problem.exclude_radius, **rule)
    m = _moments(u, problem, spectrum, list(range(1, k)), [], pts, w)
    return (m.energy + beta * float(np.sum(m.coeffs ** 2))) / m.norm_sq


# ---------------------------------------------------------------------------
# Stability estimates
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    """Outcome of the energy-excess stability checks for one ``k``.

    ``eig_*`` compare ``|lambda_hat - lambda_k|`` with the excess bound;
    ``l2_*`` and ``grad_*`` compare ``||P_perp u||^2`` and
    ``||grad P_perp u||^2`` with theirs.  ``skipped`` is set when
    ``beta <= lambda_k - lambda_1``, where the estimates do not apply.
    """

    k: int
    lam_hat: float
    lam_ref: float
    beta: float
    energy_excess: float
    eig_lhs: float
    eig_rhs: float
    l2_lhs: float
    l2_rhs: float
    grad_lhs: float
    grad_rhs: float
    proj_residual_l2: float
    proj_residual_h1: float
    skipped: bool = False
    reason: str = ""

    @property
    def eig_ok(self) -> bool:
        return self.skipped or _holds(self.eig_lhs, self.eig_rhs)

    @property
    def l2_ok(self) -> bool:
        return self.skipped or _holds(self.l2_lhs, self.l2_rhs)

    @property
    def grad_ok(self) -> bool:
        return self.skipped or _holds(self.grad_lhs, self.grad_rhs)

    @property
    def ok(self) -> bool:
        return self.eig_ok and self.l2_ok and self.grad_ok


def stability_check(u, lam_hat: float | None, spectrum: Spectrum, k: int, beta: float,
                    problem: Problem, method: str = "auto", **rule) -> StabilityReport:
    """Check the energy-excess bounds for a candidate ``k``-th eigenfunction.

    Args:
        u: Anything with ``evaluate(points) -> (values, grads)``.
        lam_hat: Reported eigenvalue estimate, stored for reference.  The
            inequality itself uses the Rayleigh quotient on the same rule as
            the energy excess, so both sides see identical quadrature.
        spectrum: Separable reference spectrum covering ``k`` and its cluster.
        k: 1-based eigenpair index.
        beta: Deflation weight of the population loss.
        problem: Domain and potential.
        method: Evaluation rule (``"auto"``, ``"quadrature"`` or ``"mc"``).
    """
    if not 1 <= k <= spectrum.K:
        raise IndexError(f"k={k} outside the reference range 1..{spectrum.K}")
    lam = spectrum.values
    lam_k, lam_1 = float(lam[k - 1]), float(lam[0])
    lam_next = spectrum.next_distinct(k)
    if not math.isfinite(lam_next):
        raise ValueError(f"reference spectrum stops at the cluster of lambda_{k}; solve it with a larger K")
    pts, w, _ = evaluation_rule(problem.domain, method, exclude_radius=problem.exclude_radius, **rule)
    space = solution_space(spectrum, k)
    m = _moments(u, problem, spectrum, list(range(1, k)), space, pts, w)
    rq = m.energy / m.norm_sq
    lam_hat = rq if lam_hat is None else float(lam_hat)
    loss = (m.energy + beta * float(np.sum(m.coeffs ** 2))) / m.norm_sq
    excess = loss - lam_k
    resid_l2 = math.sqrt(max(m.perp_sq, 0.0) / m.norm_sq)
    resid_h1 = math.sqrt(max(m.perp_grad_sq, 0.0) / m.norm_sq)
    report = StabilityReport(
        k=k, lam_hat=lam_hat, lam_ref=lam_k, beta=beta, energy_excess=excess,
        eig_lhs=abs(rq - lam_k), eig_rhs=math.nan, l2_lhs=m.perp_sq / m.norm_sq, l2_rhs=math.nan,
        grad_lhs=m.perp_grad_sq / m.norm_sq, grad_rhs=math.nan,
        proj_residual_l2=resid_l2, proj_residual_h1=resid_h1,
    )
    margin = beta + lam_1 - lam_k
    if k > 1 and not margin > 0:
        report.skipped = True
        report.reason = f"beta={beta:.6g} <= lambda_k - lambda_1 = {lam_k - lam_1:.6g}"
        return report
    if k == 1:
        margin = math.inf
    gap = min(margin, lam_next - lam_k)
    v_min = problem.potential.bounds(problem.domain)[0]
    report.eig_rhs = max((lam_k - lam_1) / margin if k > 1 else 0.0, 1.0) * excess
    report.l2_rhs = excess / gap if math.isfinite(gap) else (0.0 if excess <= 0 else math.inf)
    report.grad_rhs = excess * ((lam_k - v_min) / gap + 1.0) if math.isfinite(gap) else excess
    return report


# ---------------------------------------------------------------------------
# Projection residual two ways
# ---------------------------------------------------------------------------


@dataclass
class ProjectionComparison:
    quadrature: float
    monte_carlo: float
    mc_stderr: float

    @property
    def agree(self) -> bool:
        """Agreement within three Monte Carlo standard errors."""
        return abs(self.quadrature - self.monte_carlo) <= 3.0 * self.mc_stderr + 1e-12


def projection_residual(u, spectrum: Spectrum, k: int, problem: Problem, method: str = "auto", **rule) -> float:
    """``||P_perp u||_{L^2} / ||u||_{L^2}`` with ``P_perp`` off ``U_k``."""
    pts, w, _ = evaluation_rule(problem.domain, method, exclude_radius=problem.exclude_radius, **rule)
    m = _moments(u, problem, spectrum, [], solution_space(spectrum, k), pts, w)
    return math.sqrt(max(m.perp_sq, 0.0) / m.norm_sq)


def projection_residual_two_ways(u, spectrum: Spectrum, k: int, problem: Problem,
                                 n_points: int = 1_000_000, n_batches: int = 10, seed: int = 0) -> ProjectionComparison:
    """Projection residual by quadrature and by batched Monte Carlo.

    The Monte Carlo standard error is the spread of ``n_batches``
    independent batch estimates divided by ``sqrt(n_batches)``.
    """
    quad = projection_residual(u, spectrum, k, problem, "quadrature")
    per = n_points // n_batches
    estimates = []
    for b in range(n_batches):
        pts = problem.sample_interior(per, seed, stream=(61, b)).points
        w = np.full(per, 1.0 / per)
        m = _moments(u, problem, spectrum, [], solution_space(spectrum, k), pts, w)
        estimates.append(math.sqrt(max(m.perp_sq, 0.0) / m.norm_sq))
    est = np.asarray(estimates)
    return ProjectionComparison(quad, float(est.mean()), float(est.std(ddof=1) / math.sqrt(n_batches)))


# ---------------------------------------------------------------------------
# A-priori eigenvalue and sup-norm checks
# ---------------------------------------------------------------------------


@dataclass
class AprioriReport:
    monotone: bool
    lower_bound: float
    lambda_1: float
    sup_norms: np.ndarray
    sup_bounds: np.ndarray

    @property
    def lower_bound_ok(self) -> bool:
        return _holds(self.lower_bound, self.lambda_1)

    @property
    def ok(self) -> bool:
        """Only the proven checks; the sup-norm ratio is informational."""
        return self.monotone and self.lower_bound_ok

    @property
    def sup_ratios(self) -> np.ndarray:
        return self.sup_norms / self.sup_bounds


def apriori_bounds_check(spectrum: Spectrum, v_min: float, v_max: float, d: int | None = None,
                         n_samples: int = 20_000, seed: int = 0, c3: float = 1.0) -> AprioriReport:
    """Monotonicity, the ground-state lower bound, and sampled sup-norm ratios.

    The lower bound is ``d pi^2 / (b - a)^2 + V_min`` on ``(a, b)^d``.  The
    sup-norm reference ``(c3 k^{2/d} + e (V_max - V_min) / (pi d))^{d/4}``
    contains an unknown constant ``c3``, so its ratio is reported only.
    """
    domain = spectrum.domain
    if domain is None or domain.kind != "hypercube":
        raise ValueError("a-priori checks need a hypercube spectrum")
    d = spectrum.dim if d is None else d
    vals = spectrum.values
    monotone = bool(np.all(np.diff(vals) >= -INEQUALITY_ATOL))
    lower = d * math.pi ** 2 / (domain.hi - domain.lo) ** 2 + v_min
    rng = make_rng(seed, 71)
    pts = domain.lo + (domain.hi - domain.lo) * rng.random((n_samples, d))
    centre = np.full((1, d), 0.5 * (domain.lo + domain.hi))
    pts = np.vstack([centre, pts])
    sups = np.array([np.max(np.abs(ReferenceEigenfunction(spectrum, k).value(pts)))
                     for k in range(1, spectrum.K + 1)])
    ks = np.arange(1, spectrum.K + 1, dtype=float)
    bounds = (c3 * ks ** (2.0 / d) + math.e * (v_max - v_min) / (math.pi * d)) ** (d / 4.0)
    return AprioriReport(monotone, lower, float(vals[0]), sups, bounds)


# ---------------------------------------------------------------------------
# Error accumulation along a deflation chain
# ---------------------------------------------------------------------------


@dataclass
class AccumulationTrace:
    ks: np.ndarray
    errors: np.ndarray
    exponent: float | None

    @property
    def exact(self) -> bool:
        return self.exponent is None

    @property
    def within_soft_limit(self) -> bool:
        return self.exponent is None or self.exponent <= GROWTH_SOFT_LIMIT


def accumulation_trace(errors, ks=None, tol: float = 1e-14) -> AccumulationTrace:
    """Fit ``log(error) ~ p log(k)`` over the positive errors.

    Args:
        errors: Per-``k`` errors, e.g. energy excesses ``L_k(u_k) - lambda_k``.
        ks: Matching 1-based indices (default ``1..len(errors)``).
        tol: Errors at or below this count as exact and are left out of the fit.

    Returns:
        The table and the fitted exponent (``None`` when fewer than two
        errors exceed ``tol``).
    """
    err = np.asarray(errors, dtype=float)
    ks = np.arange(1, err.size + 1) if ks is None else np.asarray(ks)
    use = err > tol
    exponent = None
    if np.count_nonzero(use) >= 2:
        exponent = float(np.polyfit(np.log(ks[use]), np.log(err[use]), 1)[0])
    return AccumulationTrace(ks, err, exponent)


# ---------------------------------------------------------------------------
# Whole-solution diagnostics
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    """Diagnostics of one computed eigenpair."""

    k: int
    lam_hat: float
    lam_ref: float | None
    energy_excess: float | None
    proj_residual_l2: float | None
    proj_residual_h1: float | None
    overlaps: np.ndarray
    e2_history: np.ndarray
    flags: dict = field(default_factory=dict)


def overlap_matrix(trials, problem: Problem, method: str = "auto", **rule) -> np.ndarray:
    """Normalized ``L^2`` overlaps ``<u_i, u_j> / (||u_i|| ||u_j||)``."""
    pts, w, _ = evaluation_rule(problem.domain, method, exclude_radius=problem.exclude_radius, **rule)
    vals = np.stack([np.asarray(t.value(pts), dtype=float) for t in trials])
    gram = (vals * w) @ vals.T
    norms = np.sqrt(np.diag(gram))
    return gram / np.outer(norms, norms)


def diagnose_solution(records, problem: Problem, spectrum: Spectrum | None = None,
                      method: str = "auto", **rule) -> list[DiagnosticsRecord]:
    """Diagnostics for a deflation chain.

    Args:
        records: Objects with ``k``, ``eigenvalue``, ``beta``, ``trial`` and
            ``trace`` (as produced by :func:`cutoffeig.train.solve_spectrum`
            or reloaded from a run directory).
        problem: The solved problem.
        spectrum: Separable reference; without it only overlaps and the
            ``E_2`` history are reported.
    """
    trials = [r.trial for r in records]
    overlaps = overlap_matrix(trials, problem, method, **rule) if trials else np.zeros((0, 0))
    out = []
    for idx, r in enumerate(records):
        e2 = np.array([row["e2"] for row in r.trace], dtype=float) if r.trace else np.zeros(0)
        rec = DiagnosticsRecord(r.k, float(r.eigenvalue), None, None, None, None,
                                overlaps[idx, :idx].copy(), e2)
        if spectrum is not None and r.k <= spectrum.K:
            rep = stability_check(r.trial, r.eigenvalue, spectrum, r.k, r.beta, problem, method, **rule)
            rec.lam_ref = rep.lam_ref
            rec.energy_excess = rep.energy_excess
            rec.proj_residual_l2 = rep.proj_residual_l2
            rec.proj_residual_h1 = rep.proj_residual_h1
            rec.flags = {"skipped": rep.skipped, "eig_ok": rep.eig_ok, "l2_ok": rep.l2_ok, "grad_ok": rep.grad_ok}
        out.append(rec)
    return out
