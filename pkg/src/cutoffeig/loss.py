"""Empirical Rayleigh-quotient losses and their exact sensitivities.

All terms of one optimization step are evaluated on a single shared batch
of interior points, plus a boundary batch when the boundary-penalty mode
is active.  With ``E_V = mean(|grad u|^2 + V u^2)`` and ``E_2 = mean(u^2)``
the total loss is

    (E_V + E_P + gamma_b * E_B) / E_2 + gamma_n * (E_2 - 1)^2

where ``E_P`` is the deflation penalty and ``E_B = mean_boundary(u^2)``.
The sensitivities returned alongside the value are the exact partial
derivatives with respect to every sample value ``u(X_i)`` and gradient
``grad u(X_i)``, ready for :meth:`TrialFn.backward`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_FLOOR = 1e-3


class DegenerateTrialFunctionError(FloatingPointError):
    """Raised when ``E_2`` falls below the squared floor ``r^2``."""


@dataclass(frozen=True)
class LossConfig:
    """Weights and mode of the total loss.

    Attributes:
        k: Index of the eigenpair being targeted (1-based).
        beta: Deflation weight; must be positive when ``k > 1``.
        gamma_norm: Normalization-penalty weight (0 disables it).
        gamma_bdry: Boundary-penalty weight (0 disables it).
        mode: ``"exact_bc"`` or ``"boundary_penalty"``.
        floor: Degeneracy floor ``r``; ``E_2 < r^2`` is an error.
    """

    k: int = 1
    beta: float = 0.0
    gamma_norm: float = 0.0
    gamma_bdry: float = 0.0
    mode: str = "exact_bc"
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.k > 1 and not self.beta > 0:
            raise ValueError("beta must be positive for k > 1")
        if self.gamma_norm < 0 or self.gamma_bdry < 0:
            raise ValueError("penalty weights must be nonnegative")
        if self.mode not in ("exact_bc", "boundary_penalty"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "boundary_penalty" and not self.gamma_bdry > 0:
            raise ValueError("boundary_penalty mode needs gamma_bdry > 0")


@dataclass
class DeflationTerm:
    """Values of one previous eigenfunction on the current batch.

    Attributes:
        values: ``u_j(X_i)`` on the shared batch.
        norm_sq: Denominator used for this term.  For a numerical
            eigenfunction it is the batch ``E_2(u_j)``; for a reference
            eigenfunction it is its exact mean square under the uniform law.
    """

    values: np.ndarray
    norm_sq: float


@dataclass
class LossComponents:
    """Breakdown of one loss evaluation."""

    total: float
    rayleigh: float
    deflation: float
    normalization: float
    boundary: float
    e_v: float
    e_2: float
    overlaps: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class Sensitivities:
    """Partial derivatives of the total loss with respect to sample data."""

    values: np.ndarray
    grads: np.ndarray
    boundary_values: np.ndarray | None = None


def _check_floor(e2: float, floor: float, what: str = "trial function") -> None:
    if not e2 >= floor * floor:
        raise DegenerateTrialFunctionError(f"{what}: E_2 = {e2:.3e} is below the floor r^2 = {floor * floor:.1e}")


def energy_terms(u: np.ndarray, grad_u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """``(E_V, E_2)`` from sample values, gradients and potential values."""
    kinetic = np.einsum("ij,ij->i", grad_u, grad_u)
    return float(np.mean(kinetic + v * u * u)), float(np.mean(u * u))


def empirical_components(u, points: np.ndarray, potential, floor: float = DEFAULT_FLOOR) -> tuple[float, float]:
    """``(E_V, E_2)`` for a trial function on a batch of points.

    Raises:
        DegenerateTrialFunctionError: if ``E_2 < floor^2``.
    """
    points = np.atleast_2d(points)
    if points.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    vals, grads = u.evaluate(points)
    e_v, e_2 = energy_terms(vals, grads, potential(points))
    _check_floor(e_2, floor)
    return e_v, e_2


def deflation_penalty(u_values: np.ndarray, terms: list[DeflationTerm], beta: float,
                      floor: float = DEFAULT_FLOOR):
    """Normalized deflation penalty and its derivative w.r.t. ``u_values``.

    Returns ``(E_P, dE_P/du, overlaps)`` where
    ``E_P = beta * sum_j p_j^2 / norm_sq_j`` and ``p_j = mean(u * u_j)``.  The
    division by ``E_2(u)`` happens in :func:`total_loss_and_sensitivities`,
    so ``E_P / E_2`` is the normalized squared overlap.
    """
    n = u_values.shape[0]
    value = 0.0
    sens = np.zeros(n)
    overlaps = np.zeros(len(terms))
    for j, term in enumerate(terms):
        _check_floor(term.norm_sq, floor, f"deflation term {j + 1}")
        p = float(np.mean(u_values * term.values))
        overlaps[j] = p
        value += beta * p * p / term.norm_sq
        sens += (2.0 * beta * p / (term.norm_sq * n)) * term.values
    return value, sens, overlaps


def normalization_penalty(e_2: float, gamma_norm: float) -> float:
    """``gamma_norm * (E_2 - 1)^2``."""
    return gamma_norm * (e_2 - 1.0) ** 2


def boundary_penalty(boundary_values: np.ndarray, e_2: float, gamma_bdry: float) -> float:
    """``gamma_bdry * mean(u(Y)^2) / E_2`` for boundary samples ``Y``."""
    return gamma_bdry * float(np.mean(boundary_values ** 2)) / e_2


def total_loss_and_sensitivities(u_values: np.ndarray, u_grads: np.ndarray, v_values: np.ndarray,
                                 config: LossConfig, deflation: list[DeflationTerm] | None = None,
                                 boundary_values: np.ndarray | None = None):
    """Total loss, its breakdown, and exact sample sensitivities.

    Args:
        u_values: ``u(X_i)``, shape ``(n,)``.
        u_grads: ``grad u(X_i)``, shape ``(n, d)``.
        v_values: ``V(X_i)``, shape ``(n,)``.
        config: Loss weights and mode.
        deflation: Previous eigenfunctions evaluated on the same batch.
        boundary_values: ``u(Y_i)`` on boundary samples (boundary-penalty mode).

    Returns:
        ``(LossComponents, Sensitivities)``.

    Raises:
        DegenerateTrialFunctionError: if ``E_2`` is below the floor.
    """
    n = u_values.shape[0]
    deflation = deflation or []
    e_v, e_2 = energy_terms(u_values, u_grads, v_values)
    _check_floor(e_2, config.floor)

    d_ev_du = 2.0 * v_values * u_values / n
    d_ev_dg = 2.0 * u_grads / n
    d_e2_du = 2.0 * u_values / n

    if deflation:
        e_p, d_ep_du, overlaps = deflation_penalty(u_values, deflation, config.beta, config.floor)
    else:
        e_p, d_ep_du, overlaps = 0.0, 0.0, np.zeros(0)

    e_b = 0.0
    d_eb_dub = None
    use_boundary = config.mode == "boundary_penalty" and config.gamma_bdry > 0
    if use_boundary:
        if boundary_values is None or boundary_values.size == 0:
            raise ValueError("boundary-penalty mode needs boundary samples")
        nb = boundary_values.shape[0]
        e_b = float(np.mean(boundary_values ** 2))
        d_eb_dub = 2.0 * boundary_values / nb

    numerator = e_v + e_p + config.gamma_bdry * e_b * use_boundary
    quotient = numerator / e_2
    norm_term = normalization_penalty(e_2, config.gamma_norm)
    total = quotient + norm_term

    # d total = d numerator / E_2 + (2 gamma_n (E_2 - 1) - numerator / E_2^2) d E_2
    coef_e2 = 2.0 * config.gamma_norm * (e_2 - 1.0) - numerator / (e_2 * e_2)
    sens_u = (d_ev_du + d_ep_du) / e_2 + coef_e2 * d_e2_du
    sens_g = d_ev_dg / e_2
    sens_b = config.gamma_bdry * d_eb_dub / e_2 if use_boundary else None

    comps = LossComponents(
        total=float(total),
        rayleigh=e_v / e_2,
        deflation=e_p / e_2,
        normalization=norm_term,
        boundary=(config.gamma_bdry * e_b / e_2) if use_boundary else 0.0,
        e_v=e_v,
        e_2=e_2,
        overlaps=overlaps,
    )
    return comps, Sensitivities(np.asarray(sens_u, dtype=float), sens_g, sens_b)
