"""Weighted f-divergences between the two joint laws of a membership game.

An attack sees a pair ``(theta, z)`` drawn either from the product of the
parameter law and the data law (``j0``, the point is fresh) or from the
coupled law where ``z`` was one of the training points (``j1``).  With
``gamma = nu / (lam (1 - nu))`` the best achievable accuracy, the central
divergence ``Delta`` and the security score are all functionals of the
pair ``(j0, j1)``.
"""

from __future__ import annotations

import math
from typing import Hashable, Iterable

import numpy as np

from .core_types import (
    AttackWeights,
    Bound,
    DimensionError,
    DomainError,
    JointDistribution,
    Method,
    MiaLimitsError,
    SecurityReport,
    compensated_sum,
)

_VECTOR_MASS_TOL = 1e-10


def _gamma_of(weights_or_gamma: AttackWeights | float) -> float:
    if isinstance(weights_or_gamma, AttackWeights):
        return weights_or_gamma.gamma
    return _check_alpha(weights_or_gamma)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (alpha > 0.0 and math.isfinite(alpha)):
        raise DomainError(f"alpha must be a positive real, got {alpha}")
    return alpha


def _as_mass_pair(p, q) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(p, JointDistribution) and isinstance(q, JointDistribution):
        if not p.same_cells(q):
            raise DimensionError("joint distributions have different cells")
        return p.mass.ravel(), q.mass.ravel()
    p_arr = np.asarray(p, dtype=float).ravel()
    q_arr = np.asarray(q, dtype=float).ravel()
    if p_arr.shape != q_arr.shape:
        raise DimensionError(f"shapes differ: {p_arr.shape} vs {q_arr.shape}")
    for name, arr in (("P", p_arr), ("Q", q_arr)):
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise DomainError(f"{name} has negative or non-finite mass")
        total = compensated_sum(arr.tolist())
        if abs(total - 1.0) > _VECTOR_MASS_TOL:
            raise DomainError(f"{name} sums to {total!r}, not 1")
    return p_arr, q_arr


def f_generator(alpha: float, x: float | np.ndarray) -> float | np.ndarray:
    """Convex generator ``f_alpha(x) = max(1, alpha)/2 (|x - 1/alpha| - |1 - 1/alpha|)``.

    It satisfies ``f_alpha(1) = 0`` and produces ``D_alpha`` as an
    f-divergence.
    """
    alpha = _check_alpha(alpha)
    x = np.asarray(x, dtype=float)
    out = 0.5 * max(1.0, alpha) * (np.abs(x - 1.0 / alpha) - abs(1.0 - 1.0 / alpha))
    return float(out) if out.ndim == 0 else out


def tilde_d(alpha: float, p, q) -> float:
    """Un-normalised divergence ``(1/2a) sum |a p - q| + (1 - 1/a)/2``."""
    alpha = _check_alpha(alpha)
    p_arr, q_arr = _as_mass_pair(p, q)
    l1 = compensated_sum(np.abs(alpha * p_arr - q_arr).tolist())
    return l1 / (2.0 * alpha) + 0.5 * (1.0 - 1.0 / alpha)


def d_alpha(alpha: float, p, q) -> float:
    """Normalised divergence ``max(1, a) (tilde_d - (1 - 1/a)_+)``.

    Lies in ``[0, 1]``, vanishes iff ``P = Q`` and reduces to total variation
    at ``alpha = 1``.  The subtraction is rearranged so that identical
    inputs give exactly zero.
    """
    alpha = _check_alpha(alpha)
    p_arr, q_arr = _as_mass_pair(p, q)
    diff = (alpha * p_arr - q_arr).tolist()
    # tilde_d - (1 - 1/a)_+ == (sum|a p - q| - |a - 1|) / (2a); since both laws
    # have unit mass, |a - 1| = |sum (a p - q)|, which makes D(P, P) exactly 0.
    excess = compensated_sum(abs(v) for v in diff) - abs(compensated_sum(diff))
    value = max(1.0, alpha) * excess / (2.0 * alpha)
    return min(1.0, max(0.0, value))


def total_variation(p, q) -> float:
    """Total variation distance, computed as ``D_1`` so the two agree bit for bit."""
    return d_alpha(1.0, p, q)


def delta_from_joints(weights: AttackWeights, j0: JointDistribution, j1: JointDistribution) -> float:
    """Central divergence ``Delta = D_gamma(j0, j1)``."""
    return d_alpha(weights.gamma, j0, j1)


def optimal_decision_set(
    weights: AttackWeights, j0: JointDistribution, j1: JointDistribution
) -> frozenset[tuple[Hashable, Hashable]]:
    """Cells where ``j1 >= gamma j0``; predicting "member" there is optimal."""
    mask = _optimal_mask(weights.gamma, j0, j1)
    return frozenset(
        (t, z)
        for i, t in enumerate(j0.theta_ids)
        for k, z in enumerate(j0.z_ids)
        if mask[i, k]
    )


def _optimal_mask(gamma: float, j0: JointDistribution, j1: JointDistribution) -> np.ndarray:
    if not j0.same_cells(j1):
        raise DimensionError("joint distributions have different cells")
    return j1.mass >= gamma * j0.mass


def _accuracy_of_mask(
    weights: AttackWeights, j0: JointDistribution, j1: JointDistribution, mask: np.ndarray
) -> float:
    j0_b = compensated_sum(j0.mass[mask].tolist())
    j1_b = compensated_sum(j1.mass[mask].tolist())
    return weights.nu * (1.0 - j0_b) + weights.member_weight * j1_b


def accuracy_of_attack(
    decision_set: Iterable[tuple[Hashable, Hashable]],
    weights: AttackWeights,
    j0: JointDistribution,
    j1: JointDistribution,
) -> float:
    """Accuracy ``nu (1 - j0(B)) + lam (1 - nu) j1(B)`` of the attack ``1_B``."""
    if not j0.same_cells(j1):
        raise DimensionError("joint distributions have different cells")
    t_index = {t: i for i, t in enumerate(j0.theta_ids)}
    z_index = {z: k for k, z in enumerate(j0.z_ids)}
    mask = np.zeros(j0.shape, dtype=bool)
    for t, z in decision_set:
        if t not in t_index or z not in z_index:
            raise MiaLimitsError(f"cell {(t, z)!r} is not in the support grid")
        mask[t_index[t], z_index[z]] = True
    return _accuracy_of_mask(weights, j0, j1, mask)


def sup_accuracy(weights: AttackWeights, j0: JointDistribution, j1: JointDistribution) -> float:
    """Best accuracy over all attacks, reached by the likelihood-ratio test."""
    mask = _optimal_mask(weights.gamma, j0, j1)
    return _accuracy_of_mask(weights, j0, j1, mask)


def sec_from_delta(delta: float) -> float:
    if not -1e-12 <= delta <= 1.0 + 1e-12:
        raise DomainError(f"delta must lie in [0, 1], got {delta}")
    return 1.0 - delta


def sec_from_accuracy(weights: AttackWeights, accuracy: float) -> float:
    """Normalised distance of ``accuracy`` to the perfect score."""
    return (weights.max_accuracy - accuracy) / min(weights.nu, weights.member_weight)


def security_report(
    weights: AttackWeights,
    j0: JointDistribution,
    j1: JointDistribution,
    method: Method | str = Method.CLOSED_FORM,
    notes: str = "",
) -> SecurityReport:
    delta = delta_from_joints(weights, j0, j1)
    return SecurityReport(
        delta=delta,
        sec=sec_from_delta(delta),
        sup_accuracy=sup_accuracy(weights, j0, j1),
        method=method,
        weights=weights,
        notes=notes,
    )


def conditional_decomposition_check(
    joint: JointDistribution, alpha: float = 1.0, normalised: bool = True
) -> tuple[float, float]:
    """Both sides of the conditional decomposition of a divergence.

    Returns ``(lhs, rhs)`` where ``lhs = D(P_theta x P_z, J)`` and
    ``rhs = sum_z P(z) D(P_theta, J(. | z))``.  With ``normalised=False``
    the un-normalised divergence is used on both sides.
    """
    div = d_alpha if normalised else tilde_d
    pz = joint.z_marginal()
    ptheta = joint.theta_marginal()
    lhs = div(alpha, joint.product_of_marginals().mass, joint.mass)
    terms = []
    for k, mass_z in enumerate(pz):
        if mass_z <= 0.0:
            raise DomainError(f"column {joint.z_ids[k]!r} has zero mass; cannot condition on it")
        cond = joint.mass[:, k] / mass_z
        terms.append(mass_z * div(alpha, ptheta, cond / cond.sum()))
    return lhs, compensated_sum(terms)


def mutual_information(joint: JointDistribution) -> float:
    """Mutual information between the two coordinates, in nats."""
    prod = np.outer(joint.theta_marginal(), joint.z_marginal())
    m = joint.mass
    pos = m > 0.0
    return max(0.0, compensated_sum((m[pos] * np.log(m[pos] / prod[pos])).tolist()))


def pinsker_security_bound(gamma: AttackWeights | float, mutual_info: float) -> Bound:
    """Security lower bound ``1 - max(1, gamma) sqrt(I / 2)`` (``I`` in nats)."""
    gamma = _gamma_of(gamma)
    if mutual_info < 0.0:
        raise DomainError(f"mutual information must be >= 0, got {mutual_info}")
    return Bound.clamped(1.0 - max(1.0, gamma) * math.sqrt(mutual_info / 2.0))


def dp_security_bound(gamma: AttackWeights | float, eps: float, dp_delta: float) -> Bound:
    """Security lower bound for an ``(eps, dp_delta)``-differentially private procedure.

    ``gamma`` may be given directly or as :class:`AttackWeights`.
    """
    gamma = _gamma_of(gamma)
    if eps < 0.0 or not 0.0 <= dp_delta <= 1.0:
        raise DomainError(f"need eps >= 0 and dp_delta in [0, 1], got {eps}, {dp_delta}")
    inv = 1.0 / gamma
    deficit = max(0.0, math.exp(eps) - inv) - max(0.0, 1.0 - inv) + dp_delta
    return Bound.clamped(1.0 - max(1.0, gamma) * deficit)


def ldp_delta_sup(eps: float, dp_delta: float) -> float:
    """Largest total variation ``dp_delta + (1 - dp_delta) tanh(eps/2)`` allowed by local DP."""
    if eps < 0.0 or not 0.0 <= dp_delta <= 1.0:
        raise DomainError(f"need eps >= 0 and dp_delta in [0, 1], got {eps}, {dp_delta}")
    return dp_delta + (1.0 - dp_delta) * math.tanh(eps / 2.0)
