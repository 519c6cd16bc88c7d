"""Exact worst-case security for discrete data laws.

For ``P = sum_k p_k delta_{u_k}`` the least secure learning procedure maps
each empirical distribution injectively to a parameter.  Its security has a
closed form in terms of binomial mean absolute deviations
``E|B_k/n - gamma p_k|`` with ``B_k ~ Bin(n, p_k)``, which are evaluated
exactly through ``psi(m, p) = C(n, m+1) (m+1) p^(m+1) (1-p)^(n-m)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core_types import (
    AttackWeights,
    DiscreteDistribution,
    DomainError,
    binomial_cdf,
    compensated_sum,
    log_binomial,
)

#: Universal constants sandwiching the worst-case leakage at rate ``n^-1/2``.
STIRLING_LOWER = 0.29
STIRLING_UPPER = 0.44

WORST_CASE_NOTE = (
    "attained by procedures that map each empirical distribution injectively "
    "to a parameter"
)


def _check_n(n: int) -> int:
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    return int(n)


def _floor_product(gamma: float, n: int, p: float) -> int:
    # Exact floor of gamma*n*p for the given floats; avoids 0.29*100 -> 28.999...
    return math.floor(Fraction(gamma) * n * Fraction(p))


def psi(n: int, m: int, p: float) -> float:
    """``C(n, m+1) (m+1) p^(m+1) (1-p)^(n-m)``, zero at ``m = n``.

    Equals ``E[(np - B) 1{B <= m}]`` for ``B ~ Bin(n, p)``.
    """
    n = _check_n(n)
    m = int(m)
    if not 0 <= m <= n:
        raise DomainError(f"psi requires 0 <= m <= n, got m={m}, n={n}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if m == n:
        return 0.0
    log_val = (
        log_binomial(n, m + 1)
        + math.log(m + 1)
        + (m + 1) * math.log(p)
        + (n - m) * math.log1p(-p)
    )
    return math.exp(log_val)


def binomial_mad_gamma(n: int, p: float, gamma: float) -> float:
    """Exact ``E|B/n - gamma p|`` for ``B ~ Bin(n, p)``.

    Uses ``E|B - gamma n p| = 2 psi(m, p) + (gamma - 1) n p (2 F(m) - 1)``
    with ``m = floor(gamma n p)`` and ``F`` the binomial CDF.
    """
    n = _check_n(n)
    if gamma <= 0.0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    m = min(_floor_product(gamma, n, p), n)
    total = 2.0 * psi(n, m, p)
    if gamma != 1.0:
        total += (gamma - 1.0) * n * p * (2.0 * binomial_cdf(n, m, p) - 1.0)
    return max(0.0, total / n)


@dataclass(frozen=True)
class WorstCaseResult:
    """Minimum security over all learning procedures for a discrete law."""

    min_sec: float
    epsilon_n: float
    per_atom_mad: tuple[float, ...]
    gamma: float
    n: int
    note: str = WORST_CASE_NOTE

    def __post_init__(self) -> None:
        expected = _min_sec_from_mads(self.per_atom_mad, self.gamma)
        if abs(expected - self.min_sec) > 1e-12:
            raise ValueError("min_sec inconsistent with per-atom deviations")

    def to_json(self) -> dict:
        return {
            "min_sec": self.min_sec,
            "epsilon_n": self.epsilon_n,
            "per_atom_mad": list(self.per_atom_mad),
            "gamma": self.gamma,
            "n": self.n,
            "note": self.note,
        }


def _min_sec_from_mads(mads, gamma: float) -> float:
    # (1/2g) sum mad - |1 - 1/g|/2, written as (sum mad - |g - 1|) / (2g)
    deficit = (compensated_sum(mads) - abs(gamma - 1.0)) / (2.0 * gamma)
    return 1.0 - max(1.0, gamma) * deficit


def min_sec_discrete(
    dist: DiscreteDistribution, n: int, weights: AttackWeights
) -> WorstCaseResult:
    """Minimum of the security score over all procedures trained on ``n`` points."""
    n = _check_n(n)
    if dist.K < 2:
        raise DomainError("a point-mass data law has no membership signal; need K >= 2")
    gamma = weights.gamma
    mads = tuple(binomial_mad_gamma(n, p, gamma) for p in dist.probs)
    min_sec = _min_sec_from_mads(mads, gamma)
    return WorstCaseResult(
        min_sec=min_sec,
        epsilon_n=1.0 - min_sec,
        per_atom_mad=mads,
        gamma=gamma,
        n=n,
    )


def c_k(dist: DiscreteDistribution) -> float:
    """Diversity ``C_K(P) = sum_k sqrt(p_k (1 - p_k))``."""
    return compensated_sum(math.sqrt(p * (1.0 - p)) for p in dist.probs)


def max_delta_bound_from_ck(ck: float, n: int) -> float:
    """Universal worst-case leakage bound ``C_K / (2 sqrt(n))``."""
    n = _check_n(n)
    if ck < 0.0:
        raise DomainError(f"C_K must be nonnegative, got {ck}")
    return ck / (2.0 * math.sqrt(n))


@dataclass(frozen=True)
class DiversityReport:
    gini_simpson: float
    shannon_nats: float
    ck: float
    sandwich_flags: dict[str, bool]

    @property
    def all_hold(self) -> bool:
        return all(self.sandwich_flags.values())

    def to_json(self) -> dict:
        return {
            "gini_simpson": self.gini_simpson,
            "shannon_nats": self.shannon_nats,
            "ck": self.ck,
            "sandwich_flags": dict(self.sandwich_flags),
        }


def diversity_bounds(dist: DiscreteDistribution, tol: float = 1e-12) -> DiversityReport:
    """Gini-Simpson index, Shannon entropy and ``C_K`` with their comparison flags.

    Each flag is ``True`` when the corresponding inequality holds (up to ``tol``):

    ``half_ck_ge_gini``
        ``C_K / 2 >= GS``
    ``ck_over_k_le_sqrt_gini``
        ``C_K / K <= sqrt(GS / K)``
    ``entropy_sandwich``
        ``H <= C_K <= sqrt(K H)``
    """
    p = dist.as_array()
    K = dist.K
    gs = 1.0 - compensated_sum((p * p).tolist())
    h = max(0.0, -compensated_sum((p * np.log(p)).tolist()))
    ck = c_k(dist)
    flags = {
        "half_ck_ge_gini": ck / 2.0 >= gs - tol,
        "ck_over_k_le_sqrt_gini": ck / K <= math.sqrt(max(gs, 0.0) / K) + tol,
        "entropy_sandwich": h <= ck + tol and ck <= math.sqrt(K * h) + tol,
    }
    return DiversityReport(gini_simpson=gs, shannon_nats=h, ck=ck, sandwich_flags=flags)


def ck_constrained_extremes(K: int, delta: float) -> tuple[float, float]:
    """Max and infimum of ``C_K`` over laws on ``K`` atoms whose largest mass is ``delta``."""
    if K < 2:
        raise DomainError(f"K must be >= 2, got {K}")
    if not 1.0 / K - 1e-15 <= delta < 1.0:
        raise DomainError(f"delta must lie in [1/K, 1), got {delta}")
    head = math.sqrt(delta * (1.0 - delta))
    max_ck = head + math.sqrt((1.0 - delta) * (K - 2 + delta))
    r = math.floor(1.0 / delta)
    rest = max(0.0, 1.0 - delta * r)
    inf_ck = head * r + math.sqrt(delta * r * rest)
    return max_ck, inf_ck


@dataclass(frozen=True)
class Sandwich:
    """Bounds on the worst-case leakage ``epsilon_n`` (at ``gamma = 1``).

    When ``preconditions_met`` is false only ``upper`` is informative; it is
    the universal bound ``C_K / (2 sqrt(n))`` and ``lower`` is ``None``.
    ``sec_lower_bound`` is ``1 - upper`` in both cases.
    """

    lower: float | None
    upper: float
    preconditions_met: bool
    ck: float

    @property
    def sec_lower_bound(self) -> float:
        return 1.0 - self.upper

    def contains(self, value: float) -> bool:
        lo = self.lower if self.lower is not None else 0.0
        return lo <= value <= self.upper

    def to_json(self) -> dict:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "preconditions_met": self.preconditions_met,
            "ck": self.ck,
            "sec_lower_bound": self.sec_lower_bound,
        }


def sandwich_preconditions(dist: DiscreteDistribution, n: int) -> bool:
    return n >= 5 and all(n * p > 1.0 for p in dist.probs)


def worst_case_sandwich(dist: DiscreteDistribution, n: int) -> Sandwich:
    n = _check_n(n)
    ck = c_k(dist)
    if sandwich_preconditions(dist, n):
        root = math.sqrt(n)
        return Sandwich(STIRLING_LOWER * ck / root, STIRLING_UPPER * ck / root, True, ck)
    return Sandwich(None, max_delta_bound_from_ck(ck, n), False, ck)


def min_n_from_ck(ck: float, eps: float) -> int:
    """Smallest integer ``n >= (C_K / (2 eps))^2``."""
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    target = (ck / (2.0 * eps)) ** 2
    # Snap values within rounding error of an integer before taking the ceiling.
    nearest = round(target)
    if abs(target - nearest) <= 1e-9 * max(1.0, target):
        return max(1, int(nearest))
    return max(1, math.ceil(target))


def min_n_for_security(dist: DiscreteDistribution, eps: float) -> int:
    """Training-set size that guarantees security at least ``1 - eps`` for every procedure."""
    return min_n_from_ck(c_k(dist), eps)


@dataclass(frozen=True)
class SmallNCorrection:
    """Split of the worst-case leakage into frequent atoms and a rare-atom tail.

    ``k_n`` counts atoms with mass at least ``1/n``; ``tail_term`` is the
    exact contribution ``sum p_k (1 - p_k)^n`` of the remaining ones; the
    head sandwich bounds the rest with the constants 0.29 and 0.44.
    ``head_applicable`` is false when some frequent atom has
    ``floor(n p_k) > n - 2``, where the constants are not guaranteed.
    """

    k_n: int
    tail_term: float
    head_ck: float
    sandwich_on_head: tuple[float, float]
    head_applicable: bool

    def to_json(self) -> dict:
        return {
            "k_n": self.k_n,
            "tail_term": self.tail_term,
            "head_ck": self.head_ck,
            "sandwich_on_head": list(self.sandwich_on_head),
            "head_applicable": self.head_applicable,
        }


def small_n_correction(dist: DiscreteDistribution, n: int) -> SmallNCorrection:
    n = _check_n(n)
    if n < 5:
        raise DomainError(f"small-n correction requires n >= 5, got {n}")
    probs = sorted(dist.probs, reverse=True)
    head = [p for p in probs if Fraction(p) * n >= 1]
    tail = probs[len(head):]
    tail_term = compensated_sum(p * (1.0 - p) ** n for p in tail)
    head_ck = compensated_sum(math.sqrt(p * (1.0 - p)) for p in head)
    root = math.sqrt(n)
    applicable = all(_floor_product(1.0, n, p) <= n - 2 for p in head)
    return SmallNCorrection(
        k_n=len(head),
        tail_term=tail_term,
        head_ck=head_ck,
        sandwich_on_head=(STIRLING_LOWER * head_ck / root, STIRLING_UPPER * head_ck / root),
        head_applicable=applicable,
    )


def _abs_increment(x: float, h: float) -> float:
    """``|x + h| - |x|`` without cancellation when ``h`` is small against ``x``."""
    if x > 0.0 and x + h >= 0.0:
        return h
    if x < 0.0 and x + h <= 0.0:
        return -h
    return abs(x + h) - abs(x)


def bernoulli_max_delta(p: float, n: int, weights: AttackWeights) -> float:
    """Exact leakage of the estimator ``max_j z_j`` on Bernoulli(p) data.

    The expression is arranged so that every term is proportional to
    ``(1 - p)^n``; the result keeps full relative precision as it decays.
    """
    n = _check_n(n)
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    g = weights.gamma
    q = (1.0 - p) ** n  # P(all zeros)
    r = (1.0 - p) ** (n - 1)  # P(all other points are zeros)
    s = g - 1.0
    # Integral term of the un-normalised divergence minus |gamma - 1|.
    excess = (
        p * g * q
        + q * abs(g * (1.0 - p) - 1.0)
        + p * _abs_increment(s, -g * q)
        + (1.0 - p) * _abs_increment(s, r - g * q)
    )
    return min(1.0, max(0.0, max(1.0, 1.0 / g) * excess / 2.0))
