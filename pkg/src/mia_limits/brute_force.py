"""Exact enumeration oracle over multinomial training outcomes.

For a discrete data law on ``K`` atoms, a procedure that only depends on
the empirical distribution is a map from count vectors (``K`` integers
summing to ``n``) to parameters.  Enumerating all count vectors gives the
two joint laws of the membership game exactly, with no sampling.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from .core_types import (
    AttackWeights,
    CountVector,
    DiscreteDistribution,
    DomainError,
    GuardError,
    JointDistribution,
    Method,
    MiaLimitsError,
    SecurityReport,
    check_counts,
    compensated_sum,
)
from .divergence import security_report

#: Maximum number of count vectors that may be enumerated.
MAX_OUTCOMES = 10**7

#: Maximum number of cells for exhaustive decision-set search.
MAX_SUBSET_CELLS = 20

ParamDistribution = Mapping[Hashable, float]


def outcome_count(K: int, n: int) -> int:
    return math.comb(n + K - 1, K - 1)


def _check_guard(K: int, n: int) -> None:
    if K < 1 or n < 1:
        raise DomainError(f"need K >= 1 and n >= 1, got K={K}, n={n}")
    count = outcome_count(K, n)
    if count > MAX_OUTCOMES:
        raise GuardError(
            f"enumeration guard: {count} count vectors for K={K}, n={n} "
            f"exceeds {MAX_OUTCOMES}"
        )


def _compositions(K: int, n: int):
    if K == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in _compositions(K - 1, n - first):
            yield (first,) + rest


def enumerate_outcomes(K: int, n: int) -> list[CountVector]:
    """All count vectors of length ``K`` summing to ``n``, in lexicographic order."""
    _check_guard(K, n)
    return list(_compositions(K, n))


def _log_multinomial(counts: np.ndarray, probs: np.ndarray) -> np.ndarray:
    counts = np.atleast_2d(counts).astype(float)
    n = counts.sum(axis=1)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    terms = np.where(counts > 0, counts * logp, 0.0)
    return gammaln(n + 1.0) - gammaln(counts + 1.0).sum(axis=1) + terms.sum(axis=1)


def multinomial_pmf(counts: Sequence[int], dist: DiscreteDistribution) -> float:
    counts = check_counts(counts)
    if len(counts) != dist.K:
        raise DomainError(f"counts have length {len(counts)}, distribution has K={dist.K}")
    return float(np.exp(_log_multinomial(np.array(counts), dist.as_array()))[0])


def leave_one_in_pmf(counts: Sequence[int], dist: DiscreteDistribution, k: int) -> float:
    """Law of the count vector when one training point is pinned to atom ``k``."""
    counts = check_counts(counts)
    n = sum(counts)
    if counts[k] == 0:
        return 0.0
    return counts[k] / (n * dist.probs[k]) * multinomial_pmf(counts, dist)


@dataclass(frozen=True, eq=False)
class LearningProcedureSpec:
    """A learning procedure written as a function of the training counts.

    ``table`` maps every count vector to either one parameter id
    (deterministic) or a finite ``{id: probability}`` mixture (randomized).
    """

    K: int
    n: int
    table: Mapping[CountVector, Hashable | ParamDistribution]
    name: str = "table"

    def __post_init__(self) -> None:
        _check_guard(self.K, self.n)
        normalised: dict[CountVector, dict[Hashable, float]] = {}
        for counts in _compositions(self.K, self.n):
            if counts not in self.table:
                raise MiaLimitsError(f"procedure undefined on count vector {counts}")
            out = self.table[counts]
            if isinstance(out, Mapping):
                mix = {key: float(w) for key, w in out.items() if w != 0.0}
                if any(w < 0.0 for w in mix.values()):
                    raise DomainError(f"negative mixture weight at {counts}")
                total = compensated_sum(mix.values())
                if abs(total - 1.0) > 1e-12:
                    raise DomainError(f"mixture at {counts} sums to {total!r}")
            else:
                mix = {out: 1.0}
            normalised[counts] = mix
        object.__setattr__(self, "table", normalised)

    def output(self, counts: CountVector) -> dict[Hashable, float]:
        return self.table[tuple(counts)]

    @property
    def is_deterministic(self) -> bool:
        return all(len(mix) == 1 for mix in self.table.values())


def procedure_from_function(
    K: int, n: int, fn: Callable[[CountVector], Hashable | ParamDistribution], name: str = "function"
) -> LearningProcedureSpec:
    _check_guard(K, n)
    return LearningProcedureSpec(K, n, {c: fn(c) for c in _compositions(K, n)}, name)


def injective_procedure(K: int, n: int) -> LearningProcedureSpec:
    """Each count vector gets its own parameter (the least secure procedure)."""
    return procedure_from_function(K, n, lambda c: c, "injective")


def constant_procedure(K: int, n: int) -> LearningProcedureSpec:
    return procedure_from_function(K, n, lambda c: 0, "constant")


def max_atom_procedure(K: int, n: int) -> LearningProcedureSpec:
    """Largest atom index present in the training set (``max_j z_j`` for ordered atoms)."""
    return procedure_from_function(
        K, n, lambda c: max(k for k, ck in enumerate(c) if ck > 0), "max_atom"
    )


def randomized_response(
    proc: LearningProcedureSpec, eps: float, dp_delta: float = 0.0
) -> LearningProcedureSpec:
    """Privatise ``proc`` with ``m``-ary randomized response over its parameter range.

    With probability ``dp_delta`` the parameter is released unchanged;
    otherwise it is kept with probability ``e^eps / (e^eps + m - 1)`` and
    replaced by each other value with probability ``1 / (e^eps + m - 1)``.
    The result is ``(eps, dp_delta)``-differentially private.
    """
    if eps < 0.0 or not 0.0 <= dp_delta <= 1.0:
        raise DomainError(f"need eps >= 0 and dp_delta in [0, 1], got {eps}, {dp_delta}")
    ids: list[Hashable] = []
    seen: set = set()
    for counts in _compositions(proc.K, proc.n):
        for key in proc.output(counts):
            if key not in seen:
                seen.add(key)
                ids.append(key)
    m = len(ids)
    denom = math.exp(eps) + m - 1
    keep, flip = math.exp(eps) / denom, 1.0 / denom

    def channel(counts: CountVector) -> dict[Hashable, float]:
        base = proc.output(counts)
        return {
            t: (1.0 - dp_delta) * compensated_sum(
                w * (keep if s == t else flip) for s, w in base.items()
            )
            + dp_delta * base.get(t, 0.0)
            for t in ids
        }

    return procedure_from_function(proc.K, proc.n, channel, f"rr({proc.name})")


def randomized_response_matrix(m: int, eps: float, dp_delta: float = 0.0) -> np.ndarray:
    """Column-stochastic ``m x m`` matrix of the channel used by :func:`randomized_response`."""
    if m < 1:
        raise DomainError(f"need at least one parameter value, got m={m}")
    if eps < 0.0 or not 0.0 <= dp_delta <= 1.0:
        raise DomainError(f"need eps >= 0 and dp_delta in [0, 1], got {eps}, {dp_delta}")
    denom = math.exp(eps) + m - 1
    mat = np.full((m, m), 1.0 / denom)
    np.fill_diagonal(mat, math.exp(eps) / denom)
    return (1.0 - dp_delta) * mat + dp_delta * np.eye(m)


def privatized_joints(
    j0: JointDistribution, j1: JointDistribution, eps: float, dp_delta: float = 0.0
) -> tuple[JointDistribution, JointDistribution]:
    """Joint laws after passing the parameter through randomized response."""
    if not j0.same_cells(j1):
        raise DomainError("joint distributions have different cells")
    mat = randomized_response_matrix(len(j0.theta_ids), eps, dp_delta)
    return (
        JointDistribution(j0.theta_ids, j0.z_ids, mat @ j0.mass),
        JointDistribution(j1.theta_ids, j1.z_ids, mat @ j1.mass),
    )


def _assignment(proc: LearningProcedureSpec, outcomes: list[CountVector]):
    """Canonical parameter ids (first-seen order) and the outcome-to-id matrix."""
    index: dict[Hashable, int] = {}
    rows, cols, vals = [], [], []
    for i, counts in enumerate(outcomes):
        for key, w in proc.output(counts).items():
            if key not in index:
                index[key] = len(index)
            rows.append(i)
            cols.append(index[key])
            vals.append(w)
    A = np.zeros((len(outcomes), len(index)))
    np.add.at(A, (np.array(rows), np.array(cols)), np.array(vals))
    return list(index), A


def joint_distributions(
    dist: DiscreteDistribution, n: int, proc: LearningProcedureSpec
) -> tuple[JointDistribution, JointDistribution]:
    """Exact joint laws of (parameter, fresh point) and (parameter, training point)."""
    if proc.K != dist.K or proc.n != n:
        raise DomainError(
            f"procedure is defined for K={proc.K}, n={proc.n}; got K={dist.K}, n={n}"
        )
    outcomes = enumerate_outcomes(dist.K, n)
    counts = np.array(outcomes, dtype=float)
    pmf = np.exp(_log_multinomial(counts, dist.as_array()))
    labels, A = _assignment(proc, outcomes)
    theta_law = A.T @ pmf
    j0 = np.outer(theta_law, dist.as_array())
    # p_k * leave-one-in pmf == (c_k / n) * multinomial pmf
    j1 = A.T @ (counts * (pmf / n)[:, None])
    theta_ids = tuple(range(len(labels)))
    return (
        JointDistribution(theta_ids, dist.atoms, j0),
        JointDistribution(theta_ids, dist.atoms, j1),
    )


def delta_bruteforce(
    dist: DiscreteDistribution, n: int, weights: AttackWeights, proc: LearningProcedureSpec
) -> SecurityReport:
    j0, j1 = joint_distributions(dist, n, proc)
    return security_report(
        weights, j0, j1, Method.BRUTE_FORCE, notes=f"enumerated procedure {proc.name}"
    )


def max_delta_injective(dist: DiscreteDistribution, n: int, weights: AttackWeights) -> float:
    return delta_bruteforce(dist, n, weights, injective_procedure(dist.K, n)).delta


@dataclass(frozen=True)
class SymmetryReport:
    """Outcome of the exhaustive symmetry and redundancy checks.

    ``redundancy_invariant`` is ``None`` when symmetry already failed.
    """

    symmetric: bool
    redundancy_invariant: bool | None
    first_violation: tuple | None = None


def check_symmetry_redundancy(
    proc_raw: Callable[[tuple[int, ...]], Hashable], K: int, n_max: int
) -> SymmetryReport:
    """Check a procedure on ordered samples for permutation and redundancy invariance.

    Samples are tuples of atom indices in ``range(K)``.  Every tuple up to
    length ``n_max`` is tested.
    """
    if not (1 <= K <= 4 and 1 <= n_max <= 8):
        raise GuardError(f"exhaustive check limited to K <= 4, n_max <= 8; got {K}, {n_max}")
    for length in range(1, n_max + 1):
        for sample in itertools.combinations_with_replacement(range(K), length):
            ref = proc_raw(sample)
            for perm in set(itertools.permutations(sample)):
                if proc_raw(perm) != ref:
                    return SymmetryReport(False, None, perm)
    for length in range(1, n_max // 2 + 1):
        for sample in itertools.combinations_with_replacement(range(K), length):
            ref = proc_raw(sample)
            for reps in range(2, n_max // length + 1):
                if proc_raw(sample * reps) != ref:
                    return SymmetryReport(True, False, sample * reps)
    return SymmetryReport(True, True, None)


def procedure_from_samples(
    proc_raw: Callable[[tuple[int, ...]], Hashable], K: int, n: int
) -> LearningProcedureSpec:
    """Convert a symmetric procedure on ordered samples into count-vector form."""
    def on_counts(counts: CountVector) -> Hashable:
        return proc_raw(tuple(k for k, c in enumerate(counts) for _ in range(c)))

    return procedure_from_function(K, n, on_counts, getattr(proc_raw, "__name__", "samples"))


def sup_accuracy_subset_bruteforce(
    j0: JointDistribution, j1: JointDistribution, weights: AttackWeights
) -> float:
    """Best accuracy by trying every subset of cells as the "member" region."""
    if not j0.same_cells(j1):
        raise DomainError("joint distributions have different cells")
    a = j0.mass.ravel().tolist()
    b = j1.mass.ravel().tolist()
    cells = len(a)
    if cells > MAX_SUBSET_CELLS:
        raise GuardError(f"subset search guard: {cells} cells exceeds {MAX_SUBSET_CELLS}")
    best = -math.inf
    for mask in range(1 << cells):
        idx = [i for i in range(cells) if mask >> i & 1]
        j0_b = compensated_sum(a[i] for i in idx)
        j1_b = compensated_sum(b[i] for i in idx)
        best = max(best, weights.nu * (1.0 - j0_b) + weights.member_weight * j1_b)
    return best
