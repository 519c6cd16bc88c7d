"""Shared domain types and deterministic numeric primitives.

Every probability computation in the package goes through the helpers in
this module: log-space binomial coefficients, binomial pmf/CDF and
compensated (exactly rounded) summation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np
from scipy.special import gammaln

#: Tolerance on total mass for distributions and joint laws.
MASS_TOL = 1e-12

#: Largest ``n`` accepted by the binomial CDF (direct summation guard).
MAX_BINOMIAL_N = 10**6

# math.comb on big ints is exact; above this n we fall back to lgamma.
_EXACT_COMB_LIMIT = 1000

compensated_sum = math.fsum


class MiaLimitsError(ValueError):
    """Base class for input and guard errors raised by this package."""

    code = "invalid_input"


class DomainError(MiaLimitsError):
    """An argument lies outside the mathematical domain of the operation."""

    code = "domain_error"


class DimensionError(MiaLimitsError):
    """Two operands do not share the same index sets."""

    code = "dimension_mismatch"


class GuardError(MiaLimitsError):
    """A combinatorial explosion guard was violated."""

    code = "guard_violation"


# ---------------------------------------------------------------------------
# Numeric primitives
# ---------------------------------------------------------------------------


def log_binomial(n: int, k: int) -> float:
    """Natural log of C(n, k); ``-inf`` when ``k`` is outside ``[0, n]``.

    The convention C(n, n+1) = 0 makes the out-of-range value ``-inf``.
    """
    n, k = int(n), int(k)
    if n < 0:
        raise DomainError(f"log_binomial requires n >= 0, got n={n}")
    if k < 0 or k > n:
        return -math.inf
    if n <= _EXACT_COMB_LIMIT:
        return math.log(math.comb(n, k))
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _check_open_prob(p: float, name: str = "p") -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"{name} must lie in the open interval (0, 1), got {p}")
    return p


def binomial_logpmf(n: int, k: int | np.ndarray, p: float) -> float | np.ndarray:
    """Log pmf of Bin(n, p) at ``k`` (scalar or array)."""
    p = _check_open_prob(p)
    k_arr = np.asarray(k, dtype=float)
    out = (
        gammaln(n + 1.0)
        - gammaln(k_arr + 1.0)
        - gammaln(n - k_arr + 1.0)
        + k_arr * math.log(p)
        + (n - k_arr) * math.log1p(-p)
    )
    out = np.where((k_arr < 0) | (k_arr > n), -np.inf, out)
    return float(out) if np.ndim(out) == 0 else out


def binomial_pmf(n: int, k: int, p: float) -> float:
    """P(B = k) for B ~ Bin(n, p), evaluated in log space."""
    n, k = int(n), int(k)
    if n < 0 or not 0 <= k <= n:
        raise DomainError(f"binomial_pmf requires 0 <= k <= n, got n={n}, k={k}")
    p = _check_open_prob(p)
    return math.exp(log_binomial(n, k) + k * math.log(p) + (n - k) * math.log1p(-p))


def binomial_cdf(n: int, m: int, p: float) -> float:
    """P(B <= m) for B ~ Bin(n, p) by direct compensated summation."""
    n, m = int(n), int(m)
    if n < 0:
        raise DomainError(f"binomial_cdf requires n >= 0, got n={n}")
    if n > MAX_BINOMIAL_N:
        raise GuardError(f"binomial_cdf guard: n={n} exceeds {MAX_BINOMIAL_N}")
    p = _check_open_prob(p)
    if m < 0:
        return 0.0
    if m >= n:
        return 1.0
    ks = np.arange(m + 1, dtype=float)
    terms = np.exp(binomial_logpmf(n, ks, p))
    return min(1.0, compensated_sum(terms.tolist()))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finite data law ``sum_k p_k delta_{u_k}`` with strictly positive masses.

    Zero-mass atoms are dropped at construction; every other violation
    (negative mass, total mass off by more than 1e-12, duplicate labels)
    raises :class:`MiaLimitsError`.
    """

    atoms: tuple[str, ...]
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        atoms = tuple(str(a) for a in self.atoms)
        probs = tuple(float(p) for p in self.probs)
        if len(atoms) != len(probs):
            raise DimensionError(
                f"{len(atoms)} atoms but {len(probs)} probabilities"
            )
        if len(set(atoms)) != len(atoms):
            raise MiaLimitsError("atom labels must be distinct")
        if any(not math.isfinite(p) or p < 0.0 for p in probs):
            raise DomainError("probabilities must be finite and nonnegative")
        total = compensated_sum(probs)
        if abs(total - 1.0) > MASS_TOL:
            raise DomainError(f"probabilities sum to {total!r}, not 1")
        kept = [(a, p) for a, p in zip(atoms, probs) if p > 0.0]
        if not kept:
            raise DomainError("distribution has no atom with positive mass")
        object.__setattr__(self, "atoms", tuple(a for a, _ in kept))
        object.__setattr__(self, "probs", tuple(p for _, p in kept))

    @classmethod
    def from_probs(cls, probs: Iterable[float]) -> "DiscreteDistribution":
        probs = list(probs)
        return cls(tuple(f"u{k + 1}" for k in range(len(probs))), tuple(probs))

    @classmethod
    def uniform(cls, K: int) -> "DiscreteDistribution":
        if K < 1:
            raise DomainError(f"uniform distribution needs K >= 1, got {K}")
        return cls.from_probs([1.0 / K] * K)

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "DiscreteDistribution":
        probs = obj["probs"]
        atoms = obj.get("atoms") or [f"u{k + 1}" for k in range(len(probs))]
        return cls(tuple(atoms), tuple(probs))

    def to_json(self) -> dict[str, Any]:
        return {"atoms": list(self.atoms), "probs": list(self.probs)}

    @property
    def K(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.array(self.probs, dtype=float)


@dataclass(frozen=True)
class AttackWeights:
    """Evaluation weights of an attack.

    ``nu`` is the probability that the test point is a fresh draw and
    ``lam`` the importance given to the true-positive rate.  The trade-off
    ``gamma = nu / (lam (1 - nu))`` is always derived, never stored.
    """

    nu: float
    lam: float

    def __post_init__(self) -> None:
        nu, lam = float(self.nu), float(self.lam)
        if not 0.0 < nu < 1.0:
            raise DomainError(f"nu must lie in (0, 1), got {nu}")
        if not (lam > 0.0 and math.isfinite(lam)):
            raise DomainError(f"lambda must be a positive real, got {lam}")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "lam", lam)

    @property
    def gamma(self) -> float:
        return self.nu / (self.lam * (1.0 - self.nu))

    @property
    def fresh_weight(self) -> float:
        """Accuracy of the constant "non-member" attack, ``nu``."""
        return self.nu

    @property
    def member_weight(self) -> float:
        """Accuracy of the constant "member" attack, ``lam (1 - nu)``."""
        return self.lam * (1.0 - self.nu)

    @property
    def max_accuracy(self) -> float:
        return self.nu + self.lam * (1.0 - self.nu)

    @property
    def trivial_accuracy(self) -> float:
        return max(self.nu, self.lam * (1.0 - self.nu))

    @classmethod
    def for_gamma(cls, gamma: float, lam: float = 1.0) -> "AttackWeights":
        """Weights with a prescribed trade-off ``gamma`` at fixed ``lam``."""
        if gamma <= 0.0:
            raise DomainError(f"gamma must be positive, got {gamma}")
        return cls(nu=gamma * lam / (1.0 + gamma * lam), lam=lam)

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "AttackWeights":
        return cls(nu=obj["nu"], lam=obj["lambda"])

    def to_json(self) -> dict[str, float]:
        return {"nu": self.nu, "lambda": self.lam, "gamma": self.gamma}


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Finite joint law over (parameter id x atom id) cells."""

    theta_ids: tuple[Hashable, ...]
    z_ids: tuple[Hashable, ...]
    mass: np.ndarray

    def __post_init__(self) -> None:
        theta_ids = tuple(self.theta_ids)
        z_ids = tuple(self.z_ids)
        mass = np.array(self.mass, dtype=float)
        if mass.shape != (len(theta_ids), len(z_ids)):
            raise DimensionError(
                f"mass has shape {mass.shape}, expected "
                f"({len(theta_ids)}, {len(z_ids)})"
            )
        if len(set(theta_ids)) != len(theta_ids) or len(set(z_ids)) != len(z_ids):
            raise MiaLimitsError("theta_ids and z_ids must be distinct")
        if not np.all(np.isfinite(mass)) or np.any(mass < 0.0):
            raise DomainError("joint masses must be finite and nonnegative")
        total = compensated_sum(mass.ravel().tolist())
        if abs(total - 1.0) > MASS_TOL:
            raise DomainError(f"joint mass sums to {total!r}, not 1")
        mass.setflags(write=False)
        object.__setattr__(self, "theta_ids", theta_ids)
        object.__setattr__(self, "z_ids", z_ids)
        object.__setattr__(self, "mass", mass)

    @classmethod
    def from_matrix(cls, matrix: Sequence[Sequence[float]] | np.ndarray) -> "JointDistribution":
        mass = np.asarray(matrix, dtype=float)
        if mass.ndim != 2:
            raise DimensionError("a joint distribution must be a 2-D matrix")
        return cls(tuple(range(mass.shape[0])), tuple(range(mass.shape[1])), mass)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape

    def theta_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=1)

    def z_marginal(self) -> np.ndarray:
        return self.mass.sum(axis=0)

    def product_of_marginals(self) -> "JointDistribution":
        prod = np.outer(self.theta_marginal(), self.z_marginal())
        return JointDistribution(self.theta_ids, self.z_ids, prod / prod.sum())

    def cells(self) -> list[tuple[Hashable, Hashable]]:
        return [(t, z) for t in self.theta_ids for z in self.z_ids]

    def same_cells(self, other: "JointDistribution") -> bool:
        return self.theta_ids == other.theta_ids and self.z_ids == other.z_ids


CountVector = tuple[int, ...]


def check_counts(counts: Sequence[int], n: int | None = None) -> CountVector:
    """Validate a count vector and return it as a tuple of ints."""
    out = tuple(int(c) for c in counts)
    if any(c < 0 for c in out):
        raise DomainError(f"counts must be nonnegative, got {out}")
    if n is not None and sum(out) != n:
        raise DomainError(f"counts {out} do not sum to n={n}")
    return out


class Method(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    BRUTE_FORCE = "brute_force"
    UPPER_BOUND = "upper_bound"
    LOWER_BOUND = "lower_bound"


@dataclass(frozen=True)
class SecurityReport:
    """Central divergence, security score and best attack accuracy."""

    delta: float
    sec: float
    sup_accuracy: float
    method: Method
    weights: AttackWeights
    notes: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if self.method in (Method.CLOSED_FORM, Method.BRUTE_FORCE):
            if abs(self.sec - (1.0 - self.delta)) > 1e-12:
                raise MiaLimitsError(
                    f"sec={self.sec!r} is not 1 - delta for delta={self.delta!r}"
                )
        lo, hi = self.weights.trivial_accuracy, self.weights.max_accuracy
        if not lo - 1e-12 <= self.sup_accuracy <= hi + 1e-12:
            raise MiaLimitsError(
                f"sup_accuracy={self.sup_accuracy!r} outside [{lo!r}, {hi!r}]"
            )

    def to_json(self) -> dict[str, Any]:
        return {
            "delta": self.delta,
            "sec": self.sec,
            "sup_accuracy": self.sup_accuracy,
            "method": self.method.value,
            "weights": self.weights.to_json(),
            "notes": self.notes,
        }


@dataclass(frozen=True)
class Bound:
    """A bound value clamped into ``[0, 1]``; ``raw`` keeps the formula value.

    ``vacuous`` is set whenever clamping changed the value.
    """

    value: float
    raw: float
    vacuous: bool = field(default=False)

    @classmethod
    def clamped(cls, raw: float) -> "Bound":
        value = min(1.0, max(0.0, raw))
        return cls(value=value, raw=raw, vacuous=value != raw)

    def to_json(self) -> dict[str, Any]:
        return {"value": self.value, "raw": self.raw, "vacuous": self.vacuous}
