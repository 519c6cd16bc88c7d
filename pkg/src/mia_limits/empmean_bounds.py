"""Security lower bounds for procedures that depend on an empirical mean.

When the trained parameter is a function of ``(1/n) sum_j L(z_j)`` for a
``d``-dimensional feature map ``L``, the leakage decays like ``n^-1/2``
with a constant ``c_{L,P}`` that depends on the law of ``L(z)``.  That
constant involves an absolute central-limit constant ``C(d)`` which is not
known in closed form, so it must be supplied by the caller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core_types import Bound, DomainError, MiaLimitsError

EIGEN_CUTOFF = 1e-10


class SingularCovarianceError(MiaLimitsError):
    code = "singular_covariance"


def _check_positive_int(value: int, name: str, minimum: int = 1) -> int:
    if int(value) != value or value < minimum:
        raise DomainError(f"{name} must be an integer >= {minimum}, got {value}")
    return int(value)


def gaussian_tv_bound(n: int, d: int, beta_norm: float) -> float:
    """Upper bound ``sqrt(d)/(2n) + |beta|/(2 sqrt(n))`` on the total variation
    between ``N(0, I_d)`` and ``N(beta/sqrt(n), (n-1)/n I_d)``."""
    n = _check_positive_int(n, "n", 2)
    d = _check_positive_int(d, "d")
    if beta_norm < 0.0:
        raise DomainError(f"beta_norm must be nonnegative, got {beta_norm}")
    return math.sqrt(d) / (2.0 * n) + beta_norm / (2.0 * math.sqrt(n))


@dataclass(frozen=True)
class Moments:
    """First and third absolute moments of whitened samples."""

    m1: float
    m3: float
    n_samples: int

    def to_json(self) -> dict:
        return {"m1": self.m1, "m3": self.m3, "n_samples": self.n_samples}


@dataclass(frozen=True)
class EmpMeanBoundInput:
    """Inputs of the empirical-mean security bound.

    Give either ``c_lp`` directly or both ``moments`` and ``c_d``; the
    constant is then assembled as ``c_d (1 + m3) + m1 / 2``.
    """

    n: int
    d: int
    gamma: float
    c_lp: float | None = None
    moments: Moments | None = None
    c_d: float | None = None

    def __post_init__(self) -> None:
        _check_positive_int(self.n, "n")
        _check_positive_int(self.d, "d")
        if self.gamma <= 0.0:
            raise DomainError(f"gamma must be positive, got {self.gamma}")
        direct = self.c_lp is not None
        assembled = self.moments is not None and self.c_d is not None
        partial = (self.moments is None) != (self.c_d is None)
        if direct == assembled or partial:
            raise MiaLimitsError(
                "supply exactly one of c_lp or (moments and c_d)",
            )
        if direct and self.c_lp < 0.0:
            raise DomainError(f"c_lp must be nonnegative, got {self.c_lp}")
        if assembled and self.c_d < 0.0:
            raise DomainError(f"c_d must be nonnegative, got {self.c_d}")

    def constant(self) -> float:
        if self.c_lp is not None:
            return self.c_lp
        return self.c_d * (1.0 + self.moments.m3) + self.moments.m1 / 2.0


@dataclass(frozen=True)
class EmpMeanBound:
    bound: Bound
    c_lp: float
    c_lp_source: str
    conditional_on_external_constant: bool

    @property
    def value(self) -> float:
        return self.bound.value

    def to_json(self) -> dict:
        return {
            **self.bound.to_json(),
            "c_lp": self.c_lp,
            "c_lp_source": self.c_lp_source,
            "conditional_on_external_constant": self.conditional_on_external_constant,
        }


def empmean_security_bound(inp: EmpMeanBoundInput) -> EmpMeanBound:
    """``Sec >= 1 - max(1, gamma) (c + sqrt(d) / (2 sqrt(n))) / sqrt(n)``."""
    c = inp.constant()
    root = math.sqrt(inp.n)
    raw = 1.0 - max(1.0, inp.gamma) * (c + math.sqrt(inp.d) / (2.0 * root)) / root
    assembled = inp.c_lp is None
    return EmpMeanBound(
        bound=Bound.clamped(raw),
        c_lp=c,
        c_lp_source="assembled" if assembled else "direct",
        conditional_on_external_constant=assembled,
    )


def _check_c_d_eps(c: float, d: int, eps: float) -> None:
    if c <= 0.0:
        raise DomainError(f"c must be positive, got {c}")
    _check_positive_int(d, "d")
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")


def leakage_term(c: float, d: int, n: int) -> float:
    """``c n^-1/2 + sqrt(d)/2 n^-1``, the deficit of the bound at ``gamma <= 1``."""
    return c / math.sqrt(n) + math.sqrt(d) / (2.0 * n)


def min_n_epsilon(c: float, d: int, eps: float) -> int:
    """Sufficient sample size ``ceil(eps^-2 c^2 (1 + sqrt(d)/c^2)^(3/2))``."""
    _check_c_d_eps(c, d, eps)
    return math.ceil(c * c / (eps * eps) * (1.0 + math.sqrt(d) / (c * c)) ** 1.5)


def min_n_epsilon_exact(c: float, d: int, eps: float) -> int:
    """Smallest ``n`` with ``c n^-1/2 + sqrt(d)/2 n^-1 <= eps``."""
    _check_c_d_eps(c, d, eps)
    sd = math.sqrt(d)
    # Positive root in x = n^-1/2 of (sqrt(d)/2) x^2 + c x - eps = 0.
    x = 2.0 * eps / (c + math.sqrt(c * c + 2.0 * sd * eps))
    n = max(1, math.ceil(1.0 / (x * x)))
    while n > 1 and leakage_term(c, d, n - 1) <= eps:
        n -= 1
    while leakage_term(c, d, n) > eps:
        n += 1
    return n


def standardized_moments(samples) -> Moments:
    """Estimate ``E|C^-1/2 (v - mean)|`` and ``E|C^-1/2 (v - mean)|^3``.

    Parameters
    ----------
    samples : array_like, shape (N,) or (N, d)
        One feature vector per row.

    Raises
    ------
    SingularCovarianceError
        If the sample covariance has an eigenvalue below ``1e-10`` times the
        largest one.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    N, d = x.shape
    if N < d + 1:
        raise DomainError(f"need at least d+1={d + 1} samples, got {N}")
    centred = x - x.mean(axis=0)
    cov = centred.T @ centred / (N - 1)
    eigval, eigvec = np.linalg.eigh(cov)
    top = eigval.max()
    rank = int(np.sum(eigval > EIGEN_CUTOFF * top)) if top > 0.0 else 0
    if rank < d:
        raise SingularCovarianceError(
            f"sample covariance is singular: rank {rank} < dimension {d}"
        )
    inv_sqrt = (eigvec / np.sqrt(eigval)) @ eigvec.T
    norms = np.linalg.norm(centred @ inv_sqrt, axis=1)
    return Moments(m1=float(norms.mean()), m3=float((norms**3).mean()), n_samples=N)
