"""Overfitting experiments with exactly solvable interpolating regressors.

Inputs are drawn uniformly on the unit sphere, targets are ``beta^T x`` or
``sin(pi beta^T x)`` plus Gaussian noise.  Two interpolators are provided,
minimum-norm least squares and the 1-nearest-neighbour regressor; the
loss-threshold attack ``1{loss <= eps}`` is evaluated against them.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .core_types import AttackWeights, DomainError, MiaLimitsError, compensated_sum
from .divergence import sec_from_accuracy

DEFAULT_EPS_GRID = (1e-6, 1e-4, 1e-2, 1.0)
PINV_CUTOFF = 1e-12


class Target(str, enum.Enum):
    LINEAR = "linear"
    SINE = "sine"


@dataclass(frozen=True)
class RegressionTask:
    d: int
    n_train: int
    n_val: int
    beta: tuple[float, ...] | None = None
    noise_std: float = 0.1
    target: Target = Target.LINEAR
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 1 or self.n_train < 1 or self.n_val < 1:
            raise DomainError("d, n_train and n_val must be positive")
        if self.noise_std < 0.0:
            raise DomainError(f"noise_std must be nonnegative, got {self.noise_std}")
        beta = self.beta
        if beta is None:
            beta = (1.0,) + (0.0,) * (self.d - 1)
        beta = tuple(float(b) for b in beta)
        if len(beta) != self.d:
            raise DomainError(f"beta has length {len(beta)}, expected d={self.d}")
        if abs(math.sqrt(math.fsum(b * b for b in beta)) - 1.0) > 1e-12:
            raise DomainError("beta must have unit Euclidean norm")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "target", Target(self.target))

    def to_json(self) -> dict:
        return {
            "d": self.d,
            "n_train": self.n_train,
            "n_val": self.n_val,
            "beta": list(self.beta),
            "noise_std": self.noise_std,
            "target": self.target.value,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class OverfitParams:
    epsilon: float
    alpha: float

    def __post_init__(self) -> None:
        if self.epsilon < 0.0:
            raise DomainError(f"epsilon must be nonnegative, got {self.epsilon}")
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must lie in (0, 1), got {self.alpha}")

    @property
    def eta(self) -> float:
        """Stopping threshold on the mean training loss."""
        return self.epsilon * self.alpha


@dataclass(frozen=True, eq=False)
class Split:
    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True, eq=False)
class Dataset:
    train: Split
    validation: Split
    seed: int


def sample_sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _targets(task: RegressionTask, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    signal = x @ np.array(task.beta)
    if task.target is Target.SINE:
        signal = np.sin(np.pi * signal)
    return signal + task.noise_std * rng.standard_normal(len(x))


def generate_task(task: RegressionTask) -> Dataset:
    """Draw independent train and validation sets, reproducibly from ``task.seed``."""
    train_ss, val_ss = np.random.SeedSequence(task.seed).spawn(2)
    splits = []
    for ss, size in ((train_ss, task.n_train), (val_ss, task.n_val)):
        rng = np.random.default_rng(ss)
        x = sample_sphere(rng, size, task.d)
        splits.append(Split(x, _targets(task, x, rng)))
    return Dataset(splits[0], splits[1], task.seed)


class Predictor:
    def predict(self, x: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class LinearPredictor(Predictor):
    coef: np.ndarray

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.coef


@dataclass(frozen=True, eq=False)
class NearestNeighborPredictor(Predictor):
    """1-NN regressor; ties go to the training point with the smallest index."""

    x_train: np.ndarray
    y_train: np.ndarray
    chunk: int = 512

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty(len(x))
        for start in range(0, len(x), self.chunk):
            q = x[start:start + self.chunk]
            dist = ((q[:, None, :] - self.x_train[None, :, :]) ** 2).sum(axis=2)
            out[start:start + self.chunk] = self.y_train[np.argmin(dist, axis=1)]
        return out


def fit_minnorm_linreg(train: Split) -> LinearPredictor:
    """Minimum-norm least squares (pseudo-inverse with relative cutoff 1e-12)."""
    if not (np.all(np.isfinite(train.x)) and np.all(np.isfinite(train.y))):
        raise DomainError("design matrix and targets must be finite")
    coef, *_ = np.linalg.lstsq(train.x, train.y, rcond=PINV_CUTOFF)
    return LinearPredictor(coef)


def fit_1nn(train: Split) -> NearestNeighborPredictor:
    if len(train) == 0:
        raise DomainError("1-NN needs at least one training point")
    return NearestNeighborPredictor(np.array(train.x, dtype=float), np.array(train.y, dtype=float))


def squared_losses(predictor: Predictor, split: Split) -> np.ndarray:
    return (predictor.predict(split.x) - split.y) ** 2


def loss_threshold_attack(eps: float, predictor: Predictor, x, y) -> int:
    """``1`` (member) iff the squared error at ``(x, y)`` is at most ``eps``."""
    if eps < 0.0:
        raise DomainError(f"eps must be nonnegative, got {eps}")
    loss = float((predictor.predict(np.atleast_2d(x))[0] - float(y)) ** 2)
    return int(loss <= eps)


def fraction_below(predictor: Predictor, split: Split, eps_list: Sequence[float]) -> np.ndarray:
    if len(split) == 0:
        raise DomainError("fraction_below needs a nonempty dataset")
    losses = np.sort(squared_losses(predictor, split))
    counts = np.searchsorted(losses, np.asarray(eps_list, dtype=float), side="right")
    return counts / len(losses)


@dataclass(frozen=True)
class AccuracyEstimate:
    """Monte Carlo accuracy of an attack with a 95% normal-approximation interval."""

    value: float
    ci_low: float
    ci_high: float
    n_draws: int
    seed: int

    @property
    def half_width(self) -> float:
        return (self.ci_high - self.ci_low) / 2.0


def empirical_attack_accuracy(
    weights: AttackWeights,
    predictor: Predictor,
    train: Split,
    holdout: Split,
    eps: float,
    n_draws: int,
    seed: int,
    attack: Callable[[np.ndarray], np.ndarray] | None = None,
    level: float = 0.95,
) -> AccuracyEstimate:
    """Estimate ``P(phi = 0, T = 1) + lam P(phi = 1, T = 0)``.

    Each draw flips ``T ~ Bernoulli(nu)``; the test point is a uniform
    holdout point when ``T = 1`` and a uniform training point otherwise.
    ``attack`` maps losses to decisions and defaults to ``loss <= eps``.
    """
    if n_draws < 1000:
        raise DomainError(f"n_draws must be at least 1000, got {n_draws}")
    if attack is None:
        if eps < 0.0:
            raise DomainError(f"eps must be nonnegative, got {eps}")
        attack = lambda losses: losses <= eps  # noqa: E731
    rng = np.random.default_rng(seed)
    fresh = rng.random(n_draws) < weights.nu
    train_loss = squared_losses(predictor, train)
    hold_loss = squared_losses(predictor, holdout)
    idx_hold = rng.integers(0, len(holdout), n_draws)
    idx_train = rng.integers(0, len(train), n_draws)
    losses = np.where(fresh, hold_loss[idx_hold], train_loss[idx_train])
    decision = np.asarray(attack(losses), dtype=bool)
    score = np.where(fresh, ~decision, weights.lam * decision).astype(float)
    mean = compensated_sum(score.tolist()) / n_draws
    half = norm.ppf(0.5 + level / 2.0) * score.std(ddof=1) / math.sqrt(n_draws)
    return AccuracyEstimate(mean, mean - half, mean + half, n_draws, seed)


def overfit_security_upper_bound(alpha: float, gamma: float, p_loss_below_eps: float) -> float:
    """``max(1, 1/gamma) (alpha + gamma p)`` for an ``(eps, 1 - alpha)``-overfitting procedure."""
    if not 0.0 <= alpha <= 1.0 or not 0.0 <= p_loss_below_eps <= 1.0:
        raise DomainError("alpha and p_loss_below_eps must lie in [0, 1]")
    if gamma <= 0.0:
        raise DomainError(f"gamma must be positive, got {gamma}")
    return max(1.0, 1.0 / gamma) * (alpha + gamma * p_loss_below_eps)


@dataclass(frozen=True)
class StoppingCheck:
    stopped: bool
    overfit: bool
    fraction_below: float


def check_stopping_overfit(losses, eps: float, alpha: float) -> StoppingCheck:
    """Whether the stopping rule ``mean loss <= eps alpha`` fired, and whether
    at least a ``1 - alpha`` fraction of losses is ``<= eps``.

    The first implies the second; a violation raises ``AssertionError``.
    """
    losses = [float(v) for v in losses]
    if not losses or not all(math.isfinite(v) and v >= 0.0 for v in losses):
        raise DomainError("losses must be a nonempty list of finite nonnegative values")
    n = len(losses)
    stopped = compensated_sum(losses) <= eps * alpha * n
    below = sum(1 for v in losses if v <= eps)
    overfit = below >= n * (1.0 - alpha)
    if stopped and not overfit:
        raise AssertionError(
            f"stopping rule fired but only {below}/{n} losses are <= {eps}"
        )
    return StoppingCheck(stopped, overfit, below / n)


MODELS: dict[str, Callable[[Split], Predictor]] = {
    "minnorm": fit_minnorm_linreg,
    "1nn": fit_1nn,
}


@dataclass(frozen=True)
class SeedResult:
    """Final-state summary of one seeded run."""

    seed: int
    train_fractions: tuple[float, ...]
    val_fractions: tuple[float, ...]
    max_train_loss: float
    accuracy: AccuracyEstimate
    empirical_sec: float
    sec_upper_bound: float


@dataclass(frozen=True)
class OverfitConfig:
    task: RegressionTask
    model: str = "minnorm"
    eps_list: tuple[float, ...] = DEFAULT_EPS_GRID
    attack_eps: float = 1e-6
    weights: AttackWeights = field(default_factory=lambda: AttackWeights(0.5, 1.0))
    n_draws: int = 10_000
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise MiaLimitsError(f"unknown model {self.model!r}; choose from {sorted(MODELS)}")
        if not self.seeds:
            raise MiaLimitsError("at least one seed is required")


def run_seed(config: OverfitConfig, seed: int) -> SeedResult:
    task = RegressionTask(**{**config.task.to_json(), "seed": seed})
    data = generate_task(task)
    predictor = MODELS[config.model](data.train)
    train_frac = fraction_below(predictor, data.train, config.eps_list)
    val_frac = fraction_below(predictor, data.validation, config.eps_list)
    acc = empirical_attack_accuracy(
        config.weights, predictor, data.train, data.validation,
        config.attack_eps, config.n_draws, seed,
    )
    alpha = 1.0 - float(fraction_below(predictor, data.train, [config.attack_eps])[0])
    p_below = float(fraction_below(predictor, data.validation, [config.attack_eps])[0])
    return SeedResult(
        seed=seed,
        train_fractions=tuple(train_frac.tolist()),
        val_fractions=tuple(val_frac.tolist()),
        max_train_loss=float(squared_losses(predictor, data.train).max()),
        accuracy=acc,
        empirical_sec=sec_from_accuracy(config.weights, acc.value),
        sec_upper_bound=overfit_security_upper_bound(alpha, config.weights.gamma, p_below),
    )


def run_overfit_experiment(config: OverfitConfig, threads: int = 1) -> list[SeedResult]:
    """Run every seed; results are ordered by seed list and independent of ``threads``."""
    if threads <= 1:
        return [run_seed(config, s) for s in config.seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: run_seed(config, s), config.seeds))


def fraction_curves_rows(config: OverfitConfig, results: Sequence[SeedResult]) -> list[dict]:
    """Long-format rows ``seed, split, eps, fraction`` for external plotting."""
    rows = []
    for res in results:
        for split, fracs in (("train", res.train_fractions), ("validation", res.val_fractions)):
            for eps, frac in zip(config.eps_list, fracs):
                rows.append({"seed": res.seed, "split": split, "eps": eps, "fraction": frac})
    return rows
