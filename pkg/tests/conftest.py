import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from mia_limits.core_types import AttackWeights, DiscreteDistribution, JointDistribution

settings.register_profile(
    "default", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@st.composite
def simplex_vectors(draw, min_size=2, max_size=6, floor=1e-3):
    """Probability vectors with every entry at least ``floor`` before normalising."""
    size = draw(st.integers(min_size, max_size))
    raw = draw(st.lists(st.floats(floor, 1.0), min_size=size, max_size=size))
    v = np.array(raw)
    if v.sum() == 0.0:
        v[0] = 1.0
    return v / v.sum()


@st.composite
def distributions(draw, min_size=2, max_size=6):
    return DiscreteDistribution.from_probs(draw(simplex_vectors(min_size, max_size)))


@st.composite
def weights(draw):
    nu = draw(st.floats(0.05, 0.95))
    lam = draw(st.floats(0.2, 5.0))
    return AttackWeights(nu, lam)


@st.composite
def joint_pairs(draw, max_cells=12):
    rows = draw(st.integers(1, 4))
    cols = draw(st.integers(1, max(1, max_cells // rows)))
    a = draw(simplex_vectors(rows * cols, rows * cols, floor=0.0 if rows * cols > 1 else 1.0))
    b = draw(simplex_vectors(rows * cols, rows * cols, floor=0.0 if rows * cols > 1 else 1.0))
    return (
        JointDistribution.from_matrix(a.reshape(rows, cols)),
        JointDistribution.from_matrix(b.reshape(rows, cols)),
    )


def random_simplex(rng, K, alpha=1.0):
    p = rng.dirichlet(np.full(K, alpha))
    return p / p.sum()


def random_joint(rng, rows, cols):
    m = rng.random((rows, cols))
    return JointDistribution.from_matrix(m / m.sum())


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
