import numpy as np
import pytest

from lfbranch.env import EnvParams, ExplicitList, harmonic_pert, egc_env, offspring_env


def random_env(rng: np.random.Generator, n: int, dtilde_positive: bool = True) -> ExplicitList:
    """Random environment of length n with a random tail.

    With ``dtilde_positive`` the entries satisfy d > a theta / b so the
    conjugated matrices are nonnegative.
    """
    params = []
    for _ in range(n + 1):
        a, b, t = rng.uniform(0.05, 2.0, 3)
        d = rng.uniform(0.1, 2.0) + (a * t / b if dtilde_positive else 0.0)
        params.append(EnvParams(a, b, d, t))
    return ExplicitList(params[:-1], params[-1])


def random_offspring_env(rng: np.random.Generator, n: int) -> ExplicitList:
    """Random explicit offspring laws, so every generation is a genuine
    linear-fractional law (d = 1 + a, theta = b)."""
    params = []
    for _ in range(n + 1):
        w = rng.uniform(0.05, 1.0, 3)
        q1, q2, p = w / w.sum()
        a, b = q1 / p, q2 / p
        params.append(EnvParams(a, b, 1.0 + a, b))
    return ExplicitList(params[:-1], params[-1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def crit_env():
    """Homogeneous critical environment with p = 2/3, q = 1/3."""
    return offspring_env(0.0, 1.0 / 3.0, 2.0 / 3.0)


@pytest.fixture(scope="session")
def egc1221():
    return egc_env(EnvParams(1.0, 2.0, 2.0, 1.0), harmonic_pert())
