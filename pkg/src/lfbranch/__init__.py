"""Extinction-time distributions of two-type linear-fractional branching
processes in varying environments.

Exact matrix-product formulas, continued-fraction machinery, spectral-radius
asymptotics and a seeded Monte Carlo oracle.
"""

from lfbranch.env import (
    EnvParams,
    EnvSequence,
    ExplicitList,
    Homogeneous,
    EgcFamily,
    MxtScenario,
    LambdaKB,
    Custom,
    lambda_pert,
    mxt_env,
    egc_env,
    offspring_env,
    load_env_spec,
    env_from_spec,
)
from lfbranch.linalg2 import Mat2, ScaledMat2, ScaledNonneg, Spectrum, spectrum, scaled_mul, forward_pair
from lfbranch.transform import TransformedEnv, build_A, limit_A, NonPositiveDtilde
from lfbranch.dist import DistRow, eta_direct, eta_cf, homogeneous_eta
from lfbranch.sim import SimConfig, SimResult, sample_offspring, run_sim

__version__ = "0.1.0"

__all__ = [
    "EnvParams",
    "EnvSequence",
    "ExplicitList",
    "Homogeneous",
    "EgcFamily",
    "MxtScenario",
    "LambdaKB",
    "Custom",
    "lambda_pert",
    "mxt_env",
    "egc_env",
    "offspring_env",
    "load_env_spec",
    "env_from_spec",
    "Mat2",
    "ScaledMat2",
    "ScaledNonneg",
    "Spectrum",
    "spectrum",
    "scaled_mul",
    "forward_pair",
    "TransformedEnv",
    "build_A",
    "limit_A",
    "NonPositiveDtilde",
    "DistRow",
    "eta_direct",
    "eta_cf",
    "homogeneous_eta",
    "SimConfig",
    "SimResult",
    "sample_offspring",
    "run_sim",
]
