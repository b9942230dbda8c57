"""Conjugation of the mean matrices into A_k = Lambda_k^{-1} M_k Lambda_{k+1}.

A_k has a zero bottom-right entry, which is what turns its products into
continued-fraction approximants.
"""

from __future__ import annotations

from lfbranch.env import PROBE_GRID, EnvParams, EnvSequence
from lfbranch.errors import NonPositiveDtilde
from lfbranch.linalg2 import Mat2


def transformed_entries(e: EnvParams, e_next: EnvParams) -> tuple[float, float, float]:
    ta = e.a + e.b * e_next.theta / e_next.b
    td = e.d - e.a * e.theta / e.b
    return ta, e.b, td


class TransformedEnv:
    """Lazy view of (a~_k, b~_k, d~_k) and lambda_k = 1 - theta_k/b_k.

    ``eps`` is the minimum of d~_k over a probe window (the first
    ``window`` indices plus a sparse geometric grid). It is a numerical
    witness for a uniform positive lower bound, not a proof.
    """

    def __init__(self, env: EnvSequence, window: int = 1000):
        self.env = env
        ks = list(range(1, window + 1)) + [g for g in PROBE_GRID if g > window]
        eps = float("inf")
        for k in ks:
            e = env.probe(k)
            td = e.d - e.a * e.theta / e.b
            if td <= 0:
                raise NonPositiveDtilde(k, td)
            eps = min(eps, td)
        self.eps = eps

    def at(self, k: int) -> tuple[float, float, float]:
        ta, tb, td = transformed_entries(self.env.at(k), self.env.at(k + 1))
        if td <= 0:
            raise NonPositiveDtilde(k, td)
        return ta, tb, td

    abd = at

    def lam(self, k: int) -> float:
        e = self.env.at(k)
        return 1.0 - e.theta / e.b

    def A(self, k: int) -> Mat2:
        ta, tb, td = self.at(k)
        return Mat2(ta, tb, td, 0.0)

    def Lambda(self, k: int) -> Mat2:
        e = self.env.at(k)
        return Mat2(1.0, 0.0, e.theta / e.b, 1.0)

    @property
    def limit(self) -> Mat2:
        return limit_A(self.env)


def build_A(env: EnvSequence, window: int = 1000) -> TransformedEnv:
    return TransformedEnv(env, window)


def limit_A(env: EnvSequence) -> Mat2:
    a, b, d, t = env.limit.as_tuple()
    return Mat2(a + t, b, d - a * t / b, 0.0)
