"""Nonnegative 2x2 matrices, their spectra, and log-scaled products.

``ScaledMat2`` keeps a core whose largest entry lies in [1/2, 1) together
with a natural-log scale, so products over millions of factors neither
overflow nor underflow. Renormalization uses ``frexp``/``ldexp`` and is exact.
"""

from __future__ import annotations

import math
from typing import Iterable, Iterator, NamedTuple

LN2 = math.log(2.0)


class Mat2(NamedTuple):
    m11: float
    m12: float
    m21: float
    m22: float

    @classmethod
    def identity(cls) -> "Mat2":
        return cls(1.0, 0.0, 0.0, 1.0)

    def __matmul__(self, o: "Mat2") -> "Mat2":
        a, b, c, d = self
        e, f, g, h = o
        return Mat2(a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)

    @property
    def trace(self) -> float:
        return self.m11 + self.m22

    @property
    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m21

    def max_entry(self) -> float:
        return max(self)

    def row_sum(self, i: int) -> float:
        return self.m11 + self.m12 if i == 0 else self.m21 + self.m22


class Spectrum(NamedTuple):
    rho: float
    rho1: float


def spectrum(M: Mat2) -> Spectrum:
    """Top and second eigenvalue of a 2x2 matrix with real spectrum.

    The discriminant is formed as (m11 - m22)^2 + 4 m12 m21, which is
    nonnegative for nonnegative matrices, and the second root is taken as
    det/rho to avoid cancellation when the determinant is small.
    """
    a, b, c, d = M
    disc = (a - d) ** 2 + 4.0 * b * c
    if disc < 0:
        raise ValueError(f"complex spectrum for {M}")
    s = math.sqrt(disc)
    tr = a + d
    if tr >= 0:
        rho = 0.5 * (tr + s)
        rho1 = (a * d - b * c) / rho if rho != 0 else 0.5 * (tr - s)
        if abs(rho1) > rho:
            # rounding only; a nonnegative trace forces |rho1| <= rho
            rho1 = math.copysign(rho, rho1)
    else:
        rho1 = 0.5 * (tr - s)
        rho = (a * d - b * c) / rho1
    return Spectrum(rho, rho1)


def spectral_radius(a: float, b: float, c: float, d: float) -> float:
    return 0.5 * (a + d + math.sqrt((a - d) ** 2 + 4.0 * b * c))


class ScaledMat2(NamedTuple):
    """Represents ``core * exp(logscale)``; the zero matrix has logscale -inf."""

    core: Mat2
    logscale: float

    @classmethod
    def identity(cls) -> "ScaledMat2":
        return normalize(Mat2.identity(), 0.0)

    @classmethod
    def of(cls, M: Mat2) -> "ScaledMat2":
        return normalize(M, 0.0)

    def value(self) -> Mat2:
        """Unscaled matrix; may overflow to inf or underflow to 0."""
        if self.logscale == -math.inf:
            return Mat2(0.0, 0.0, 0.0, 0.0)
        s = math.exp(self.logscale)
        return Mat2(*(x * s for x in self.core))

    def log_entry(self, i: int, j: int) -> float:
        x = self.core[2 * i + j]
        return math.log(x) + self.logscale if x > 0 else -math.inf

    def log_row_sum(self, i: int) -> float:
        x = self.core.row_sum(i)
        return math.log(x) + self.logscale if x > 0 else -math.inf

    def log_bilinear(self, u: tuple[float, float], v: tuple[float, float]) -> float:
        """log(u . value . v) for vectors making the form positive."""
        c = self.core
        x = u[0] * (c.m11 * v[0] + c.m12 * v[1]) + u[1] * (c.m21 * v[0] + c.m22 * v[1])
        if x <= 0:
            return -math.inf
        return math.log(x) + self.logscale


def normalize(M: Mat2, logscale: float) -> ScaledMat2:
    m = max(M)
    if m <= 0:
        return ScaledMat2(Mat2(0.0, 0.0, 0.0, 0.0), -math.inf)
    _, e = math.frexp(m)
    if e == 0:
        return ScaledMat2(M, logscale)
    return ScaledMat2(
        Mat2(math.ldexp(M[0], -e), math.ldexp(M[1], -e), math.ldexp(M[2], -e), math.ldexp(M[3], -e)),
        logscale + e * LN2,
    )


def scaled_mul(P: ScaledMat2, M: Mat2) -> ScaledMat2:
    """P @ M, renormalized."""
    if P.logscale == -math.inf:
        return P
    return normalize(P.core @ M, P.logscale)


def scaled_matmul(P: ScaledMat2, Q: ScaledMat2) -> ScaledMat2:
    if P.logscale == -math.inf:
        return P
    if Q.logscale == -math.inf:
        return Q
    return normalize(P.core @ Q.core, P.logscale + Q.logscale)


def add_identity(T: ScaledMat2) -> ScaledMat2:
    """T + I."""
    if T.logscale == -math.inf:
        return ScaledMat2.identity()
    w = math.exp(-T.logscale)
    c = T.core
    return normalize(Mat2(c.m11 + w, c.m12, c.m21, c.m22 + w), T.logscale)


def forward_pair_mats(mats: Iterable[Mat2]) -> Iterator[tuple[ScaledMat2, ScaledMat2]]:
    """For M_1, M_2, ... yield (P_n, T_n) with P_n = M_1...M_n and
    T_n = sum_{k=1}^{n+1} M_k...M_n (empty product = I), i.e.
    P_n = P_{n-1} M_n and T_n = I + T_{n-1} M_n."""
    P = ScaledMat2.identity()
    T = P
    for M in mats:
        P = scaled_mul(P, M)
        T = add_identity(scaled_mul(T, M))
        yield P, T


def forward_pair(env, n: int) -> Iterator[tuple[ScaledMat2, ScaledMat2]]:
    if n < 1:
        raise ValueError("horizon n must be >= 1")
    return forward_pair_mats(env.at(k).matrix() for k in range(1, n + 1))


class ScaledNonneg(NamedTuple):
    """Nonnegative scalar stored as its natural log (-inf for zero)."""

    log: float

    @classmethod
    def of(cls, x: float) -> "ScaledNonneg":
        if x < 0:
            raise ValueError("ScaledNonneg holds nonnegative values only")
        return cls(math.log(x) if x > 0 else -math.inf)

    def value(self) -> float:
        return math.exp(self.log)

    def __mul__(self, o: "ScaledNonneg") -> "ScaledNonneg":
        return ScaledNonneg(self.log + o.log)

    def __add__(self, o: "ScaledNonneg") -> "ScaledNonneg":
        return ScaledNonneg(logaddexp(self.log, o.log))

    def __truediv__(self, o: "ScaledNonneg") -> "ScaledNonneg":
        return ScaledNonneg(self.log - o.log)


def logaddexp(x: float, y: float) -> float:
    if x < y:
        x, y = y, x
    if y == -math.inf:
        return x
    return x + math.log1p(math.exp(y - x))
