"""Continued fractions behind products of matrices with zero bottom-right
entry.

For B_k = [[a_k, b_k], [d_k, 0]] the ratios xi_{k,n} = y_{k+1,n} / y_{k,n},
y_{k,n} = e1 B_k ... B_n e1^t, are the approximants of the continued fraction
with partial numerators beta_k = 1/(b_k d_{k+1}) and denominators
alpha_k = a_k/(b_k d_{k+1}). The forward quantities f_n, H_n, G_n drive the
extinction-time mass formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from lfbranch.env import EnvParams, EnvSequence
from lfbranch.errors import DomainError, NoConvergence, PreconditionError, ValidationError, ZeroDelta
from lfbranch.linalg2 import ScaledNonneg, logaddexp, spectrum, Mat2
from lfbranch.transform import TransformedEnv, limit_A

N_CAP = 10**7


# ---------------------------------------------------------------------------
# sources of (a_k, b_k, d_k)


class RawB:
    """B_k = [[a_k, b_k], [d_k, 0]] read off an environment, theta ignored."""

    def __init__(self, env: EnvSequence):
        self.env = env

    def abd(self, k: int) -> tuple[float, float, float]:
        e = self.env.at(k)
        return e.a, e.b, e.d

    @property
    def limit(self) -> tuple[float, float, float]:
        L = self.env.limit
        return L.a, L.b, L.d


def _as_source(source):
    if isinstance(source, EnvSequence):
        return RawB(source)
    return source


def _source_limit(source) -> tuple[float, float, float] | None:
    if isinstance(source, TransformedEnv):
        A = limit_A(source.env)
        return A.m11, A.m12, A.m21
    lim = getattr(_as_source(source), "limit", None)
    return tuple(lim) if lim is not None else None


def b_radius(a: float, b: float, d: float) -> float:
    return 0.5 * (a + math.sqrt(a * a + 4.0 * b * d))


# ---------------------------------------------------------------------------
# coefficients and approximants


class CFCoeffs:
    """Partial numerators beta(k) and denominators alpha(k), k >= 1."""

    def __init__(
        self,
        alpha: Callable[[int], float],
        beta: Callable[[int], float],
        limit: tuple[float, float] | None = None,
    ):
        self.alpha = alpha
        self.beta = beta
        self.limit = limit

    @classmethod
    def constant(cls, alpha: float, beta: float) -> "CFCoeffs":
        if alpha <= 0 or beta <= 0:
            raise ValidationError("continued-fraction coefficients must be positive")
        return cls(lambda k: alpha, lambda k: beta, (alpha, beta))

    @classmethod
    def from_arrays(cls, alpha: Sequence[float], beta: Sequence[float]) -> "CFCoeffs":
        alpha, beta = list(alpha), list(beta)
        return cls(lambda k: alpha[k - 1], lambda k: beta[k - 1])

    @classmethod
    def from_source(cls, source) -> "CFCoeffs":
        """beta_k = 1/(b_k d_{k+1}), alpha_k = a_k/(b_k d_{k+1}); needs a_k > 0."""
        src = _as_source(source)

        def alpha(k):
            a, b, _ = src.abd(k)
            if a <= 0:
                raise PreconditionError("a_positive", f"a_{k} = {a}")
            return a / (b * src.abd(k + 1)[2])

        def beta(k):
            b = src.abd(k)[1]
            return 1.0 / (b * src.abd(k + 1)[2])

        lim = _source_limit(source)
        limit = None
        if lim is not None and lim[0] > 0:
            a, b, d = lim
            limit = (a / (b * d), 1.0 / (b * d))
        return cls(alpha, beta, limit)

    def witness(self, window: int = 1000) -> float:
        """Smallest C with 1/C <= beta_k/alpha_k <= C over k <= window."""
        C = 1.0
        for k in range(1, window + 1):
            r = self.beta(k) / self.alpha(k)
            C = max(C, r, 1.0 / r)
        return C

    def reference(self) -> float:
        """Fixed point (sqrt(alpha^2 + 4 beta) - alpha)/2 of the limit fraction."""
        if self.limit is None:
            return math.nan
        alpha, beta = self.limit
        return 0.5 * (math.sqrt(alpha * alpha + 4.0 * beta) - alpha)


def approximant(coeffs: CFCoeffs, k: int, n: int) -> float:
    """xi_{k,n} = beta_k/(alpha_k + beta_{k+1}/(alpha_{k+1} + ... + beta_n/alpha_n))."""
    if not 1 <= k <= n:
        raise IndexError(f"need 1 <= k <= n, got k={k}, n={n}")
    x = coeffs.beta(n) / coeffs.alpha(n)
    for j in range(n - 1, k - 1, -1):
        x = coeffs.beta(j) / (coeffs.alpha(j) + x)
    return x


def approximants_to(coeffs: CFCoeffs, n: int) -> list[float]:
    """[xi_{1,n}, ..., xi_{n,n}] in one backward sweep."""
    out = [0.0] * n
    x = coeffs.beta(n) / coeffs.alpha(n)
    out[n - 1] = x
    for j in range(n - 1, 0, -1):
        x = coeffs.beta(j) / (coeffs.alpha(j) + x)
        out[j - 1] = x
    return out


class TailBracket(NamedTuple):
    lo: float
    hi: float
    n: int
    reference: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


def tail_bracket(coeffs: CFCoeffs, k: int, tol: float = 1e-12, n_cap: int = N_CAP) -> TailBracket:
    """Bracket the tail xi_k between two consecutive approximants.

    Approximants of even depth lie below the tail and those of odd depth above
    it, so two consecutive ones enclose xi_k. Depth grows through the forward
    (Wallis) recurrence until the gap is at most ``tol``.
    """
    A2, A1 = 1.0, 0.0
    B2, B1 = 0.0, 1.0
    prev = None
    j = k
    while j <= n_cap:
        a_j, b_j = coeffs.beta(j), coeffs.alpha(j)
        A = b_j * A1 + a_j * A2
        B = b_j * B1 + a_j * B2
        A2, A1, B2, B1 = A1, A, B1, B
        if B1 > 1e100:
            s = 1.0 / B1
            A2, A1, B2, B1 = A2 * s, A1 * s, B2 * s, 1.0
        cur = A1 / B1
        if prev is not None and abs(cur - prev) <= tol:
            lo, hi = (cur, prev) if cur < prev else (prev, cur)
            return TailBracket(lo, hi, j, coeffs.reference())
        prev = cur
        j += 1
    raise NoConvergence(f"tail xi_{k}: bracket wider than {tol} at depth {n_cap}")


# ---------------------------------------------------------------------------
# forward recursions


@dataclass(frozen=True, slots=True)
class CFState:
    """Joint forward state at step n.

    f, H, G are the bounded ratios; log_xi_prod = log(xi_{1,n}...xi_{n,n})
    = -log(e1 A_1...A_n e1^t); S = sum_{k<=n+1} prod_{i=k}^n rho(A_i);
    Y = Gamma_n / S_n with Gamma_n = sum_{k<=n+1} e1 A_k...A_n e1^t.
    log_sigma = log sum_{k<=n+1} e1 A_k...A_n (1, lambda_{n+1})^t, the
    denominator of the survival probability.
    """

    n: int
    f: float
    H: float
    G: float
    log_xi_prod: float
    S: ScaledNonneg
    Y: float
    log_gamma: float
    log_sigma: float
    lam_next: float


def fhg_stream(tenv: TransformedEnv, n_max: int) -> Iterator[CFState]:
    """One pass of f_n = b~_n/(a~_n + d~_n f_{n-1}), the H_n recursion and
    G_n, together with the log-scaled sums that share the pass."""
    f = 0.0
    H = 0.0
    log_y = 0.0
    logS = 0.0
    # R_{n} = e1 + R_{n-1} A_n kept as (r1, r2) * exp(lr)
    r1, r2, lr = 1.0, 0.0, 0.0
    ta, tb, td = tenv.at(1)
    lam = tenv.lam(1)
    lam1 = tenv.lam(2)
    for n in range(1, n_max + 1):
        den = ta + td * f
        if not den > 0:
            raise DomainError(f"f-recursion denominator {den} <= 0 at n={n}")
        f_new = tb / den
        H = 0.0 if n == 1 else -td * f_new * f - td * f_new * H
        f_prev, f = f, f_new
        log_y += math.log(den)
        logS = logaddexp(0.0, math.log(b_radius(ta, tb, td)) + logS)

        r1, r2 = r1 * ta + r2 * td, r1 * tb
        r1 += math.exp(-lr)
        m = r1 if r1 > r2 else r2
        r1 /= m
        r2 /= m
        lr += math.log(m)

        # A_{n+1} and lambda_{n+2} for G_n
        na, nb, nd = tenv.at(n + 1)
        lam2 = tenv.lam(n + 2)
        c = nb * lam1 * lam2 + na * lam1 - nd
        G = 1.0 + c * H + (c + lam1) * f

        sig = r1 + lam1 * r2
        log_sigma = math.log(sig) + lr if sig > 0 else -math.inf
        log_gamma = math.log(r1) + lr
        yield CFState(
            n=n,
            f=f,
            H=H,
            G=G,
            log_xi_prod=-log_y,
            S=ScaledNonneg(logS),
            Y=math.exp(log_gamma - logS),
            log_gamma=log_gamma,
            log_sigma=log_sigma,
            lam_next=lam1,
        )
        ta, tb, td = na, nb, nd
        lam, lam1 = lam1, lam2


class SYRow(NamedTuple):
    n: int
    S: ScaledNonneg
    Y: float
    lead_ratio: float
    Y_lambda: float


def sy_stream(source, n_max: int) -> Iterator[SYRow]:
    """S_n, Y_n = Gamma_n/S_n and e1 B_1..B_n e1^t / prod rho(B_i).

    ``source`` is a TransformedEnv (B_k := A_k, and Y_lambda carries the
    (1, lambda_{n+1}) weighted sum over S_n) or an EnvSequence, read as
    B_k = [[a_k, b_k], [d_k, 0]] (Y_lambda is nan).
    """
    src = _as_source(source)
    with_lam = isinstance(source, TransformedEnv)
    f = 0.0
    log_y = 0.0
    log_rho = 0.0
    logS = 0.0
    r1, r2, lr = 1.0, 0.0, 0.0
    for n in range(1, n_max + 1):
        a, b, d = src.abd(n)
        den = a + d * f
        if not den > 0:
            raise DomainError(f"nonpositive leading entry at n={n}")
        f = b / den
        log_y += math.log(den)
        lrho = math.log(b_radius(a, b, d))
        log_rho += lrho
        logS = logaddexp(0.0, lrho + logS)
        r1, r2 = r1 * a + r2 * d, r1 * b
        r1 += math.exp(-lr)
        m = r1 if r1 > r2 else r2
        r1 /= m
        r2 /= m
        lr += math.log(m)
        Y = math.exp(math.log(r1) + lr - logS)
        if with_lam:
            lam = source.lam(n + 1)
            Yl = (r1 + lam * r2) * math.exp(lr - logS)
        else:
            Yl = math.nan
        yield SYRow(n, ScaledNonneg(logS), Y, math.exp(log_y - log_rho), Yl)


# ---------------------------------------------------------------------------
# closed-form limits


def _limit_roots(limit: EnvParams) -> tuple[float, float, float]:
    a, b, d, t = limit.as_tuple()
    det = b * d - a * t
    sp = spectrum(Mat2(a, b, d, t))
    return det, sp.rho, sp.rho1


def fhg_limits(limit: EnvParams) -> tuple[float, float, float]:
    """Limits of (f_n, H_n, G_n) for an environment converging to ``limit``."""
    a, b, d, t = limit.as_tuple()
    det, _, r1 = _limit_roots(limit)
    if det <= 0:
        raise DomainError(f"need bd > a theta, got bd - a theta = {det}")
    if abs(r1) >= 1:
        raise DomainError(f"need |rho_1| < 1, got {r1}")
    f = -b * r1 / det
    H = -(b / det) * r1 * r1 / (1.0 - r1)
    return f, H, g_limit(limit)


def g_limit(limit: EnvParams) -> float:
    """lim G_n = ((b-t) r1^2 - (b-t)(a+b+1) r1 + bd - at) / ((bd - at)(1 - r1))
    with r1 the second eigenvalue; exactly 0 when theta = b + 1."""
    a, b, d, t = limit.as_tuple()
    det, _, r1 = _limit_roots(limit)
    if det <= 0:
        raise DomainError(f"need bd > a theta, got bd - a theta = {det}")
    if abs(r1) >= 1:
        raise DomainError(f"need |rho_1| < 1, got {r1}")
    if t == b + 1:
        return 0.0
    num = (b - t) * r1 * r1 - (b - t) * (a + b + 1) * r1 + det
    return num / (det * (1.0 - r1))


class SigRatio(NamedTuple):
    empirical: float
    predicted: float
    grid: list[int]
    values: list[float]


def sig_ratio_limit(
    sigma: Callable[[int], float],
    sigma_lim: float,
    n_max: int = 10**5,
    grid: Sequence[int] | None = None,
) -> SigRatio:
    """sigma_1...sigma_{n+1} / sum_{k=1}^{n+1} sigma_1...sigma_{k-1} on a grid,
    with the predicted limit 0 (sigma <= 1) or sigma - 1 (sigma > 1)."""
    if grid is None:
        grid = sorted({int(round(10 ** (j / 4))) for j in range(4, 4 * int(math.log10(n_max)) + 1)} | {n_max})
    want = set(grid)
    values = []
    L = 0.0  # log sigma_1..sigma_{j}
    logsum = 0.0  # log sum_{k=1}^{j+1} prod_{i<k}
    for n in range(1, max(grid) + 1):
        L += math.log(sigma(n))
        # after this, L = log prod_{i<=n}, logsum covers k <= n
        if n in want:
            values.append(math.exp(L + math.log(sigma(n + 1)) - logaddexp(logsum, L)))
        logsum = logaddexp(logsum, L)
    predicted = 0.0 if sigma_lim <= 1 else sigma_lim - 1.0
    return SigRatio(values[-1], predicted, list(grid), values)


# ---------------------------------------------------------------------------
# fluctuation diagnostics


@dataclass
class DxfResult:
    q_est: float
    ks: np.ndarray
    delta_f_ratio: np.ndarray
    delta_xi_ratio: np.ndarray
    eps_f: np.ndarray
    eps_xi: np.ndarray
    bracket_width: float


def _vanishes(x: float, scale: float) -> bool:
    return abs(x) <= 64 * math.ulp(scale)


def dxf_diagnostic(source, window: tuple[int, int], tail_extra: int = 400) -> DxfResult:
    """Consecutive ratios of delta^f_k and delta^xi_k over ``window`` and the
    deviations eps^f_k = f_k - b_{k+1}/rho(B_{k+1}), eps^xi_k = xi_k - 1/rho(B_k).

    Tails xi_k are bracketed by two backward sweeps of opposite parity and
    replaced by the bracket midpoint, so eps^xi is approximate to within
    ``bracket_width``.
    """
    src = _as_source(source)
    k_lo, k_hi = window
    k_lo = max(k_lo, 2)
    if k_hi <= k_lo + 2:
        raise ValidationError("window too short")
    N = k_hi + tail_extra
    a = np.empty(N + 3)
    b = np.empty(N + 3)
    d = np.empty(N + 3)
    for k in range(1, N + 3):
        a[k], b[k], d[k] = src.abd(k)
    if np.any(a[1 : N + 3] <= 0):
        k_bad = int(np.argmax(a[1 : N + 3] <= 0)) + 1
        raise PreconditionError("a_positive", f"a_{k_bad} = {a[k_bad]}")
    rho = 0.5 * (a + np.sqrt(a * a + 4.0 * b * d))

    ks = np.arange(k_lo, k_hi + 2)
    dfs = b[ks] / d[ks] - b[ks + 1] / rho[ks + 1] * (a[ks] / d[ks] + b[ks] / rho[ks])
    dxs = 1.0 / (b[ks] * d[ks + 1]) - (1.0 / rho[ks]) * (a[ks] / (b[ks] * d[ks + 1]) + 1.0 / rho[ks + 1])
    for k, x, s in zip(ks, dfs, b[ks] / d[ks]):
        if _vanishes(x, s):
            raise ZeroDelta(int(k), "f")
    for k, x, s in zip(ks, dxs, 1.0 / (b[ks] * d[ks + 1])):
        if _vanishes(x, s):
            raise ZeroDelta(int(k), "xi")
    rf = dfs[1:] / dfs[:-1]
    rx = dxs[1:] / dxs[:-1]

    # tails by two backward sweeps
    beta = np.zeros(N + 2)
    alpha = np.zeros(N + 2)
    beta[1 : N + 2] = 1.0 / (b[1 : N + 2] * d[2 : N + 3])
    alpha[1 : N + 2] = a[1 : N + 2] / (b[1 : N + 2] * d[2 : N + 3])
    sweeps = []
    for top in (N, N + 1):
        x = beta[top] / alpha[top]
        out = np.empty(top + 1)
        out[top] = x
        for j in range(top - 1, 0, -1):
            x = beta[j] / (alpha[j] + x)
            out[j] = x
        sweeps.append(out)
    xi_lo = np.minimum(sweeps[0][ks], sweeps[1][ks])
    xi_hi = np.maximum(sweeps[0][ks], sweeps[1][ks])
    xi_mid = 0.5 * (xi_lo + xi_hi)
    eps_xi = xi_mid - 1.0 / rho[ks]

    fvals = np.empty(N + 2)
    fk = b[1] / a[1]
    fvals[1] = fk
    for k in range(2, N + 2):
        fk = b[k] / (a[k] + d[k] * fk)
        fvals[k] = fk
    eps_f = fvals[ks] - b[ks + 1] / rho[ks + 1]

    tail = max(1, len(rf) // 10)
    q_est = 0.5 * (float(np.mean(rf[-tail:])) + float(np.mean(rx[-tail:])))
    return DxfResult(
        q_est=q_est,
        ks=ks[:-1],
        delta_f_ratio=rf,
        delta_xi_ratio=rx,
        eps_f=eps_f[:-1],
        eps_xi=eps_xi[:-1],
        bracket_width=float(np.max(xi_hi - xi_lo)),
    )
