"""Exact extinction-time distribution.

Two independent routes to eta_n = P(nu > n | Z_0 = e_i):

* ``eta_direct`` forms e_i M_1...M_n 1 / (1 + sum_k e_1 M_k...M_n 1) from
  log-scaled forward products of the mean matrices;
* ``eta_cf`` runs the conjugated A-matrices and the f/H/G recursions, which
  also yield p_n = P(nu = n) without differencing.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import IO, Iterable, Iterator

from lfbranch.cfrac import fhg_stream
from lfbranch.env import EnvSequence
from lfbranch.errors import ValidationError
from lfbranch.linalg2 import LN2, Mat2, forward_pair, spectrum
from lfbranch.transform import TransformedEnv

ONES = (1.0, 1.0)
UNIT = {"e1": (1.0, 0.0), "e2": (0.0, 1.0)}
CRIT_TOL = 1e-12


@dataclass(frozen=True, slots=True)
class DistRow:
    """eta = P(nu > n), mass = P(nu = n), with their natural logs."""

    n: int
    eta: float
    mass: float
    log_eta: float
    log_mass: float


def _log_diff(log_hi: float, log_lo: float) -> float:
    """log(exp(log_hi) - exp(log_lo)), -inf when the difference is <= 0."""
    if log_lo >= log_hi:
        return -math.inf
    if log_lo == -math.inf:
        return log_hi
    return log_hi + math.log(-math.expm1(log_lo - log_hi))


def _safe_exp(x: float) -> float:
    return math.exp(x) if x > -745.2 else 0.0


def eta_direct(env: EnvSequence, n_max: int, initial: str = "e1") -> Iterator[DistRow]:
    """Survival tail from forward products of M_k; p_n by differencing."""
    if initial not in UNIT:
        raise ValidationError(f"initial must be 'e1' or 'e2', got {initial!r}")
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    u = UNIT[initial]
    e1 = UNIT["e1"]
    prev = 0.0
    prev_eta = 1.0
    for n, (P, T) in enumerate(forward_pair(env, n_max), start=1):
        num = u[0] * P.core.row_sum(0) + u[1] * P.core.row_sum(1)
        ratio = num / T.core.row_sum(0)
        # logscales are integer multiples of log 2, so rescaling is exact
        shift = round((P.logscale - T.logscale) / LN2) if num > 0 else 0
        eta = math.ldexp(ratio, shift)
        log_eta = math.log(ratio) + shift * LN2 if num > 0 else -math.inf
        if eta > 1e-290:
            mass = prev_eta - eta
            log_mass = math.log(mass) if mass > 0 else -math.inf
        else:
            log_mass = _log_diff(prev, log_eta)
            mass = _safe_exp(log_mass)
        yield DistRow(n, eta, mass, log_eta, log_mass)
        prev, prev_eta = log_eta, eta


def eta_cf(env: EnvSequence | TransformedEnv, n_max: int) -> Iterator[DistRow]:
    """Survival tail and mass from the A-matrix representation (start e1).

    eta_n = x_n (1, lambda_{n+1})^t / Sigma_n and
    p_n = G_{n-1} x_{n-1} e1^t / (Sigma_n Sigma_{n-1}), where x_n = e1 A_1...A_n
    and Sigma_n = sum_{k<=n+1} e1 A_k...A_n (1, lambda_{n+1})^t.
    """
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    tenv = env if isinstance(env, TransformedEnv) else TransformedEnv(env)
    G_prev, log_y_prev, log_sig_prev = 1.0, 0.0, 0.0
    for st in fhg_stream(tenv, n_max):
        log_y = -st.log_xi_prod
        w = 1.0 + st.f * st.lam_next
        log_eta = (log_y + math.log(w) - st.log_sigma) if w > 0 else -math.inf
        rest = log_y_prev - st.log_sigma - log_sig_prev
        mass = G_prev * _safe_exp(rest)
        log_mass = math.log(G_prev) + rest if G_prev > 0 else -math.inf
        yield DistRow(st.n, _safe_exp(log_eta), mass, log_eta, log_mass)
        G_prev, log_y_prev, log_sig_prev = st.G, log_y, st.log_sigma


def pgf_eta(mats: Iterable[Mat2], initial: str = "e1") -> list[float]:
    """eta_n = 1 - (f_1 o ... o f_n)(0), evaluated backward from f_n.

    With t = 1 - s the map reads t -> M t / (1 + gamma t), gamma = e1 M,
    which avoids forming 1 - s near s = 1. Cost is O(n^2); meant as an
    oracle for short horizons.
    """
    mats = list(mats)
    i = 0 if initial == "e1" else 1
    out = []
    for n in range(1, len(mats) + 1):
        t1, t2 = 1.0, 1.0
        for M in reversed(mats[:n]):
            den = 1.0 + M.m11 * t1 + M.m12 * t2
            t1, t2 = (M.m11 * t1 + M.m12 * t2) / den, (M.m21 * t1 + M.m22 * t2) / den
        out.append(t1 if i == 0 else t2)
    return out


def _geom(x: float, n: int) -> float:
    """sum_{j=0}^n x^j."""
    if x == 1.0:
        return n + 1.0
    if x > 0:
        return -math.expm1((n + 1) * math.log(x)) / (1.0 - x)
    return (1.0 - x ** (n + 1)) / (1.0 - x)


def regime(rho: float) -> str:
    if abs(rho - 1.0) <= CRIT_TOL:
        return "crit"
    return "sub" if rho < 1.0 else "super"


def homogeneous_eta(M: Mat2, n: int) -> tuple[float, str]:
    """Closed form for constant M.

    e1 M^j 1 = alpha rho^j + beta rho1^j, so eta_n is a ratio of such a term
    to its geometric partial sum over j = 0..n. Everything is divided by
    rho^n when rho > 1.
    """
    if n < 0:
        raise ValidationError("n must be >= 0")
    rho, rho1 = spectrum(M)
    alpha = (M.m11 + M.m12 - rho1) / (rho - rho1)
    beta = 1.0 - alpha
    reg = regime(rho)
    if reg == "crit":
        rho = 1.0
    if rho > 1.0:
        q = rho1 / rho
        num = alpha + beta * q**n
        den = alpha * _geom(1.0 / rho, n) + beta * _geom(rho1, n) * rho ** (-n)
    else:
        num = alpha * rho**n + beta * rho1**n
        den = alpha * _geom(rho, n) + beta * _geom(rho1, n)
    return num / den, reg


def write_dist_csv(rows: Iterable[DistRow], fh: IO[str], method: str, header: bool = True) -> None:
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(["n", "eta", "mass", "method"])
    for r in rows:
        w.writerow([r.n, f"{r.eta:.17g}", f"{r.mass:.17g}", method])


def read_dist_csv(fh: IO[str]) -> list[tuple[int, float, float, str]]:
    return [(int(r["n"]), float(r["eta"]), float(r["mass"]), r["method"]) for r in csv.DictReader(fh)]
