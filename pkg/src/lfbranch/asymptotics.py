"""Spectral-radius predictors for the extinction-time law, rate fitting and
numerical checks of the regularity conditions on the environment.

With s_n = sum_{k=1}^{n+1} prod_{i<k} rho(M_i)^{-1} the predictors are
P(nu > n) ~ c / s_n and P(nu = n) ~ c prod_{i<=n} rho(M_i)^{-1} / s_n^2.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from lfbranch.cfrac import b_radius
from lfbranch.dist import DistRow, eta_cf, eta_direct
from lfbranch.env import EnvSequence, tau_exclusion
from lfbranch.errors import InsufficientRange, NonPositiveDtilde, ValidationError
from lfbranch.linalg2 import ScaledNonneg, logaddexp, spectral_radius
from lfbranch.transform import TransformedEnv

ZERO_TOL = 1e-14
CAUCHY_RTOL = 1e-2
TAU_SEP = 1e-6
DEFAULT_GRID = (10**2, 10**3, 10**4, 10**5)


# ---------------------------------------------------------------------------
# predictors


@dataclass(frozen=True, slots=True)
class AsymRow:
    n: int
    pred_tail: ScaledNonneg
    pred_mass: ScaledNonneg
    ratio_tail: float
    ratio_mass: float
    mass_upper_only: bool = False


def _log_radii(env: EnvSequence, radii: str) -> Iterator[float]:
    if radii == "M":
        k = 1
        while True:
            a, b, d, t = env.at(k).as_tuple()
            yield math.log(spectral_radius(a, b, d, t))
            k += 1
    elif radii == "A":
        tenv = env if isinstance(env, TransformedEnv) else TransformedEnv(env)
        k = 1
        while True:
            yield math.log(b_radius(*tenv.at(k)))
            k += 1
    else:
        raise ValidationError(f"radii must be 'M' or 'A', got {radii!r}")


def mass_upper_only(env: EnvSequence) -> bool:
    """Limit theta = b + 1: the mass predictor is then only an upper scale."""
    L = env.limit
    return L.theta == L.b + 1.0


def predictor_stream(env: EnvSequence, n_max: int, radii: str = "M") -> Iterator[tuple[int, ScaledNonneg, ScaledNonneg]]:
    """(n, 1/s_n, prod rho^{-1}/s_n^2), all log-scaled."""
    L = 0.0  # log prod_{i<=n} rho_i^{-1}
    logsum = 0.0  # log s_0 = log 1
    for n, lr in zip(range(1, n_max + 1), _log_radii(env, radii)):
        L -= lr
        logsum = logaddexp(logsum, L)
        yield n, ScaledNonneg(-logsum), ScaledNonneg(L - 2.0 * logsum)


def predictors(
    env: EnvSequence,
    n_max: int,
    rows: Iterable[DistRow] | None = None,
    radii: str = "M",
) -> Iterator[AsymRow]:
    """Predictor values and ratios eta_n / pred_tail, p_n / pred_mass.

    ``rows`` defaults to the A-matrix distribution, falling back to the
    direct formula when the conjugation does not apply.
    """
    if rows is None:
        rows = exact_rows(env, n_max)
    upper = mass_upper_only(env)
    for (n, pt, pm), r in zip(predictor_stream(env, n_max, radii), rows):
        yield AsymRow(
            n,
            pt,
            pm,
            math.exp(r.log_eta - pt.log),
            math.exp(r.log_mass - pm.log) if r.log_mass > -math.inf else 0.0,
            upper,
        )


def exact_rows(env: EnvSequence, n_max: int) -> Iterator[DistRow]:
    try:
        TransformedEnv(env)
    except NonPositiveDtilde:
        return eta_direct(env, n_max)
    return eta_cf(env, n_max)


def write_asym_csv(pairs: Iterable[tuple[DistRow, AsymRow]], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n", "eta", "mass", "pred_tail_log", "pred_mass_log", "ratio_tail", "ratio_mass"])
    for d, a in pairs:
        w.writerow(
            [d.n]
            + [f"{x:.17g}" for x in (d.eta, d.mass, a.pred_tail.log, a.pred_mass.log, a.ratio_tail, a.ratio_mass)]
        )


# ---------------------------------------------------------------------------
# rate fitting


@dataclass
class FitResult:
    model: str
    params: dict
    resid: float
    window: tuple[int, int]

    def to_json(self) -> str:
        return json.dumps(
            {"model": self.model, "params": self.params, "resid": self.resid, "window": list(self.window)},
            indent=2,
        ) + "\n"


def _subsample(ns: np.ndarray, points: int) -> np.ndarray:
    """Indices of roughly log-uniformly spaced entries of a sorted n array."""
    targets = np.geomspace(ns[0], ns[-1], points)
    idx = np.unique(np.searchsorted(ns, targets).clip(0, len(ns) - 1))
    return idx


def _iter_log_terms(n: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    """(sum_{j=0}^{K-2} log log_j n, log log_{K-1} n) with log_0 n = n."""
    fixed = np.zeros_like(n)
    cur = n.astype(float)
    for _ in range(K - 1):
        fixed += np.log(cur)
        cur = np.log(cur)
    if np.any(cur <= 0):
        raise ValidationError(f"log_{K - 1} n must be positive on the fit window")
    return fixed, np.log(cur)


def fit_rate(
    series: Sequence[tuple[int, float]],
    model: str = "power",
    window: tuple[int, int] | None = None,
    K: int | None = None,
    points: int = 400,
) -> FitResult:
    """Least-squares fit of log v_n against a rate model.

    * ``power``: v = c n^{-exponent}
    * ``power_log2``: v = c / (n (log n)^2), c only
    * ``iterated_log``: v = c / (log_0 n ... log_{K-2} n (log_{K-1} n)^B),
      B and c fitted with K fixed

    ``resid`` is max |v_fit / v - 1| over the points used. The window defaults
    to [n_max/100, n_max] and must span at least two decades.
    """
    arr = np.array([(n, v) for n, v in series if v > 0], dtype=float)
    if arr.size == 0:
        raise ValidationError("series has no positive values")
    arr = arr[np.argsort(arr[:, 0])]
    n_max = arr[-1, 0]
    lo, hi = window if window is not None else (n_max / 100.0, n_max)
    sel = arr[(arr[:, 0] >= lo) & (arr[:, 0] <= hi)]
    if len(sel) < 3 or sel[-1, 0] / sel[0, 0] < 100.0 * (1 - 1e-12):
        raise InsufficientRange(f"fit window [{lo:g}, {hi:g}] spans less than two decades of data")
    sel = sel[_subsample(sel[:, 0], points)]
    n, v = sel[:, 0], sel[:, 1]
    y = np.log(v)
    x = np.log(n)
    if model == "power":
        slope, icpt = np.polyfit(x, y, 1)
        params = {"exponent": float(-slope), "c": float(math.exp(icpt))}
        yfit = icpt + slope * x
    elif model == "power_log2":
        base = -x - 2.0 * np.log(np.log(n))
        logc = float(np.mean(y - base))
        params = {"c": math.exp(logc)}
        yfit = logc + base
    elif model == "iterated_log":
        if K is None or K < 1:
            raise ValidationError("iterated_log model needs K >= 1")
        fixed, ll = _iter_log_terms(n, K)
        slope, icpt = np.polyfit(ll, y + fixed, 1)
        params = {"K": K, "B": float(-slope), "c": float(math.exp(icpt))}
        yfit = icpt + slope * ll - fixed
    else:
        raise ValidationError(f"unknown model {model!r}")
    resid = float(np.max(np.abs(np.expm1(yfit - y))))
    return FitResult(model, params, resid, (int(sel[0, 0]), int(sel[-1, 0])))


# ---------------------------------------------------------------------------
# regularity conditions


@dataclass
class ConditionReport:
    b1_abs_sum: float
    b1_verdict: str
    b2_case: str
    b2_limit_est: float
    tau_est: float
    excluded_roots: tuple[float, float]
    tau_separated: bool | None = None
    k0: int = 1
    b1_partial: list[tuple[int, float]] = field(default_factory=list)
    b2_limit_cauchy: bool | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for key, val in d.items():
            if isinstance(val, float) and not math.isfinite(val):
                d[key] = None if math.isnan(val) else ("inf" if val > 0 else "-inf")
        d["excluded_roots"] = list(self.excluded_roots)
        d["b1_partial"] = [list(p) for p in self.b1_partial]
        return d


def _stable_start(zero: np.ndarray) -> int:
    """First position from which the boolean series keeps its final value."""
    last = zero[-1]
    diff = np.nonzero(zero != last)[0]
    return int(diff[-1]) + 1 if diff.size else 0


def _last_ratio(delta: np.ndarray, pos: int) -> float:
    return float(delta[pos + 1] / delta[pos])


def check_conditions(env: EnvSequence, probe: Sequence[int] = DEFAULT_GRID) -> ConditionReport:
    """Numerical verdicts on summable variation and on the ratio conditions.

    Variation: partial sums of |a_k - a_{k-1}| + ... on the probe grid, with
    'pass' when the last two agree to relative 1e-2. Ratios: u_k = a~_k/b~_k
    and w_k = d~_k/b~_k; a difference counts as zero when it is at most 1e-14
    relative. Limits of consecutive-difference ratios are read off at the
    last probe and compared with the previous probe.
    """
    grid = sorted(set(int(g) for g in probe))
    if not grid or grid[0] < 4:
        raise ValidationError("probe grid must contain indices >= 4")
    N = grid[-1]

    q = np.array([env.at(k).as_tuple() for k in range(1, N + 1)])
    var = np.concatenate([[0.0], np.cumsum(np.abs(np.diff(q, axis=0)).sum(axis=1))])
    partial = [(g, float(var[g - 1])) for g in grid]
    s_last = partial[-1][1]
    s_prev = partial[-2][1] if len(partial) > 1 else 0.0
    b1_ok = abs(s_last - s_prev) <= CAUCHY_RTOL * max(abs(s_last), 1e-300) or s_last == 0.0

    tenv = TransformedEnv(env)
    t = np.array([tenv.at(k) for k in range(1, N + 3)])
    u = t[:, 0] / t[:, 1]
    w = t[:, 2] / t[:, 1]
    du = np.diff(u)
    dw = np.diff(w)
    zu = np.abs(du) <= ZERO_TOL * np.maximum(1.0, np.abs(u[:-1]))
    zw = np.abs(dw) <= ZERO_TOL * np.maximum(1.0, np.abs(w[:-1]))
    start = max(_stable_start(zu), _stable_start(zw))
    k0 = start + 1
    u_const, w_const = bool(zu[-1]), bool(zw[-1])

    _, roots = tau_exclusion(env.limit)
    tau_est = math.nan
    sep = None

    def limit_at(delta, g):
        return _last_ratio(delta, g - 1)

    if u_const and w_const:
        case, series = "none", None
    elif u_const:
        case, series = "a", dw
    elif w_const:
        case, series = "b", du
    else:
        case = "c"
        tau_est = float(dw[N - 1] / du[N - 1])
        series = du if math.isfinite(tau_est) else dw
        sep = all(abs(tau_est - r) > TAU_SEP for r in roots)

    if series is None:
        lim, cauchy = math.nan, None
    else:
        lim = limit_at(series, N)
        prev = limit_at(series, grid[-2]) if len(grid) > 1 and grid[-2] > k0 else math.nan
        cauchy = bool(abs(lim - prev) <= CAUCHY_RTOL * abs(lim)) if math.isfinite(prev) else None
    return ConditionReport(
        b1_abs_sum=s_last,
        b1_verdict="pass" if b1_ok else "inconclusive",
        b2_case=case,
        b2_limit_est=lim,
        tau_est=tau_est,
        excluded_roots=roots,
        tau_separated=sep,
        k0=k0,
        b1_partial=partial,
        b2_limit_cauchy=cauchy,
    )
