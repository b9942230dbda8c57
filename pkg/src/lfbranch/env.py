"""Environment sequences (a_k, b_k, d_k, theta_k) and their generator families.

The mean matrix of generation k is ``[[a_k, b_k], [d_k, theta_k]]`` and the
linear-fractional weight vector is its first row, so only the quadruple is
stored.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from lfbranch.errors import DomainError, PreconditionError, ValidationError

# geometric grid used by numerical limit checks
PROBE_GRID = (10**2, 10**3, 10**4, 10**5, 10**6)
I0_SCAN_CAP = 10**9


@dataclass(frozen=True, slots=True)
class EnvParams:
    a: float
    b: float
    d: float
    theta: float

    def __post_init__(self):
        vals = (self.a, self.b, self.d, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"non-finite environment parameters {vals}")
        if self.b <= 0 or self.d <= 0:
            raise ValidationError(f"need b > 0 and d > 0, got b={self.b}, d={self.d}")
        if self.a < 0 or self.theta < 0:
            raise ValidationError(f"need a >= 0 and theta >= 0, got a={self.a}, theta={self.theta}")
        if self.a + self.theta <= 0:
            raise ValidationError("need a + theta > 0")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.d, self.theta)

    def matrix(self):
        from lfbranch.linalg2 import Mat2

        return Mat2(self.a, self.b, self.d, self.theta)


# ---------------------------------------------------------------------------
# perturbations


def iterated_logs(i: float, depth: int) -> list[float]:
    """Return [log_0 i, log_1 i, ..., log_depth i] with log_0 i = i.

    Raises DomainError as soon as a logarithm of a nonpositive number would be
    needed or the last entry is not positive.
    """
    out = [float(i)]
    x = float(i)
    for _ in range(depth):
        if x <= 0:
            raise DomainError(f"iterated log undefined at i={i}")
        x = math.log(x)
        out.append(x)
    if x <= 0:
        raise DomainError(f"log_{depth} {i} = {x} is not positive")
    return out


def lambda_pert(K: int, i: float, B: float) -> float:
    """Lambda(K, i, B) = 1/i + 1/(i log i) + ... + B/(i log i ... log_{K-1} i).

    Natural logarithms throughout.
    """
    if K < 1:
        raise ValidationError(f"K must be a positive integer, got {K}")
    logs = iterated_logs(i, K - 1)
    total = 0.0
    prod = 1.0
    for j in range(K):
        prod *= logs[j]
        coef = B if j == K - 1 else 1.0
        total += coef / prod
    return total


def _log_domain_start(K: int) -> int:
    """Smallest integer i with log_{K-1} i > 0."""
    # log_{K-1} i > 0  <=>  i > tower(K-1), tower(0) = 0, tower(j) = exp(tower(j-1))
    t = 0.0
    for _ in range(K - 1):
        t = math.exp(t)
        if t > I0_SCAN_CAP:
            raise DomainError(f"K={K}: iterated-log domain starts beyond the scan cap")
    i = max(1, math.floor(t) + 1)
    while True:
        try:
            iterated_logs(i, K - 1)
            return i
        except DomainError:
            i += 1


class PerturbationSeq:
    """Index -> real perturbation r_i (1-based)."""

    def at(self, i: int) -> float:
        raise NotImplementedError

    def __call__(self, i: int) -> float:
        return self.at(i)

    def describe(self) -> dict:
        raise NotImplementedError


class LambdaKB(PerturbationSeq):
    """r_i = Lambda(K, i, B)/3 for i >= i0 and r_i = r_{i0} below."""

    def __init__(self, K: int, B: float):
        if int(K) != K or K < 1:
            raise ValidationError(f"K must be a positive integer, got {K}")
        self.K = int(K)
        self.B = float(B)
        self.i0 = self._find_i0()
        self._r0 = lambda_pert(self.K, self.i0, self.B) / 3.0

    def _find_i0(self) -> int:
        i = _log_domain_start(self.K)
        while i <= I0_SCAN_CAP:
            if abs(lambda_pert(self.K, i, self.B)) < 1.0:
                return i
            i += 1
        raise DomainError(f"no i <= {I0_SCAN_CAP} with |Lambda({self.K}, i, {self.B})| < 1")

    def at(self, i: int) -> float:
        if i < self.i0:
            return self._r0
        return lambda_pert(self.K, i, self.B) / 3.0

    def describe(self) -> dict:
        return {"r_kind": "lambda", "K": self.K, "B": self.B, "i0": self.i0}


class Custom(PerturbationSeq):
    def __init__(self, fn: Callable[[int], float], name: str = "custom"):
        self.fn = fn
        self.name = name

    def at(self, i: int) -> float:
        return float(self.fn(i))

    def describe(self) -> dict:
        return {"r_kind": self.name}


def harmonic_pert() -> Custom:
    """r_k = 1/(3k)."""
    return Custom(lambda k: 1.0 / (3.0 * k), name="harmonic")


# ---------------------------------------------------------------------------
# environment sequences


class EnvSequence:
    """A deterministic sequence of EnvParams indexed from 1.

    Subclasses implement ``_compute``. ``at`` memoizes sequentially up to the
    largest requested index; ``probe`` evaluates without touching the memo,
    for sparse checks at very large indices.
    """

    def __init__(self):
        self._cache: list[EnvParams] = []
        self._lock = threading.Lock()

    def _compute(self, k: int) -> EnvParams:
        raise NotImplementedError

    @property
    def limit(self) -> EnvParams:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError

    def at(self, k: int) -> EnvParams:
        cache = self._cache
        if 0 < k <= len(cache):
            return cache[k - 1]
        if k < 1:
            raise IndexError(f"environment index must be >= 1, got {k}")
        with self._lock:
            start = len(cache)
            if k > start:
                cache.extend(self._compute(j) for j in range(start + 1, k + 1))
        return cache[k - 1]

    def probe(self, k: int) -> EnvParams:
        if k <= len(self._cache):
            return self.at(k)
        return self._compute(k)

    def matrix(self, k: int):
        return self.at(k).matrix()

    def offspring(self, k: int) -> tuple[float, float, float]:
        """(q1, q2, p) of the explicit offspring law, when the environment has
        the shape d = 1 + a, theta = b."""
        return offspring_params(self.at(k))


def offspring_params(e: EnvParams, rtol: float = 1e-12) -> tuple[float, float, float]:
    if abs(e.d - (1.0 + e.a)) > rtol * e.d or abs(e.theta - e.b) > rtol * max(e.b, 1.0):
        raise ValidationError(
            "environment has no explicit offspring law (need d = 1 + a and theta = b)"
        )
    p = 1.0 / (1.0 + e.a + e.b)
    q1 = e.a * p
    q2 = 1.0 - p - q1
    return (q1, q2, p)


class ExplicitList(EnvSequence):
    def __init__(self, params: Sequence[EnvParams], tail: EnvParams):
        super().__init__()
        self.params = tuple(params)
        self.tail = tail

    def _compute(self, k):
        if k <= len(self.params):
            return self.params[k - 1]
        return self.tail

    @property
    def limit(self):
        return self.tail

    def describe(self):
        return {
            "family": "explicit",
            "params": [list(p.as_tuple()) for p in self.params],
            "tail": list(self.tail.as_tuple()),
        }


class Homogeneous(EnvSequence):
    def __init__(self, p: EnvParams):
        super().__init__()
        self.p = p

    def at(self, k):
        if k < 1:
            raise IndexError(f"environment index must be >= 1, got {k}")
        return self.p

    def _compute(self, k):
        return self.p

    @property
    def limit(self):
        return self.p

    def describe(self):
        return {"family": "homogeneous", "params": list(self.p.as_tuple())}


def offspring_env(q1: float, q2: float, p: float) -> Homogeneous:
    """Homogeneous environment of the explicit two-type offspring law with
    P(no child) = p, type-1 weight q1 and type-2 weight q2."""
    if p <= 0 or q2 <= 0 or q1 < 0 or abs(q1 + q2 + p - 1.0) > 1e-12:
        raise ValidationError(f"need q1 >= 0, q2 > 0, p > 0, q1+q2+p = 1; got {(q1, q2, p)}")
    a, b = q1 / p, q2 / p
    return Homogeneous(EnvParams(a, b, 1.0 + a, b))


class EgcFamily(EnvSequence):
    """All four coordinates of a limit quadruple shifted by r_k."""

    def __init__(self, limit: EnvParams, r: PerturbationSeq):
        super().__init__()
        self._limit = limit
        self.r = r

    def _compute(self, k):
        rk = self.r.at(k)
        L = self._limit
        return EnvParams(L.a + rk, L.b + rk, L.d + rk, L.theta + rk)

    @property
    def limit(self):
        return self._limit

    def describe(self):
        return {"family": "egc", "limit": list(self._limit.as_tuple()), **self.r.describe()}


class MxtScenario(EnvSequence):
    """Perturbed critical family p_k = 2/3 +- r_k, q_k = 1/3 -+ r_k with no
    type-1 offspring, i.e. a_k = 0, d_k = 1, b_k = theta_k = q_k / p_k."""

    def __init__(self, K: int, B: float, sign: str):
        super().__init__()
        if sign not in ("plus", "minus"):
            raise ValidationError(f"sign must be 'plus' or 'minus', got {sign!r}")
        self.K = int(K)
        self.B = float(B)
        self.sign = sign
        self.r = LambdaKB(K, B)
        for k in _check_indices(self.r.i0):
            self.pq(k)

    def pq(self, k: int) -> tuple[float, float]:
        rk = self.r.at(k)
        if self.sign == "plus":
            p, q = 2.0 / 3.0 + rk, 1.0 / 3.0 - rk
        else:
            p, q = 2.0 / 3.0 - rk, 1.0 / 3.0 + rk
        if not (0.0 < p < 1.0 and 0.0 < q < 1.0):
            raise ValidationError(
                f"mxt(K={self.K}, B={self.B}, {self.sign}): p_{k}={p}, q_{k}={q} outside (0,1)"
            )
        return p, q

    def offspring(self, k):
        p, q = self.pq(k)
        return (0.0, q, p)

    def _compute(self, k):
        p, q = self.pq(k)
        b = q / p
        return EnvParams(0.0, b, 1.0, b)

    @property
    def limit(self):
        return EnvParams(0.0, 0.5, 1.0, 0.5)

    def describe(self):
        return {"family": "mxt", "K": self.K, "B": self.B, "sign": self.sign}


def _check_indices(i0: int) -> list[int]:
    ks = set(range(1, min(i0 + 1000, 10**6)))
    ks.update(i0 + g for g in PROBE_GRID)
    ks.update(PROBE_GRID)
    return sorted(ks)


def mxt_env(K: int, B: float, sign: str) -> MxtScenario:
    return MxtScenario(K, B, sign)


# ---------------------------------------------------------------------------
# egc constructor


def _cauchy_probe(values: Sequence[float], rtol: float) -> bool:
    """True when the last three values agree pairwise within rtol."""
    tail = values[-3:]
    ref = max(abs(v) for v in tail)
    if ref == 0 or not all(math.isfinite(v) for v in tail):
        return False
    return max(tail) - min(tail) <= rtol * ref


def perturbation_rate(r: PerturbationSeq, grid: Iterable[int] = PROBE_GRID) -> list[float]:
    """(r_n - r_{n+1}) / r_n^2 on the probe grid."""
    out = []
    for n in grid:
        rn, rn1 = r.at(n), r.at(n + 1)
        out.append((rn - rn1) / (rn * rn) if rn != 0 else math.inf)
    return out


def tau_exclusion(limit: EnvParams) -> tuple[float, tuple[float, float]]:
    """The limiting ratio tau of the egc construction and the two excluded
    values. tau is +-inf (or nan) when 2b = a + theta."""
    a, b, d, t = limit.as_tuple()
    num = b * (b + d - a - t) + 2.0 * (a * t - b * d)
    den = b * (2.0 * b - a - t)
    if den == 0:
        tau = math.copysign(math.inf, num) if num != 0 else math.nan
    else:
        tau = num / den
    s = math.sqrt((a + t) ** 2 + 4.0 * (b * d - a * t))
    return tau, ((-(a + t) + s) / (2.0 * b), (-(a + t) - s) / (2.0 * b))


def egc_env(limit: EnvParams, r: PerturbationSeq, rtol: float = 1e-2) -> EgcFamily:
    """Shift all four limit coordinates by r_k after checking the
    construction's preconditions.

    The limit conditions on r are checked numerically on the probe grid; this
    is a diagnostic, not a proof.
    """
    a, b, d, t = limit.as_tuple()
    if a == b == d == t:
        raise PreconditionError("not_all_equal", "a, b, d, theta are all equal")
    if (b - a) * (b - t) < 0:
        raise PreconditionError("ordering", f"(b-a)(b-theta) = {(b - a) * (b - t)} < 0")
    tau, roots = tau_exclusion(limit)
    if math.isfinite(tau):
        for root in roots:
            if abs(tau - root) <= 1e-9 * max(1.0, abs(root)):
                raise PreconditionError("tau_exclusion", f"tau = {tau} equals excluded value {root}")
    probe = sorted(set(range(1, 101)) | {g + j for g in PROBE_GRID for j in (0, 1)})
    for k in probe:
        if not r.at(k) > 0:
            raise PreconditionError("r_positive", f"r_{k} = {r.at(k)}")
    if not r.at(PROBE_GRID[-1]) < r.at(PROBE_GRID[0]):
        raise PreconditionError("r_to_zero", "r does not decrease along the probe grid")
    rates = perturbation_rate(r)
    if not _cauchy_probe(rates, rtol):
        raise PreconditionError("rate_limit", f"(r_n - r_(n+1))/r_n^2 not Cauchy on probe grid: {rates}")
    if not rates[-1] > 0:
        raise PreconditionError("rate_limit", f"limit c = {rates[-1]} is not positive")
    return EgcFamily(limit, r)


# ---------------------------------------------------------------------------
# spec files


def _quad(v, key) -> EnvParams:
    if not isinstance(v, (list, tuple)) or len(v) != 4:
        raise ValidationError(f"'{key}' must be a list [a, b, d, theta]")
    return EnvParams(*(float(x) for x in v))


def env_from_spec(spec: dict) -> EnvSequence:
    """Build an EnvSequence from a parsed spec document.

    Keys: family, params, tail, limit, K, B, sign, r_kind.
    """
    if not isinstance(spec, dict) or "family" not in spec:
        raise ValidationError("environment spec needs a 'family' key")
    fam = spec["family"]
    try:
        if fam == "explicit":
            params = [_quad(p, "params") for p in spec.get("params", [])]
            return ExplicitList(params, _quad(spec["tail"], "tail"))
        if fam == "homogeneous":
            p = spec["params"]
            if p and isinstance(p[0], (list, tuple)):
                p = p[0]
            return Homogeneous(_quad(p, "params"))
        if fam == "mxt":
            return mxt_env(int(spec["K"]), float(spec["B"]), spec.get("sign", "plus"))
        if fam == "egc":
            kind = spec.get("r_kind", "harmonic")
            if kind == "harmonic":
                r = harmonic_pert()
            elif kind == "lambda":
                r = LambdaKB(int(spec["K"]), float(spec["B"]))
            else:
                raise ValidationError(f"unknown r_kind {kind!r}")
            return egc_env(_quad(spec["limit"], "limit"), r)
    except KeyError as exc:
        raise ValidationError(f"family {fam!r} needs key {exc.args[0]!r}") from None
    raise ValidationError(f"unknown family {fam!r}")


def load_env_spec(path: str | Path) -> tuple[EnvSequence, dict]:
    """Read a JSON or YAML spec file; returns the sequence and the raw dict."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        spec = yaml.safe_load(text)
    else:
        try:
            spec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from None
    return env_from_spec(spec), spec
