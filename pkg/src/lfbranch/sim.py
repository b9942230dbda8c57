"""Seeded Monte Carlo for the explicit two-type offspring laws.

A type-1 parent has (i, j) children with probability
C(i+j, i) q1^i q2^j p; a type-2 parent has (1+i, j). Sampling draws the
total T ~ Geometric(p) on {0, 1, ...} and thins each child to type 1 with
probability q1/(q1+q2), which gives exactly that law.

Every run owns a Philox substream keyed by the seed with the run index in
the high counter words, so results do not depend on run order or on how
runs are split across workers.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lfbranch.env import EnvSequence
from lfbranch.errors import PopulationOverflow, ValidationError

POP_CAP = 10**8
MASK64 = (1 << 64) - 1


@dataclass
class SimConfig:
    env: EnvSequence
    runs: int
    horizon: int
    seed: int
    initial: str = "e1"
    workers: int = 1

    def __post_init__(self):
        if self.runs < 1:
            raise ValidationError("runs must be >= 1")
        if self.horizon < 1:
            raise ValidationError("horizon must be >= 1")
        if not 0 <= self.seed <= MASK64:
            raise ValidationError("seed must be a 64-bit unsigned integer")
        if self.initial not in ("e1", "e2"):
            raise ValidationError("initial must be 'e1' or 'e2'")
        if self.workers < 1:
            raise ValidationError("workers must be >= 1")


@dataclass
class SimResult:
    hist: dict[int, int]
    censored: int
    runs: int
    seed: int
    horizon: int = 0
    initial: str = "e1"

    def freq(self, n: int) -> float:
        return self.hist.get(n, 0) / self.runs

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "runs": self.runs,
            "horizon": self.horizon,
            "hist": [[n, c] for n, c in sorted(self.hist.items())],
            "censored": self.censored,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "SimResult":
        return cls(
            hist={int(n): int(c) for n, c in doc["hist"]},
            censored=int(doc["censored"]),
            runs=int(doc["runs"]),
            seed=int(doc["seed"]),
            horizon=int(doc.get("horizon", 0)),
        )


def _check_law(q1: float, q2: float, p: float) -> None:
    if q1 < 0 or q2 <= 0 or p <= 0 or abs(q1 + q2 + p - 1.0) > 1e-12:
        raise ValidationError(f"need q1 >= 0, q2 > 0, p > 0, q1+q2+p = 1; got {(q1, q2, p)}")


def sample_offspring(params: tuple[float, float, float], parent: str, rng: np.random.Generator, size=None):
    """Children (i, j) of one parent (or arrays of ``size`` parents)."""
    q1, q2, p = params
    _check_law(q1, q2, p)
    if parent not in ("e1", "e2"):
        raise ValidationError("parent must be 'e1' or 'e2'")
    T = rng.geometric(p, size=size) - 1
    i = rng.binomial(T, q1 / (q1 + q2)) if q1 > 0 else T * 0
    j = T - i
    if parent == "e2":
        i = i + 1
    return i, j


def _laws(env: EnvSequence, horizon: int) -> list[tuple[float, float, float]]:
    laws = [env.offspring(k) for k in range(1, horizon + 1)]
    for law in laws:
        _check_law(*law)
    return laws


def _simulate(args) -> tuple[dict[int, int], int]:
    laws, seed, start, stop, initial = args
    bg = np.random.Philox(key=seed)
    g = np.random.Generator(bg)
    state = bg.state
    counter = state["state"]["counter"]
    hist: dict[int, int] = {}
    censored = 0
    horizon = len(laws)
    for run in range(start, stop):
        counter[:] = (0, 0, run & MASK64, run >> 64)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        bg.state = state
        z1, z2 = (1, 0) if initial == "e1" else (0, 1)
        n = 0
        while n < horizon:
            q1, q2, p = laws[n]
            n += 1
            tot = z1 + z2
            if tot == 1:
                T = int(g.geometric(p)) - 1
                i = int(g.binomial(T, q1 / (q1 + q2))) if q1 > 0 and T > 0 else 0
            else:
                Ts = g.geometric(p, size=tot) - 1
                T = int(Ts.sum())
                i = int(g.binomial(Ts, q1 / (q1 + q2)).sum()) if q1 > 0 else 0
            z1, z2 = z2 + i, T - i
            if z1 == 0 and z2 == 0:
                hist[n] = hist.get(n, 0) + 1
                break
            if z1 + z2 > POP_CAP:
                raise PopulationOverflow(run, n, z1 + z2)
        else:
            censored += 1
    return hist, censored


def _chunks(runs: int, parts: int) -> list[tuple[int, int]]:
    step = -(-runs // parts)
    return [(s, min(s + step, runs)) for s in range(0, runs, step)]


def run_sim(cfg: SimConfig) -> SimResult:
    """Histogram of extinction times over ``cfg.runs`` independent runs."""
    laws = _laws(cfg.env, cfg.horizon)
    jobs = [(laws, cfg.seed, a, b, cfg.initial) for a, b in _chunks(cfg.runs, cfg.workers)]
    if cfg.workers == 1:
        parts = [_simulate(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            parts = list(ex.map(_simulate, jobs))
    hist: dict[int, int] = {}
    censored = 0
    for h, c in parts:
        censored += c
        for n, cnt in h.items():
            hist[n] = hist.get(n, 0) + cnt
    return SimResult(dict(sorted(hist.items())), censored, cfg.runs, cfg.seed, cfg.horizon, cfg.initial)


@dataclass
class CompareRow:
    n: int
    exact: float
    empirical: float
    z: float
    expected_count: float


def compare(exact: Sequence[tuple[int, float]], res: SimResult) -> list[CompareRow]:
    """Per-n z = (empirical - exact) / sqrt(exact (1 - exact) / runs).

    z is nan when the exact mass is 0 and the empirical count is 0, and inf
    when a structurally impossible extinction time is observed.
    """
    out = []
    for n, pn in exact:
        emp = res.freq(n)
        var = pn * (1.0 - pn) / res.runs
        if var > 0:
            z = (emp - pn) / np.sqrt(var)
        else:
            z = float("nan") if emp == pn else float("inf")
        out.append(CompareRow(n, pn, emp, float(z), pn * res.runs))
    return out
