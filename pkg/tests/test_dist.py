import io
import math
from fractions import Fraction

import numpy as np
import pytest

from lfbranch.cfrac import fhg_stream
from lfbranch.dist import (
    eta_cf,
    eta_direct,
    homogeneous_eta,
    pgf_eta,
    read_dist_csv,
    write_dist_csv,
)
from lfbranch.env import EnvParams, Homogeneous, mxt_env, offspring_env
from lfbranch.errors import NonPositiveDtilde, ValidationError
from lfbranch.linalg2 import Mat2, spectrum
from lfbranch.transform import TransformedEnv

from conftest import random_env, random_offspring_env


class TestHandValues:
    def test_direct(self, crit_env):
        rows = list(eta_direct(crit_env, 3))
        assert [r.eta for r in rows] == pytest.approx([1 / 3, 1 / 3, 0.625 / 2.875], abs=1e-15)
        assert rows[0].mass == pytest.approx(2 / 3, abs=1e-15)
        assert rows[1].mass == 0.0

    def test_cf(self, crit_env):
        rows = list(eta_cf(crit_env, 3))
        assert [r.eta for r in rows] == pytest.approx([1 / 3, 1 / 3, 5 / 23], abs=1e-15)
        assert [r.mass for r in rows] == pytest.approx([2 / 3, 0.0, 8 / 69], abs=1e-14)

    def test_e2_start_never_dies_at_one(self, crit_env):
        # a type-2 parent always leaves a type-1 child
        assert next(eta_direct(crit_env, 1, initial="e2")).eta == pytest.approx(1.0)

    def test_bad_args(self, crit_env):
        with pytest.raises(ValidationError):
            list(eta_direct(crit_env, 3, initial="e3"))
        with pytest.raises(ValidationError):
            list(eta_cf(crit_env, 0))


class TestOracles:
    @pytest.mark.parametrize("initial", ["e1", "e2"])
    def test_pgf_composition(self, rng, initial):
        for _ in range(10):
            env = random_env(rng, 20, dtilde_positive=False)
            ref = pgf_eta([env.matrix(k) for k in range(1, 21)], initial)
            got = [r.eta for r in eta_direct(env, 20, initial)]
            assert got == pytest.approx(ref, rel=1e-10)

    def test_cf_matches_direct_random(self, rng):
        for _ in range(10):
            env = random_env(rng, 200)
            d = list(eta_direct(env, 300))
            c = list(eta_cf(env, 300))
            for x, y in zip(d, c):
                assert y.eta == pytest.approx(x.eta, rel=1e-9)
                if x.mass > 1e-6 * x.eta:
                    assert y.mass == pytest.approx(x.mass, rel=1e-6)

    def test_G_definition_matches_recursion(self, rng):
        # exact rational evaluation: the defining difference cancels badly in floats
        for _ in range(10):
            env = random_env(rng, 60)
            tenv = TransformedEnv(env)
            A = [None] + [tuple(Fraction(v) for v in tenv.at(k)) for k in range(1, 52)]
            lam = [None] + [Fraction(tenv.lam(k)) for k in range(1, 53)]
            xs = [(Fraction(1), Fraction(0))]
            rs = [(Fraction(1), Fraction(0))]
            for k in range(1, 51):
                ta, tb, td = A[k]
                (x1, x2), (r1, r2) = xs[-1], rs[-1]
                xs.append((x1 * ta + x2 * td, x1 * tb))
                rs.append((r1 * ta + r2 * td + 1, r1 * tb))

            def dot(v, n):
                return v[0] + v[1] * lam[n]

            G_rec = {0: 1.0}
            G_rec.update({st.n: st.G for st in fhg_stream(tenv, 50)})
            for n in range(1, 51):
                G_def = (
                    dot(xs[n - 1], n) * dot(rs[n], n + 1) - dot(xs[n], n + 1) * dot(rs[n - 1], n)
                ) / xs[n - 1][0]
                assert G_rec[n - 1] == pytest.approx(float(G_def), rel=1e-8, abs=1e-12)

    def test_mass_sum_rule(self, rng):
        for env in (mxt_env(1, -1, "plus"), mxt_env(2, 1, "minus"), random_offspring_env(rng, 100)):
            rows = list(eta_cf(env, 2000))
            total = 0.0
            for r in rows:
                total += r.mass
                assert r.mass >= -1e-14
                assert total + r.eta == pytest.approx(1.0, abs=1e-10)

    def test_sum_rule_is_algebraic(self, rng):
        # without a probabilistic interpretation masses may be negative,
        # but the telescoping identity still holds
        rows = list(eta_cf(random_env(rng, 100), 500))
        total = sum(r.mass for r in rows)
        assert total + rows[-1].eta == pytest.approx(1.0, abs=1e-10)

    def test_monotone(self):
        rows = list(eta_direct(mxt_env(2, 2, "plus"), 3000))
        etas = [r.eta for r in rows]
        assert all(b <= a for a, b in zip(etas, etas[1:]))
        assert all(0.0 <= e <= 1.0 for e in etas)

    def test_dtilde_error(self):
        with pytest.raises(NonPositiveDtilde):
            list(eta_cf(Homogeneous(EnvParams(1, 1, 1, 2)), 5))
        # the direct route still works there
        assert len(list(eta_direct(Homogeneous(EnvParams(1, 1, 1, 2)), 5))) == 5

    def test_underflow_safe(self):
        env = Homogeneous(EnvParams(0.1, 0.2, 0.5, 0.1))
        rows = list(eta_cf(env, 3000))
        assert rows[-1].eta == 0.0
        assert math.isfinite(rows[-1].log_eta) and rows[-1].log_eta < -1000
        d = list(eta_direct(env, 3000))
        assert d[-1].log_eta == pytest.approx(rows[-1].log_eta, rel=1e-9)


class TestHomogeneous:
    @pytest.mark.parametrize("quad", [(0, 0.5, 1, 0.5), (0.2, 0.3, 1.2, 0.3), (0.5, 1.5, 1.5, 1.5), (1, 2, 2, 1)])
    def test_matches_direct(self, quad):
        env = Homogeneous(EnvParams(*quad))
        rows = list(eta_direct(env, 200))
        for r in rows:
            eta, _ = homogeneous_eta(env.matrix(1), r.n)
            assert eta == pytest.approx(r.eta, rel=1e-10)

    def test_regimes(self):
        assert homogeneous_eta(Mat2(0, 0.5, 1, 0.5), 5)[1] == "crit"
        assert homogeneous_eta(Mat2(0, 0.3, 1, 0.3), 5)[1] == "sub"
        assert homogeneous_eta(Mat2(1, 2, 2, 1), 5)[1] == "super"

    def test_critical_rate(self):
        M = Mat2(0, 0.5, 1, 0.5)
        vals = []
        for n in (10**3, 10**4, 10**5):
            p = homogeneous_eta(M, n - 1)[0] - homogeneous_eta(M, n)[0]
            vals.append(n * n * p)
        assert vals[-1] > 0
        assert abs(vals[-1] - vals[-2]) < 1e-2 * vals[-1]

    def test_subcritical_rate(self):
        env = offspring_env(0.0, 0.3, 0.7)
        M = env.matrix(1)
        rho = spectrum(M).rho
        rows = list(eta_cf(env, 400))
        r1 = rows[199].mass / rho**200
        r2 = rows[399].mass / rho**400
        assert r2 == pytest.approx(r1, rel=1e-6)

    def test_first_step(self, crit_env):
        assert homogeneous_eta(crit_env.matrix(1), 1)[0] == next(eta_direct(crit_env, 1)).eta


def test_csv_roundtrip(crit_env):
    buf = io.StringIO()
    write_dist_csv(eta_cf(crit_env, 3), buf, "cf")
    text = buf.getvalue()
    assert text.splitlines()[0] == "n,eta,mass,method"
    assert text.splitlines()[1] == "1,0.33333333333333337,0.66666666666666663,cf"
    rows = read_dist_csv(io.StringIO(text))
    assert rows[2][1] == pytest.approx(5 / 23, abs=1e-16)
