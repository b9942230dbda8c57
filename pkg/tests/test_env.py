import json
import math
import threading

import pytest
from hypothesis import given, settings, strategies as st

from lfbranch.env import (
    PROBE_GRID,
    Custom,
    EgcFamily,
    EnvParams,
    ExplicitList,
    Homogeneous,
    LambdaKB,
    egc_env,
    env_from_spec,
    harmonic_pert,
    lambda_pert,
    load_env_spec,
    mxt_env,
    offspring_env,
    perturbation_rate,
    tau_exclusion,
)
from lfbranch.errors import DomainError, PreconditionError, ValidationError


class TestEnvParams:
    def test_valid(self):
        e = EnvParams(0.0, 0.5, 1.0, 0.5)
        assert e.as_tuple() == (0.0, 0.5, 1.0, 0.5)

    @pytest.mark.parametrize(
        "quad",
        [(0, 0, 1, 1), (0, 1, 0, 1), (-0.1, 1, 1, 1), (1, 1, 1, -1), (0, 1, 1, 0), (math.nan, 1, 1, 1)],
    )
    def test_rejects(self, quad):
        with pytest.raises(ValidationError):
            EnvParams(*quad)


class TestLambdaPert:
    def test_k1(self):
        assert lambda_pert(1, 10, 2.0) == pytest.approx(0.2, rel=1e-15)

    def test_k2_b0(self):
        assert lambda_pert(2, math.e**2, 0.0) == pytest.approx(math.exp(-2), rel=1e-14)

    def test_k2_b1(self):
        # 1/100 + 1/(100 * 4.605170185988092)
        assert lambda_pert(2, 100, 1.0) == pytest.approx(0.01 + 1 / 460.5170185988092, rel=1e-12)
        assert lambda_pert(2, 100, 1.0) == pytest.approx(0.012171, abs=5e-7)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            lambda_pert(2, 1, 1.0)  # log 1 = 0
        with pytest.raises(DomainError):
            lambda_pert(3, 2, 1.0)  # log log 2 < 0

    @settings(max_examples=50, deadline=None)
    @given(K=st.integers(1, 3), B=st.floats(0.01, 5.0), i=st.integers(20, 10**6))
    def test_strictly_decreasing(self, K, B, i):
        assert lambda_pert(K, i + 1, B) < lambda_pert(K, i, B)

    def test_i0(self):
        assert LambdaKB(1, 2.0).i0 == 3  # 2/3 < 1
        assert LambdaKB(1, 0.5).i0 == 1
        r = LambdaKB(2, 1.0)
        assert r.i0 >= 2
        assert r.at(1) == r.at(r.i0)


class TestMxt:
    def test_zero_perturbation_is_homogeneous(self):
        env = mxt_env(1, 0.0, "plus")
        for k in (1, 2, 10, 1000):
            assert env.at(k).as_tuple() == pytest.approx((0.0, 0.5, 1.0, 0.5), rel=1e-15)

    def test_minus_above_half(self):
        env = mxt_env(1, 1.0, "minus")
        b = env.at(10**4).b
        assert b > 0.5
        assert b - 0.5 < 1e-3

    @pytest.mark.parametrize("K,B,sign", [(1, 2, "plus"), (2, -1, "minus"), (2, 1, "plus")])
    def test_limit(self, K, B, sign):
        env = mxt_env(K, B, sign)
        assert env.limit.as_tuple() == (0.0, 0.5, 1.0, 0.5)
        assert env.matrix(1).m11 == 0.0

    def test_p_plus_q(self):
        env = mxt_env(2, 1.0, "minus")
        for k in (1, 5, 100, 10**4):
            p, q = env.pq(k)
            assert abs(p + q - 1.0) <= 2 * math.ulp(1.0)
            e = env.at(k)
            assert e.b == e.theta and e.a == 0.0 and e.d == 1.0

    def test_rejects_bad_args(self):
        with pytest.raises(ValidationError):
            mxt_env(1, 1.0, "up")
        with pytest.raises(ValidationError):
            mxt_env(0, 1.0, "plus")

    def test_valid_on_probe_grid(self):
        env = mxt_env(2, -1.0, "plus")
        for k in PROBE_GRID:
            e = env.probe(k)
            assert e.b > 0 and e.d > 0


class TestEgc:
    def test_all_equal_rejected(self):
        with pytest.raises(PreconditionError) as exc:
            egc_env(EnvParams(1, 1, 1, 1), harmonic_pert())
        assert exc.value.check == "not_all_equal"

    def test_third_family_hits_excluded_root(self):
        # tau = -2 coincides with the excluded value (-1 - 3)/2
        tau, roots = tau_exclusion(EnvParams(0, 0.5, 1, 0.5))
        assert tau == pytest.approx(-2.0)
        assert -2.0 in [pytest.approx(r) for r in roots]
        with pytest.raises(PreconditionError) as exc:
            egc_env(EnvParams(0, 0.5, 1, 0.5), harmonic_pert())
        assert exc.value.check == "tau_exclusion"

    def test_shifted_coordinates(self):
        env = EgcFamily(EnvParams(0, 0.5, 1, 0.5), harmonic_pert())
        for k in (1, 7, 100):
            r = 1 / (3 * k)
            assert env.at(k).as_tuple() == pytest.approx((r, 0.5 + r, 1 + r, 0.5 + r), rel=1e-15)

    def test_fast_decay_rejected(self):
        r = Custom(lambda k: 1.0 / k**2, "inverse_square")
        rates = perturbation_rate(r)
        assert rates[-1] > 1e5  # grows like 2n
        with pytest.raises(PreconditionError) as exc:
            egc_env(EnvParams(1, 2, 2, 1), r)
        assert exc.value.check == "rate_limit"

    def test_nonpositive_r_rejected(self):
        with pytest.raises(PreconditionError) as exc:
            egc_env(EnvParams(1, 2, 2, 1), Custom(lambda k: -1.0 / k))
        assert exc.value.check == "r_positive"

    def test_ordering_rejected(self):
        with pytest.raises(PreconditionError) as exc:
            egc_env(EnvParams(2, 1, 1, 0.5), harmonic_pert())
        assert exc.value.check == "ordering"

    def test_accepted(self, egc1221):
        assert egc1221.at(3).as_tuple() == pytest.approx((1 + 1 / 9, 2 + 1 / 9, 2 + 1 / 9, 1 + 1 / 9))
        tau, roots = tau_exclusion(egc1221.limit)
        assert tau == pytest.approx(-0.5)
        assert roots == pytest.approx((0.5, -1.5))


class TestSequences:
    def test_explicit_tail(self):
        tail = EnvParams(0, 0.5, 1, 0.5)
        env = ExplicitList([EnvParams(1, 1, 1, 1), EnvParams(0, 2, 1, 1)], tail)
        assert env.at(1).a == 1 and env.at(2).b == 2
        assert env.at(3) == tail and env.at(10**5) == tail
        assert env.limit == tail

    def test_deterministic_and_threadsafe(self):
        env = mxt_env(2, 1.0, "plus")
        results = []

        def work():
            results.append([env.at(k) for k in range(1, 3000, 7)])

        threads = [threading.Thread(target=work) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert all(r == results[0] for r in results)
        fresh = mxt_env(2, 1.0, "plus")
        assert [fresh.at(k) for k in range(1, 3000, 7)] == results[0]

    def test_index_error(self):
        with pytest.raises(IndexError):
            Homogeneous(EnvParams(0.5, 1, 1, 0)).at(0)

    def test_offspring_env(self):
        env = offspring_env(0.1, 0.3, 0.6)
        q1, q2, p = env.offspring(5)
        assert (q1, q2, p) == pytest.approx((0.1, 0.3, 0.6))
        with pytest.raises(ValidationError):
            Homogeneous(EnvParams(1, 1, 1, 2)).offspring(1)


class TestSpecFiles:
    def test_json_and_yaml(self, tmp_path):
        (tmp_path / "m.json").write_text(json.dumps({"family": "mxt", "K": 1, "B": 2, "sign": "minus"}))
        (tmp_path / "e.yaml").write_text("family: egc\nlimit: [1, 2, 2, 1]\nr_kind: harmonic\n")
        env, spec = load_env_spec(tmp_path / "m.json")
        assert spec["K"] == 1 and env.sign == "minus"
        env, _ = load_env_spec(tmp_path / "e.yaml")
        assert isinstance(env, EgcFamily)

    def test_explicit_spec(self):
        env = env_from_spec({"family": "explicit", "params": [[1, 1, 1, 1]], "tail": [0, 0.5, 1, 0.5]})
        assert env.at(1).a == 1 and env.at(2).b == 0.5

    @pytest.mark.parametrize(
        "spec",
        [{}, {"family": "nope"}, {"family": "mxt", "K": 1}, {"family": "homogeneous", "params": [1, 2]}],
    )
    def test_bad_specs(self, spec):
        with pytest.raises(ValidationError):
            env_from_spec(spec)

    def test_roundtrip_describe(self):
        for env in (mxt_env(2, -1, "plus"), Homogeneous(EnvParams(0, 0.5, 1, 0.5))):
            again = env_from_spec(env.describe())
            assert [again.at(k) for k in range(1, 50)] == [env.at(k) for k in range(1, 50)]
