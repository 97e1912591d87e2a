import csv
import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nets import hidden_net
from varlab.matrices import (
    _RunningProduct,
    SWEEP_HEADER,
    c_matrix,
    depth_sweep,
    diff_diagonal,
    direct_products,
    g_matrix,
    preserve_probability_closed,
    preserve_probability_mc,
    sweep_csv,
    verify_c2c_identity,
)
from varlab.network import InitScheme, NetworkConfig, ParameterSet, init_params
from varlab.numerics import Rng, orthogonalize

ACTS = ["sigmoid", "relu", "abs"]


class TestDiffDiagonal:
    @pytest.mark.parametrize("act", ACTS)
    def test_equal_points_give_one(self, act):
        u = np.array([-1.0, 0.0, 2.5])
        np.testing.assert_array_equal(diff_diagonal(u, u.copy(), act), 1.0)

    def test_hand_values(self):
        assert diff_diagonal([1.0], [-1.0], "relu")[0] == 0.5
        assert diff_diagonal([1.0], [-1.0], "abs")[0] == 0.0

    def test_near_equal_uses_derivative(self):
        u = np.array([0.3, -0.3])
        v = u + np.array([1e-15, 1e-15])
        np.testing.assert_array_equal(diff_diagonal(u, v, "relu"), [1.0, 0.0])
        s = diff_diagonal(u, v, "sigmoid")
        sig = 1 / (1 + np.exp(-u))
        np.testing.assert_allclose(s, sig * (1 - sig), rtol=1e-15)

    def test_derivative_rule(self):
        u = np.array([-1.0, 0.0, 1.0])
        np.testing.assert_array_equal(diff_diagonal(u, u, "relu", equal_rule="derivative"), [0, 0, 1])
        with pytest.raises(ValueError):
            diff_diagonal(u, u, "relu", equal_rule="bogus")

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            diff_diagonal(np.ones(2), np.ones(3), "relu")

    @pytest.mark.parametrize("act", ["relu", "abs"])
    def test_bounded_by_one(self, act):
        r = Rng(8)
        u, v = r.normal(size=100_000), r.normal(size=100_000)
        q = diff_diagonal(u, v, act)
        assert np.all(q >= -1.0) and np.all(q <= 1.0)


class TestGAndC:
    def test_orthogonal_abs_layer_norm_one(self):
        W = orthogonalize(Rng(2).normal(size=(5, 5)))
        p = ParameterSet.from_layers("abs", [(W, np.zeros(5))], extended=False)
        x = Rng(3).uniform(-1, 1, 5)
        assert np.linalg.norm(g_matrix(p, x), 2) == pytest.approx(1.0, rel=1e-12)

    def test_dead_relu(self):
        p = ParameterSet.from_layers("relu", [(np.eye(3), -5 * np.ones(3))] * 3, extended=False)
        np.testing.assert_array_equal(g_matrix(p, np.full(3, 0.5)), 0)

    def test_positive_orthant_c_is_identity(self):
        p = ParameterSet.from_layers("relu", [(np.eye(2), np.zeros(2))], extended=False)
        np.testing.assert_array_equal(c_matrix(p, [2.0, 2.0], [1.0, 1.0]), np.eye(2))

    @pytest.mark.parametrize("act", ACTS)
    def test_c_at_equal_points_is_g(self, act):
        for seed in range(10):
            p = hidden_net(6, 5, act, seed=seed)
            x = Rng(seed).uniform(-1, 1, 6)
            G = g_matrix(p, x)
            C = c_matrix(p, x, x, equal_rule="derivative")
            assert np.max(np.abs(G - C)) <= 1e-12 * max(np.max(np.abs(G)), 1e-300)

    def test_extended_rejected(self):
        from nets import extended_net
        with pytest.raises(ValueError):
            g_matrix(extended_net(3, 1, "relu"), np.zeros(2))

    def test_point_shape(self):
        with pytest.raises(ValueError):
            c_matrix(hidden_net(3, 1, "relu"), np.zeros(3), np.zeros(4))


class TestC2CIdentity:
    def test_equal_points(self):
        p = hidden_net(4, 3, "relu")
        x = np.ones(4)
        assert verify_c2c_identity(p, x, x) == 0.0

    def test_affine_case(self):
        # abs on an all-positive trace is the identity map
        r = Rng(0)
        layers = [(np.abs(r.normal(size=(4, 4))) * 0.3, np.ones(4)) for _ in range(4)]
        p = ParameterSet.from_layers("abs", layers, extended=False)
        assert verify_c2c_identity(p, r.uniform(0, 1, 4), r.uniform(0, 1, 4)) <= 1e-10

    @given(st.sampled_from(ACTS), st.integers(1, 16), st.integers(1, 30), st.integers(0, 10**6),
           st.sampled_from(["kaiming", "xavier"]))
    def test_random_nets(self, act, d, L, seed, scheme):
        p = hidden_net(d, L, act, scheme=scheme, seed=seed)
        r = Rng(seed).child(5)
        assert verify_c2c_identity(p, r.uniform(-1, 1, d), r.uniform(-1, 1, d)) <= 1e-8


def _direct(d, L, act, scheme, rng):
    p = init_params(NetworkConfig(L, d, act), scheme, rng)
    pr = rng.child(0)
    x, xbar = pr.uniform(-1, 1, d), pr.uniform(-1, 1, d)
    return [np.linalg.norm(m, 2) for m in direct_products(p, x, xbar)]


class TestDepthSweep:
    @pytest.mark.parametrize("act, scheme", [("relu", "kaiming"), ("abs", "xavier"), ("sigmoid", "normal:1")])
    def test_matches_direct_products(self, act, scheme):
        d, L_max = 8, 50
        sch = InitScheme.parse(scheme)
        recs = depth_sweep(d, L_max, act, sch, Rng(4), tol=1e-14, max_iter=200_000)
        for L in (1, 2, 7, 20, 50):
            ref = _direct(d, L, act, sch, Rng(4))
            got = [recs[L - 1].norm_C, recs[L - 1].norm_G_x, recs[L - 1].norm_G_xbar]
            for g, r in zip(got, ref):
                assert g == pytest.approx(r, rel=1e-10, abs=1e-300)

    def test_single_layer(self):
        sch = InitScheme("kaiming")
        recs = depth_sweep(16, 1, "relu", sch, Rng(1))
        assert len(recs) == 1 and recs[0].L == 1
        ref = _direct(16, 1, "relu", sch, Rng(1))
        assert recs[0].norm_C == pytest.approx(ref[0], rel=1e-7)

    @pytest.mark.parametrize("step", [10, -10])
    def test_renormalization_keeps_log_norms(self, step):
        # 200 factors of 2^step * Q leave double range but have an exact log norm
        Q = orthogonalize(Rng(0).normal(size=(4, 4)))
        prod = _RunningProduct(4, Rng(1))
        for _ in range(200):
            prod.push(np.ldexp(Q, step))
        assert abs(prod.exp) > 996
        assert np.max(np.abs(prod.m)) < 2.0**997
        _, log10 = prod.norm(1e-12, 1000)
        assert log10 == pytest.approx(200 * step * math.log10(2.0), abs=1e-9)

    def test_deep_sweep_records_are_finite_in_log(self):
        recs = depth_sweep(8, 300, "sigmoid", InitScheme("kaiming"), Rng(0))
        for r in recs:
            assert r.norm_C >= 0 and r.norm_G_x >= 0
            assert math.isfinite(r.log10_G_x) and math.isfinite(r.log10_C)

    def test_explicit_points(self):
        sch = InitScheme("kaiming")
        x = np.full(4, 0.5)
        recs = depth_sweep(4, 3, "relu", sch, Rng(2), x=x, xbar=x)
        for r in recs:
            assert r.norm_G_x == pytest.approx(r.norm_G_xbar, rel=1e-7)

    def test_bad_depth(self):
        with pytest.raises(ValueError):
            depth_sweep(4, 0, "relu", InitScheme(), Rng(0))

    def test_csv(self):
        recs = depth_sweep(4, 5, "relu", InitScheme(), Rng(0), seed_label=3)
        rows = list(csv.reader(io.StringIO(sweep_csv(recs))))
        assert rows[0] == SWEEP_HEADER
        assert len(rows) == 6
        assert rows[1][0] == "1" and rows[1][5] == "3" and rows[1][6] == "relu" and rows[1][7] == "kaiming"
        assert float(rows[3][1]) == recs[2].norm_C


class TestPreserveProbability:
    @pytest.mark.parametrize("p, d, relu, abs_", [
        (0.5, 1, 1 / 4, 1 / 2),
        (0.25, 1, 1 / 16, 10 / 16),
        (0.5, 3, 1 / 64, 1 / 8),
    ])
    def test_closed_form(self, p, d, relu, abs_):
        assert preserve_probability_closed(p, d, "relu") == pytest.approx(relu, rel=1e-15)
        assert preserve_probability_closed(p, d, "abs") == pytest.approx(abs_, rel=1e-15)

    @given(st.floats(0.001, 0.999), st.integers(1, 10))
    def test_abs_dominates_relu(self, p, d):
        assert preserve_probability_closed(p, d, "abs") > preserve_probability_closed(p, d, "relu")

    @pytest.mark.parametrize("kw", [{"p": 0.0, "d": 1, "act": "relu"}, {"p": 0.5, "d": 0, "act": "abs"},
                                    {"p": 0.5, "d": 1, "act": "sigmoid"}])
    def test_closed_errors(self, kw):
        with pytest.raises(ValueError):
            preserve_probability_closed(**kw)

    @pytest.mark.parametrize("p, d, act, target", [(0.5, 1, "relu", 0.25), (0.5, 2, "abs", 0.25)])
    def test_mc_examples(self, p, d, act, target):
        mc = preserve_probability_mc(p, d, act, 10**6, Rng(21))
        assert abs(mc - target) <= 4 * math.sqrt(target * (1 - target) / 1e6)

    def test_mc_near_one(self):
        assert preserve_probability_mc(0.999, 1, "relu", 10**4, Rng(0)) >= 0.99

    def test_mc_deterministic(self):
        a = preserve_probability_mc(0.3, 2, "abs", 10**4, Rng(5), chunk=3000)
        b = preserve_probability_mc(0.3, 2, "abs", 10**4, Rng(5), chunk=3000)
        assert a == b

    def test_mc_too_few_trials(self):
        with pytest.raises(ValueError):
            preserve_probability_mc(0.5, 1, "relu", 100, Rng(0))
