"""Resolvent evaluations, the first-passage fixed point, and the increment law."""

import math

import numpy as np
import pytest

from freewalk.core import Word
from freewalk.genfun import (
    GenFunContext,
    NoConvergence,
    SingularSolve,
    build_context,
    dL_word,
    entropy_bound_CL,
    factor_L,
    factor_green,
    radius_diagnostic,
    renewal_increment_gf,
    renewal_increment_law,
    solve_xi,
)
from freewalk.oracle import (
    enum_L_series,
    enum_xi_series,
    exact_renewal_increment_dist,
)

O = Word()
CA = Word(((2, "c"), (1, "a")))

XI_A = 2.0 / 3.0  # minimal root of the symmetric K3xK3 system, by hand
RADIUS_A = (8.0 * math.sqrt(2.0) - 4.0) / 7.0  # branch point of the same system


class TestFactorGreen:
    def test_identity_at_zero(self, instance_a):
        assert factor_green(instance_a, 1, "o1", "o1", 0.0) == 1.0
        assert factor_green(instance_a, 1, "o1", "a", 0.0) == 0.0

    def test_k3_closed_form(self, instance_a):
        # eigendecomposition of the uniform K3 row gives
        # G(o,o|t) = (1/3)/(1-t) + (2/3)/(1+t/2)
        assert math.isclose(factor_green(instance_a, 1, "o1", "o1", 0.5), 1.2)
        assert math.isclose(factor_green(instance_a, 1, "o1", "a", 0.5), 0.4)

    def test_resolvent_identity(self, instance_a, instance_b):
        for cfg in (instance_a, instance_b):
            for i in (1, 2):
                f = cfg.factor(i)
                p = f.matrix()
                for t in (0.0, 0.25, 0.5):
                    g = np.array(
                        [
                            [factor_green(cfg, i, x, y, t) for y in f.vertices]
                            for x in f.vertices
                        ]
                    )
                    assert np.allclose(g, np.eye(f.size) + t * p @ g, atol=1e-10)

    def test_singular_at_one(self, instance_a):
        with pytest.raises(SingularSolve):
            factor_green(instance_a, 1, "o1", "o1", 1.0)

    def test_resolvent_matches_series_enumeration(self, instance_a, instance_b):
        """Dual route: linear solve vs taboo-free path enumeration."""
        from freewalk.oracle import factor_green_series

        t = 0.4
        for cfg in (instance_a, instance_b):
            for i in (1, 2):
                f = cfg.factor(i)
                for x in f.vertices:
                    for y in f.vertices:
                        series = factor_green_series(i, x, y, 40, cfg)
                        partial = float(series.eval(t))
                        solved = factor_green(cfg, i, x, y, t)
                        assert abs(solved - partial) < t**41 / (1 - t) + 1e-12


class TestFactorL:
    def test_self_is_one(self, instance_a):
        for t in (0.0, 0.3, 0.7):
            assert math.isclose(factor_L(instance_a, 1, "a", "a", t), 1.0)

    def test_k3_value(self, instance_a):
        assert math.isclose(factor_L(instance_a, 1, "o1", "a", 0.5), 1.0 / 3.0)

    def test_zero_at_origin(self, instance_a):
        assert factor_L(instance_a, 1, "o1", "a", 0.0) == 0.0


class TestSolveXi:
    def test_zero_at_zero(self, instance_a):
        sol = solve_xi(0.0, instance_a)
        assert sol.xi1 == 0.0 and sol.xi2 == 0.0
        assert all(v == 0.0 for v in sol.returns.values())

    def test_symmetric_instance(self, instance_a):
        sol = solve_xi(1.0, instance_a)
        assert math.isclose(sol.xi1.real, sol.xi2.real, rel_tol=1e-10)
        assert math.isclose(sol.xi1.real, XI_A, abs_tol=1e-9)
        assert all(
            math.isclose(v.real, 0.5, abs_tol=1e-9) for v in sol.returns.values()
        )

    def test_minimality_against_enumeration(self, instance_a, instance_b):
        """Partial sums approach the fixed point from below, geometrically."""
        for cfg in (instance_a, instance_b):
            sol = solve_xi(1.0, cfg)
            partials = enum_xi_series(1, 14, cfg).partial_sums()
            gaps = [sol.xi1.real - p for p in partials[1:]]
            assert all(g > 0 for g in gaps)
            ratios = [b / a for a, b in zip(gaps[7:], gaps[8:])]
            assert all(r < 1.0 for r in ratios)

    def test_return_table_against_absorbing_enumeration(
        self, instance_a, instance_b
    ):
        """The fixed point's return values match first-passage enumeration.

        Mass absorbed at the root, step by step, gives partial sums that
        increase to the minimal solution from below.
        """
        from freewalk.core import compile_kernel

        for cfg in (instance_a, instance_b):
            kernel = compile_kernel(cfg)
            sol = solve_xi(1.0, cfg)
            for (j, v), value in sol.returns.items():
                start = kernel.encode(Word(((j, v),)))
                dist = {start: 1.0}
                absorbed = 0.0
                previous = 0.0
                for _ in range(16):
                    new: dict = {}
                    for w, p in dist.items():
                        for w2, q in kernel.successors(w):
                            if w2 == ():
                                absorbed += p * q
                            else:
                                new[w2] = new.get(w2, 0.0) + p * q
                    dist = new
                    # absorption can pause on parity, never regress or overshoot
                    assert previous <= absorbed <= value.real + 1e-12
                    previous = absorbed
                assert 0.0 < value.real - absorbed < 0.25  # tail arrives late

    def test_divergence_beyond_radius(self, instance_a):
        with pytest.raises(NoConvergence):
            solve_xi(1.2, instance_a, max_iter=100_000)
        sol = solve_xi(1.2, instance_a, max_iter=100_000, raise_on_divergence=False)
        assert not sol.converged

    def test_converges_just_inside_radius(self, instance_a):
        sol = solve_xi(RADIUS_A - 5e-3, instance_a, max_iter=400_000)
        assert sol.converged


class TestContext:
    def test_invariants(self, ctx_a, ctx_b):
        for ctx in (ctx_a, ctx_b):
            assert 0.0 < ctx.xi1 < 1.0 and 0.0 < ctx.xi2 < 1.0
            assert 0.0 < ctx.cone_stay[0] < 1.0 and 0.0 < ctx.cone_stay[1] < 1.0
            bound = 1.0 / (ctx.cone_stay[0] * ctx.cone_stay[1])
            assert all(0.0 < L <= bound for L in ctx.letter_L.values())
            assert ctx.cl_constant > 0.0

    def test_cl_constant_instance_a(self, ctx_a):
        assert math.isclose(ctx_a.cl_constant, math.log(9.0), abs_tol=1e-8)

    def test_cl_formula(self):
        ctx = GenFunContext(
            config_digest="synthetic",
            xi1=0.5,
            xi2=0.5,
            cone_stay=(0.5, 0.5),
            letter_L={},
            cl_constant=-math.log(0.25),
        )
        assert math.isclose(entropy_bound_CL(ctx), math.log(4.0))
        boundary = GenFunContext(
            config_digest="synthetic",
            xi1=0.0,
            xi2=0.0,
            cone_stay=(1.0, 1.0),
            letter_L={},
            cl_constant=0.0,
        )
        assert entropy_bound_CL(boundary) == 0.0

    def test_consistency_with_cached_xi(self, ctx_a):
        assert math.isclose(
            entropy_bound_CL(ctx_a),
            -math.log((1 - ctx_a.xi1) * (1 - ctx_a.xi2)),
        )


class TestLetterDistance:
    def test_root_is_zero(self, ctx_a):
        assert dL_word(O, ctx_a) == 0.0

    def test_two_letter_value(self, ctx_a):
        # both letters sit at factor value 1/2 on the symmetric instance
        assert math.isclose(dL_word(CA, ctx_a), 2.0 * math.log(2.0), abs_tol=1e-9)

    def test_additivity(self, ctx_a, ctx_b):
        from freewalk.core import concat

        u = Word(((2, "c"),))
        v = Word(((1, "a"), (2, "d")))
        assert math.isclose(
            dL_word(concat(u, v), ctx_a), dL_word(u, ctx_a) + dL_word(v, ctx_a)
        )

    def test_pair_bounds(self, instance_a, ctx_a):
        eps = instance_a.epsilon0
        for y in ("c", "d"):
            for x in ("a", "b"):
                w = Word(((2, y), (1, x)))
                val = dL_word(w, ctx_a)
                assert abs(val) <= max(-math.log(eps) * 2.0, ctx_a.cl_constant) + 1e-12

    def test_matches_truncated_series_at_one(self, instance_a, ctx_a):
        """The series partial sums under-approximate exp(-dL) and close the gap."""
        series = enum_L_series(O, CA, 14, instance_a)
        partials = [float(p) for p in series.partial_sums()]
        limit = math.exp(-dL_word(CA, ctx_a))
        assert all(p <= limit + 1e-12 for p in partials)
        gap_then = limit - partials[10]
        gap_now = limit - partials[14]
        assert 0 < gap_now < gap_then
        # geometric continuation narrows the remaining gap substantially
        # (it cannot close it: the true tail decays slower than the last ratio)
        ratio = (partials[14] - partials[13]) / (partials[13] - partials[12])
        extrapolated = partials[14] + (partials[14] - partials[13]) * ratio / (1 - ratio)
        assert abs(extrapolated - limit) < gap_now
        assert abs(extrapolated - limit) / limit < 5e-2


class TestRadiusDiagnostic:
    def test_instance_a(self, instance_a):
        report = radius_diagnostic(instance_a, grid=[1.0, 1.02, 1.04, 1.06, 1.1])
        assert report.plausible
        assert report.largest_converging >= 1.02
        assert report.largest_converging < RADIUS_A
        values = [v for _, v in report.spectral_proxy]
        assert values[-1] < 1.0

    def test_always_converges_at_one(self, instance_a, instance_b):
        for cfg in (instance_a, instance_b):
            report = radius_diagnostic(cfg, grid=[1.0])
            assert report.converged_at == [1.0]

    def test_refused_for_invalid_config(self, instance_a):
        from freewalk.core import InvalidConfig, WalkConfig

        bad = WalkConfig(
            factor1=instance_a.factor1, factor2=instance_a.factor2, alpha=1.5
        )
        with pytest.raises(InvalidConfig):
            radius_diagnostic(bad, grid=[1.0])


class TestRenewalIncrementLaw:
    def test_gf_is_one_at_one(self, instance_a, instance_b):
        assert math.isclose(renewal_increment_gf(1.0, instance_a).real, 1.0, abs_tol=1e-9)
        assert math.isclose(renewal_increment_gf(1.0, instance_b).real, 1.0, abs_tol=1e-9)

    def test_mean_increment_instance_a(self, law_a):
        # block speed is exactly 1/4 on K3xK3 (push 1/2, pop 1/4 at every
        # non-root word), so the mean increment is exactly 8
        assert math.isclose(law_a.mean(), 8.0, abs_tol=1e-7)
        assert math.isclose(law_a.block_speed(), 0.25, abs_tol=1e-8)

    def test_law_is_complete(self, law_a, law_b):
        assert abs(law_a.unassigned) < 1e-9
        assert abs(law_b.unassigned) < 1e-9

    def test_matches_enumeration(self, instance_a, instance_b, law_a, law_b):
        for cfg, law in ((instance_a, law_a), (instance_b, law_b)):
            table = exact_renewal_increment_dist(12, cfg)
            dp = np.array(table.delta_t_probs)
            assert np.max(np.abs(dp - law.delta_t_probs[:13])) < 1e-12
            for pair in law.pairs:
                dp_pair = np.array([row.get(pair, 0.0) for row in table.joint])
                assert np.max(np.abs(dp_pair - law.pair_probs[pair][:13])) < 1e-12

    def test_moments_match_gf_derivatives(self, instance_a, law_a):
        """Dual route: law moments vs numerical derivatives of the gf.

        Step sizes balance truncation against cancellation: the third and
        fourth derivatives of the gf are large (heavy geometric tail).
        """
        f = lambda z: renewal_increment_gf(z, instance_a).real
        h1 = 1e-5
        d1 = (f(1 + h1) - f(1 - h1)) / (2 * h1)
        h2 = 1e-3
        d2 = (f(1 + h2) - 2 * f(1.0) + f(1 - h2)) / (h2 * h2)
        assert math.isclose(law_a.mean(), d1, rel_tol=1e-5)
        var_from_gf = d2 + d1 - d1 * d1
        assert math.isclose(law_a.variance(), var_from_gf, rel_tol=1e-3)

    def test_sigma_block_formula(self, law_a):
        # E[(2 - increment * speed)^2] / E[increment] with speed = 2/mean
        m, v = law_a.mean(), law_a.variance()
        assert math.isclose(law_a.sigma_block_sq(), 4.0 * v / m**3, rel_tol=1e-10)
