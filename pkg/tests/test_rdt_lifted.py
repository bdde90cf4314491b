"""Lifted bound: exponential-moment closed form, profiles, nested optimizer."""

import math

import numpy as np
import pytest

from phase_manifold.numerics import QuadratureSpec
from phase_manifold.rdt_lifted import (LiftParams, LiftProfile, _GAMMA_GRID,
                                       _NestedMaximizer, f_q_lift, gamma_sph_hat,
                                       phi0_lifted)
from phase_manifold.rdt_plain import ParamPoint, phi0_plain


def mc_f_q_lift(c, x, beta, n, seed):
    r = math.sqrt(c - x * x)
    rng = np.random.default_rng(seed)
    g0 = rng.standard_normal(n)
    g1 = rng.standard_normal(n)
    w = np.exp(-beta * (np.abs(g0) - np.abs(g0 * x + g1 * r)) ** 2)
    return float(w.mean()), float(w.std() / math.sqrt(n))


class TestGammaSph:
    def test_zero(self):
        assert gamma_sph_hat(0.0) == pytest.approx(0.5, abs=1e-15)

    def test_two(self):
        assert gamma_sph_hat(2.0) == pytest.approx((1 + math.sqrt(2)) / 2, abs=1e-12)

    def test_log_argument_positive(self):
        # 2 ghat > c3e algebraically, so 1 - c3e/(2 ghat) stays in (0, 1]
        for c3e in (0.0, 1e-8, 1.0, 17.3, 1e6):
            ghat = gamma_sph_hat(c3e)
            arg = 1.0 - c3e / (2 * ghat)
            assert 0.0 < arg <= 1.0


class TestFqLift:
    def test_small_exponent_limit(self):
        val = f_q_lift(ParamPoint(1.0, 0.5), c3=1e-8, gamma_x=1e-4)
        assert val == pytest.approx(1.0, abs=1e-9)

    def test_aligned_is_one(self):
        assert f_q_lift(ParamPoint(1.0, 1.0), c3=3.0, gamma_x=0.5) == pytest.approx(1.0, abs=1e-12)

    def test_range(self):
        for c3, gx in [(0.1, 0.2), (2.0, 0.5), (40.0, 0.9)]:
            val = f_q_lift(ParamPoint(0.9, 0.4), c3, gx)
            assert 0.0 < val <= 1.0

    def test_against_mc_oracle(self):
        got = f_q_lift(ParamPoint(1.0, 0.5), c3=2.0, gamma_x=0.5)
        mc, se = mc_f_q_lift(1.0, 0.5, 1.0, 4_000_000, seed=55)
        assert abs(got - mc) <= 3 * se + 1e-4

    def test_strictly_decreasing_in_exponent(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            c = rng.uniform(0.3, 1.5)
            x = rng.uniform(0.0, 0.95) * math.sqrt(c)
            pt = ParamPoint(c, x)
            betas = np.sort(rng.uniform(0.01, 50.0, 3))
            vals = [f_q_lift(pt, float(b), 0.5) for b in betas / 0.5]
            assert vals[0] > vals[1] > vals[2]

    def test_validation(self):
        with pytest.raises(ValueError):
            f_q_lift(ParamPoint(1.0, 0.5), c3=0.0, gamma_x=0.5)
        with pytest.raises(ValueError):
            f_q_lift(ParamPoint(1.0, 0.5), c3=1.0, gamma_x=1.0)


class TestLiftProfile:
    def test_matches_direct_quadrature(self):
        pt = ParamPoint(1.0, 0.35)
        prof = LiftProfile(pt)
        tight = QuadratureSpec(abs_tol=1e-13, rel_tol=1e-12)
        for beta in (1e-3, 0.7, 12.0, 300.0):
            # c3 * gamma_x = beta
            direct = -math.log(f_q_lift(pt, 2.0 * beta, 0.5, tight)) / beta
            got = float(prof.m(beta))
            assert got == pytest.approx(direct, rel=5e-6), beta
        # tiny beta limit is the plain second moment
        from phase_manifold.rdt_plain import f_q_closed
        assert float(prof.m(1e-9)) == pytest.approx(f_q_closed(pt), rel=1e-5)

    def test_requires_r_positive(self):
        with pytest.raises(ValueError):
            LiftProfile(ParamPoint(1.0, 1.0))


class TestPhi0Lifted:
    def test_r_zero_returns_plain_value(self):
        res = phi0_lifted(1.7932, ParamPoint(1.0, 1.0))
        assert res.phi0_bar == 0.0
        assert res.gamma_sph_hat == pytest.approx(0.5)

    def test_at_least_plain(self):
        pt = ParamPoint(1.0, 0.5)
        lifted = phi0_lifted(1.4, pt).phi0_bar
        plain = phi0_plain(1.4, pt).phi0
        assert lifted >= plain - 1e-6

    def test_reported_best_is_locally_maximal(self):
        # dense scan around the reported optimizer must not beat it
        pt = ParamPoint(1.0, 0.5)
        res = phi0_lifted(1.4, pt)
        prof = LiftProfile(pt)
        opt = _NestedMaximizer(1.4, pt.r, prof.log_f)
        b = res.best
        best_near = -np.inf
        for dc in np.linspace(-1e-3, 1e-3, 7):
            for dr in np.linspace(-1e-3, 1e-3, 7):
                c3 = b.c3 * (1 + dc)
                ry = b.r_y * (1 + dr)
                if c3 > 0 and ry > 0:
                    best_near = max(best_near, opt.inner_min(c3, ry)[1])
        assert res.phi0_bar >= best_near - 1e-8

    def test_inner_gamma_grid_dominates_min(self):
        # the returned inner minimum never exceeds any of the >= 64 samples
        pt = ParamPoint(1.0, 0.4)
        opt = _NestedMaximizer(1.4, pt.r, LiftProfile(pt).log_f)
        assert len(_GAMMA_GRID) >= 64
        for c3, ry in [(0.5, 0.2), (10.0, 1.0), (100.0, 0.05)]:
            sampled = opt.gamma_profile(c3, ry)
            _, got = opt.inner_min(c3, ry)
            assert got <= sampled.min() + 1e-15

    def test_result_invariants(self):
        pt = ParamPoint(0.9, 0.45)
        res = phi0_lifted(1.5, pt)
        assert math.isfinite(res.phi0_bar)
        b = res.best
        assert b.r_y_bar == pytest.approx(b.r_y ** 2 / (4 * b.gamma), rel=1e-12)
        assert 0.0 < b.gamma_x < 1.0
        assert b.c3e == pytest.approx(b.c3 * b.r_y * pt.r, rel=1e-12)
        assert res.gamma_sph_hat == pytest.approx(gamma_sph_hat(b.c3e), rel=1e-12)

    @pytest.mark.slow
    def test_curve_nonincreasing_at_1p4(self):
        xs = np.linspace(0.0, 1.0, 21)
        vals = []
        for x in xs:
            vals.append(phi0_lifted(1.4, ParamPoint(1.0, float(x)), coarse_n=24).phi0_bar)
        vals = np.array(vals)
        rise = np.max(vals - np.minimum.accumulate(vals))
        assert rise <= 1e-6
        assert vals[-1] == 0.0

    @pytest.mark.slow
    def test_close_to_plain_at_c_0p8(self):
        # lifting is visually undetectable by c = 0.8
        for x in (0.1, 0.4, 0.7):
            pt = ParamPoint(0.8, x)
            gap = phi0_lifted(1.4, pt).phi0_bar - phi0_plain(1.4, pt).phi0
            assert -1e-6 <= gap <= 1e-2


class TestLiftParams:
    def test_create_validation(self):
        with pytest.raises(ValueError):
            LiftParams.create(0.0, 1.0, 1.0, 0.5)
        p = LiftParams.create(2.0, 0.5, 0.1, 0.6)
        assert p.gamma_x == pytest.approx(p.r_y_bar / (1 + p.r_y_bar))
