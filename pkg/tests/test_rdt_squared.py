"""Squared-magnitude bounds: cubic inner minimum, 2-D expectations, lifting."""

import math

import numpy as np
import pytest

from phase_manifold.rdt_plain import ParamPoint
from phase_manifold.rdt_squared import (SqLiftProfile, f_q_sq, f_q_sq_lift,
                                        inner_min_sq, inner_min_values, phi0_sq,
                                        phi0_sq_lifted, squared_inner_problem)


def scan_inner_min(g0, v, w, z_hi=10.0, step=1e-5):
    zs = np.arange(0.0, z_hi, step)
    vals = (g0 * g0 - zs * zs) ** 2 + (np.abs(v) - zs) ** 2 * w
    k = int(np.argmin(vals))
    return float(zs[k]), float(vals[k])


class TestInnerMin:
    def test_perfect_match(self):
        z, val = inner_min_sq(1.0, 1.0, 3.7)
        assert z == pytest.approx(1.0, abs=1e-9)
        assert val == pytest.approx(0.0, abs=1e-12)

    def test_origin(self):
        z, val = inner_min_sq(0.0, 0.0, 5.0)
        assert z == 0.0
        assert val == 0.0

    def test_against_dense_scan(self):
        _, val = inner_min_sq(1.3, 0.4, 2.0)
        _, ref = scan_inner_min(1.3, 0.4, 2.0)
        assert abs(val - ref) <= 1e-8

    def test_random_triples_against_scan(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            g0 = rng.standard_normal() * 1.5
            v = rng.standard_normal() * 1.5
            w = math.exp(rng.uniform(-3, 3))
            _, val = inner_min_sq(g0, v, w)
            _, ref = scan_inner_min(g0, v, w)
            assert abs(val - ref) <= 1e-8, (g0, v, w)

    def test_vectorized_matches_scalar(self):
        rng = np.random.default_rng(23)
        g0 = rng.standard_normal(40)
        v = rng.standard_normal(40)
        vals = inner_min_values(g0, v, 2.5)
        for i in range(40):
            assert vals[i] == pytest.approx(inner_min_sq(g0[i], v[i], 2.5)[1], abs=1e-10)

    def test_problem_record(self):
        prob = squared_inner_problem(1.2, -0.3, 4.0)
        assert 0.0 in prob.candidates.candidates
        assert prob.candidates.p_c == pytest.approx(0.5 * (4.0 - 2 * 1.44))
        assert prob.candidates.q_c == pytest.approx(-2.0 * 0.3)
        with pytest.raises(ValueError):
            squared_inner_problem(1.0, 1.0, 0.0)


class TestFqSq:
    def test_aligned_is_zero(self):
        assert f_q_sq(ParamPoint(1.0, 1.0), 3.0) == pytest.approx(0.0, abs=1e-10)

    def test_against_mc(self):
        pt = ParamPoint(1.0, 0.0)
        got = f_q_sq(pt, 1.0)
        rng = np.random.default_rng(64)
        g0 = rng.standard_normal(2_000_000)
        g1 = rng.standard_normal(2_000_000)
        w = inner_min_values(g0, g0 * pt.x + g1 * pt.r, 1.0)
        mc, se = float(w.mean()), float(w.std() / math.sqrt(w.size))
        assert abs(got - mc) <= 3 * se + 3e-3 * mc

    def test_monotone_in_weight(self):
        pt = ParamPoint(1.0, 0.3)
        vals = [f_q_sq(pt, w) for w in (0.1, 1.0, 10.0)]
        assert vals[0] <= vals[1] <= vals[2]

    def test_weight_validation(self):
        with pytest.raises(ValueError):
            f_q_sq(ParamPoint(1.0, 0.5), 0.0)


class TestPhi0Sq:
    def test_aligned_zero(self):
        assert phi0_sq(2.0, ParamPoint(1.0, 1.0)) == 0.0

    def test_r_zero_limit(self):
        # boundary points saturate at 3 alpha (1 - x^2)^2
        assert phi0_sq(2.0, ParamPoint(0.25, 0.5)) == pytest.approx(
            3 * 2.0 * (1 - 0.25) ** 2, rel=1e-12)

    def test_monotone_in_alpha(self):
        pt = ParamPoint(1.0, 0.4)
        a = phi0_sq(1.3, pt, opt_tol=1e-5)
        b = phi0_sq(1.9, pt, opt_tol=1e-5)
        assert b >= a - 1e-9

    def test_finite_positive_midpoint(self):
        val = phi0_sq(1.4, ParamPoint(1.0, 0.5), opt_tol=1e-5)
        assert math.isfinite(val) and val >= 0.0


class TestSqLifted:
    def test_f_range_and_mc(self):
        pt = ParamPoint(1.0, 0.5)
        got = f_q_sq_lift(pt, c3=1.0, rho=0.5)
        assert 0.0 < got <= 1.0
        rng = np.random.default_rng(91)
        g0 = rng.standard_normal(2_000_000)
        g1 = rng.standard_normal(2_000_000)
        w = np.exp(-1.0 * inner_min_values(g0, g0 * pt.x + g1 * pt.r, 0.5))
        mc, se = float(w.mean()), float(w.std() / math.sqrt(w.size))
        assert abs(got - mc) <= 3 * se + 3e-3 * mc

    def test_profile_matches_adaptive(self):
        # fixed-grid profile vs the adaptive quadrature route; the gap is a
        # smooth quadrature bias of order 1e-5 on kink-heavy weights
        pt = ParamPoint(1.0, 0.45)
        prof = SqLiftProfile(pt, c3=2.0)
        for rho in (1e-3, 0.2, 3.0, 250.0):
            direct = math.log(f_q_sq_lift(pt, 2.0, rho))
            got = float(prof.log_f(2.0, rho))
            assert got == pytest.approx(direct, abs=5e-5), rho

    def test_aligned_zero_by_convention(self):
        assert phi0_sq_lifted(1.4, ParamPoint(1.0, 1.0)).phi0_bar == 0.0

    @pytest.mark.slow
    def test_lifts_above_plain(self):
        pt = ParamPoint(1.0, 0.5)
        lifted = phi0_sq_lifted(1.4, pt, opt_tol=1e-5).phi0_bar
        plain = phi0_sq(1.4, pt, opt_tol=1e-5)
        assert lifted >= plain - 1e-6
        assert math.isfinite(lifted)
