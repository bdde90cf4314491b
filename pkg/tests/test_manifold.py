"""Manifold construction, funnel detection, critical-ratio bisection."""

import math

import numpy as np
import pytest

from phase_manifold.manifold import (BadBracket, BoundVariant,
                                     GridSpec, ManifoldGrid, barrier_manifold,
                                     build_manifold, critical_alpha,
                                     default_flat_tol, detect_funnels, max_rise)


def synthetic_grid(values, c_axis=None, x_axis=None):
    values = np.asarray(values, dtype=float)
    nc, nx = values.shape
    return ManifoldGrid(alpha=1.0, variant=BoundVariant("plain"),
                        c_axis=np.linspace(0.1, 1.0, nc) if c_axis is None else c_axis,
                        x_axis=np.linspace(0.0, 1.0, nx) if x_axis is None else x_axis,
                        values=values)


class TestVariant:
    def test_parse(self):
        assert BoundVariant.parse("lifted").kind == "lifted"
        v = BoundVariant.parse("barrier:12")
        assert v.kind == "barrier" and v.t0 == 12.0
        assert v.label() == "barrier:12"

    def test_invalid(self):
        with pytest.raises(ValueError):
            BoundVariant("nope")
        with pytest.raises(ValueError):
            BoundVariant("barrier")          # missing t0
        with pytest.raises(ValueError):
            BoundVariant("plain", t0=3.0)

    def test_grid_spec_validation(self):
        with pytest.raises(ValueError):
            GridSpec((1.0, 0.5, 10), (0.0, 1.0, 10))


class TestDetectFunnels:
    def test_degenerate_single_node(self):
        grid = synthetic_grid([[0.0]], c_axis=np.array([1.0]), x_axis=np.array([1.0]))
        rep = detect_funnels(grid)
        assert rep.count == 1
        assert rep.funnel_points[0].basin_fraction == 1.0
        assert rep.funnel_points[0].value == 0.0

    def test_monotone_ramp(self):
        vals = np.tile(np.linspace(1.0, 0.0, 12), (3, 1))
        rep = detect_funnels(synthetic_grid(vals))
        assert rep.count == 1
        assert rep.funnel_points[0].x == pytest.approx(1.0)
        assert rep.funnel_points[0].basin_fraction == 1.0

    def test_two_wells(self):
        cs = np.linspace(0.1, 1.0, 20)
        xs = np.linspace(0.0, 1.0, 20)
        C, X = np.meshgrid(cs, xs, indexing="ij")
        w1 = (C - 0.3) ** 2 + (X - 0.2) ** 2
        w2 = (C - 0.8) ** 2 + (X - 0.8) ** 2 + 0.1
        rep = detect_funnels(synthetic_grid(np.minimum(w1, w2), cs, xs))
        assert rep.count == 2
        pts = sorted(rep.funnel_points, key=lambda p: p.value)
        assert (pts[0].c, pts[0].x) == pytest.approx((0.3, 0.2), abs=0.06)
        assert (pts[1].c, pts[1].x) == pytest.approx((0.8, 0.8), abs=0.06)

    def test_basin_fractions_sum_to_one(self):
        rng = np.random.default_rng(5)
        vals = rng.random((15, 17))
        rep = detect_funnels(synthetic_grid(vals))
        assert sum(p.basin_fraction for p in rep.funnel_points) == pytest.approx(1.0, abs=1e-12)

    def test_scaling_invariance(self):
        rng = np.random.default_rng(6)
        vals = rng.random((12, 12))
        a = detect_funnels(synthetic_grid(vals))
        b = detect_funnels(synthetic_grid(5.0 * vals))
        assert a.count == b.count

    def test_plateau_merges_to_single_funnel(self):
        vals = np.ones((6, 6))
        vals[:, :3] = 2.0                       # ramp onto a flat half
        rep = detect_funnels(synthetic_grid(vals), flat_tol=1e-9)
        assert rep.count == 1

    def test_tie_break_prefers_larger_x_then_c(self):
        vals = np.zeros((4, 4))                 # all-flat: one plateau
        rep = detect_funnels(synthetic_grid(vals), flat_tol=1e-9)
        assert rep.count == 1
        p = rep.funnel_points[0]
        assert p.x == pytest.approx(1.0)
        assert p.c == pytest.approx(1.0)

    def test_no_feasible_nodes(self):
        grid = synthetic_grid([[np.nan]])
        with pytest.raises(ValueError):
            detect_funnels(grid)

    def test_flow_edges_shape(self):
        vals = np.tile(np.linspace(1.0, 0.0, 5), (4, 1))
        rep = detect_funnels(synthetic_grid(vals))
        assert rep.flow_edges.shape == (4, 5)
        assert (rep.flow_edges >= -2).all()


class TestBoundManifolds:
    def test_plain_funnel_counts(self):
        g = build_manifold(1.5, "plain", (0.05, 1.0, 40), (0.0, 1.0, 40))
        rep = detect_funnels(g)
        assert rep.count == 2
        coords = sorted((p.x, p.c) for p in rep.funnel_points)
        assert coords[0] == pytest.approx((0.0, 1.0), abs=0.06)
        assert coords[1] == pytest.approx((1.0, 1.0), abs=0.06)

        g = build_manifold(2.3, "plain", (0.05, 1.0, 40), (0.0, 1.0, 40))
        rep = detect_funnels(g)
        assert rep.count == 1
        assert rep.funnel_points[0].value == 0.0

    def test_refinement_keeps_counts(self):
        # 2x refinement never drops alpha=1.5 below 2 funnels or lifts 2.3 above 1
        for steps in (40, 80):
            assert detect_funnels(build_manifold(1.5, "plain", (0.05, 1, steps), (0, 1, steps))).count >= 2
            assert detect_funnels(build_manifold(2.3, "plain", (0.05, 1, steps), (0, 1, steps))).count == 1

    def test_transition_bracket_around_critical(self):
        lo = detect_funnels(build_manifold(1.77, "plain", (0.05, 1, 40), (0, 1, 40))).count
        hi = detect_funnels(build_manifold(1.82, "plain", (0.05, 1, 40), (0, 1, 40))).count
        assert lo >= 2
        assert hi == 1

    def test_corner_value_zero(self):
        g = build_manifold(2.0, "plain", (0.05, 1.0, 20), (0.0, 1.0, 20))
        assert g.values[-1, -1] == 0.0          # node (c, x) = (1, 1)

    def test_infeasible_nodes_absent(self):
        g = build_manifold(2.0, "plain", (0.05, 1.0, 10), (0.0, 1.0, 10))
        for i, c in enumerate(g.c_axis):
            for j, x in enumerate(g.x_axis):
                assert np.isfinite(g.values[i, j]) == (x * x <= c * (1 + 1e-12))

    def test_failure_abort(self):
        # barrier values blow up at c >= 1; a whole failing row aborts the build
        with pytest.raises(RuntimeError):
            build_manifold(1.5, BoundVariant("barrier", 12.0), (0.9, 1.0, 5), (0.0, 0.5, 5))


class TestBarrierManifold:
    def test_validation(self):
        with pytest.raises(ValueError):
            barrier_manifold(1.5, 0.0, GridSpec((0.05, 0.9, 5), (0, 1, 5)))
        with pytest.raises(ValueError):
            barrier_manifold(1.5, 12.0, GridSpec((0.05, 1.0, 5), (0, 1, 5)))

    def test_undesired_funnel_dominates_below_critical(self):
        # at alpha = 1.4 the collector sits at zero overlap; at 1.7932 the
        # aligned boundary collector takes over
        spec = GridSpec((0.05, 0.99, 40), (0.0, 1.0, 40))
        low = detect_funnels(barrier_manifold(1.4, 12.0, spec))
        main_low = max(low.funnel_points, key=lambda p: p.basin_fraction)
        assert main_low.x <= 0.05

        high = detect_funnels(barrier_manifold(1.7932, 12.0, spec))
        main_high = max(high.funnel_points, key=lambda p: p.basin_fraction)
        assert high.count == 1
        assert main_high.x / math.sqrt(main_high.c) >= 0.9

    def test_large_t0_limit_matches_plain_structure(self):
        spec = GridSpec((0.05, 0.99, 30), (0.0, 1.0, 30))
        plain_count = detect_funnels(
            build_manifold(1.5, "plain", spec.c_range, spec.x_range)).count
        counts = [detect_funnels(barrier_manifold(1.5, t0, spec)).count
                  for t0 in (1e3, 1e5, 1e7)]
        assert counts == [plain_count] * 3


class TestCriticalAlpha:
    def test_bad_bracket_inverted(self):
        with pytest.raises(BadBracket):
            critical_alpha("plain", "c1_curve_monotone", (2.5, 1.2), 1e-3,
                           GridSpec((1, 1, 1), (0, 1, 50)))

    def test_bad_bracket_constant_predicate(self):
        # predicate already true at the low edge
        with pytest.raises(BadBracket):
            critical_alpha("plain", "c1_curve_monotone", (2.2, 2.8), 1e-2,
                           GridSpec((1, 1, 1), (0, 1, 50)))

    def test_unknown_predicate(self):
        with pytest.raises(ValueError):
            critical_alpha("plain", "weird", (1.2, 2.5), 1e-2,
                           GridSpec((1, 1, 1), (0, 1, 50)))

    def test_plain_critical_value(self):
        crit = critical_alpha("plain", "c1_curve_monotone", (1.2, 2.5), 1e-3,
                              GridSpec((1.0, 1.0, 1), (0.0, 1.0, 120)))
        assert crit == pytest.approx(1.7932, abs=0.005)

    def test_single_funnel_predicate(self):
        crit = critical_alpha("plain", "single_funnel", (1.5, 2.3), 0.05,
                              GridSpec((0.05, 1.0, 30), (0.0, 1.0, 30)))
        assert 1.6 <= crit <= 2.0

    def test_max_rise(self):
        assert max_rise(np.array([3.0, 2.0, 1.0])) == 0.0
        assert max_rise(np.array([1.0, 0.5, 2.0, 0.1])) == pytest.approx(1.5)


def test_default_flat_tol_scales():
    vals = np.array([[0.0, 1.0]])
    g = synthetic_grid(vals, np.array([1.0]), np.array([0.0, 1.0]))
    assert default_flat_tol(g) == pytest.approx(1e-9)
