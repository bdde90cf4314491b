"""Parametric manifolds of bound values and their funnel structure.

A manifold is a rectangular (c, x) lattice holding one bound value per
feasible node (feasibility: x^2 <= c).  The discrete descent flow sends
every node to its strictly lowest 8-neighbor; nodes with no neighbor
lower by more than a flatness tolerance are sinks, adjacent sinks at the
same height merge into plateau components, and each component is one
*funnel point* with the fraction of the lattice draining into it.

A single funnel means every descent path reaches the same collector, the
regime in which descending recovery algorithms succeed; the smallest
oversampling ratio at which the undesired funnels disappear is located by
bisection (either on the funnel count or on monotonicity of the c = 1
slice, which is how the critical ratios are defined).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .numerics import QuadratureSpec
from .rdt_lifted import LiftProfile, phi0_lifted
from .rdt_plain import ParamPoint, phi0_plain
from .rdt_squared import phi0_sq, phi0_sq_lifted

__all__ = [
    "BadBracket",
    "BoundVariant",
    "GridSpec",
    "ManifoldGrid",
    "FunnelPoint",
    "FunnelReport",
    "build_manifold",
    "barrier_manifold",
    "detect_funnels",
    "default_flat_tol",
    "critical_alpha",
    "curve_values",
    "max_rise",
]

TIE_BREAK_RULE = "strictly-lowest 8-neighbor; ties toward larger x, then larger c"

_FEAS_SLOP = 1e-12


class BadBracket(ValueError):
    """The bisection bracket does not straddle the predicate."""


@dataclass(frozen=True)
class BoundVariant:
    """Which bound a manifold holds; ``barrier`` composes the plain bound
    with the norm barrier -log(1 - c) at weight t0 (so c < 1 is required)."""

    kind: str
    t0: float | None = None

    _KINDS = ("plain", "lifted", "plain_sq", "lifted_sq", "barrier")

    def __post_init__(self):
        if self.kind not in self._KINDS:
            raise ValueError(f"unknown variant {self.kind!r}; expected one of {self._KINDS}")
        if self.kind == "barrier":
            if self.t0 is None or not self.t0 > 0:
                raise ValueError("barrier variant needs t0 > 0")
        elif self.t0 is not None:
            raise ValueError(f"variant {self.kind!r} takes no t0")

    @classmethod
    def parse(cls, text: str) -> "BoundVariant":
        if text.startswith("barrier"):
            if ":" in text:
                return cls("barrier", float(text.split(":", 1)[1]))
            raise ValueError("barrier variant is spelled 'barrier:<t0>'")
        return cls(text)

    def label(self) -> str:
        return f"barrier:{self.t0:g}" if self.kind == "barrier" else self.kind


@dataclass(frozen=True)
class GridSpec:
    """Inclusive linspace ranges: (lo, hi, number_of_points) per axis."""

    c_range: tuple
    x_range: tuple

    def __post_init__(self):
        for name, (lo, hi, steps) in (("c", self.c_range), ("x", self.x_range)):
            if not (hi >= lo and steps >= 1):
                raise ValueError(f"bad {name}_range {(lo, hi, steps)}")

    def c_axis(self) -> np.ndarray:
        lo, hi, n = self.c_range
        return np.linspace(lo, hi, int(n))

    def x_axis(self) -> np.ndarray:
        lo, hi, n = self.x_range
        return np.linspace(lo, hi, int(n))


@dataclass
class ManifoldGrid:
    alpha: float
    variant: BoundVariant
    c_axis: np.ndarray
    x_axis: np.ndarray
    values: np.ndarray          # (len(c_axis), len(x_axis)); NaN = infeasible
    failed_nodes: int = 0

    def feasible_mask(self) -> np.ndarray:
        return np.isfinite(self.values)


@dataclass(frozen=True)
class FunnelPoint:
    c: float
    x: float
    value: float
    basin_fraction: float
    boundary: bool


@dataclass
class FunnelReport:
    funnel_points: list
    count: int
    flow_edges: np.ndarray      # flat successor index; -1 sink, -2 infeasible
    tie_break: str = TIE_BREAK_RULE


# ---------------------------------------------------------------------------
# Bound evaluation
# ---------------------------------------------------------------------------

def _point_value(alpha: float, variant: BoundVariant, c: float, x: float,
                 quad: QuadratureSpec, opt_tol: float,
                 profile: LiftProfile | None = None,
                 coarse_n: int = 32) -> float:
    pt = ParamPoint(c, x)
    kind = variant.kind
    if kind == "plain":
        return phi0_plain(alpha, pt, quad).phi0
    if kind == "lifted":
        return phi0_lifted(alpha, pt, quad, opt_tol, profile=profile,
                           coarse_n=coarse_n).phi0_bar
    if kind == "plain_sq":
        return phi0_sq(alpha, pt, quad, opt_tol)
    if kind == "lifted_sq":
        return phi0_sq_lifted(alpha, pt, quad, opt_tol).phi0_bar
    if kind == "barrier":
        if c >= 1.0:
            raise ValueError("barrier manifolds require c < 1")
        return variant.t0 * phi0_plain(alpha, pt, quad).phi0 - math.log1p(-c)
    raise AssertionError(kind)


def _node_worker(args):
    alpha, variant_label, c, x, quad, opt_tol, coarse_n = args
    variant = BoundVariant.parse(variant_label)
    try:
        return _point_value(alpha, variant, c, x, quad, opt_tol, coarse_n=coarse_n)
    except Exception:
        return None


def build_manifold(alpha: float, variant: BoundVariant, c_range, x_range,
                   quad: QuadratureSpec | None = None, opt_tol: float = 1e-6,
                   threads: int = 1, coarse_n: int = 32) -> ManifoldGrid:
    """Evaluate the bound on every feasible node of the (c, x) lattice.

    Individual node failures are tolerated up to 1% of the feasible count
    (failed nodes are dropped like infeasible ones); beyond that the build
    aborts.  ``threads`` > 1 distributes nodes over worker processes.
    """
    if isinstance(variant, str):
        variant = BoundVariant.parse(variant)
    quad = quad or QuadratureSpec()
    spec = GridSpec(tuple(c_range), tuple(x_range))
    c_axis, x_axis = spec.c_axis(), spec.x_axis()
    values = np.full((len(c_axis), len(x_axis)), np.nan)

    tasks = []
    for i, c in enumerate(c_axis):
        for j, x in enumerate(x_axis):
            if c > 0 and x * x <= c * (1.0 + _FEAS_SLOP):
                tasks.append((i, j, float(c), float(x)))

    failed = 0
    if threads > 1:
        args = [(alpha, variant.label(), c, x, quad, opt_tol, coarse_n)
                for _, _, c, x in tasks]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_node_worker, args, chunksize=16))
        for (i, j, _, _), val in zip(tasks, results):
            if val is None:
                failed += 1
            else:
                values[i, j] = val
    else:
        for i, j, c, x in tasks:
            try:
                values[i, j] = _point_value(alpha, variant, c, x, quad, opt_tol,
                                            coarse_n=coarse_n)
            except Exception:
                failed += 1
    if tasks and failed > 0.01 * len(tasks):
        raise RuntimeError(f"{failed}/{len(tasks)} manifold nodes failed to evaluate")
    return ManifoldGrid(alpha=float(alpha), variant=variant, c_axis=c_axis,
                        x_axis=x_axis, values=values, failed_nodes=failed)


def barrier_manifold(alpha: float, t0: float, grid_spec: GridSpec,
                     quad: QuadratureSpec | None = None,
                     opt_tol: float = 1e-6, threads: int = 1) -> ManifoldGrid:
    """Manifold of t0 * phi0(c, x) - log(1 - c) on a c < 1 lattice."""
    if not t0 > 0:
        raise ValueError("t0 must be positive")
    if grid_spec.c_range[1] >= 1.0:
        raise ValueError("barrier manifolds require c_hi < 1")
    return build_manifold(alpha, BoundVariant("barrier", t0), grid_spec.c_range,
                          grid_spec.x_range, quad, opt_tol, threads)


# ---------------------------------------------------------------------------
# Funnel detection
# ---------------------------------------------------------------------------

def default_flat_tol(grid: ManifoldGrid) -> float:
    """1e-9 of the value range: above quadrature noise, below structure."""
    vals = grid.values[grid.feasible_mask()]
    if vals.size == 0:
        return 1e-15
    span = float(vals.max() - vals.min())
    return max(span * 1e-9, 1e-15)


_NEIGH = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def detect_funnels(grid: ManifoldGrid, flat_tol: float | None = None) -> FunnelReport:
    """Discrete steepest-descent flow and its sink structure.

    Every feasible node points to its strictly lowest feasible 8-neighbor
    (ties toward larger x, then larger c); a node whose best neighbor is
    not lower by more than ``flat_tol`` is a sink.  Sinks adjacent within
    ``flat_tol`` of each other merge into one plateau component, and a
    component whose level-set boundary drains elsewhere passes its water
    on; the exit-less components are the funnel points, each reported at
    its lowest member (same tie-break).
    """
    if flat_tol is None:
        flat_tol = default_flat_tol(grid)
    vals = grid.values
    nc, nx = vals.shape
    feas = np.isfinite(vals)
    if not feas.any():
        raise ValueError("manifold has no feasible nodes")

    # Lowest feasible row per column.  The feasibility boundary x = sqrt(c)
    # advances more than one c-cell per x-cell, so consecutive boundary
    # nodes need not be 8-adjacent; chain links between them keep the flow
    # along the boundary connected (on fully feasible rectangles the chain
    # coincides with the grid edge and adds nothing).
    boundary_row = {}
    for j in range(nx):
        rows = np.nonzero(feas[:, j])[0]
        if rows.size:
            boundary_row[j] = int(rows[0])

    def neighbors(i, j):
        for di, dj in _NEIGH:
            a, b = i + di, j + dj
            if 0 <= a < nc and 0 <= b < nx and feas[a, b]:
                yield a, b
        if boundary_row.get(j) == i:
            for dj in (-1, 1):
                b = j + dj
                a = boundary_row.get(b)
                if a is not None and abs(a - i) > 1:
                    yield a, b

    succ = np.full((nc, nx), -2, dtype=np.int64)
    for i in range(nc):
        for j in range(nx):
            if not feas[i, j]:
                continue
            best = None
            for a, b in neighbors(i, j):
                cand = (vals[a, b], grid.x_axis[b], grid.c_axis[a], a, b)
                if best is None or cand[0] < best[0] or (
                        cand[0] == best[0] and (cand[1], cand[2]) > (best[1], best[2])):
                    best = cand
            if best is not None and vals[i, j] - best[0] > flat_tol:
                succ[i, j] = best[3] * nx + best[4]
            else:
                succ[i, j] = -1

    # merge sinks into plateau components (union-find over adjacent sinks)
    sink_nodes = [(i, j) for i in range(nc) for j in range(nx) if succ[i, j] == -1]
    parent = {n: n for n in sink_nodes}

    def find(n):
        while parent[n] != n:
            parent[n] = parent[parent[n]]
            n = parent[n]
        return n

    sink_set = set(sink_nodes)
    for (i, j) in sink_nodes:
        for nb in neighbors(i, j):
            if nb in sink_set and abs(vals[nb] - vals[i, j]) <= flat_tol:
                ra, rb = find((i, j)), find(nb)
                if ra != rb:
                    parent[ra] = rb

    comp_of = {n: find(n) for n in sink_nodes}
    comp_members: dict = {}
    for n, root in comp_of.items():
        comp_members.setdefault(root, []).append(n)

    # map every feasible node to the sink component its flow reaches
    memo: dict = {}
    for i in range(nc):
        for j in range(nx):
            if not feas[i, j]:
                continue
            path = []
            node = (i, j)
            while node not in memo:
                path.append(node)
                s = succ[node]
                if s == -1:
                    memo[node] = comp_of[node]
                    break
                node = (s // nx, s % nx)
            root = memo[node]
            for p in path:
                memo[p] = root

    # Plateau drainage: a sink component whose boundary touches a node at
    # its own level (within flat_tol) that drains elsewhere is not a
    # collector; its water exits through that level-set boundary.  Only
    # exit-less components remain funnel points.
    terminal: dict = {}

    def resolve(root):
        if root in terminal:
            return terminal[root]
        terminal[root] = root                   # provisional; guards cycles
        exits = []
        in_comp = set(comp_members[root])
        for member in comp_members[root]:
            mv = vals[member]
            for nb in neighbors(*member):
                if nb not in in_comp and vals[nb] <= mv + flat_tol:
                    exits.append((vals[nb], -grid.x_axis[nb[1]], -grid.c_axis[nb[0]], nb))
        for _, _, _, nb in sorted(exits):
            target = resolve(memo[nb])
            if target != root:
                terminal[root] = target
                return target
        return root

    for root in list(comp_members):
        resolve(root)

    drain_counts: dict = {}
    for i in range(nc):
        for j in range(nx):
            if feas[i, j]:
                final = terminal[memo[(i, j)]]
                drain_counts[final] = drain_counts.get(final, 0) + 1

    total = int(feas.sum())
    points = []
    for root, count in drain_counts.items():
        members = comp_members[root]
        rep = min(members, key=lambda n: (vals[n], -grid.x_axis[n[1]], -grid.c_axis[n[0]]))
        boundary = any(i in (0, nc - 1) or j in (0, nx - 1)
                       or not all(0 <= i + di < nc and 0 <= j + dj < nx
                                  and feas[i + di, j + dj] for di, dj in _NEIGH)
                       for i, j in members)
        points.append(FunnelPoint(c=float(grid.c_axis[rep[0]]),
                                  x=float(grid.x_axis[rep[1]]),
                                  value=float(vals[rep]),
                                  basin_fraction=count / total,
                                  boundary=bool(boundary)))
    points.sort(key=lambda p: (-p.basin_fraction, p.value))
    return FunnelReport(funnel_points=points, count=len(points), flow_edges=succ)


# ---------------------------------------------------------------------------
# Critical oversampling ratio
# ---------------------------------------------------------------------------

def max_rise(values: np.ndarray) -> float:
    """Largest climb above the running minimum; zero iff nonincreasing."""
    values = np.asarray(values, dtype=float)
    return float(np.max(values - np.minimum.accumulate(values)))


def curve_values(alpha: float, variant: BoundVariant, x_axis: np.ndarray,
                 quad: QuadratureSpec, opt_tol: float, c: float = 1.0,
                 profiles: dict | None = None, coarse_n: int = 32) -> np.ndarray:
    """Bound values along a fixed-c slice, reusing lifted profiles if given."""
    out = np.empty(len(x_axis))
    for k, x in enumerate(x_axis):
        prof = None
        if profiles is not None and variant.kind == "lifted":
            pt = ParamPoint(c, float(x))
            if pt.r > 0:
                prof = profiles.get(k)
                if prof is None:
                    prof = profiles[k] = LiftProfile(pt, quad)
        out[k] = _point_value(alpha, variant, c, float(x), quad, opt_tol,
                              profile=prof, coarse_n=coarse_n)
    return out


# noise floor of the bound evaluations; rises below this are not structure
_CURVE_RISE_TOL = 5e-9


def critical_alpha(variant: BoundVariant, predicate: str, bracket,
                   alpha_tol: float, grid_spec: GridSpec,
                   quad: QuadratureSpec | None = None, opt_tol: float = 1e-6,
                   flat_tol: float | None = None, coarse_n: int = 32) -> float:
    """Bisection on alpha for a landscape predicate.

    ``single_funnel``: the manifold on ``grid_spec`` has exactly one
    funnel point.  ``c1_curve_monotone``: the sampled x -> bound(1, x)
    curve has no rise above the flatness tolerance (equivalently no
    interior strict local maximum, since the curve ends at its global
    minimum).  The predicate must be False at the low edge and True at
    the high edge of the bracket.
    """
    if isinstance(variant, str):
        variant = BoundVariant.parse(variant)
    quad = quad or QuadratureSpec()
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise BadBracket(f"bracket ({lo}, {hi}) is not increasing")

    profiles: dict = {}
    x_axis = grid_spec.x_axis()

    if predicate == "c1_curve_monotone":
        def holds(alpha: float) -> bool:
            vals = curve_values(alpha, variant, x_axis, quad, opt_tol,
                                profiles=profiles, coarse_n=coarse_n)
            tol = flat_tol if flat_tol is not None else max(
                _CURVE_RISE_TOL, 1e-7 * (vals.max() - vals.min()))
            return max_rise(vals) <= tol
    elif predicate == "single_funnel":
        def holds(alpha: float) -> bool:
            grid = build_manifold(alpha, variant, grid_spec.c_range,
                                  grid_spec.x_range, quad, opt_tol,
                                  coarse_n=coarse_n)
            return detect_funnels(grid, flat_tol).count == 1
    else:
        raise ValueError(f"unknown predicate {predicate!r}")

    if holds(lo) or not holds(hi):
        raise BadBracket(
            f"predicate must be False at alpha={lo} and True at alpha={hi}")
    while hi - lo > alpha_tol:
        mid = 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
