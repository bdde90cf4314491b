"""Shared numerical kernels.

Everything downstream (bound evaluation, manifold sweeps, the recovery
algorithms) is built on the primitives in this module:

* Gaussian-weighted quadrature on a truncated window, adaptive
  Gauss-Kronrod (G7/K15) with panel bisection, in one and two dimensions.
* Real nonnegative roots of depressed cubics z^3 + p z + q = 0, both a
  scalar API and a vectorized kernel usable inside integrands.
* A scalar maximizer (coarse grid scan + golden-section refinement).
* Power iteration for symmetric PSD operators given only a matvec.
* Seeded Gaussian sampling with per-worker stream derivation.

All routines are pure given their inputs; the sampler is the only
stateful object.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NonConvergence",
    "DegenerateBracket",
    "QuadratureSpec",
    "CubicCandidates",
    "gauss_weighted_integral",
    "gauss_weighted_integral_2d",
    "cubic_real_nonneg_roots",
    "cubic_real_roots_vec",
    "maximize_scalar",
    "minimize_scalar_bracketed",
    "power_iteration",
    "gaussian_sampler",
    "GaussianSampler",
    "SQRT_2PI",
]

SQRT_2PI = math.sqrt(2.0 * math.pi)


class NonConvergence(RuntimeError):
    """An iterative routine exhausted its budget without meeting tolerance."""


class DegenerateBracket(ValueError):
    """A bracketed search was given an empty or inverted bracket."""


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

# Kronrod 15-point nodes on [-1, 1] (positive half; symmetric) and weights,
# with the embedded Gauss-7 rule on the odd-indexed nodes.
_K15_NODES = np.array([
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.0,
])
_K15_WEIGHTS = np.array([
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728,
])
_G7_WEIGHTS = np.array([
    0.129484966168870, 0.279705391489277, 0.381830050505119,
    0.417959183673469,
])

_XK = np.concatenate([-_K15_NODES[:-1], _K15_NODES[::-1]])      # 15 ascending
_WK = np.concatenate([_K15_WEIGHTS[:-1], _K15_WEIGHTS[::-1]])
_WG_FULL = np.zeros(15)
_WG_FULL[1:-1:2] = np.concatenate([_G7_WEIGHTS[:-1], _G7_WEIGHTS[::-1]])


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy budget for the Gaussian-weighted integrators.

    ``truncation_radius`` is the half-width of the integration window in
    standard deviations; the N(0,1) tail beyond 6 is below 1e-9, and the
    default window of 10 puts the truncation error below 1e-22 for any
    polynomially bounded integrand.
    """

    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    truncation_radius: float = 10.0
    max_subdivisions: int = 2000

    def __post_init__(self) -> None:
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.truncation_radius < 6:
            raise ValueError("truncation_radius must be >= 6")
        if self.max_subdivisions < 10:
            raise ValueError("max_subdivisions must be >= 10")


def _panel_sums(f, lo: np.ndarray, hi: np.ndarray):
    """Kronrod and Gauss sums of f on each panel [lo_i, hi_i], one f call."""
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * _XK[None, :]
    vals = f(pts.ravel()).reshape(pts.shape)
    k = half * (vals @ _WK)
    g = half * (vals @ _WG_FULL)
    return k, g


def _adaptive_1d(f, a: float, b: float, spec: QuadratureSpec) -> float:
    """Adaptive bisection of [a, b] driven by the K15-G7 error estimate."""
    edges = np.linspace(a, b, 9)
    lo, hi = edges[:-1], edges[1:]
    k, g = _panel_sums(f, lo, hi)
    err = np.abs(k - g)
    splits = 0
    while True:
        total = float(np.sum(k))
        tol = max(spec.abs_tol, spec.rel_tol * abs(total))
        if float(np.sum(err)) <= tol:
            return total
        if splits >= spec.max_subdivisions:
            raise NonConvergence(
                f"quadrature error {np.sum(err):.3e} above tolerance {tol:.3e} "
                f"after {splits} subdivisions")
        # split the worst panels (up to a quarter of the live set per round)
        n_split = max(1, len(err) // 4)
        idx = np.argsort(err)[-n_split:]
        keep = np.ones(len(err), bool)
        keep[idx] = False
        mid = 0.5 * (lo[idx] + hi[idx])
        new_lo = np.concatenate([lo[keep], lo[idx], mid])
        new_hi = np.concatenate([hi[keep], mid, hi[idx]])
        nk, ng = _panel_sums(f, np.concatenate([lo[idx], mid]),
                             np.concatenate([mid, hi[idx]]))
        k = np.concatenate([k[keep], nk])
        err = np.concatenate([err[keep], np.abs(nk - ng)])
        lo, hi = new_lo, new_hi
        splits += len(idx)


def gauss_weighted_integral(f, domain: str, spec: QuadratureSpec | None = None) -> float:
    """Integral of f against the standard Gaussian weight e^{-g^2/2}/sqrt(2 pi).

    ``domain`` is ``"full_line"`` for (-inf, inf) or ``"half_line"`` for
    [0, inf); both are truncated at ``spec.truncation_radius``.  Half-line
    results carry the plain weight; callers that need the doubled weight
    2/sqrt(2 pi) multiply by two themselves.  ``f`` must accept ndarray
    arguments.

    Raises NonConvergence if the subdivision budget is exhausted.
    """
    spec = spec or QuadratureSpec()
    if domain not in ("half_line", "full_line"):
        raise ValueError(f"unknown domain {domain!r}")
    R = spec.truncation_radius
    a = 0.0 if domain == "half_line" else -R

    def weighted(g):
        return np.asarray(f(g), dtype=float) * np.exp(-0.5 * g * g) / SQRT_2PI

    return _adaptive_1d(weighted, a, R, spec)


def _panel_sums_2d(f, boxes: np.ndarray):
    """Tensor K15xK15 vs G7xG7 sums of f over each box [x0,x1]x[y0,y1]."""
    x0, x1, y0, y1 = boxes.T
    mx = 0.5 * (x0 + x1)[:, None]
    hx = 0.5 * (x1 - x0)[:, None]
    my = 0.5 * (y0 + y1)[:, None]
    hy = 0.5 * (y1 - y0)[:, None]
    gx = mx + hx * _XK[None, :]                       # (n, 15)
    gy = my + hy * _XK[None, :]
    X = gx[:, :, None]
    Y = gy[:, None, :]
    vals = f(np.broadcast_to(X, (len(boxes), 15, 15)).ravel(),
             np.broadcast_to(Y, (len(boxes), 15, 15)).ravel())
    vals = np.asarray(vals, dtype=float).reshape(len(boxes), 15, 15)
    jac = (hx * hy[:, 0:1])[:, 0]
    k = jac * np.einsum("nij,i,j->n", vals, _WK, _WK)
    g = jac * np.einsum("nij,i,j->n", vals, _WG_FULL, _WG_FULL)
    return k, g


def gauss_weighted_integral_2d(f, spec: QuadratureSpec | None = None,
                               radius: float = 8.0) -> float:
    """Integral of f(u, v) against the bivariate standard Gaussian weight.

    Tensor-product adaptive Gauss-Kronrod on [-radius, radius]^2 with
    quadtree refinement of the worst panels.  ``f`` must be vectorized.
    Raises NonConvergence when the panel budget runs out; callers with
    discontinuity-ridden integrands are expected to catch it and fall back
    to quasi-Monte-Carlo.
    """
    spec = spec or QuadratureSpec()

    def weighted(u, v):
        w = np.exp(-0.5 * (u * u + v * v)) / (2.0 * math.pi)
        return np.asarray(f(u, v), dtype=float) * w

    edges = np.linspace(-radius, radius, 7)
    boxes = np.array([(a, b, c, d)
                      for a, b in zip(edges[:-1], edges[1:])
                      for c, d in zip(edges[:-1], edges[1:])])
    k, g = _panel_sums_2d(weighted, boxes)
    err = np.abs(k - g)
    splits = 0
    while True:
        total = float(np.sum(k))
        tol = max(spec.abs_tol, spec.rel_tol * abs(total))
        if float(np.sum(err)) <= tol:
            return total
        if splits >= spec.max_subdivisions:
            raise NonConvergence(
                f"2-D quadrature error {np.sum(err):.3e} above {tol:.3e} "
                f"after {splits} panel splits")
        n_split = max(1, len(err) // 8)
        idx = np.argsort(err)[-n_split:]
        keep = np.ones(len(err), bool)
        keep[idx] = False
        quads = []
        for x0, x1, y0, y1 in boxes[idx]:
            xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
            quads += [(x0, xm, y0, ym), (xm, x1, y0, ym),
                      (x0, xm, ym, y1), (xm, x1, ym, y1)]
        quads = np.array(quads)
        nk, ng = _panel_sums_2d(weighted, quads)
        boxes = np.concatenate([boxes[keep], quads])
        k = np.concatenate([k[keep], nk])
        err = np.concatenate([err[keep], np.abs(nk - ng)])
        splits += len(idx)


# ---------------------------------------------------------------------------
# Cubic root candidates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CubicCandidates:
    """Real nonnegative roots of z^3 + p_c z + q_c = 0, plus the boundary 0."""

    p_c: float
    q_c: float
    candidates: tuple = field(default_factory=tuple)


def cubic_real_roots_vec(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """All real roots of z^3 + p z + q = 0 for arrays p, q.

    Returns shape (3,) + p.shape with NaN padding where fewer than three
    real roots exist.  The three-real-root branch (negative discriminant)
    uses the trigonometric form, so no complex arithmetic appears.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    disc = 0.25 * q * q + p * p * p / 27.0
    roots = np.full((3,) + p.shape, np.nan)

    single = disc >= 0
    if np.any(single):
        s = np.sqrt(disc[single])
        half_q = 0.5 * q[single]
        roots[0][single] = np.cbrt(-half_q + s) + np.cbrt(-half_q - s)

    triple = ~single
    if np.any(triple):
        pt, qt = p[triple], q[triple]          # disc < 0 forces p < 0
        amp = np.sqrt(-pt / 3.0)
        cos_arg = np.clip(1.5 * qt / (pt * amp), -1.0, 1.0)
        theta = np.arccos(cos_arg)
        for kk in range(3):
            roots[kk][triple] = 2.0 * amp * np.cos(theta / 3.0 - 2.0 * math.pi * kk / 3.0)
    return roots


def cubic_real_nonneg_roots(p_c: float, q_c: float) -> CubicCandidates:
    """Real nonnegative roots of z^3 + p_c z + q_c = 0, together with 0.

    Roots are polished by two Newton steps so each nonzero candidate z
    satisfies |z^3 + p_c z + q_c| <= 1e-8 * max(1, |q_c|).
    """
    if not (math.isfinite(p_c) and math.isfinite(q_c)):
        raise ValueError("cubic coefficients must be finite")
    raw = cubic_real_roots_vec(np.array([p_c]), np.array([q_c]))[:, 0]
    cands = [0.0]
    for z in raw:
        if not np.isfinite(z):
            continue
        for _ in range(2):                     # Newton polish
            fz = z * z * z + p_c * z + q_c
            dz = 3.0 * z * z + p_c
            if dz != 0.0:
                step = fz / dz
                if abs(step) < 1.0 + abs(z):
                    z = z - step
        if z >= -1e-12:
            z = max(z, 0.0)
            if all(abs(z - c) > 1e-10 * max(1.0, abs(z)) for c in cands):
                cands.append(float(z))
    return CubicCandidates(p_c=float(p_c), q_c=float(q_c), candidates=tuple(sorted(cands)))


# ---------------------------------------------------------------------------
# Scalar optimization
# ---------------------------------------------------------------------------

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_max(f, lo: float, hi: float, tol: float):
    """Golden-section maximization on [lo, hi] to bracket width <= tol."""
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    while (b - a) > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        if fc > best_f:
            best_x, best_f = c, fc
        if fd > best_f:
            best_x, best_f = d, fd
    return best_x, best_f


def maximize_scalar(f, bracket, tol: float = 1e-8, grid_points: int = 64):
    """Maximize a scalar function on a bracket.

    A coarse scan (log-spaced when the bracket spans more than two decades
    of positive values, linear otherwise) locates the best cell, and
    golden-section refinement shrinks the argmax interval to ``tol``.
    Returns (argmax, max).  The caller accepts a local maximizer when f is
    not unimodal.
    """
    lo, hi = float(bracket[0]), float(bracket[1])
    if not lo < hi:
        raise DegenerateBracket(f"bracket ({lo}, {hi}) is not increasing")
    if lo > 0 and hi / lo > 100.0:
        grid = np.exp(np.linspace(math.log(lo), math.log(hi), grid_points))
    else:
        grid = np.linspace(lo, hi, grid_points)
    vals = np.array([f(g) for g in grid], dtype=float)
    k = int(np.argmax(vals))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, grid_points - 1)]
    gx, gv = _golden_max(f, float(a), float(b), tol)
    if vals[k] >= gv:
        return float(grid[k]), float(vals[k])
    return float(gx), float(gv)


def minimize_scalar_bracketed(f, bracket, tol: float = 1e-8, grid_points: int = 64):
    """Companion minimizer; same strategy as :func:`maximize_scalar`."""
    argmax, fmax = maximize_scalar(lambda t: -f(t), bracket, tol, grid_points)
    return argmax, -fmax


# ---------------------------------------------------------------------------
# Power iteration
# ---------------------------------------------------------------------------

def power_iteration(m_apply, dim: int, tol: float = 1e-10, max_iter: int = 20000):
    """Leading eigenpair of a symmetric PSD operator given as a matvec.

    Stops when ||M v - lambda v|| <= tol * lambda (or ||M v|| <= tol for a
    vanishing top eigenvalue).  On a degenerate top eigenspace any
    converged unit vector is acceptable and returned as-is.
    """
    rng = np.random.default_rng(0x9E3779B9)     # fixed seed: deterministic output
    v = rng.standard_normal(dim)
    v /= np.linalg.norm(v)
    for _ in range(max_iter):
        mv = np.asarray(m_apply(v), dtype=float)
        lam = float(v @ mv)
        resid = np.linalg.norm(mv - lam * v)
        if resid <= tol * abs(lam) or np.linalg.norm(mv) <= tol:
            return lam, v
        nrm = np.linalg.norm(mv)
        if nrm == 0.0:
            return 0.0, v
        v = mv / nrm
    raise NonConvergence(f"power iteration: residual above tolerance after {max_iter} iterations")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

class GaussianSampler:
    """Reproducible stream of iid standard normal draws."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)

    def draw(self, n: int) -> np.ndarray:
        return self._rng.standard_normal(int(n))

    def __iter__(self):
        while True:
            yield float(self._rng.standard_normal())

    @classmethod
    def for_worker(cls, master_seed: int, worker_index: int) -> "GaussianSampler":
        """Private per-worker stream derived from (master_seed, worker_index)."""
        ss = np.random.SeedSequence([int(master_seed), int(worker_index)])
        s = cls(0)
        s.seed = int(ss.generate_state(1)[0])
        s._rng = np.random.default_rng(ss)
        return s


def gaussian_sampler(seed: int) -> GaussianSampler:
    return GaussianSampler(seed)
