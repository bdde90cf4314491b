"""Practical recovery stack for real phase retrieval.

Sensing model: y = |A xbar|^2 entrywise with A m-by-n iid standard normal
and ||xbar|| = 1.  Recovery works on the intensity residual

    f_plain(x) = sum_i (y_i - (a_i . x)^2)^2,

either unconstrained (``gradplain``) or through a log-barrier homotopy
that keeps ||x|| < 1 (``gradbar``; the barrier objective minimized is
t0 * f_plain(x) - log(1 - ||x||^2), with t0 growing geometrically).  The
``hybrid`` alternates the two with randomized sign reshuffles in between
to escape shallow traps, starting from the spectral initializer (top
eigenvector of A^T diag(y) A).  Success is recovery of xbar up to global
sign.
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import power_iteration

__all__ = [
    "DimensionMismatch",
    "InfeasiblePoint",
    "StallWarning",
    "ProblemInstance",
    "GradConfig",
    "BarrierSchedule",
    "ReshuffleConfig",
    "RunRecord",
    "f_plain",
    "grad_f_plain",
    "f_bar",
    "grad_f_bar",
    "gradback",
    "gradbar",
    "gradplain",
    "reshuffle",
    "hybrid",
    "hybrid_norm_sweep",
    "spectral_init",
    "success_test",
]


class DimensionMismatch(ValueError):
    pass


class InfeasiblePoint(ValueError):
    pass


class StallWarning(UserWarning):
    """Line search shrank below 1e-16; descent stopped early (non-fatal)."""


@dataclass(frozen=True)
class ProblemInstance:
    """A sensing matrix, the planted unit signal, and its measurements."""

    A: np.ndarray
    x_bar: np.ndarray
    y: np.ndarray
    seed: int

    def __post_init__(self):
        m, n = self.A.shape
        if self.x_bar.shape != (n,) or self.y.shape != (m,):
            raise DimensionMismatch("instance arrays are inconsistent")
        if abs(np.linalg.norm(self.x_bar) - 1.0) > 1e-12:
            raise ValueError("planted signal must have unit norm")
        if np.any(self.y < 0) or not np.array_equal(self.y, (self.A @ self.x_bar) ** 2):
            raise ValueError("measurements must equal (A x_bar)^2 exactly")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @classmethod
    def unchecked(cls, A, x_bar, y, seed) -> "ProblemInstance":
        """Bypass the realizability check (rescaled problems in norm sweeps)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "A", A)
        object.__setattr__(obj, "x_bar", x_bar)
        object.__setattr__(obj, "y", y)
        object.__setattr__(obj, "seed", seed)
        return obj


@dataclass(frozen=True)
class GradConfig:
    """Backtracking-descent constants.

    ``step_init`` of None resolves to 1e-2 / m for instance objectives
    (the residual is quartic with scale ~m) and to 1.0 for free-standing
    objectives.  The line search warm-starts from twice the previously
    accepted step; ``step_growth_cap`` bounds that start at a multiple of
    the resolved step (None lifts the bound).  The default cap of 1 keeps
    the iterates close to the gradient flow, which is what makes the
    recorded norm excursions meaningful; exploratory callers lift it.
    """

    step_init: float | None = None
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    grad_tol: float = 1e-8
    max_iters: int = 5000
    step_growth_cap: float | None = 1.0

    def __post_init__(self):
        if self.step_init is not None and not self.step_init > 0:
            raise ValueError("step_init must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.step_growth_cap is not None and not self.step_growth_cap > 0:
            raise ValueError("step_growth_cap must be positive or None")

    def resolved_step(self, m: int | None = None) -> float:
        if self.step_init is not None:
            return self.step_init
        return 1e-2 / m if m else 1.0

    def resolved_cap(self, m: int | None = None) -> float | None:
        if self.step_growth_cap is None:
            return None
        return self.step_growth_cap * self.resolved_step(m)


@dataclass(frozen=True)
class BarrierSchedule:
    """Geometric t0 ramp; the final stage is the first t0 >= t0_max."""

    t0_init: float = 5e-5
    growth: float = 1.2
    t0_max: float = 1e7

    def __post_init__(self):
        if not self.t0_init > 0:
            raise ValueError("t0_init must be positive")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")

    def stages(self) -> list:
        out = [self.t0_init]
        while out[-1] < self.t0_max:
            out.append(out[-1] * self.growth)
        return out


@dataclass(frozen=True)
class ReshuffleConfig:
    """Sign-reshuffle defaults.

    ``fraction``/``repeats`` drive a single reshuffle call.  Inside the
    hybrid the flip fraction and the candidate budget escalate round by
    round (``round_fractions``/``round_repeats``, final entries repeat):
    early rounds make small cheap moves, later rounds tunnel out of
    deeper traps.  Candidates are scored after ``lookahead_iters`` of
    plain descent; scoring them in place would reject every flip once the
    iterate sits at a converged local minimum and freeze the alternation.
    """

    fraction: float = 0.075
    repeats: int = 10
    round_fractions: tuple = (0.075, 0.10, 0.15, 0.25)
    round_repeats: tuple = (10, 60, 60, 60)
    lookahead_iters: int = 300


@dataclass
class RunRecord:
    """Outcome of one algorithm execution on one instance."""

    x_hat: np.ndarray
    overlap: float
    sq_norm: float
    stage_iters: list
    hybrid_rounds: int
    success: bool
    seed: int
    max_traj_sq_norm: float = 0.0
    round_overlaps: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------

def _check_dim(inst: ProblemInstance, x: np.ndarray):
    if x.shape != (inst.n,):
        raise DimensionMismatch(f"expected vector of length {inst.n}, got {x.shape}")


def f_plain(inst: ProblemInstance, x: np.ndarray) -> float:
    """||y - (A x)^2||_2^2; zero exactly on +-xbar in solvable instances."""
    _check_dim(inst, x)
    res = inst.y - (inst.A @ x) ** 2
    return float(res @ res)


def grad_f_plain(inst: ProblemInstance, x: np.ndarray) -> np.ndarray:
    _check_dim(inst, x)
    ax = inst.A @ x
    return -4.0 * (inst.A.T @ ((inst.y - ax * ax) * ax))


def f_bar(inst: ProblemInstance, t0: float, x: np.ndarray) -> float:
    """t0 * f_plain(x) - log(1 - ||x||^2), finite only inside the unit ball."""
    _check_dim(inst, x)
    sq = float(x @ x)
    if sq >= 1.0:
        raise InfeasiblePoint(f"||x||^2 = {sq} is outside the barrier domain")
    return t0 * f_plain(inst, x) - math.log1p(-sq)


def grad_f_bar(inst: ProblemInstance, t0: float, x: np.ndarray) -> np.ndarray:
    _check_dim(inst, x)
    sq = float(x @ x)
    if sq >= 1.0:
        raise InfeasiblePoint(f"||x||^2 = {sq} is outside the barrier domain")
    return t0 * grad_f_plain(inst, x) + 2.0 * x / (1.0 - sq)


# ---------------------------------------------------------------------------
# Descent machinery
# ---------------------------------------------------------------------------

@dataclass
class _DescentInfo:
    iterations: int = 0
    max_sq_norm: float = 0.0
    stalled: bool = False
    f_final: float = math.inf


_MIN_STEP = 1e-16


def _descend(objective, gradient, x0: np.ndarray, cfg: GradConfig, feasible,
             step0: float, step_cap: float | None = None) -> tuple:
    x = np.array(x0, dtype=float)
    fx = objective(x)
    info = _DescentInfo(max_sq_norm=float(x @ x), f_final=fx)
    step = step0
    for _ in range(cfg.max_iters):
        g = gradient(x)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= cfg.grad_tol * max(1.0, float(np.linalg.norm(x))):
            break
        gg = gnorm * gnorm
        # warm-started line search; an optional cap pins the step to the
        # designed scale where unbounded growth is harmful (barrier stages
        # would crush the iterate to zero and lose the initializer direction)
        t = 2.0 * step
        if step_cap is not None:
            t = min(t, step_cap)
        accepted = False
        while t >= _MIN_STEP:
            cand = x - t * g
            if feasible(cand):
                fc = objective(cand)
                if fc <= fx - cfg.armijo_c * t * gg:
                    x, fx, step = cand, fc, t
                    accepted = True
                    break
            t *= cfg.backtrack_factor
        info.iterations += 1
        if not accepted:
            info.stalled = True
            warnings.warn("line search stalled below minimal step", StallWarning,
                          stacklevel=3)
            break
        info.max_sq_norm = max(info.max_sq_norm, float(x @ x))
    info.f_final = fx
    return x, info


def gradback(objective, gradient, x0: np.ndarray, cfg: GradConfig | None = None,
             feasible=None) -> np.ndarray:
    """Armijo backtracking descent; accepted iterates stay feasible."""
    cfg = cfg or GradConfig()
    feasible = feasible or (lambda _: True)
    if not feasible(x0):
        raise InfeasiblePoint("starting point violates the feasibility predicate")
    x, _ = _descend(objective, gradient, x0, cfg, feasible, cfg.resolved_step(),
                    step_cap=cfg.resolved_cap())
    return x


def _ball_feasible(z: np.ndarray) -> bool:
    return float(z @ z) < 1.0


_STAGE_ITER_CAP = 60


def _gradbar_full(inst: ProblemInstance, x0: np.ndarray,
                  sched: BarrierSchedule, cfg: GradConfig) -> tuple:
    x = np.array(x0, dtype=float)
    nrm = np.linalg.norm(x)
    if nrm >= 1.0:
        x = x * (0.99 / nrm)
    step0 = cfg.resolved_step(inst.m)
    y_scale = float(inst.y @ inst.y)            # f_plain value at the origin
    agg = _DescentInfo(max_sq_norm=float(x @ x))
    for t0 in sched.stages():
        # gradients scale with the stage objective t0 * f_plain; an absolute
        # tolerance would grind late stages against float precision.  Stages
        # are deliberately inexact (iteration cap): the homotopy tracks the
        # central path through warm starts, it does not resolve each stage
        stage_cfg = dataclasses.replace(
            cfg, grad_tol=cfg.grad_tol * max(1.0, t0 * y_scale),
            max_iters=min(cfg.max_iters, _STAGE_ITER_CAP))
        x, info = _descend(lambda z, t=t0: f_bar(inst, t, z),
                           lambda z, t=t0: grad_f_bar(inst, t, z),
                           x, stage_cfg, _ball_feasible, step0, step_cap=step0)
        agg.iterations += info.iterations
        agg.max_sq_norm = max(agg.max_sq_norm, info.max_sq_norm)
        agg.stalled = agg.stalled or info.stalled
        agg.f_final = info.f_final
    return x, agg


def gradbar(inst: ProblemInstance, x0: np.ndarray,
            sched: BarrierSchedule | None = None,
            cfg: GradConfig | None = None) -> np.ndarray:
    """Barrier homotopy: descend t0 f_plain - log(1 - ||x||^2) as t0 ramps up."""
    x, _ = _gradbar_full(inst, x0, sched or BarrierSchedule(), cfg or GradConfig())
    return x


def _gradplain_full(inst: ProblemInstance, x0: np.ndarray, cfg: GradConfig) -> tuple:
    return _descend(lambda z: f_plain(inst, z), lambda z: grad_f_plain(inst, z),
                    np.array(x0, dtype=float), cfg, lambda _: True,
                    cfg.resolved_step(inst.m), step_cap=cfg.resolved_cap(inst.m))


def gradplain(inst: ProblemInstance, x0: np.ndarray,
              cfg: GradConfig | None = None) -> np.ndarray:
    """Unconstrained backtracking descent on f_plain."""
    x, _ = _gradplain_full(inst, x0, cfg or GradConfig())
    return x


def reshuffle(x: np.ndarray, fraction: float, repeats: int, scorer,
              rng: np.random.Generator) -> np.ndarray:
    """Best-of sign flips on a random coordinate subset.

    Each of ``repeats`` candidates flips ceil(fraction * n) uniformly
    chosen coordinates; the candidate with the strictly lowest score wins.
    Ties keep x, and "strictly" means beyond a relative margin: at a
    converged iterate all scores collapse toward zero and bare float
    comparison would let a corruption displace the solution.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    n = len(x)
    k = math.ceil(fraction * n)
    best = np.array(x, dtype=float)
    best_score = scorer(best)
    for _ in range(repeats):
        idx = rng.choice(n, size=k, replace=False)
        cand = np.array(x, dtype=float)
        cand[idx] = -cand[idx]
        sc = scorer(cand)
        if sc < best_score - 1e-9 * (1.0 + abs(best_score)):
            best, best_score = cand, sc
    return best


def spectral_init(inst: ProblemInstance) -> np.ndarray:
    """Top eigenvector of A^T diag(y) A, scaled to norm 0.99.

    The 0.99 scaling keeps the initializer strictly inside the barrier
    domain.  Matrix-free: only products with A and A^T are formed.
    """
    def apply(v):
        return inst.A.T @ (inst.y * (inst.A @ v))

    _, vec = power_iteration(apply, inst.n, tol=1e-6, max_iter=20000)
    return 0.99 * vec / np.linalg.norm(vec)


def success_test(inst: ProblemInstance, x_hat: np.ndarray, tol: float = 1e-3) -> bool:
    """Recovery up to global sign: min(||x - xbar||, ||x + xbar||) <= tol."""
    d1 = float(np.linalg.norm(x_hat - inst.x_bar))
    d2 = float(np.linalg.norm(x_hat + inst.x_bar))
    return min(d1, d2) <= tol


def _overlap(inst: ProblemInstance, x: np.ndarray) -> float:
    nrm = float(np.linalg.norm(x))
    if nrm == 0.0:
        return 0.0
    return float(x @ inst.x_bar) / nrm


def _record(inst, x, stage_iters, rounds, success, seed, max_sq, round_overlaps):
    return RunRecord(x_hat=x, overlap=_overlap(inst, x), sq_norm=float(x @ x),
                     stage_iters=stage_iters, hybrid_rounds=rounds,
                     success=success, seed=seed, max_traj_sq_norm=max_sq,
                     round_overlaps=round_overlaps)


def hybrid(inst: ProblemInstance, x0: np.ndarray,
           sched: BarrierSchedule | None = None, cfg: GradConfig | None = None,
           reshuffle_cfg: ReshuffleConfig | None = None, max_rounds: int = 4,
           seed: int | None = None, success_tol: float = 1e-3) -> RunRecord:
    """Alternate gradbar / reshuffle / gradplain / reshuffle until recovery.

    Rounds stop early once the sign-resolved distance to the planted
    signal passes the success test; a start that already passes returns
    immediately with zero descent work.
    """
    sched = sched or BarrierSchedule()
    cfg = cfg or GradConfig()
    rcfg = reshuffle_cfg or ReshuffleConfig()
    seed = int(seed) if seed is not None else inst.seed
    rng = np.random.default_rng(seed)
    # exploration stages favor fast adaptive steps over flow fidelity
    stage_cfg = dataclasses.replace(cfg, step_growth_cap=None)
    look_cfg = dataclasses.replace(stage_cfg, max_iters=rcfg.lookahead_iters)

    def scorer(z):
        zz, _ = _gradplain_full(inst, z, look_cfg)
        return f_plain(inst, zz)

    a = np.array(x0, dtype=float)
    max_sq = float(a @ a)
    stage_iters: list = []
    round_overlaps: list = []
    if success_test(inst, a, success_tol):
        return _record(inst, a, stage_iters, 0, True, seed, max_sq, round_overlaps)

    success = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        fr = rcfg.round_fractions[min(rounds - 1, len(rcfg.round_fractions) - 1)]
        rep = rcfg.round_repeats[min(rounds - 1, len(rcfg.round_repeats) - 1)]
        a, info_b = _gradbar_full(inst, a, sched, cfg)
        a = reshuffle(a, fr, rep, scorer, rng)
        a, info_p = _gradplain_full(inst, a, stage_cfg)
        stage_iters += [info_b.iterations, info_p.iterations]
        max_sq = max(max_sq, info_b.max_sq_norm, info_p.max_sq_norm, float(a @ a))
        if success_test(inst, a, success_tol):
            round_overlaps.append(_overlap(inst, a))
            success = True
            break
        a = reshuffle(a, fr, rep, scorer, rng)
        round_overlaps.append(_overlap(inst, a))
        if success_test(inst, a, success_tol):
            success = True
            break
    return _record(inst, a, stage_iters, rounds, success, seed, max_sq, round_overlaps)


def hybrid_norm_sweep(inst: ProblemInstance, candidate_norms, x0: np.ndarray,
                      **hybrid_kwargs) -> RunRecord:
    """Hybrid without the known-norm assumption: try candidate norms.

    For each guessed norm nu the measurements are rescaled by 1/nu^2, the
    hybrid runs on the rescaled problem, and its output is scaled back;
    the answer with the lowest residual on the original instance wins.
    Off by default everywhere else; the unit-norm assumption stands.
    """
    best_rec, best_score = None, math.inf
    for nu in candidate_norms:
        scaled = ProblemInstance.unchecked(inst.A, inst.x_bar,
                                           inst.y / (nu * nu), inst.seed)
        rec = hybrid(scaled, np.array(x0, dtype=float), **hybrid_kwargs)
        x_back = rec.x_hat * nu
        score = f_plain(inst, x_back)
        if score < best_score:
            rec.x_hat = x_back
            rec.overlap = _overlap(inst, x_back)
            rec.sq_norm = float(x_back @ x_back)
            rec.success = success_test(inst, x_back,
                                       hybrid_kwargs.get("success_tol", 1e-3))
            best_rec, best_score = rec, score
    return best_rec
