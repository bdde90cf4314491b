"""Monte-Carlo phase-transition harness.

Sweeps the oversampling ratio, generates fresh seeded instances, runs the
recovery algorithms from the spectral initializer, and aggregates success
rates per (algorithm, alpha).  Per-trial seeds are stable 64-bit hashes
of (master_seed, alpha_index, trial, tag), so trials are independent,
order-insensitive, and reproducible across runs and processes; the
instance seed deliberately excludes the algorithm tag so that competing
algorithms face identical instances.
"""

from __future__ import annotations

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import algorithms as alg
from .algorithms import (BarrierSchedule, GradConfig, ProblemInstance,
                         ReshuffleConfig, RunRecord)
from .manifold import BoundVariant, GridSpec, critical_alpha

__all__ = [
    "SweepSpec",
    "AlgoConfigs",
    "TransitionRow",
    "TransitionTable",
    "generate_instance",
    "trial_seed",
    "run_single",
    "run_sweep",
    "theoretical_overlay",
    "desk_spec",
    "paper_spec",
]

_ALGORITHMS = ("hybrid", "gradplain", "gradbar")


@dataclass(frozen=True)
class SweepSpec:
    n: int
    alpha_values: tuple
    trials_per_alpha: int
    algorithms: tuple = ("hybrid",)
    master_seed: int = 0
    success_tol: float = 1e-3

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("sweep needs n >= 10")
        if self.trials_per_alpha < 1:
            raise ValueError("need at least one trial per alpha")
        alphas = tuple(float(a) for a in self.alpha_values)
        if any(a <= 1 for a in alphas) or list(alphas) != sorted(alphas):
            raise ValueError("alpha_values must be sorted and all > 1")
        object.__setattr__(self, "alpha_values", alphas)
        algos = tuple(self.algorithms)
        if not algos or any(a not in _ALGORITHMS for a in algos):
            raise ValueError(f"algorithms must be a nonempty subset of {_ALGORITHMS}")
        object.__setattr__(self, "algorithms", algos)


@dataclass(frozen=True)
class AlgoConfigs:
    grad: GradConfig = field(default_factory=GradConfig)
    barrier: BarrierSchedule = field(default_factory=BarrierSchedule)
    reshuffle: ReshuffleConfig = field(default_factory=ReshuffleConfig)
    max_rounds: int = 4


@dataclass(frozen=True)
class TransitionRow:
    algorithm: str
    alpha: float
    trials: int
    successes: int
    success_rate: float
    mean_rounds: float
    mean_final_overlap: float
    max_traj_sq_norm: float


@dataclass
class TransitionTable:
    rows: list
    trials: list = field(default_factory=list)   # per-trial dicts, sorted


def desk_spec(master_seed: int = 0) -> SweepSpec:
    """Desk-scale default: n = 100, 20 trials per alpha."""
    return SweepSpec(n=100, alpha_values=tuple(np.round(np.arange(1.2, 3.21, 0.2), 10)),
                     trials_per_alpha=20, algorithms=("hybrid", "gradplain"),
                     master_seed=master_seed)


def paper_spec(master_seed: int = 0) -> SweepSpec:
    """Reference-scale preset (n = 300); expect hours, not minutes."""
    return SweepSpec(n=300, alpha_values=tuple(np.round(np.arange(1.2, 3.21, 0.2), 10)),
                     trials_per_alpha=20, algorithms=("hybrid", "gradplain"),
                     master_seed=master_seed)


def generate_instance(n: int, alpha: float, seed: int) -> ProblemInstance:
    """Fresh instance: iid normal A (m = round(alpha n)), spherical xbar."""
    if n < 2:
        raise ValueError("need n >= 2")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    m = int(round(alpha * n))
    rng = np.random.default_rng(int(seed))
    A = rng.standard_normal((m, n))
    x_bar = rng.standard_normal(n)
    x_bar /= np.linalg.norm(x_bar)
    y = (A @ x_bar) ** 2
    return ProblemInstance(A=A, x_bar=x_bar, y=y, seed=int(seed))


def trial_seed(master_seed: int, alpha_index: int, trial: int, tag: str) -> int:
    """Stable 63-bit hash; injective for all practical sweep sizes."""
    h = hashlib.blake2b(f"{master_seed}|{alpha_index}|{trial}|{tag}".encode(),
                        digest_size=8)
    return int.from_bytes(h.digest(), "big") & (2 ** 63 - 1)


def run_single(inst: ProblemInstance, algorithm: str, cfgs: AlgoConfigs,
               algo_seed: int, success_tol: float = 1e-3) -> RunRecord:
    """One algorithm run from the spectral initializer."""
    x0 = alg.spectral_init(inst)
    if algorithm == "hybrid":
        return alg.hybrid(inst, x0, cfgs.barrier, cfgs.grad, cfgs.reshuffle,
                          max_rounds=cfgs.max_rounds, seed=algo_seed,
                          success_tol=success_tol)
    if algorithm == "gradplain":
        x, info = alg._gradplain_full(inst, x0, cfgs.grad)
    elif algorithm == "gradbar":
        x, info = alg._gradbar_full(inst, x0, cfgs.barrier, cfgs.grad)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    ok = alg.success_test(inst, x, success_tol)
    return RunRecord(x_hat=x, overlap=alg._overlap(inst, x), sq_norm=float(x @ x),
                     stage_iters=[info.iterations], hybrid_rounds=1, success=ok,
                     seed=algo_seed, max_traj_sq_norm=info.max_sq_norm,
                     round_overlaps=[alg._overlap(inst, x)])


def _run_trial(args):
    spec, cfgs, algorithm, ai, trial = args
    inst_seed = trial_seed(spec.master_seed, ai, trial, "instance")
    algo_seed = trial_seed(spec.master_seed, ai, trial, algorithm)
    alpha = spec.alpha_values[ai]
    entry = {"algorithm": algorithm, "alpha": float(alpha), "seed": inst_seed,
             "success": False, "overlap": 0.0, "sq_norm": 0.0, "rounds": 0,
             "max_traj_sq_norm": 0.0, "failure": None}
    try:
        inst = generate_instance(spec.n, alpha, inst_seed)
        rec = run_single(inst, algorithm, cfgs, algo_seed, spec.success_tol)
        entry.update(success=bool(rec.success), overlap=float(rec.overlap),
                     sq_norm=float(rec.sq_norm), rounds=int(rec.hybrid_rounds),
                     max_traj_sq_norm=float(rec.max_traj_sq_norm))
    except Exception as exc:                      # failures count as unsuccessful
        entry["failure"] = f"{type(exc).__name__}: {exc}"
    return entry


def run_sweep(spec: SweepSpec, algo_cfgs: AlgoConfigs | None = None,
              threads: int = 1) -> TransitionTable:
    """Full sweep; aggregation is a deterministic fold over sorted keys."""
    cfgs = algo_cfgs or AlgoConfigs()
    keys = [(algorithm, ai, trial)
            for algorithm in spec.algorithms
            for ai in range(len(spec.alpha_values))
            for trial in range(spec.trials_per_alpha)]
    tasks = [(spec, cfgs, algorithm, ai, trial) for algorithm, ai, trial in keys]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(_run_trial, tasks, chunksize=1))
    else:
        entries = [_run_trial(t) for t in tasks]

    by_cell: dict = {}
    for (algorithm, ai, _), entry in zip(keys, entries):
        by_cell.setdefault((algorithm, ai), []).append(entry)

    rows = []
    for algorithm in spec.algorithms:
        for ai, alpha in enumerate(spec.alpha_values):
            cell = by_cell[(algorithm, ai)]
            succ = sum(e["success"] for e in cell)
            rows.append(TransitionRow(
                algorithm=algorithm, alpha=float(alpha), trials=len(cell),
                successes=succ, success_rate=succ / len(cell),
                mean_rounds=float(np.mean([e["rounds"] for e in cell])),
                mean_final_overlap=float(np.mean([e["overlap"] for e in cell])),
                max_traj_sq_norm=float(max(e["max_traj_sq_norm"] for e in cell))))
    return TransitionTable(rows=rows, trials=entries)


_OVERLAY_TOL = {"plain": 5e-4, "lifted": 1e-2, "plain_sq": 1e-2, "lifted_sq": 2e-2}


def theoretical_overlay(alpha_range, variants, x_steps: int = 200,
                        alpha_tol: float | None = None,
                        quad=None, opt_tol: float = 1e-6) -> list:
    """Critical ratios per bound variant, for plotting next to sweep results."""
    out = []
    grid = GridSpec(c_range=(1.0, 1.0, 1), x_range=(0.0, 1.0, x_steps))
    for v in variants:
        variant = BoundVariant.parse(v) if isinstance(v, str) else v
        tol = alpha_tol if alpha_tol is not None else _OVERLAY_TOL.get(variant.kind, 1e-2)
        crit = critical_alpha(variant, "c1_curve_monotone", tuple(alpha_range),
                              tol, grid, quad, opt_tol)
        out.append({"variant": variant.label(), "critical_alpha": float(crit)})
    return out
