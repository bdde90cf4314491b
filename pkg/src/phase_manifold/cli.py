"""Command-line front end.

Subcommands cover the theory side (bound curves, manifolds with funnel
reports, critical oversampling ratios) and the simulation side (single
recovery runs and Monte-Carlo transition sweeps).  Gridded numbers go to
CSV at 17 significant digits, structured reports to JSON/JSONL, and every
output file is accompanied by a ``<file>.manifest.json`` recording the
tool version, the command, the resolved configuration, a timestamp, and
the master seed.  Reruns with identical configuration produce
byte-identical data files; only manifests differ (timestamp).

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
failure.  The environment variable PHASE_MANIFOLD_SEED overrides the
master seed of the simulation commands.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .experiments import (AlgoConfigs, SweepSpec, desk_spec, generate_instance,
                          paper_spec, run_single, run_sweep, theoretical_overlay,
                          trial_seed)
from .algorithms import BarrierSchedule, GradConfig, ReshuffleConfig
from .manifold import (BadBracket, BoundVariant, GridSpec, build_manifold,
                       critical_alpha, curve_values, detect_funnels,
                       default_flat_tol)
from .numerics import NonConvergence, QuadratureSpec

_ENV_SEED = "PHASE_MANIFOLD_SEED"


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclasses.dataclass(frozen=True)
class RunManifest:
    """Provenance record accompanying every output file."""

    tool_version: str
    command: str
    full_config: dict
    timestamp: str
    master_seed: int | None


def _manifest(path: str, command: str, config: dict, master_seed: int | None):
    doc = RunManifest(tool_version=__version__, command=command,
                      full_config=config,
                      timestamp=datetime.now(timezone.utc).isoformat(),
                      master_seed=master_seed)
    with open(path + ".manifest.json", "w", newline="\n") as fh:
        json.dump(dataclasses.asdict(doc), fh, indent=2)
        fh.write("\n")


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def _write_json(path: str, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2)
        fh.write("\n")


def _env_seed() -> int | None:
    raw = os.environ.get(_ENV_SEED)
    return int(raw) if raw not in (None, "") else None


def _parse_range(text: str, name: str):
    try:
        lo, hi = (float(t) for t in text.split(":"))
    except Exception:
        raise ValueError(f"{name} must look like 'lo:hi', got {text!r}")
    if not hi >= lo:
        raise ValueError(f"{name} must be nondecreasing, got {text!r}")
    return lo, hi


def _parse_grid(text: str):
    try:
        nc, nx = (int(t) for t in text.split("x"))
    except Exception:
        raise ValueError(f"--grid must look like 'NCxNX', got {text!r}")
    if nc < 1 or nx < 1:
        raise ValueError("grid dimensions must be positive")
    return nc, nx


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_theory_curve(args) -> int:
    if args.steps < 1:
        raise ValueError("--steps must be >= 1")
    variant = BoundVariant.parse(args.variant)
    if args.c <= 0:
        raise ValueError("--c must be positive")
    x_hi = args.x_max if args.x_max is not None else min(1.0, math.sqrt(args.c))
    if args.x_min < 0 or x_hi * x_hi > args.c * (1 + 1e-12):
        raise ValueError("x range must satisfy 0 <= x and x^2 <= c")
    xs = np.linspace(args.x_min, x_hi, args.steps)
    vals = curve_values(args.alpha, variant, xs, QuadratureSpec(), args.opt_tol,
                        c=args.c, profiles={})
    _write_csv(args.out, ["x", "phi0"],
               ([_fmt(x), _fmt(v)] for x, v in zip(xs, vals)))
    _manifest(args.out, "theory-curve", _public_config(args), None)
    return 0


def _cmd_theory_manifold(args) -> int:
    variant = BoundVariant.parse(args.variant)
    c_lo, c_hi = _parse_range(args.c_range, "--c-range")
    x_lo, x_hi = _parse_range(args.x_range, "--x-range")
    nc, nx = _parse_grid(args.grid)
    grid = build_manifold(args.alpha, variant, (c_lo, c_hi, nc), (x_lo, x_hi, nx),
                          QuadratureSpec(), args.opt_tol, threads=args.threads)
    report = detect_funnels(grid)
    rows = []
    for i, c in enumerate(grid.c_axis):
        for j, x in enumerate(grid.x_axis):
            v = grid.values[i, j]
            if np.isfinite(v):
                rows.append([_fmt(c), _fmt(x), _fmt(v)])
    grid_path = args.out_prefix + ".grid.csv"
    _write_csv(grid_path, ["c", "x", "phi0"], rows)
    funnel_doc = {
        "alpha": args.alpha,
        "variant": variant.label(),
        "flat_tol": default_flat_tol(grid),
        "count": report.count,
        "tie_break": report.tie_break,
        "funnel_points": [dataclasses.asdict(p) for p in report.funnel_points],
    }
    funnel_path = args.out_prefix + ".funnels.json"
    _write_json(funnel_path, funnel_doc)
    cfg = _public_config(args)
    _manifest(grid_path, "theory-manifold", cfg, None)
    _manifest(funnel_path, "theory-manifold", cfg, None)
    return 0


def _cmd_critical_alpha(args) -> int:
    variant = BoundVariant.parse(args.variant)
    lo, hi = _parse_range(args.bracket, "--bracket")
    if not lo < hi:
        raise ValueError("--bracket must be strictly increasing")
    if args.predicate == "single_funnel":
        nc, nx = _parse_grid(args.grid)
        c_lo, c_hi = _parse_range(args.c_range, "--c-range")
        spec = GridSpec((c_lo, c_hi, nc), (0.0, 1.0, nx))
    else:
        spec = GridSpec((1.0, 1.0, 1), (0.0, 1.0, args.x_steps))
    crit = critical_alpha(variant, args.predicate, (lo, hi), args.tol, spec,
                          QuadratureSpec(), args.opt_tol)
    _write_json(args.out, {
        "variant": variant.label(),
        "predicate": args.predicate,
        "alpha_critical": crit,
        "bracket": [lo, hi],
        "tol": args.tol,
    })
    _manifest(args.out, "critical-alpha", _public_config(args), None)
    return 0


def _spec_from_config(doc: dict, seed_override: int | None):
    """Build (SweepSpec, AlgoConfigs) from a parsed JSON config."""
    known = {"n", "alpha_values", "trials_per_alpha", "algorithms",
             "master_seed", "success_tol", "grad", "barrier", "reshuffle",
             "max_rounds"}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    master = seed_override if seed_override is not None else doc.get("master_seed", 0)
    spec = SweepSpec(
        n=int(doc["n"]),
        alpha_values=tuple(doc["alpha_values"]),
        trials_per_alpha=int(doc["trials_per_alpha"]),
        algorithms=tuple(doc.get("algorithms", ("hybrid",))),
        master_seed=int(master),
        success_tol=float(doc.get("success_tol", 1e-3)),
    )
    cfgs = AlgoConfigs(
        grad=GradConfig(**doc.get("grad", {})),
        barrier=BarrierSchedule(**doc.get("barrier", {})),
        reshuffle=ReshuffleConfig(**doc.get("reshuffle", {})),
        max_rounds=int(doc.get("max_rounds", 4)),
    )
    return spec, cfgs


def _cmd_sim_transition(args) -> int:
    seed_override = _env_seed()
    if args.preset:
        spec = desk_spec() if args.preset == "desk" else paper_spec()
        if seed_override is not None:
            spec = dataclasses.replace(spec, master_seed=seed_override)
        cfgs = AlgoConfigs()
        config_doc = {"preset": args.preset, "master_seed": spec.master_seed}
    else:
        try:
            with open(args.config_file) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config file: {exc}")
        spec, cfgs = _spec_from_config(doc, seed_override)
        config_doc = doc | {"master_seed": spec.master_seed}

    table = run_sweep(spec, cfgs, threads=args.threads)

    trials_path = args.out_prefix + ".trials.jsonl"
    with open(trials_path, "w", newline="\n") as fh:
        for entry in table.trials:
            fh.write(json.dumps(entry) + "\n")
    table_path = args.out_prefix + ".table.csv"
    header = ["algorithm", "alpha", "trials", "successes", "success_rate",
              "mean_rounds", "mean_final_overlap", "max_traj_sq_norm"]
    _write_csv(table_path, header,
               ([r.algorithm, _fmt(r.alpha), str(r.trials), str(r.successes),
                 _fmt(r.success_rate), _fmt(r.mean_rounds),
                 _fmt(r.mean_final_overlap), _fmt(r.max_traj_sq_norm)]
                for r in table.rows))
    cfg = _public_config(args) | {"resolved_config": config_doc}
    _manifest(trials_path, "sim-transition", cfg, spec.master_seed)
    _manifest(table_path, "sim-transition", cfg, spec.master_seed)
    return 0


def _cmd_sim_run(args) -> int:
    if args.n < 2:
        raise ValueError("--n must be >= 2")
    if args.algorithm not in ("hybrid", "gradplain", "gradbar"):
        raise ValueError(f"unknown algorithm {args.algorithm!r}")
    seed = _env_seed()
    if seed is None:
        seed = args.seed
    inst = generate_instance(args.n, args.alpha, seed)
    rec = run_single(inst, args.algorithm, AlgoConfigs(),
                     algo_seed=trial_seed(seed, 0, 0, args.algorithm))
    _write_json(args.out, {
        "algorithm": args.algorithm,
        "n": args.n,
        "alpha": args.alpha,
        "seed": seed,
        "success": bool(rec.success),
        "overlap": rec.overlap,
        "sq_norm": rec.sq_norm,
        "rounds": rec.hybrid_rounds,
        "stage_iters": list(rec.stage_iters),
        "max_traj_sq_norm": rec.max_traj_sq_norm,
        "round_overlaps": list(rec.round_overlaps),
    })
    _manifest(args.out, "sim-run", _public_config(args), seed)
    return 0


def _cmd_theory_overlay(args) -> int:
    lo, hi = _parse_range(args.bracket, "--bracket")
    rows = theoretical_overlay((lo, hi), args.variants.split(","),
                               x_steps=args.x_steps, opt_tol=args.opt_tol)
    _write_json(args.out, {"bracket": [lo, hi], "overlay": rows})
    _manifest(args.out, "theory-overlay", _public_config(args), None)
    return 0


def _public_config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func" and v is not None}


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phase-manifold",
        description="Landscape bounds, funnel analysis, and recovery "
                    "simulations for real phase retrieval.")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker parallelism cap (default: machine parallelism)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("theory-curve", help="bound values along a fixed-c slice")
    p.add_argument("--variant", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--x-min", type=float, default=0.0)
    p.add_argument("--x-max", type=float, default=None)
    p.add_argument("--steps", type=int, default=201)
    p.add_argument("--opt-tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_theory_curve)

    p = sub.add_parser("theory-manifold", help="bound values on a (c,x) grid plus funnel report")
    p.add_argument("--variant", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--c-range", default="0.05:1")
    p.add_argument("--x-range", default="0:1")
    p.add_argument("--grid", default="40x40")
    p.add_argument("--opt-tol", type=float, default=1e-6)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_theory_manifold)

    p = sub.add_parser("critical-alpha", help="bisect for the critical oversampling ratio")
    p.add_argument("--variant", required=True)
    p.add_argument("--predicate", choices=("single_funnel", "c1_curve_monotone"),
                   default="c1_curve_monotone")
    p.add_argument("--bracket", required=True, help="alpha_lo:alpha_hi")
    p.add_argument("--tol", type=float, default=5e-4)
    p.add_argument("--x-steps", type=int, default=200)
    p.add_argument("--c-range", default="0.05:1")
    p.add_argument("--grid", default="40x40")
    p.add_argument("--opt-tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_critical_alpha)

    p = sub.add_parser("sim-transition", help="Monte-Carlo success-rate sweep")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--config-file")
    g.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_sim_transition)

    p = sub.add_parser("sim-run", help="one seeded recovery run")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--algorithm", default="hybrid")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sim_run)

    p = sub.add_parser("theory-overlay", help="critical ratios for several variants")
    p.add_argument("--variants", default="plain,lifted")
    p.add_argument("--bracket", default="1.1:2.5")
    p.add_argument("--x-steps", type=int, default=200)
    p.add_argument("--opt-tol", type=float, default=1e-6)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_theory_overlay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ValueError, BadBracket, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergence, RuntimeError, FloatingPointError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
