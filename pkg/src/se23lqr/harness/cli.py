"""Command-line entry point: ``se23lqr <subcommand> [options]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from ..linearize import Variant
from .experiments import (
    ALL_VARIANTS,
    DRAG_FREE_PAIR,
    HEADING_GRID_DEG,
    MonteCarloConfig,
    ResultRow,
    heading_sweep,
    monte_carlo,
    uncertainty_study,
)
from .io import emit_outputs, load_config, write_csv, write_manifest
from .scenario import DEFAULT_ACTUATOR_TAU, DEFAULT_NOISE_STD, ScenarioConfig, prepare, run_scenario


def _scenario(cfg: dict, args: argparse.Namespace, **defaults) -> ScenarioConfig:
    data = {**defaults, **cfg.get("scenario", {})}
    if "heading_deg" in data:
        data["heading"] = float(np.deg2rad(data.pop("heading_deg")))
    if args.seed is not None:
        data["seed"] = args.seed
    if args.variant:
        data["variant"] = args.variant[0]
    return ScenarioConfig.from_dict(data)


def _variants(args: argparse.Namespace, default: tuple[Variant, ...]) -> tuple[Variant, ...]:
    return tuple(Variant.parse(v) for v in args.variant) if args.variant else default


def cmd_simulate(args: argparse.Namespace, cfg: dict) -> list[Path]:
    sc = _scenario(cfg, args).replace(record_series=True)
    if args.heading_deg is not None:
        sc = sc.replace(heading=float(np.deg2rad(args.heading_deg)))
    res = run_scenario(sc)
    row = ResultRow("simulate", {"variant": sc.variant.value, "heading": sc.heading}, res)
    print(f"{sc.variant.value}: rmse_phi={res.rmse_phi:.6f} rad rmse_v={res.rmse_v:.6f} m/s rmse_r={res.rmse_r:.6f} m")
    return emit_outputs(args.out_dir, "simulate", [row], sc.to_dict(), sc.seed, args.format)


def cmd_sweep(args: argparse.Namespace, cfg: dict) -> list[Path]:
    sc = _scenario(cfg, args)
    section = cfg.get("sweep", {})
    degs = args.headings or section.get("headings_deg", HEADING_GRID_DEG)
    variants = _variants(args, ALL_VARIANTS)
    rows = heading_sweep(sc, np.deg2rad(degs), variants)
    for r in rows:
        res = r.result
        print(f"{np.rad2deg(r.label['heading']):6.1f} deg {r.label['variant']:20s} "
              f"{res.rmse_phi:.4f} {res.rmse_v:.4f} {res.rmse_r:.4f}")
    config = {"scenario": sc.to_dict(), "headings_deg": [float(d) for d in degs],
              "variants": [v.value for v in variants]}
    return emit_outputs(args.out_dir, "sweep-heading", rows, config, sc.seed, args.format)


def cmd_uncertainty(args: argparse.Namespace, cfg: dict) -> list[Path]:
    sc = _scenario(cfg, args)
    scale = args.scale if args.scale is not None else cfg.get("uncertainty", {}).get("scale", 0.8)
    variants = _variants(args, DRAG_FREE_PAIR)
    rows = uncertainty_study(sc, scale, variants=variants)
    for r in rows:
        print(f"{r.label['variant']:20s} integrator={str(r.label['integrator']).lower():5s} "
              f"steady |dr|={r.result.steady_position_error:.4f} m")
    config = {"scenario": sc.to_dict(), "scale": scale, "variants": [v.value for v in variants]}
    return emit_outputs(args.out_dir, "uncertainty", rows, config, sc.seed, args.format)


def cmd_monte_carlo(args: argparse.Namespace, cfg: dict) -> list[Path]:
    sc = _scenario(cfg, args, initial_mode="absolute", actuator_tau=DEFAULT_ACTUATOR_TAU,
                   noise_std=list(DEFAULT_NOISE_STD))
    section = dict(cfg.get("monte_carlo", {}))
    if args.trials is not None:
        section["trials"] = args.trials
    if args.workers is not None:
        section["workers"] = args.workers
    if args.seed is not None:
        section["master_seed"] = args.seed
    for key in ("sigma_kappa", "percentiles"):
        if key in section:
            section[key] = tuple(section[key])
    mc = MonteCarloConfig(base=sc, variants=_variants(args, DRAG_FREE_PAIR), **section)
    report = monte_carlo(mc)
    agg = report.aggregate_rows()
    for a in agg:
        print(f"{a['variant']:20s} {a['component']:8s} mean={a['mean']:.4f} "
              f"[{a['p_lower']:.4f}, {a['p_upper']:.4f}]")
    config = mc.to_dict()
    config.pop("workers")  # scheduling does not change results
    return emit_outputs(args.out_dir, "monte-carlo", report.rows(), config, mc.master_seed, args.format,
                        extra={"aggregate": agg})


def cmd_gains(args: argparse.Namespace, cfg: dict) -> list[Path]:
    sc = _scenario(cfg, args)
    track, schedule = prepare(sc)
    out = Path(args.out_dir)
    header = ["k", "t"] + [f"K_{i}_{j}" for i in range(schedule.gains.shape[1]) for j in range(schedule.gains.shape[2])]
    rows = ([k, track.t[k], *schedule.gains[k].ravel()] for k in range(len(schedule)))
    files = [write_csv(out / "gains.csv", header, rows)]
    files.append(write_manifest(out, "gains", sc.to_dict(), sc.seed, files))
    print(f"{len(schedule)} gains for {sc.variant.value} written to {files[0]}")
    return files


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep-heading": cmd_sweep,
    "uncertainty": cmd_uncertainty,
    "monte-carlo": cmd_monte_carlo,
    "gains": cmd_gains,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML file with [scenario] and per-experiment sections")
    common.add_argument("--seed", type=int, help="scenario seed (master seed for monte-carlo)")
    common.add_argument("--out-dir", type=Path, default=Path("results"))
    common.add_argument("--variant", action="append", choices=[v.value for v in Variant],
                        help="controller variant; repeat to select several")
    common.add_argument("--format", default="csv", choices=["csv"])

    parser = argparse.ArgumentParser(prog="se23lqr", description="Finite-horizon LQR tracking on SE2(3).")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("simulate", parents=[common], help="single closed-loop run with per-tick log")
    p.add_argument("--heading-deg", type=float)
    p = sub.add_parser("sweep-heading", parents=[common], help="RMSE against initial heading error")
    p.add_argument("--headings", type=float, nargs="+", metavar="DEG")
    p = sub.add_parser("uncertainty", parents=[common], help="scaled parameter estimates, integrator on/off")
    p.add_argument("--scale", type=float)
    p = sub.add_parser("monte-carlo", parents=[common], help="randomized trials with percentile bands")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    sub.add_parser("gains", parents=[common], help="dump the gain schedule")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        COMMANDS[args.command](args, cfg)
    except Exception as exc:
        print(f"se23lqr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
