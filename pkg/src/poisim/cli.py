"""Command line entry point: ``poisim run|batch|analyze|report``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import pandas as pd

from . import __version__
from .analysis import PathModelSpec, analyze_table, default_model, read_sample_table
from .exposure import EpidemicSpec
from .runner import collect_batch, emit_reports, run_batch, run_scenario
from .scenario import (ConfigError, ExperimentConfig, PopulationSpec, RoomSpec, ScenarioSpec,
                       StoppingPattern, build_poi_grid, enumerate_runs)

OUTPUT_ENV = "POISIM_OUTPUT_ROOT"
PROFILES = {"desk": "desk.json", "full": "full_scale.json"}


def output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ENV, "poisim_output"))


def _out(arg: str | None, default: str) -> Path:
    return Path(arg) if arg else output_root() / default


def load_config(ref: str) -> ExperimentConfig:
    """A profile name (``desk``, ``full``) or a JSON config path."""
    if ref in PROFILES:
        text = resources.files("poisim.data").joinpath(PROFILES[ref]).read_text()
        return ExperimentConfig.from_dict(json.loads(text))
    return ExperimentConfig.load(ref)


def _single_spec(args) -> ScenarioSpec:
    if args.scenario_id is not None:
        cfg = load_config(args.config)
        runs = [r for r in enumerate_runs(cfg.restrict(replicates=args.replicate + 1))
                if r.scenario_id == args.scenario_id and r.replicate == args.replicate]
        if not runs:
            raise ConfigError(f"no scenario {args.scenario_id} in config {args.config}")
        spec = runs[0]
        return replace(spec, seed=args.seed) if args.seed is not None else spec
    room = RoomSpec(width=args.width, depth=args.depth, entrance=(0.0, args.depth / 2),
                    exit=(args.width, args.depth / 2))
    pop = PopulationSpec(total=args.agents, infectors=args.infectors, dwell=args.dwell * 60.0,
                         entry_gap_mean=args.entry_gap)
    epi = EpidemicSpec(alpha=args.alpha, beta=args.beta, rho=args.rho,
                       ug_per_unit=args.ug_per_unit, exposure_stride=args.exposure_stride)
    return ScenarioSpec(
        room=room, layout=build_poi_grid(args.n_pois, args.spacing, room),
        d_crowding=args.d_crowding, pattern=StoppingPattern(args.n_stopping, args.t_stopping * 60.0),
        population=pop, epidemic=epi, seed=args.seed if args.seed is not None else 0,
        dt=args.dt, voronoi_stride=args.voronoi_stride, voronoi_reduction=args.reduction)


def cmd_run(args) -> int:
    spec = _single_spec(args)
    out = _out(args.out, f"run_{spec.scenario_id:04d}_{spec.replicate:02d}")
    out.mkdir(parents=True, exist_ok=True)
    result = run_scenario(spec,
                          trajectory_csv=out / "trajectories.csv" if args.trajectories else None,
                          voronoi_csv=out / "voronoi.csv" if args.voronoi else None)
    row = result.row()
    (out / "result.json").write_text(json.dumps(row, indent=2))
    print(json.dumps(row, indent=2))
    return 0


def cmd_batch(args) -> int:
    cfg = load_config(args.config)
    if args.replicates is not None:
        cfg = cfg.restrict(replicates=args.replicates)
    out = _out(args.out, "batch")
    ids = None
    if args.scenarios:
        ids = [int(s) for s in args.scenarios.split(",")]
    table = run_batch(cfg, out, workers=args.workers, resume=not args.no_resume,
                      progress=not args.quiet, scenario_ids=ids)
    failures = json.loads((out / "failures.json").read_text())
    if len(table):
        emit_reports(table, out, cfg)
    print(f"{len(table)} rows, {len(failures)} failures -> {out}")
    return 1 if failures else 0


def cmd_analyze(args) -> int:
    table = read_sample_table(args.table)
    if args.model:
        models = {Path(p).stem: PathModelSpec.load(p) for p in args.model}
    else:
        models = {"Model A": default_model("A"), "Model B": default_model("B")}
    res = analyze_table(table, models, resamples=args.resamples, ci=args.ci, seed=args.seed,
                        ate=not args.no_ate, refutations=args.refutations)
    out = _out(args.out, "analysis")
    out.mkdir(parents=True, exist_ok=True)
    res.effects_frame().to_csv(out / "effects.csv", index=False)
    fits = [{"model": name, **fit.fit_indices, **{f"r2_{k}": v for k, v in fit.r_squared.items()}}
            for name, fit in res.fits.items()]
    pd.DataFrame(fits).to_csv(out / "fit_indices.csv", index=False)
    if res.ate:
        res.ate_frame().to_csv(out / "ate.csv", index=False)
    text = res.text()
    (out / "report.txt").write_text(text)
    print(text, end="")
    return 0


def cmd_report(args) -> int:
    src = Path(args.source)
    cfg = load_config(args.config) if args.config else None
    if src.is_dir():
        if cfg is None:
            manifest = src / "manifest.json"
            if not manifest.exists():
                raise ConfigError(f"{src} has no manifest.json; pass --config")
            cfg = ExperimentConfig.from_dict(json.loads(manifest.read_text())["config"])
        table = collect_batch(cfg, src)
    else:
        table = pd.read_csv(src)
    out = _out(args.out, "report")
    for p in emit_reports(table, out, cfg):
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poisim", description=__doc__)
    p.add_argument("--version", action="version", version=f"poisim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    g = r.add_argument_group("grid selection (overrides the explicit scenario flags)")
    g.add_argument("--config", default="desk", help="profile name or config JSON")
    g.add_argument("--scenario-id", type=int)
    g.add_argument("--replicate", type=int, default=0)
    r.add_argument("--width", type=float, default=22.0)
    r.add_argument("--depth", type=float, default=22.0)
    r.add_argument("--n-pois", type=int, default=16)
    r.add_argument("--spacing", type=float, default=2.0, help="POI pitch in m")
    r.add_argument("--d-crowding", type=int, choices=(0, 1), default=0)
    r.add_argument("--n-stopping", type=int, default=3)
    r.add_argument("--t-stopping", type=float, default=3.0, help="minutes per stop")
    r.add_argument("--agents", type=int, default=60)
    r.add_argument("--infectors", type=int, default=2)
    r.add_argument("--dwell", type=float, default=25.0, help="minutes")
    r.add_argument("--entry-gap", type=float, default=5.0, help="mean seconds between arrivals")
    r.add_argument("--alpha", type=float, default=7.0)
    r.add_argument("--beta", type=float, default=6.2e-4)
    r.add_argument("--rho", type=float, default=4.0738e-5)
    r.add_argument("--ug-per-unit", type=float, default=EpidemicSpec.ug_per_unit)
    r.add_argument("--exposure-stride", type=int, default=1)
    r.add_argument("--dt", type=float, default=0.04)
    r.add_argument("--voronoi-stride", type=float, default=40.0)
    r.add_argument("--reduction", choices=("mean", "median", "time_weighted"), default="mean")
    r.add_argument("--seed", type=int)
    r.add_argument("--trajectories", action="store_true", help="write trajectories.csv")
    r.add_argument("--voronoi", action="store_true", help="write voronoi.csv")
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("batch", help="run the scenario grid with checkpoints")
    b.add_argument("config", nargs="?", default="desk", help="profile name or config JSON")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--no-resume", action="store_true")
    b.add_argument("--replicates", type=int)
    b.add_argument("--scenarios", help="comma-separated scenario ids")
    b.add_argument("--out")
    b.add_argument("--quiet", action="store_true")
    b.set_defaults(func=cmd_batch)

    a = sub.add_parser("analyze", help="path models, ATE and refuters on a sample table")
    a.add_argument("table")
    a.add_argument("--model", action="append", help="model spec file (repeatable)")
    a.add_argument("--resamples", type=int, default=1000)
    a.add_argument("--ci", type=float, default=95.0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--no-ate", action="store_true")
    a.add_argument("--refutations", type=int, default=100, help="simulations per refuter")
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    rp = sub.add_parser("report", help="sample table, box-plot data and manifest")
    rp.add_argument("source", help="batch directory or table CSV")
    rp.add_argument("--config")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"poisim: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
