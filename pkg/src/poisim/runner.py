"""Single runs, checkpointed batches and report files."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd

from . import __version__, _kernels
from .dynamics import Role, SocialForceParams, World, simulate
from .exposure import (CoughProcess, ExposureAccumulator, average_exposure, count_high_risk,
                       predict_new_cases)
from .metrics import VoronoiSample, compute_personal_spaces, space_indicator, write_samples_csv
from .scenario import ExperimentConfig, PopulationSpec, ScenarioSpec, enumerate_runs

__all__ = ["PopulationSpec", "ScenarioResult", "run_scenario", "run_batch", "collect_batch",
           "emit_reports", "config_from_manifest", "desk_profile", "full_scale_profile",
           "TABLE_COLUMNS", "SAMPLE_TABLE_COLUMNS"]

log = logging.getLogger(__name__)

TABLE_COLUMNS = ["n_crowding", "d_crowding", "n_stopping", "t_stopping", "t_total_stop",
                 "sigma_spaces", "c_new", "e_ave"]
# deterministic per-run columns written to sample_table.csv (runtime is not)
SAMPLE_TABLE_COLUMNS = ["scenario_id", "replicate", "seed", *TABLE_COLUMNS, "c_risk", "c_new_sim"]


@dataclass
class ScenarioResult:
    scenario_id: int
    replicate: int
    seed: int
    n_crowding: int
    d_crowding: int
    n_stopping: int
    t_stopping: float
    t_total_stop: float
    sigma_spaces: float
    c_risk: int
    c_new_sim: float
    c_new: float
    e_ave: float
    e_max: float
    n_agents: int
    n_infectors: int
    max_in_room: float
    runtime_s: float

    def row(self) -> dict:
        return asdict(self)


class _Observer:
    """Emits coughs, accumulates exposure and samples personal spaces."""

    def __init__(self, spec: ScenarioSpec, world: World, cough_seed: np.random.SeedSequence):
        self.spec = spec
        self.world = world
        self.acc = ExposureAccumulator(world.roles, world.dt, spec.epidemic)
        self.infectors = np.flatnonzero(world.roles == Role.INFECTOR)
        self._cough_seeds = dict(zip(self.infectors, cough_seed.spawn(len(self.infectors))))
        self.processes: dict[int, CoughProcess] = {}
        self.events = []
        self.samples: list[VoronoiSample] = []
        self.stride = spec.epidemic.exposure_stride
        self.vor_every = max(1, int(round(spec.voronoi_stride / world.dt)))

    def __call__(self, world: World) -> None:
        n = world.step_index
        t = n * world.dt
        present = world.present
        new = []
        for j in self.infectors:
            if not present[j]:
                continue
            proc = self.processes.get(j)
            if proc is None:
                proc = self.processes[j] = CoughProcess(
                    int(j), world.enter_step[j] * world.dt, self.spec.epidemic,
                    np.random.default_rng(self._cough_seeds[j]))
            while proc.next_time <= t + 1e-12:
                new.append(proc.emit(n, t, world.pos[j]))
        if new:
            self.acc.add(new)
            self.events.extend(new)
        ids = np.flatnonzero(present)
        if n % self.stride == 0:
            self.acc.step(n, ids, world.pos[ids], present)
        if n % self.vor_every == 0 and len(ids):
            self.samples.append(compute_personal_spaces(world.pos[ids], self.spec.room, t, ids))


def run_scenario(spec: ScenarioSpec, params: SocialForceParams = SocialForceParams(),
                 trajectory_csv: str | os.PathLike | None = None,
                 voronoi_csv: str | os.PathLike | None = None,
                 return_details: bool = False):
    """Simulate one scenario run and compute its indicators.

    With ``return_details`` the world, observer and trajectory log (only if
    ``trajectory_csv`` is set) are returned alongside the result.
    """
    t0 = time.perf_counter()
    root = np.random.SeedSequence(spec.seed)
    move_seed, cough_seed = root.spawn(2)
    world = World(spec.room, spec.layout, spec.pattern.n_stopping, spec.pattern.t_stopping,
                  spec.population, np.random.default_rng(move_seed), dt=spec.dt, params=params)
    obs = _Observer(spec, world, cough_seed)
    try:
        traj = simulate(world, observers=[obs], log=trajectory_csv is not None)
    except Exception as exc:
        raise type(exc)(f"scenario {spec.scenario_id} replicate {spec.replicate}: {exc}") from exc

    ledger = obs.acc.ledger
    epi = spec.epidemic
    if spec.population.susceptibles:
        c_risk = count_high_risk(ledger, epi.alpha, epi.ug_per_unit)
        e_ave = average_exposure(ledger) * epi.ug_per_unit
        e_max = float(ledger.susceptible_exposures.max()) * epi.ug_per_unit
    else:
        c_risk, e_ave, e_max = 0, 0.0, 0.0
    c_new_sim, c_new = predict_new_cases(c_risk, epi.beta, epi.rho)
    try:
        sigma = space_indicator(obs.samples, spec.room, spec.voronoi_reduction)
    except ValueError:
        sigma = float("nan")
    entered = world.enter_step >= 0
    in_room = (world.exit_step[entered] - world.enter_step[entered]) * world.dt
    result = ScenarioResult(
        scenario_id=spec.scenario_id, replicate=spec.replicate, seed=spec.seed,
        n_crowding=spec.n_crowding, d_crowding=spec.d_crowding,
        n_stopping=spec.pattern.n_stopping, t_stopping=spec.pattern.t_stopping,
        t_total_stop=spec.t_total_stop, sigma_spaces=sigma, c_risk=c_risk,
        c_new_sim=c_new_sim, c_new=c_new, e_ave=e_ave, e_max=e_max,
        n_agents=world.n_agents, n_infectors=len(obs.infectors),
        max_in_room=float(in_room.max()) if len(in_room) else 0.0,
        runtime_s=time.perf_counter() - t0,
    )
    if trajectory_csv is not None:
        traj.to_csv(trajectory_csv)
    if voronoi_csv is not None:
        write_samples_csv(obs.samples, voronoi_csv)
    if return_details:
        return result, world, obs, traj
    return result


def _run_file(spec: ScenarioSpec, root: Path) -> Path:
    return root / f"run_{spec.scenario_id:04d}_{spec.replicate:02d}.json"


def _run_and_store(spec: ScenarioSpec, ckpt: Path) -> dict:
    path = _run_file(spec, ckpt)
    try:
        row = run_scenario(spec).row()
        status = {"ok": True, "row": row}
    except Exception as exc:  # recorded, batch continues
        status = {"ok": False, "scenario_id": spec.scenario_id, "replicate": spec.replicate,
                  "seed": spec.seed, "error": f"{type(exc).__name__}: {exc}"}
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(status))
    tmp.replace(path)
    return status


def _select(config: ExperimentConfig, scenario_ids: Iterable[int] | None) -> list[ScenarioSpec]:
    runs = enumerate_runs(config)
    if scenario_ids is None:
        return runs
    wanted = set(int(s) for s in scenario_ids)
    return [r for r in runs if r.scenario_id in wanted]


def run_batch(config: ExperimentConfig, out_dir: str | os.PathLike, workers: int = 1,
              resume: bool = True, progress: bool = False,
              scenario_ids: Iterable[int] | None = None) -> pd.DataFrame:
    """Run every (scenario, replicate) job; one checkpoint file per run.

    Already checkpointed runs are reused when ``resume`` is set. Failed runs
    are listed in ``failures.json`` and left out of the table. Run files
    depend only on (scenario, replicate, seed), so configs that share a base
    seed can share a checkpoint directory.
    """
    out = Path(out_dir)
    ckpt = out / "runs"
    ckpt.mkdir(parents=True, exist_ok=True)
    if scenario_ids is not None:
        scenario_ids = list(scenario_ids)
    runs = _select(config, scenario_ids)
    todo = []
    for spec in runs:
        path = _run_file(spec, ckpt)
        if resume and path.exists():
            continue
        todo.append(spec)
    log.info("batch: %d runs, %d cached, %d to do", len(runs), len(runs) - len(todo), len(todo))
    done = 0
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_and_store, spec, ckpt) for spec in todo]
            for fut in as_completed(futures):
                fut.result()
                done += 1
                if progress:
                    print(f"[{done}/{len(todo)}]", flush=True)
    else:
        for spec in todo:
            st = _run_and_store(spec, ckpt)
            done += 1
            if progress:
                tag = "ok" if st["ok"] else "FAILED"
                print(f"[{done}/{len(todo)}] scenario {spec.scenario_id} rep {spec.replicate} {tag}",
                      flush=True)
    return collect_batch(config, out, scenario_ids)


def collect_batch(config: ExperimentConfig, out_dir: str | os.PathLike,
                  scenario_ids: Iterable[int] | None = None) -> pd.DataFrame:
    """Merge the per-run checkpoint files into a table ordered by run."""
    out = Path(out_dir)
    rows, failures = [], []
    for spec in _select(config, scenario_ids):
        path = _run_file(spec, out / "runs")
        if not path.exists():
            continue
        st = json.loads(path.read_text())
        if st["ok"] and st["row"]["seed"] != spec.seed:
            raise ValueError(f"{path} was produced with a different seed")
        (rows if st["ok"] else failures).append(st["row"] if st["ok"] else st)
    (out / "failures.json").write_text(json.dumps(failures, indent=2))
    table = pd.DataFrame(rows)
    if len(table):
        table = table.sort_values(["scenario_id", "replicate"], kind="stable").reset_index(drop=True)
    return table


def config_hash(config: ExperimentConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def boxplot_stats(table: pd.DataFrame, factor: str, value: str) -> pd.DataFrame:
    """Quartiles and 1.5 IQR whiskers of ``value`` per level of ``factor``."""
    rows = []
    for level, grp in table.groupby(factor, sort=True):
        v = np.sort(grp[value].to_numpy(dtype=float))
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        lo = v[v >= q1 - 1.5 * iqr].min()
        hi = v[v <= q3 + 1.5 * iqr].max()
        rows.append({factor: level, "indicator": value, "n": len(v), "mean": v.mean(),
                     "q1": q1, "median": med, "q3": q3, "whisker_low": lo, "whisker_high": hi,
                     "n_outliers": int(((v < lo) | (v > hi)).sum())})
    return pd.DataFrame(rows)


def emit_reports(table: pd.DataFrame, out_dir: str | os.PathLike,
                 config: ExperimentConfig | None = None) -> list[Path]:
    """Write the sample table, box-plot data per factor and a run manifest."""
    if table is None or len(table) == 0:
        raise ValueError("cannot report on an empty table")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "sample_table.csv"
    table[[c for c in SAMPLE_TABLE_COLUMNS if c in table]].to_csv(path, index=False)
    written.append(path)
    if "runtime_s" in table:
        path = out / "runs.csv"
        table.to_csv(path, index=False)
        written.append(path)
    for factor in ("n_crowding", "d_crowding", "n_stopping", "t_stopping"):
        if factor not in table:
            continue
        stats = pd.concat([boxplot_stats(table, factor, v) for v in ("c_new", "e_ave")
                           if v in table], ignore_index=True)
        path = out / f"boxplot_{factor}.csv"
        stats.to_csv(path, index=False)
        written.append(path)
    manifest = {
        "poisim_version": __version__,
        "kernel_backend": _kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "pandas": pd.__version__,
        "rows": int(len(table)),
    }
    if "seed" in table:
        manifest["runs"] = [{"scenario_id": int(r.scenario_id), "replicate": int(r.replicate),
                             "seed": int(r.seed)} for r in table.itertuples()]
    if config is not None:
        manifest["config_hash"] = config_hash(config)
        manifest["config"] = config.to_dict()
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    written.append(path)
    return written


def config_from_manifest(path: str | os.PathLike) -> ExperimentConfig:
    data = json.loads(Path(path).read_text())
    if "config" not in data:
        raise ValueError(f"{path} carries no experiment config")
    return ExperimentConfig.from_dict(data["config"])


def desk_profile() -> ExperimentConfig:
    return ExperimentConfig()


def full_scale_profile() -> ExperimentConfig:
    """Population scaled from the real counts; roughly a day per run."""
    cfg = ExperimentConfig()
    pop = PopulationSpec.from_real(257_177_921, 1_759_672, cfg.epidemic.rho)
    return cfg.restrict(population=pop)

