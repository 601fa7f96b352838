"""Room geometry, POI layouts, stopping patterns and the experiment grid."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from itertools import product
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .exposure import EpidemicSpec, scale_population


class ConfigError(ValueError):
    """Invalid scenario or experiment configuration."""


@dataclass(frozen=True)
class RoomSpec:
    width: float = 22.0
    depth: float = 22.0
    entrance: tuple[float, float] = (0.0, 11.0)
    exit: tuple[float, float] = (22.0, 11.0)

    def __post_init__(self):
        if not (self.width > 0 and self.depth > 0):
            raise ConfigError("room width and depth must be positive")
        walls = [self._wall(p) for p in (self.entrance, self.exit)]
        if None in walls:
            raise ConfigError("entrance and exit must lie on the room boundary")
        opposite = {"left": "right", "right": "left", "bottom": "top", "top": "bottom"}
        if opposite[walls[0]] != walls[1]:
            raise ConfigError("entrance and exit must be on opposite walls")

    def _wall(self, p) -> str | None:
        x, y = p
        if not (0 <= x <= self.width and 0 <= y <= self.depth):
            return None
        if x == 0:
            return "left"
        if x == self.width:
            return "right"
        if y == 0:
            return "bottom"
        if y == self.depth:
            return "top"
        return None

    @property
    def area(self) -> float:
        return self.width * self.depth

    def inward_normal(self, p) -> tuple[float, float]:
        return {"left": (1.0, 0.0), "right": (-1.0, 0.0),
                "bottom": (0.0, 1.0), "top": (0.0, -1.0)}[self._wall(p)]

    def contains(self, p, margin: float = 0.0) -> bool:
        x, y = p
        return margin < x < self.width - margin and margin < y < self.depth - margin


@dataclass(frozen=True)
class POILayout:
    points: tuple[tuple[float, float], ...]
    spacing: float

    @property
    def n_crowding(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class StoppingPattern:
    n_stopping: int
    t_stopping: float

    def __post_init__(self):
        if self.n_stopping < 1:
            raise ConfigError("n_stopping must be at least 1")
        if not self.t_stopping > 0:
            raise ConfigError("t_stopping must be positive")

    @property
    def code(self) -> str:
        return f"{self.n_stopping}-{self.t_stopping / 60:g}"


@dataclass(frozen=True)
class PopulationSpec:
    """Simulated head counts and dwell time.

    ``real_total``/``real_infectors`` are kept for provenance when the sim
    counts were derived by scaling a real population.
    """

    total: int = 60
    infectors: int = 2
    dwell: float = 1500.0
    entry_gap_mean: float = 5.0
    real_total: int | None = None
    real_infectors: int | None = None

    def __post_init__(self):
        if self.total < 0 or self.infectors < 0:
            raise ConfigError("population counts must be non-negative")
        if self.infectors > self.total:
            raise ConfigError("more infectors than agents")
        if not self.dwell > 0 or not self.entry_gap_mean > 0:
            raise ConfigError("dwell and entry gap must be positive")

    @classmethod
    def from_real(cls, real_total: int, real_infectors: int, rho: float, **kw) -> "PopulationSpec":
        total, inf = scale_population(real_total, real_infectors, rho)
        return cls(total=total, infectors=inf, real_total=real_total,
                   real_infectors=real_infectors, **kw)

    @property
    def susceptibles(self) -> int:
        return self.total - self.infectors


@dataclass(frozen=True)
class ScenarioSpec:
    room: RoomSpec
    layout: POILayout
    d_crowding: int
    pattern: StoppingPattern
    population: PopulationSpec = field(default_factory=PopulationSpec)
    epidemic: EpidemicSpec = field(default_factory=EpidemicSpec)
    seed: int = 0
    scenario_id: int = 0
    replicate: int = 0
    dt: float = 0.04
    voronoi_stride: float = 40.0
    voronoi_reduction: str = "mean"

    def __post_init__(self):
        if self.d_crowding not in (0, 1):
            raise ConfigError("d_crowding must be 0 or 1")
        if self.pattern.n_stopping * self.pattern.t_stopping > self.population.dwell:
            raise ConfigError("total stopping time exceeds the dwell time")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")

    @property
    def t_total_stop(self) -> float:
        return total_stop_duration(self.pattern)

    @property
    def n_crowding(self) -> int:
        return self.layout.n_crowding

    @property
    def label(self) -> str:
        kind = "dispersed" if self.d_crowding else "centralized"
        return f"{self.n_crowding}-{kind}/{self.pattern.code}"


def build_poi_grid(n_pois: int, spacing: float, room: RoomSpec, margin: float = 1.0) -> POILayout:
    """Square grid of POIs with the given pitch, centred in the room."""
    side = math.isqrt(n_pois) if n_pois > 0 else 0
    if side * side != n_pois:
        raise ConfigError(f"POI count {n_pois} is not a perfect square")
    if n_pois < 2:
        raise ConfigError("at least 4 POIs are needed for a nearest-neighbour spacing")
    if not spacing > 0:
        raise ConfigError("POI spacing must be positive")
    span = (side - 1) * spacing
    for extent, name in ((room.width, "width"), (room.depth, "depth")):
        if span + 2 * margin > extent:
            raise ConfigError(
                f"{side}x{side} grid at {spacing} m spans {span:.3f} m and breaks the "
                f"{margin} m wall margin along the room {name} ({extent} m)")
    x0 = (room.width - span) / 2
    y0 = (room.depth - span) / 2
    points = tuple((x0 + i * spacing, y0 + j * spacing) for j in range(side) for i in range(side))
    return POILayout(points=points, spacing=spacing)


def shortest_poi_distance(layout: POILayout | Sequence) -> float:
    pts = layout.as_array() if isinstance(layout, POILayout) else np.asarray(layout, dtype=float)
    if len(pts) < 2:
        raise ConfigError("shortest POI distance needs at least two POIs")
    diff = pts[:, None, :] - pts[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(d, np.inf)
    return float(d.min(axis=1).min())


def classify_crowding_distribution(group: Sequence[POILayout]) -> list[int]:
    """0 (centralized) or 1 (dispersed) for each layout of a same-size group."""
    if not group:
        raise ConfigError("empty scene group")
    sizes = {g.n_crowding for g in group}
    if len(sizes) != 1:
        raise ConfigError(f"scene group mixes POI counts {sorted(sizes)}")
    shortest = [shortest_poi_distance(g) for g in group]
    mean = math.fsum(shortest) / len(shortest)
    # ties (within rounding of the mean) count as dispersed
    return [0 if d < mean - 1e-9 else 1 for d in shortest]


def total_stop_duration(pattern: StoppingPattern) -> float:
    return pattern.n_stopping * pattern.t_stopping


@dataclass
class ExperimentConfig:
    """Experiment grid. See ``docs`` in the README for the JSON schema."""

    room: RoomSpec = field(default_factory=RoomSpec)
    poi_setups: list[dict] = field(default_factory=lambda: [dict(s) for s in DEFAULT_POI_SETUPS])
    n_stopping: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    t_stopping_min: list[float] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    replicates: int = 4
    base_seed: int = 20200605
    population: PopulationSpec = field(default_factory=PopulationSpec)
    epidemic: EpidemicSpec = field(default_factory=EpidemicSpec)
    dt: float = 0.04
    voronoi_stride: float = 40.0
    voronoi_reduction: str = "mean"

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentConfig":
        data = dict(data)
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "room" in data:
            room = dict(data["room"])
            for key in ("entrance", "exit"):
                if key in room:
                    room[key] = tuple(room[key])
            data["room"] = RoomSpec(**room)
        if "population" in data:
            pop = dict(data["population"])
            rho = pop.pop("rho", None)
            if rho is not None:
                data["population"] = PopulationSpec.from_real(
                    pop.pop("real_total"), pop.pop("real_infectors"), rho, **pop)
            else:
                data["population"] = PopulationSpec(**pop)
        if "epidemic" in data:
            data["epidemic"] = EpidemicSpec(**data["epidemic"])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["room"]["entrance"] = list(self.room.entrance)
        out["room"]["exit"] = list(self.room.exit)
        return out

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def restrict(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


# Centralized layouts use 2 m; dispersed spacings per POI count.
DEFAULT_POI_SETUPS: tuple[dict, ...] = (
    {"n": 4, "spacing": 2.0},
    {"n": 4, "spacing": 7.33},
    {"n": 16, "spacing": 2.0},
    {"n": 16, "spacing": 4.4},
    {"n": 36, "spacing": 2.0},
    {"n": 36, "spacing": 3.14},
    {"n": 64, "spacing": 2.0},
    {"n": 64, "spacing": 2.44},
)


def derive_seed(base_seed: int, scenario: int, replicate: int) -> int:
    return int(np.random.SeedSequence([base_seed, scenario, replicate]).generate_state(1, np.uint32)[0])


def enumerate_scenarios(config: ExperimentConfig) -> list[ScenarioSpec]:
    """One spec per (POI setup, N, T) cell, numbered in grid order.

    ``d_crowding`` is computed per group of setups with equal POI count. A
    ``"d_crowding"`` key in a setup is checked against the computed label.
    """
    layouts = [build_poi_grid(s["n"], s["spacing"], config.room) for s in config.poi_setups]
    labels: dict[int, int] = {}
    groups: dict[int, list[int]] = {}
    for idx, lay in enumerate(layouts):
        groups.setdefault(lay.n_crowding, []).append(idx)
    for members in groups.values():
        for idx, lab in zip(members, classify_crowding_distribution([layouts[i] for i in members])):
            labels[idx] = lab
    for idx, setup in enumerate(config.poi_setups):
        declared = setup.get("d_crowding")
        if declared is not None and declared != labels[idx]:
            raise ConfigError(
                f"POI setup {setup} declares d_crowding={declared} but its group yields {labels[idx]}")

    specs = []
    sid = 0
    for idx, (n_stop, t_min) in product(range(len(layouts)), product(config.n_stopping, config.t_stopping_min)):
        specs.append(ScenarioSpec(
            room=config.room,
            layout=layouts[idx],
            d_crowding=labels[idx],
            pattern=StoppingPattern(int(n_stop), float(t_min) * 60.0),
            population=config.population,
            epidemic=config.epidemic,
            seed=derive_seed(config.base_seed, sid, 0),
            scenario_id=sid,
            replicate=0,
            dt=config.dt,
            voronoi_stride=config.voronoi_stride,
            voronoi_reduction=config.voronoi_reduction,
        ))
        sid += 1
    return specs


def enumerate_runs(config: ExperimentConfig) -> list[ScenarioSpec]:
    """Every (scenario, replicate) run with its own derived seed."""
    return [replace(spec, replicate=r, seed=derive_seed(config.base_seed, spec.scenario_id, r))
            for spec in enumerate_scenarios(config) for r in range(config.replicates)]
