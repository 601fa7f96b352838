"""Agent entry, walk/stop behaviour and social-force movement.

The world keeps every agent in flat numpy arrays indexed by agent id. Each
step first applies behaviour transitions (:func:`update_behavior`) and then
moves the walkers (:func:`integrate_step`). Positions are in metres, times in
seconds, forces in newtons.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Sequence

import numpy as np

from . import _kernels
from .scenario import POILayout, PopulationSpec, RoomSpec


class Phase(IntEnum):
    PENDING = -1
    WALKING = 0
    TO_POI = 1
    STOPPED = 2
    EXITING = 3
    DONE = 4


class Role(IntEnum):
    SUSCEPTIBLE = 0
    INFECTOR = 1


class SimulationIntegrityError(RuntimeError):
    pass


@dataclass(frozen=True)
class SocialForceParams:
    tau: float = 0.5
    A: float = 2000.0
    B: float = 0.08
    k: float = 1.2e5
    kappa: float = 2.4e5
    mass: float = 80.0
    radius: float = 0.2
    desired_speed: float = 1.34
    speed_cap_factor: float = 1.3
    arrival_radius: float = 0.3
    target_clearance: float = 0.5
    stall_progress: float = 0.05
    stall_time: float = 2.0
    exit_radius: float = 0.6
    interaction_cutoff: float = 3.0

    @property
    def max_speed(self) -> float:
        return self.speed_cap_factor * self.desired_speed

    def kernel_args(self, room: RoomSpec) -> tuple:
        return (self.radius, self.mass, self.desired_speed, self.tau, self.A, self.B,
                self.k, self.kappa, room.width, room.depth, self.interaction_cutoff)


@dataclass
class AgentState:
    """One pedestrian, used by the per-agent force functions."""

    id: int
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(2))
    role: Role = Role.SUSCEPTIBLE
    phase: Phase = Phase.WALKING
    target: np.ndarray | None = None
    mass: float = 80.0
    radius: float = 0.2
    desired_speed: float = 1.34
    enter_time: float = 0.0
    dwell_time: float = 1500.0
    stops_completed: int = 0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if self.target is not None:
            self.target = np.asarray(self.target, dtype=float)


def compute_goal_force(agent: AgentState, params: SocialForceParams = SocialForceParams()) -> np.ndarray:
    e = np.zeros(2)
    if agent.target is not None:
        to = agent.target - agent.position
        dist = math.hypot(*to)
        if dist > 1e-12:
            e = to / dist
    return agent.mass * (agent.desired_speed * e - agent.velocity) / params.tau


def _pair_force(pos_i, vel_i, pos_j, vel_j, r_ij, params, fallback=(1.0, 0.0)) -> np.ndarray:
    diff = pos_i - pos_j
    d = math.hypot(*diff)
    n = np.asarray(fallback, dtype=float) if d < 1e-12 else diff / d
    t = np.array([-n[1], n[0]])
    g = r_ij - d
    contact = max(0.0, g)
    dvt = float(np.dot(vel_j - vel_i, t))
    return (params.A * math.exp(g / params.B) + params.k * contact) * n + params.kappa * contact * dvt * t


def compute_pedestrian_force(agent: AgentState, neighbor: AgentState,
                             params: SocialForceParams = SocialForceParams()) -> np.ndarray:
    """Psychological repulsion plus body contact and sliding friction."""
    fallback = (1.0, 0.0) if agent.id < neighbor.id else (-1.0, 0.0)
    return _pair_force(agent.position, agent.velocity, neighbor.position, neighbor.velocity,
                       agent.radius + neighbor.radius, params, fallback)


def compute_obstacle_force(agent: AgentState, room: RoomSpec, stopped: Sequence[AgentState] = (),
                           params: SocialForceParams = SocialForceParams()) -> np.ndarray:
    """Force from the four walls and from agents standing at POIs."""
    x, y = agent.position
    total = np.zeros(2)
    for dist, normal in ((x, (1.0, 0.0)), (room.width - x, (-1.0, 0.0)),
                         (y, (0.0, 1.0)), (room.depth - y, (0.0, -1.0))):
        n = np.array(normal)
        t = np.array([-n[1], n[0]])
        g = agent.radius - dist
        contact = max(0.0, g)
        total += (params.A * math.exp(g / params.B) + params.k * contact) * n
        total -= params.kappa * contact * float(np.dot(agent.velocity, t)) * t
    for other in stopped:
        total += compute_pedestrian_force(agent, other, params)
    return total


@dataclass
class EntrySchedule:
    arrivals: np.ndarray
    roles: np.ndarray


def infector_slots(total: int, infectors: int) -> list[int]:
    """Entry-order indices of infectors, evenly interleaved."""
    if infectors > total:
        raise ValueError("more infectors than agents")
    if infectors == 0:
        return []
    period = total // infectors
    return [period // 2 + k * period for k in range(infectors)]


def build_entry_schedule(population: PopulationSpec, rng: np.random.Generator) -> EntrySchedule:
    """Exponential arrival gaps; the first agent arrives at t = 0."""
    n = population.total
    if population.infectors > n:
        raise ValueError("more infectors than agents")
    gaps = rng.exponential(population.entry_gap_mean, size=n)
    arrivals = np.concatenate([[0.0], np.cumsum(gaps[1:])]) if n else np.zeros(0)
    roles = np.zeros(n, dtype=np.int8)
    roles[infector_slots(n, population.infectors)] = Role.INFECTOR
    return EntrySchedule(arrivals=arrivals, roles=roles)


@dataclass
class TrajectoryLog:
    """Per-step positions of every agent; NaN where the agent is absent."""

    dt: float
    roles: np.ndarray
    positions: np.ndarray
    present: np.ndarray
    phases: np.ndarray
    first_step: int = 0

    @property
    def n_steps(self) -> int:
        return len(self.present)

    def agent_steps(self, agent: int) -> np.ndarray:
        return np.flatnonzero(self.present[:, agent]) + self.first_step

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "time_s", "agent_id", "role", "phase", "x_m", "y_m"])
            for n in range(self.n_steps):
                step = self.first_step + n
                for a in np.flatnonzero(self.present[n]):
                    x, y = self.positions[n, a]
                    w.writerow([step, f"{step * self.dt:.2f}", a,
                                Role(self.roles[a]).name.lower(),
                                Phase(self.phases[n, a]).name.lower(),
                                f"{x:.4f}", f"{y:.4f}"])


class _LogRecorder:
    def __init__(self, n_agents: int):
        self.n = n_agents
        self.pos: list[np.ndarray] = []
        self.present: list[np.ndarray] = []
        self.phase: list[np.ndarray] = []

    def record(self, world: "World") -> None:
        present = world.present
        p = np.full((self.n, 2), np.nan)
        p[present] = world.pos[present]
        self.pos.append(p)
        self.present.append(present.copy())
        self.phase.append(world.phase.copy())

    def finish(self, dt: float, roles: np.ndarray) -> TrajectoryLog:
        if not self.pos:
            empty = np.zeros((0, self.n))
            return TrajectoryLog(dt, roles, np.zeros((0, self.n, 2)), empty.astype(bool), empty.astype(np.int8))
        return TrajectoryLog(dt, roles, np.stack(self.pos), np.stack(self.present), np.stack(self.phase))


_ACTIVE = (Phase.WALKING, Phase.TO_POI, Phase.STOPPED, Phase.EXITING)
_MOVING = (Phase.WALKING, Phase.TO_POI, Phase.EXITING)


class World:
    """Movement state of one scenario run.

    Stop timing: the walking time budget ``dwell - n_stopping * t_stopping``
    is split uniformly at random into ``n_stopping + 1`` segments; stop k
    falls due once the agent has walked for the first k+1 segments. Time
    spent heading to a POI counts as walking.
    """

    def __init__(self, room: RoomSpec, layout: POILayout, n_stopping: int, t_stopping: float,
                 population: PopulationSpec, rng: np.random.Generator, dt: float = 0.04,
                 params: SocialForceParams = SocialForceParams(),
                 schedule: EntrySchedule | None = None, kernels=None):
        self.room = room
        self.layout = layout
        self.pois = layout.as_array()
        self.params = params
        self.dt = dt
        self.rng = rng
        self.kernels = kernels or _kernels
        self.schedule = schedule if schedule is not None else build_entry_schedule(population, rng)
        n = len(self.schedule.arrivals)
        self.n_agents = n
        self.n_stopping = int(n_stopping)
        self.stop_steps = int(round(t_stopping / dt)) if n_stopping else 0
        self.dwell_steps = int(round(population.dwell / dt))
        walk_budget = max(0, self.dwell_steps - self.n_stopping * self.stop_steps)
        due = np.sort(rng.integers(0, walk_budget + 1, size=(n, self.n_stopping)), axis=1)
        self.due = due.astype(np.int64)

        self.roles = self.schedule.roles.astype(np.int8)
        self.phase = np.full(n, Phase.PENDING, dtype=np.int8)
        self.pos = np.zeros((n, 2))
        self.vel = np.zeros((n, 2))
        self.target = np.zeros((n, 2))
        self.poi = np.full(n, -1, dtype=np.int64)
        self.stop_left = np.zeros(n, dtype=np.int64)
        self.stops_done = np.zeros(n, dtype=np.int64)
        self.walk_steps = np.zeros(n, dtype=np.int64)
        self.enter_step = np.full(n, -1, dtype=np.int64)
        self.exit_step = np.full(n, -1, dtype=np.int64)
        self.stop_log: list[tuple[int, int, int, int]] = []  # (agent, poi, start, end)
        self._stop_start = np.full(n, -1, dtype=np.int64)
        self._stall = np.zeros(n, dtype=np.int64)
        self._best = np.full(n, np.inf)
        self._stall_steps = max(1, int(round(params.stall_time / dt)))
        self._queue = 0
        self.step_index = 0

        nx, ny = room.inward_normal(room.entrance)
        off = params.radius + 0.2
        self.spawn = np.array([room.entrance[0] + nx * off, room.entrance[1] + ny * off])
        self.exit_point = np.asarray(room.exit, dtype=float)

    # -- queries -----------------------------------------------------------
    @property
    def time(self) -> float:
        return self.step_index * self.dt

    @property
    def present(self) -> np.ndarray:
        return (self.phase >= Phase.WALKING) & (self.phase <= Phase.EXITING)

    @property
    def moving(self) -> np.ndarray:
        return self.present & (self.phase != Phase.STOPPED)

    @property
    def finished(self) -> bool:
        return bool((self.phase == Phase.DONE).all())

    # -- behaviour helpers ---------------------------------------------------
    def _random_target(self) -> np.ndarray:
        c = self.params.target_clearance
        lo = np.array([c, c])
        hi = np.array([self.room.width - c, self.room.depth - c])
        stopped = self.pos[self.phase == Phase.STOPPED]
        limit = c + self.params.radius
        cand = lo + (hi - lo) * self.rng.random(2)
        for _ in range(50):
            if len(stopped) == 0 or np.hypot(*(stopped - cand).T).min() >= limit:
                break
            cand = lo + (hi - lo) * self.rng.random(2)
        return cand

    def _admit(self) -> None:
        while self._queue < self.n_agents and self.schedule.arrivals[self._queue] <= self.time + 1e-9:
            present = self.present
            if present.any():
                d = np.hypot(*(self.pos[present] - self.spawn).T)
                if d.min() < 2 * self.params.radius + 0.05:
                    return
            a = self._queue
            self.pos[a] = self.spawn
            self.vel[a] = 0.0
            self.phase[a] = Phase.WALKING
            self.enter_step[a] = self.step_index
            self.target[a] = self._random_target()
            self._queue += 1

    def _start_walk(self, agents) -> None:
        for a in agents:
            self.phase[a] = Phase.WALKING
            self.target[a] = self._random_target()

    def update_behavior(self) -> None:
        n = self.step_index
        ph = self.phase
        walking_before = (ph == Phase.WALKING) | (ph == Phase.TO_POI)
        self.walk_steps[walking_before] += 1

        stopped = np.flatnonzero(ph == Phase.STOPPED)
        if len(stopped):
            self.stop_left[stopped] -= 1
            done = stopped[self.stop_left[stopped] <= 0]
            for a in done:
                self.stop_log.append((int(a), int(self.poi[a]), int(self._stop_start[a]), n))
                self.stops_done[a] += 1
                self.poi[a] = -1
            self._start_walk(done)

        self._admit()

        walking = np.flatnonzero(ph == Phase.WALKING)
        if len(walking):
            elapsed = n - self.enter_step[walking]
            sd = self.stops_done[walking]
            pending = sd < self.n_stopping
            due_now = np.zeros(len(walking), dtype=bool)
            if self.n_stopping:
                idx = np.minimum(sd, self.n_stopping - 1)
                due_now = pending & (self.walk_steps[walking] >= self.due[walking, idx])
            leave = ~pending & (elapsed >= self.dwell_steps)
            to_go = walking[due_now]
            for a in to_go:
                p = int(self.rng.integers(len(self.pois)))
                self.poi[a] = p
                self.phase[a] = Phase.TO_POI
                self._best[a] = np.inf
                self._stall[a] = 0
                self.target[a] = self.pois[p]
            exiting = walking[leave]
            self.phase[exiting] = Phase.EXITING
            self.target[exiting] = self.exit_point
            rest = walking[~due_now & ~leave]
            if len(rest):
                d = np.hypot(*(self.target[rest] - self.pos[rest]).T)
                for a in rest[d < self.params.arrival_radius]:
                    self.target[a] = self._random_target()

        heading = np.flatnonzero(ph == Phase.TO_POI)
        if len(heading):
            d = np.hypot(*(self.target[heading] - self.pos[heading]).T)
            # joining the crowd: no progress toward the POI for stall_time
            better = d < self._best[heading] - self.params.stall_progress
            self._best[heading[better]] = d[better]
            self._stall[heading] = np.where(better, 0, self._stall[heading] + 1)
            arrive = (d <= self.params.arrival_radius) | (self._stall[heading] >= self._stall_steps)
            for a in heading[arrive]:
                self.phase[a] = Phase.STOPPED
                self.vel[a] = 0.0
                self.stop_left[a] = self.stop_steps
                self._stop_start[a] = n

        leaving = np.flatnonzero(ph == Phase.EXITING)
        if len(leaving):
            d = np.hypot(*(self.exit_point - self.pos[leaving]).T)
            gone = leaving[d <= self.params.exit_radius]
            self.phase[gone] = Phase.DONE
            self.exit_step[gone] = n
            self.vel[gone] = 0.0

    def integrate_step(self) -> None:
        idx = np.flatnonzero(self.present)
        if len(idx):
            pos = np.ascontiguousarray(self.pos[idx])
            vel = np.ascontiguousarray(self.vel[idx])
            tgt = np.ascontiguousarray(self.target[idx])
            mov = np.ascontiguousarray((self.phase[idx] != Phase.STOPPED).astype(np.uint8))
            self.kernels.advance(pos, vel, tgt, mov, *self.params.kernel_args(self.room),
                                 self.dt, self.params.max_speed)
            if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
                bad = idx[~(np.isfinite(pos).all(axis=1) & np.isfinite(vel).all(axis=1))]
                raise SimulationIntegrityError(
                    f"non-finite state for agent {int(bad[0])} at step {self.step_index}")
            self.pos[idx] = pos
            self.vel[idx] = vel
        self.step_index += 1

    def agent(self, a: int) -> AgentState:
        return AgentState(
            id=a, position=self.pos[a].copy(), velocity=self.vel[a].copy(),
            role=Role(self.roles[a]), phase=Phase(self.phase[a]), target=self.target[a].copy(),
            mass=self.params.mass, radius=self.params.radius,
            desired_speed=self.params.desired_speed,
            enter_time=self.enter_step[a] * self.dt,
            dwell_time=self.dwell_steps * self.dt,
            stops_completed=int(self.stops_done[a]),
        )


def update_behavior(world: World) -> World:
    world.update_behavior()
    return world


def integrate_step(world: World, dt: float | None = None) -> World:
    if dt is not None and not math.isclose(dt, world.dt):
        raise ValueError("world was built for a different step size")
    if world.dt <= 0:
        raise ValueError("dt must be positive")
    world.integrate_step()
    return world


def simulate(world: World, max_time: float | None = None, log: bool = False,
             observers: Sequence = ()) -> TrajectoryLog | None:
    """Run ``world`` until every agent has left.

    Each observer is called as ``observer(world)`` after behaviour updates and
    before movement, i.e. with the positions at ``world.time``.
    """
    if max_time is None:
        last = world.schedule.arrivals[-1] if world.n_agents else 0.0
        max_time = last + world.dwell_steps * world.dt + 3600.0
    max_steps = int(math.ceil(max_time / world.dt))
    rec = _LogRecorder(world.n_agents) if log else None
    while not world.finished:
        if world.step_index > max_steps:
            stuck = np.flatnonzero(world.phase != Phase.DONE)
            raise SimulationIntegrityError(
                f"{len(stuck)} agents still active after {max_time:.0f} s (e.g. agent {int(stuck[0])})")
        world.update_behavior()
        for obs in observers:
            obs(world)
        if rec is not None:
            rec.record(world)
        world.integrate_step()
    return rec.finish(world.dt, world.roles) if rec is not None else None
