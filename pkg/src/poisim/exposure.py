"""Cough emission and exposure accounting.

Exposure is accumulated as a plain per-step sum of plane-table values (the
``a_s`` column). ``EpidemicSpec.ug_per_unit`` converts such a sum to
micrograms before the high-risk threshold ``alpha`` is applied and before
E^Ave is reported. The default 4e4 reads ``a_s`` as grams per second, so
each 0.04 s step contributes ``a_s * 0.04`` g; it puts desk-scale average
exposures in the single-digit microgram range.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import _kernels


class PlaneRow(NamedTuple):
    s: float
    lo: float
    hi: float
    a: float
    b: float
    c: float


# Fitted Gaussian parameters per representative plane. Ranges are half-open
# [lo, hi) except the last one, which is closed at the infectious range.
PLANE_TABLE: tuple[PlaneRow, ...] = (
    PlaneRow(0.1, 0.0, 0.2, 3.793e-6, 0.100, 0.030),
    PlaneRow(0.3, 0.2, 0.4, 3.337e-6, 0.140, 0.034),
    PlaneRow(0.5, 0.4, 0.6, 2.075e-6, 0.180, 0.096),
    PlaneRow(0.7, 0.6, 0.8, 8.738e-7, 0.220, 0.284),
    PlaneRow(0.9, 0.8, 1.0, 6.720e-7, 0.220, 0.360),
    PlaneRow(1.1, 1.0, 1.2, 4.455e-7, 0.300, 0.410),
    PlaneRow(1.3, 1.2, 1.4, 1.632e-7, 0.340, 0.763),
    PlaneRow(1.5, 1.4, 1.6, 5.821e-8, 0.340, 0.882),
    PlaneRow(1.7, 1.6, 1.7, 5.475e-10, 0.380, 1.971),
)

PLANE_TABLE_CSV = Path(__file__).with_name("data") / "plane_table.csv"


def load_plane_table(path: str | Path) -> tuple[PlaneRow, ...]:
    """Read a plane table from CSV with columns s, lo, hi, a, b, c."""
    with open(path, newline="") as fh:
        rows = [PlaneRow(*(float(r[k]) for k in PlaneRow._fields)) for r in csv.DictReader(fh)]
    _check_table(rows)
    return tuple(rows)


def _check_table(rows: Sequence[PlaneRow]) -> None:
    if not rows:
        raise ValueError("plane table is empty")
    if rows[0].lo != 0.0:
        raise ValueError("plane table must start at distance 0")
    for prev, cur in zip(rows, rows[1:]):
        if cur.lo != prev.hi:
            raise ValueError(f"plane table gap between {prev.hi} and {cur.lo}")


class PlaneTable:
    """Lookup structure over the plane rows used by the exposure kernels."""

    def __init__(self, rows: Sequence[PlaneRow] = PLANE_TABLE):
        _check_table(rows)
        self.rows = tuple(rows)
        self.edges = np.array([r.hi for r in self.rows[:-1]], dtype=float)
        self.max_range = self.rows[-1].hi
        self.a = np.array([r.a for r in self.rows])
        self.b = np.array([r.b for r in self.rows])
        self.c = np.array([r.c for r in self.rows])

    def row_index(self, distance: float) -> int | None:
        if distance < 0:
            raise ValueError(f"negative distance {distance!r}")
        if distance > self.max_range:
            return None
        return int(np.searchsorted(self.edges, distance, side="right"))


DEFAULT_TABLE = PlaneTable()


@dataclass(frozen=True)
class EpidemicSpec:
    cough_interval_mean: float = 15.0
    infectious_duration_max: float = 15.0
    infectious_range: float = 1.70
    alpha: float = 7.00
    beta: float = 6.20e-4
    rho: float = 4.0738e-5
    ug_per_unit: float = 4.0e4
    exposure_stride: int = 1
    plane_table_path: str | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.beta <= 1:
            raise ValueError("beta must lie in (0, 1]")
        if not 0 < self.rho <= 1:
            raise ValueError("rho must lie in (0, 1]")
        if self.cough_interval_mean <= 0 or self.infectious_duration_max < 0:
            raise ValueError("cough timing parameters must be positive")
        if not self.ug_per_unit > 0:
            raise ValueError("ug_per_unit must be positive")
        if self.exposure_stride < 1:
            raise ValueError("exposure_stride must be >= 1")

    def plane_table(self) -> PlaneTable:
        if self.plane_table_path is None:
            return DEFAULT_TABLE
        return PlaneTable(load_plane_table(self.plane_table_path))


@dataclass(frozen=True)
class CoughEvent:
    infector: int
    index: int
    start_time: float
    origin: tuple[float, float]
    infectious_duration: float
    start_step: int = 0


@dataclass
class ExposureLedger:
    """Accumulated exposure per agent id; infectors stay at zero."""

    exposures: np.ndarray
    susceptible: np.ndarray

    @classmethod
    def empty(cls, roles: Sequence[int]) -> "ExposureLedger":
        roles = np.asarray(roles)
        return cls(np.zeros(len(roles)), roles == 0)

    @property
    def susceptible_exposures(self) -> np.ndarray:
        return self.exposures[self.susceptible]

    def __add__(self, other: "ExposureLedger") -> "ExposureLedger":
        if not np.array_equal(self.susceptible, other.susceptible):
            raise ValueError("ledgers cover different populations")
        return ExposureLedger(self.exposures + other.exposures, self.susceptible.copy())


def plane_params(distance: float, table: PlaneTable = DEFAULT_TABLE) -> tuple[float, float, float] | None:
    """Gaussian parameters (a, b, c) for the band containing ``distance``.

    Returns ``None`` beyond the infectious range, meaning zero exposure.
    """
    k = table.row_index(distance)
    if k is None:
        return None
    row = table.rows[k]
    return row.a, row.b, row.c


def instantaneous_exposure(distance: float, t_interval: float, cough: CoughEvent,
                           table: PlaneTable = DEFAULT_TABLE) -> float:
    if t_interval < 0:
        raise ValueError("t_interval must be non-negative")
    if t_interval > cough.infectious_duration:
        return 0.0
    params = plane_params(distance, table)
    if params is None:
        return 0.0
    a, b, c = params
    return a * math.exp(-(((t_interval - b) / c) ** 2))


class CoughProcess:
    """Lazily draws one infector's cough times and infectious durations.

    Both the online simulation and :func:`schedule_coughs` consume the same
    stream, so a given seed yields the same events either way.
    """

    def __init__(self, infector: int, enter_time: float, spec: EpidemicSpec,
                 rng: np.random.Generator):
        self.infector = infector
        self.spec = spec
        self.rng = rng
        self.count = 0
        self.next_time = enter_time + rng.exponential(spec.cough_interval_mean)

    def emit(self, step: int, time: float, origin) -> CoughEvent:
        event = CoughEvent(
            infector=self.infector,
            index=self.count,
            start_time=time,
            origin=(float(origin[0]), float(origin[1])),
            infectious_duration=float(self.rng.uniform(0.0, self.spec.infectious_duration_max)),
            start_step=step,
        )
        self.count += 1
        self.next_time += self.rng.exponential(self.spec.cough_interval_mean)
        return event


def schedule_coughs(infector: int, steps: np.ndarray, positions: np.ndarray, dt: float,
                    spec: EpidemicSpec, rng: np.random.Generator) -> list[CoughEvent]:
    """Cough events for one infector over its in-room steps.

    ``steps`` are the simulation step indices the infector was present at,
    ``positions`` the matching (n, 2) positions. A cough is emitted on the
    first step whose time reaches the drawn start time.
    """
    steps = np.asarray(steps)
    if len(steps) == 0:
        return []
    enter = steps[0] * dt
    process = CoughProcess(infector, enter, spec, rng)
    events = []
    for k, step in enumerate(steps):
        t = step * dt
        while process.next_time <= t + 1e-12:
            events.append(process.emit(int(step), t, positions[k]))
    return events


class ExposureAccumulator:
    """Per-step accumulation of exposure from active coughs.

    Coughs are dropped once their infectious window closes or their infector
    has left the room.
    """

    def __init__(self, roles: Sequence[int], dt: float, spec: EpidemicSpec | None = None):
        self.spec = spec or EpidemicSpec()
        self.table = self.spec.plane_table()
        self.dt = dt
        self.ledger = ExposureLedger.empty(roles)
        self._origins = np.zeros((0, 2))
        self._start = np.zeros(0, dtype=np.int64)
        self._tinf = np.zeros(0)
        self._owner = np.zeros(0, dtype=np.int64)

    def add(self, coughs: Iterable[CoughEvent]) -> None:
        coughs = list(coughs)
        if not coughs:
            return
        self._origins = np.vstack([self._origins, [c.origin for c in coughs]])
        self._start = np.concatenate([self._start, [c.start_step for c in coughs]])
        self._tinf = np.concatenate([self._tinf, [c.infectious_duration for c in coughs]])
        self._owner = np.concatenate([self._owner, [c.infector for c in coughs]])

    @property
    def active_count(self) -> int:
        return len(self._start)

    def step(self, step: int, ids: np.ndarray, positions: np.ndarray, present: np.ndarray) -> None:
        """Accumulate exposure at ``step`` for agents ``ids`` at ``positions``.

        ``present`` is a boolean mask over all agent ids marking who is in
        the room at this step.
        """
        if len(self._start) == 0:
            return
        age = (step - self._start) * self.dt
        keep = (age <= self._tinf) & present[self._owner]
        if not keep.all():
            self._origins = self._origins[keep]
            self._start = self._start[keep]
            self._tinf = self._tinf[keep]
            self._owner = self._owner[keep]
            age = age[keep]
        if len(age) == 0 or len(ids) == 0:
            return
        sus = self.ledger.susceptible[ids]
        if not sus.any():
            return
        sids = ids[sus]
        inc = _kernels.exposure_increment(
            np.ascontiguousarray(positions[sus], dtype=float),
            np.ascontiguousarray(self._origins, dtype=float),
            np.ascontiguousarray(age, dtype=float),
            self.table.edges, self.table.max_range,
            self.table.a, self.table.b, self.table.c,
        )
        self.ledger.exposures[sids] += inc


def accumulate_exposure(log, coughs: Iterable[CoughEvent], spec: EpidemicSpec | None = None) -> ExposureLedger:
    """Exposure ledger from a recorded trajectory log and a cough list.

    Every susceptible is sampled at each step between entering and leaving
    the room (every ``exposure_stride`` steps).
    """
    spec = spec or EpidemicSpec()
    acc = ExposureAccumulator(log.roles, log.dt, spec)
    by_step: dict[int, list[CoughEvent]] = {}
    for c in coughs:
        by_step.setdefault(c.start_step, []).append(c)
    for n in range(log.n_steps):
        step = log.first_step + n
        if step in by_step:
            acc.add(by_step[step])
        if n % spec.exposure_stride:
            continue
        present = log.present[n]
        ids = np.flatnonzero(present)
        acc.step(step, ids, log.positions[n][ids], present)
    return acc.ledger


def count_high_risk(ledger: ExposureLedger, alpha: float, ug_per_unit: float = 1.0) -> int:
    """Number of susceptibles whose exposure strictly exceeds ``alpha`` (ug)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    return int(np.count_nonzero(ledger.susceptible_exposures * ug_per_unit > alpha))


def predict_new_cases(c_risk: float, beta: float, rho: float) -> tuple[float, float]:
    """Simulated and population-scaled new cases from the high-risk count."""
    if c_risk < 0:
        raise ValueError("c_risk must be non-negative")
    c_new = beta * c_risk
    return c_new, c_new / rho


def average_exposure(ledger: ExposureLedger) -> float:
    sus = ledger.susceptible_exposures
    if len(sus) == 0:
        raise ValueError("average exposure undefined without susceptibles")
    return float(sus.sum() / len(sus))


def scale_population(real_total: int, real_infectors: int, rho: float) -> tuple[int, int]:
    if real_total <= 0 or real_infectors < 0 or not 0 < rho <= 1:
        raise ValueError("population counts and rho must be positive")
    total = int(round(real_total * rho))
    infectors = int(round(real_infectors * rho))
    if infectors == 0 and real_infectors > 0:
        warnings.warn("scaled infector count rounds to zero; no transmission is possible",
                      RuntimeWarning, stacklevel=2)
    return total, infectors
