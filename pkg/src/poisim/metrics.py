"""Voronoi personal spaces and the spatial dispersion indicator."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import _kernels
from .scenario import RoomSpec

REDUCTIONS = ("mean", "median", "time_weighted")


class EmptySampleError(ValueError):
    pass


@dataclass
class VoronoiSample:
    time: float
    ids: np.ndarray
    areas: np.ndarray

    @property
    def occupants(self) -> int:
        return len(self.areas)


def _separate_duplicates(pts: np.ndarray) -> np.ndarray:
    """Nudge coincident points apart by 1e-9 m along x, in input order."""
    if len(pts) < 2:
        return pts
    _, counts = np.unique(pts, axis=0, return_counts=True)
    if (counts == 1).all():
        return pts
    pts = pts.copy()
    seen: dict[tuple[float, float], int] = {}
    for i, p in enumerate(map(tuple, pts)):
        k = seen.get(p, 0)
        if k:
            pts[i, 0] += 1e-9 * k
        seen[p] = k + 1
    return pts


def compute_personal_spaces(positions: Sequence, room: RoomSpec, time: float = 0.0,
                            ids: Sequence[int] | None = None, kernels=None) -> VoronoiSample:
    """Voronoi cell area of every occupant, clipped to the room rectangle."""
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptySampleError("no occupants to partition")
    pts = _separate_duplicates(pts)
    areas = (kernels or _kernels).voronoi_areas(np.ascontiguousarray(pts), room.width, room.depth)
    ids = np.arange(len(pts)) if ids is None else np.asarray(ids)
    return VoronoiSample(time=time, ids=ids, areas=areas)


def sample_stddev(sample: VoronoiSample, room: RoomSpec) -> float:
    """Population standard deviation of cell areas around room_area / P."""
    p = sample.occupants
    if p < 1:
        raise EmptySampleError("sample has no occupants")
    mean = room.area / p
    return float(np.sqrt(np.sum((sample.areas - mean) ** 2) / p))


def reduce_ticks(times: Sequence[float], sigmas: Sequence[float], reduction: str = "mean") -> float:
    """Collapse per-tick standard deviations into one scenario value."""
    sig = np.asarray(sigmas, dtype=float)
    if len(sig) == 0:
        raise EmptySampleError("no tick with at least two occupants")
    if reduction == "mean":
        return float(sig.mean())
    if reduction == "median":
        return float(np.median(sig))
    if reduction == "time_weighted":
        t = np.asarray(times, dtype=float)
        if len(t) == 1:
            return float(sig[0])
        # each tick holds until the next one; the last reuses the previous gap
        w = np.diff(t, append=t[-1] + (t[-1] - t[-2]))
        return float(np.sum(w * sig) / np.sum(w))
    raise ValueError(f"unknown reduction {reduction!r}; choose from {REDUCTIONS}")


def space_indicator(samples: Iterable[VoronoiSample], room: RoomSpec, reduction: str = "mean") -> float:
    ticks = [(s.time, sample_stddev(s, room)) for s in samples if s.occupants >= 2]
    if not ticks:
        raise EmptySampleError("no tick with at least two occupants")
    times, sigmas = zip(*ticks)
    return reduce_ticks(times, sigmas, reduction)


def scenario_space_indicator(log, room: RoomSpec, stride: float = 40.0,
                             reduction: str = "mean", kernels=None) -> float:
    """Indicator from a trajectory log sampled every ``stride`` seconds."""
    if not stride > 0:
        raise ValueError("stride must be positive")
    every = max(1, int(round(stride / log.dt)))
    samples = []
    for n in range(log.n_steps):
        step = log.first_step + n
        if step % every:
            continue
        ids = np.flatnonzero(log.present[n])
        if len(ids) == 0:
            continue
        samples.append(compute_personal_spaces(log.positions[n, ids], room, step * log.dt, ids, kernels))
    return space_indicator(samples, room, reduction)


def write_samples_csv(samples: Iterable[VoronoiSample], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "agent_id", "area_m2"])
        for s in samples:
            for a, area in zip(s.ids, s.areas):
                w.writerow([f"{s.time:.2f}", int(a), f"{area:.6f}"])
