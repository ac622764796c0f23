"""Grid-constrained TDoA positioning.

The estimate is the zone whose center best explains the measured arrival-time
differences, found by exhaustive search over every zone of the venue.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .env import SPEED_OF_LIGHT, Beacon, GridEnvironment, zone_center
from .measurement import ToaMeasurement

# residuals closer than this (s^2) are treated as ties
TIE_TOL = 1e-24


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class PositionEstimate:
    zone: tuple[int, int]
    residual: float  # s^2


def predicted_tdoa(zone, beacon_i: Beacon, beacon_j: Beacon, env: GridEnvironment) -> float:
    px, py = zone_center(zone, env)
    d_i = math.hypot(px - beacon_i.position[0], py - beacon_i.position[1])
    d_j = math.hypot(px - beacon_j.position[0], py - beacon_j.position[1])
    return (d_i - d_j) / SPEED_OF_LIGHT


def _check(measurements: Sequence[ToaMeasurement], env: GridEnvironment) -> np.ndarray:
    if len(measurements) < 2:
        raise SolverError(f"need at least 2 measurements, got {len(measurements)}")
    ids = np.array([m.beacon_id for m in measurements], dtype=np.int64)
    if len(set(ids.tolist())) != len(ids):
        raise SolverError(f"duplicate beacon ids {ids.tolist()}")
    if ids.min() < 0 or ids.max() >= env.n_beacons:
        raise SolverError(f"beacon ids {ids.tolist()} not in environment")
    return ids


def residual_surface(measurements: Sequence[ToaMeasurement], env: GridEnvironment,
                     weights: Sequence[float] | None = None) -> np.ndarray:
    """Sum of squared TDoA residuals at every zone (row-major), reference = measurement 0.

    ``weights`` optionally scales each of the ``len(measurements) - 1`` difference terms.
    """
    ids = _check(measurements, env)
    toas = np.array([m.toa for m in measurements])
    return surface_from_arrays(ids, toas, env, weights)


def surface_from_arrays(ids: np.ndarray, toas: np.ndarray, env: GridEnvironment,
                        weights=None) -> np.ndarray:
    """Array form of :func:`residual_surface`; ``ids[0]`` is the reference beacon."""
    meas = toas[1:] - toas[0]
    table = env.toa_table
    pred = table[:, ids[1:]] - table[:, ids[:1]]
    sq = (meas[None, :] - pred) ** 2
    if weights is not None:
        sq = sq * np.asarray(weights, dtype=float)[None, :]
    return sq.sum(axis=1)


def pick_zone(res: np.ndarray, env: GridEnvironment, prev=None) -> int:
    """Index of the minimal residual, breaking near-ties by distance to ``prev`` then by index."""
    best = res.min()
    cand = np.flatnonzero(res <= best + TIE_TOL)
    if len(cand) == 1 or prev is None:
        return int(cand[0])
    p = np.array(zone_center(prev, env))
    d2 = ((env.centers[cand] - p) ** 2).sum(axis=1)
    return int(cand[np.argmin(d2)])


def solve_grid(measurements: Sequence[ToaMeasurement], env: GridEnvironment,
               prev=None, weights: Sequence[float] | None = None) -> PositionEstimate:
    res = residual_surface(measurements, env, weights)
    k = pick_zone(res, env, prev)
    return PositionEstimate(env.zone_of(k), float(res[k]))


def dump_residuals_csv(path, surfaces: Sequence[tuple[int, np.ndarray]], env: GridEnvironment) -> None:
    """Write ``(step, zone_x, zone_y, residual)`` rows for each (step, surface) pair."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "zone_x", "zone_y", "residual_s2"])
        for step, res in surfaces:
            for k, r in enumerate(res.tolist()):
                x, y = env.zone_of(k)
                w.writerow([step, x, y, repr(r)])
