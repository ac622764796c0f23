"""Time-of-arrival synthesis: LoS propagation delay, Gaussian jitter, exponential NLoS excess delay."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .env import Beacon, GridEnvironment


@dataclass(frozen=True)
class ToaMeasurement:
    beacon_id: int
    toa: float  # seconds


@dataclass(frozen=True)
class NoiseModel:
    sigma_toa: float = 1e-9
    nlos_bias_mean: float = 10e-9

    def __post_init__(self):
        if not self.sigma_toa >= 0:
            raise ValueError(f"sigma_toa must be >= 0, got {self.sigma_toa}")
        if not self.nlos_bias_mean >= 0:
            raise ValueError(f"nlos_bias_mean must be >= 0, got {self.nlos_bias_mean}")


def simulate_toas(user_zone, beacon_ids, env: GridEnvironment, noise: NoiseModel,
                  rng: np.random.Generator) -> list[ToaMeasurement]:
    """Measured ToAs from the zone center of ``user_zone`` to each beacon in ``beacon_ids``.

    The stream always consumes one normal and one exponential variate per beacon
    (when the respective magnitude is non-zero), so draws do not depend on the
    channel map.
    """
    z = env.zone_index(user_zone)
    ids = np.asarray(beacon_ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= env.n_beacons):
        raise ValueError(f"beacon ids {ids.tolist()} not in environment")
    toa = measure_zone(z, ids, env, noise, rng)
    return [ToaMeasurement(int(b), float(t)) for b, t in zip(ids, toa)]


def measure_zone(z: int, ids: np.ndarray, env: GridEnvironment, noise: NoiseModel,
                 rng: np.random.Generator) -> np.ndarray:
    """Array form of :func:`simulate_toas` for a zone index; no validation."""
    toa = env.toa_table[z, ids].copy()
    if noise.sigma_toa > 0:
        toa += rng.normal(0.0, noise.sigma_toa, ids.size)
    np.maximum(toa, 0.0, out=toa)
    if noise.nlos_bias_mean > 0:
        bias = rng.exponential(noise.nlos_bias_mean, ids.size)
        toa += np.where(env.channel_map.condition[z, ids] == 1, bias, 0.0)
    return toa


def simulate_toa(user_zone, beacon: Beacon, env: GridEnvironment, noise: NoiseModel,
                 rng: np.random.Generator) -> ToaMeasurement:
    if not (0 <= beacon.id < env.n_beacons and env.beacons[beacon.id] == beacon):
        raise ValueError(f"beacon {beacon} does not belong to this environment")
    return simulate_toas(user_zone, [beacon.id], env, noise, rng)[0]


def tdoa(m_i: ToaMeasurement, m_j: ToaMeasurement) -> float:
    if m_i.beacon_id == m_j.beacon_id:
        raise ValueError(f"TDoA needs two distinct beacons, got {m_i.beacon_id} twice")
    return m_i.toa - m_j.toa


def dump_toa_csv(path, env: GridEnvironment, noise: NoiseModel, rng: np.random.Generator) -> int:
    """Write one simulated (zone, beacon, toa, condition) row per zone/beacon pair."""
    rows = 0
    all_ids = list(range(env.n_beacons))
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["zone_x", "zone_y", "beacon", "toa_s", "condition"])
        for z in range(env.n_zones):
            zone = env.zone_of(z)
            for m in simulate_toas(zone, all_ids, env, noise, rng):
                cond = "NLoS" if env.channel_map.is_nlos(z, m.beacon_id) else "LoS"
                w.writerow([zone[0], zone[1], m.beacon_id, repr(m.toa), cond])
                rows += 1
    return rows
