"""Discretized indoor venue: zones, beacons, per-zone channel conditions, random walk."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 3e8  # m/s

LOS = 0
NLOS = 1

# the 8 compass moves; (0, 0) is excluded
DIRECTIONS = np.array(
    [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)],
    dtype=np.int64,
)

SNAPSHOT_FORMAT = "uwbsel-environment"
SNAPSHOT_VERSION = 1


class VenueError(ValueError):
    """Invalid venue, beacon layout or channel map."""


@dataclass(frozen=True)
class Beacon:
    id: int
    position: tuple[float, float]


@dataclass
class EnvironmentConfig:
    n_x: int = 60
    n_y: int = 50
    cell_size: float = 1.0
    beacons: list[tuple[float, float]] | None = None
    n_beacons: int = 8
    p_nlos: float = 0.3
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "EnvironmentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise VenueError(f"unknown environment keys: {sorted(unknown)}")
        d = dict(d)
        if d.get("beacons") is not None:
            d["beacons"] = [tuple(float(v) for v in p) for p in d["beacons"]]
        return cls(**d)

    def to_dict(self) -> dict:
        return {
            "n_x": self.n_x,
            "n_y": self.n_y,
            "cell_size": self.cell_size,
            "beacons": None if self.beacons is None else [list(p) for p in self.beacons],
            "n_beacons": self.n_beacons,
            "p_nlos": self.p_nlos,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class ChannelMap:
    """Dense (zone, beacon) -> LoS/NLoS table; ``condition[z, b] == NLOS`` marks NLoS."""

    condition: np.ndarray

    def is_nlos(self, zone_index: int, beacon_id: int) -> bool:
        return bool(self.condition[zone_index, beacon_id] == NLOS)

    @property
    def nlos_fraction(self) -> float:
        return float(np.mean(self.condition == NLOS))


@dataclass(frozen=True, eq=False)
class GridEnvironment:
    """Immutable venue of ``n_x * n_y`` square zones with a fixed beacon deployment.

    Zones are addressed either as ``(x, y)`` integer pairs with ``0 <= x < n_x``,
    ``0 <= y < n_y`` or by their row-major index ``x * n_y + y``.
    """

    n_x: int
    n_y: int
    cell_size: float
    beacons: tuple[Beacon, ...]
    channel_map: ChannelMap
    centers: np.ndarray = field(init=False, repr=False)
    beacon_xy: np.ndarray = field(init=False, repr=False)
    # line-of-sight propagation time from every zone center to every beacon, (N_l, N)
    toa_table: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_x < 2 or self.n_y < 2:
            raise VenueError(f"grid must be at least 2x2, got {self.n_x}x{self.n_y}")
        if not self.cell_size > 0:
            raise VenueError(f"cell_size must be positive, got {self.cell_size}")
        if not self.beacons:
            raise VenueError("at least one beacon is required")
        if [b.id for b in self.beacons] != list(range(len(self.beacons))):
            raise VenueError("beacon ids must be unique and contiguous from 0")
        w, h = self.width, self.height
        for b in self.beacons:
            x, y = b.position
            if not (0.0 <= x <= w and 0.0 <= y <= h):
                raise VenueError(f"beacon {b.id} at {b.position} lies outside [0,{w}]x[0,{h}]")
        cond = np.asarray(self.channel_map.condition)
        if cond.shape != (self.n_zones, len(self.beacons)):
            raise VenueError(
                f"channel map shape {cond.shape} != ({self.n_zones}, {len(self.beacons)})"
            )
        if not np.isin(cond, (LOS, NLOS)).all():
            raise VenueError("channel map entries must be LoS (0) or NLoS (1)")

        ix, iy = np.divmod(np.arange(self.n_zones), self.n_y)
        centers = np.column_stack([(ix + 0.5) * self.cell_size, (iy + 0.5) * self.cell_size])
        bxy = np.array([b.position for b in self.beacons], dtype=float)
        toa = np.hypot(centers[:, None, 0] - bxy[None, :, 0],
                       centers[:, None, 1] - bxy[None, :, 1]) / SPEED_OF_LIGHT
        for arr in (centers, bxy, toa):
            arr.setflags(write=False)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "beacon_xy", bxy)
        object.__setattr__(self, "toa_table", toa)

    @property
    def n_zones(self) -> int:
        return self.n_x * self.n_y

    @property
    def n_beacons(self) -> int:
        return len(self.beacons)

    @property
    def width(self) -> float:
        return self.n_x * self.cell_size

    @property
    def height(self) -> float:
        return self.n_y * self.cell_size

    def in_bounds(self, zone) -> bool:
        x, y = zone
        return 0 <= x < self.n_x and 0 <= y < self.n_y

    def check_zone(self, zone) -> tuple[int, int]:
        if not self.in_bounds(zone):
            raise VenueError(f"zone {tuple(zone)} outside {self.n_x}x{self.n_y} grid")
        return int(zone[0]), int(zone[1])

    def zone_index(self, zone) -> int:
        x, y = self.check_zone(zone)
        return x * self.n_y + y

    def zone_of(self, index: int) -> tuple[int, int]:
        x, y = divmod(int(index), self.n_y)
        return x, y

    def fingerprint(self) -> dict:
        return {"n_x": self.n_x, "n_y": self.n_y, "n_beacons": self.n_beacons}

    # -- snapshot -----------------------------------------------------------------

    def to_snapshot(self) -> dict:
        cond = self.channel_map.condition
        return {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "n_x": self.n_x,
            "n_y": self.n_y,
            "cell_size": self.cell_size,
            "beacons": [{"id": b.id, "x": b.position[0], "y": b.position[1]} for b in self.beacons],
            # one string per zone (row-major), one character per beacon
            "channel_map": ["".join("N" if c else "L" for c in row) for row in cond.tolist()],
        }

    @classmethod
    def from_snapshot(cls, snap: dict) -> "GridEnvironment":
        if snap.get("format") != SNAPSHOT_FORMAT:
            raise VenueError("not an environment snapshot")
        if snap.get("version") != SNAPSHOT_VERSION:
            raise VenueError(f"unsupported snapshot version {snap.get('version')}")
        beacons = tuple(Beacon(int(b["id"]), (float(b["x"]), float(b["y"]))) for b in snap["beacons"])
        rows = snap["channel_map"]
        cond = np.array([[1 if ch == "N" else 0 for ch in row] for row in rows], dtype=np.int8)
        if cond.ndim != 2:
            raise VenueError("ragged channel map in snapshot")
        return cls(int(snap["n_x"]), int(snap["n_y"]), float(snap["cell_size"]), beacons,
                   ChannelMap(cond))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_snapshot(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "GridEnvironment":
        return cls.from_snapshot(json.loads(Path(path).read_text()))


def perimeter_positions(width: float, height: float, count: int) -> list[tuple[float, float]]:
    """Evenly spaced points on the venue boundary, counter-clockwise from (0, 0)."""
    perim = 2 * (width + height)
    out = []
    for k in range(count):
        s = k * perim / count
        if s < width:
            out.append((s, 0.0))
        elif s < width + height:
            out.append((width, s - width))
        elif s < 2 * width + height:
            out.append((width - (s - width - height), height))
        else:
            out.append((0.0, height - (s - 2 * width - height)))
    return out


def build_environment(config: EnvironmentConfig, rng: np.random.Generator | None = None) -> GridEnvironment:
    """Build a venue and sample its channel map i.i.d. per (zone, beacon).

    Uses ``config.seed`` when ``rng`` is not supplied.
    """
    if not 0.0 <= config.p_nlos <= 1.0:
        raise VenueError(f"p_nlos must be in [0, 1], got {config.p_nlos}")
    if config.beacons is not None:
        positions = list(config.beacons)
    else:
        if config.n_beacons < 1:
            raise VenueError("at least one beacon is required")
        positions = perimeter_positions(config.n_x * config.cell_size,
                                        config.n_y * config.cell_size, config.n_beacons)
    if not positions:
        raise VenueError("at least one beacon is required")
    beacons = tuple(Beacon(i, (float(x), float(y))) for i, (x, y) in enumerate(positions))
    if rng is None:
        rng = np.random.default_rng(config.seed)
    n_zones = config.n_x * config.n_y
    draws = rng.random((n_zones, len(beacons)))
    cond = (draws < config.p_nlos).astype(np.int8)
    cond.setflags(write=False)
    return GridEnvironment(config.n_x, config.n_y, config.cell_size, beacons, ChannelMap(cond))


def zone_center(zone, env: GridEnvironment) -> tuple[float, float]:
    x, y = env.check_zone(zone)
    return (x + 0.5) * env.cell_size, (y + 0.5) * env.cell_size


def step_random_walk(state, env: GridEnvironment, rng: np.random.Generator) -> tuple[int, int]:
    """One move in one of the 8 compass directions, clamped per axis to the grid."""
    dx, dy = DIRECTIONS[rng.integers(len(DIRECTIONS))]
    return apply_move(state, (int(dx), int(dy)), env)


def apply_move(state, move, env: GridEnvironment) -> tuple[int, int]:
    x = min(max(int(state[0]) + move[0], 0), env.n_x - 1)
    y = min(max(int(state[1]) + move[1], 0), env.n_y - 1)
    return x, y


def random_zone(env: GridEnvironment, rng: np.random.Generator) -> tuple[int, int]:
    return env.zone_of(rng.integers(env.n_zones))
