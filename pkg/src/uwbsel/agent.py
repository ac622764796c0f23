"""Tabular Q-learning over (zone, beacon subset) with a jump-start guide policy.

For the first ``h`` steps of every training episode the action comes from a
fixed guide table; the remaining steps are epsilon-greedy on the live table.
``h`` starts at ``h_max`` and decays linearly to zero across episodes.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import GridEnvironment, random_zone, step_random_walk
from .measurement import NoiseModel, measure_zone
from .solver import pick_zone

QTABLE_MAGIC = "# uwbsel-qtable v1"

GUIDE, EXPLORE_GREEDY, EXPLORE_RANDOM = 0, 1, 2
POLICY_NAMES = ("guide", "explore-greedy", "explore-random", "baseline")


class NumericalError(RuntimeError):
    pass


class CompatibilityError(ValueError):
    pass


class ActionSpace:
    """All ``n_r``-subsets of the beacon ids, as ascending tuples in lexicographic order."""

    def __init__(self, n_beacons: int, n_r: int):
        if n_r < 2:
            raise ValueError(f"TDoA needs n_r >= 2, got {n_r}")
        if n_beacons < n_r:
            raise ValueError(f"{n_beacons} beacons cannot form subsets of size {n_r}")
        self.n_beacons = n_beacons
        self.n_r = n_r
        self.subsets = list(itertools.combinations(range(n_beacons), n_r))
        self.n_a = math.comb(n_beacons, n_r)
        self._ids = np.array(self.subsets, dtype=np.int64).reshape(self.n_a, n_r)
        self._index = {s: i for i, s in enumerate(self.subsets)}

    def __len__(self):
        return self.n_a

    def ids(self, action: int) -> np.ndarray:
        return self._ids[action]

    def index(self, subset) -> int:
        return self._index[tuple(sorted(subset))]


@dataclass
class AgentConfig:
    alpha: float = 0.1
    gamma: float = 0.0
    epsilon_max: float = 1.0
    epsilon_min: float = 0.1
    n_epoch: int = 100
    horizon_h: int = 100
    h_max: int = 0
    error_threshold: float = 1.0
    reward_cap: float = 100.0
    n_r: int = 2

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0 <= self.gamma <= 1:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        for name in ("epsilon_max", "epsilon_min"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.epsilon_min > self.epsilon_max:
            raise ValueError("epsilon_min must not exceed epsilon_max")
        if self.n_epoch < 1 or self.horizon_h < 1:
            raise ValueError("n_epoch and horizon_h must be positive")
        if not 0 <= self.h_max <= self.horizon_h:
            raise ValueError(f"h_max must be in [0, {self.horizon_h}], got {self.h_max}")
        if not self.error_threshold >= 0 or not self.reward_cap > 0:
            raise ValueError("error_threshold must be >= 0 and reward_cap > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "AgentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown agent keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class QTable:
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, env: GridEnvironment, space: ActionSpace, **meta) -> "QTable":
        return cls(np.zeros((env.n_zones, space.n_a)),
                   {**env.fingerprint(), "n_r": space.n_r, **meta})

    def check_compatible(self, env: GridEnvironment, space: ActionSpace) -> None:
        want = {**env.fingerprint(), "n_r": space.n_r}
        for k, v in want.items():
            if k in self.meta and self.meta[k] != v:
                raise CompatibilityError(f"Q-table {k} mismatch: table has {self.meta[k]}, environment needs {v}")
        if self.values.shape != (env.n_zones, space.n_a):
            raise CompatibilityError(
                f"Q-table shape {self.values.shape} != ({env.n_zones}, {space.n_a})")

    def save(self, path) -> None:
        lines = [QTABLE_MAGIC, json.dumps(self.meta, sort_keys=True)]
        lines += [" ".join(repr(v) for v in row) for row in self.values.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "QTable":
        text = Path(path).read_text().splitlines()
        if not text or text[0] != QTABLE_MAGIC:
            raise CompatibilityError(f"{path}: not a Q-table file (bad header)")
        meta = json.loads(text[1])
        rows = [[float(v) for v in line.split()] for line in text[2:] if line.strip()]
        values = np.array(rows, dtype=float)
        if values.ndim != 2 or not np.isfinite(values).all():
            raise CompatibilityError(f"{path}: malformed or non-finite Q-table values")
        return cls(values, meta)


@dataclass
class GuidePolicy:
    source: str  # "random-qtable(<seed>)" or "pretrained-qtable(<path>)"
    table: QTable


def random_guide(env: GridEnvironment, space: ActionSpace, seed: int) -> GuidePolicy:
    rng = np.random.default_rng(seed)
    values = rng.random((env.n_zones, space.n_a))
    return GuidePolicy(f"random-qtable({seed})",
                       QTable(values, {**env.fingerprint(), "n_r": space.n_r, "seed": seed}))


def pretrained_guide(path, env: GridEnvironment, space: ActionSpace) -> GuidePolicy:
    table = QTable.load(path)
    table.check_compatible(env, space)
    return GuidePolicy(f"pretrained-qtable({path})", table)


@dataclass
class EpisodeLog:
    epoch: int
    true_zone: np.ndarray  # (H, 2)
    action: np.ndarray
    est_zone: np.ndarray  # (H, 2)
    error_m: np.ndarray
    reward: np.ndarray
    policy: np.ndarray  # GUIDE / EXPLORE_GREEDY / EXPLORE_RANDOM

    def __len__(self):
        return len(self.action)

    @classmethod
    def empty(cls, epoch: int, horizon: int) -> "EpisodeLog":
        return cls(epoch, np.zeros((horizon, 2), np.int64), np.zeros(horizon, np.int64),
                   np.zeros((horizon, 2), np.int64), np.zeros(horizon), np.zeros(horizon),
                   np.zeros(horizon, np.int64))


def reward(error_m: float, cfg: AgentConfig) -> float:
    if error_m < 0:
        raise ValueError(f"location error must be non-negative, got {error_m}")
    if error_m <= cfg.error_threshold:
        if error_m == 0 or 1.0 / error_m > cfg.reward_cap:
            return cfg.reward_cap
        return 1.0 / error_m
    return -error_m


def location_error(true_zone, est_zone, env: GridEnvironment) -> float:
    tx, ty = env.check_zone(true_zone)
    ex, ey = env.check_zone(est_zone)
    return math.hypot(tx - ex, ty - ey) * env.cell_size


def select_action(state: int, step: int, h: int, qtable: QTable, guide: GuidePolicy | None,
                  epsilon: float, rng: np.random.Generator) -> tuple[int, int]:
    """Return ``(action, branch)`` for zone index ``state``.

    Ties in either table go to the lowest action index. One uniform variate is drawn
    on every non-guide step, plus one integer when the random branch fires.
    """
    if step < h and guide is not None:
        return int(np.argmax(guide.table.values[state])), GUIDE
    if rng.random() < epsilon:
        return int(rng.integers(qtable.values.shape[1])), EXPLORE_RANDOM
    return int(np.argmax(qtable.values[state])), EXPLORE_GREEDY


def update_q(qtable: QTable, state: int, action: int, reward_val: float, next_state: int,
             cfg: AgentConfig) -> float:
    if not math.isfinite(reward_val):
        raise NumericalError(f"non-finite reward {reward_val}")
    q = qtable.values
    target = reward_val + cfg.gamma * q[next_state].max()
    new = (1.0 - cfg.alpha) * q[state, action] + cfg.alpha * target
    if not math.isfinite(new):
        raise NumericalError(f"Q({state}, {action}) became {new}")
    q[state, action] = new
    return new


def guide_step_schedule(epoch: int, cfg: AgentConfig) -> int:
    if cfg.n_epoch == 1:
        return cfg.h_max
    frac = 1.0 - epoch / (cfg.n_epoch - 1)
    return max(0, int(math.floor(cfg.h_max * frac + 0.5)))


def epsilon_schedule(epoch: int, cfg: AgentConfig) -> float:
    delta = (cfg.epsilon_max - cfg.epsilon_min) / cfg.n_epoch
    return max(cfg.epsilon_min, cfg.epsilon_max - epoch * delta)


def run_streams(seed: int, overrides: dict | None = None) -> dict[str, np.random.Generator]:
    """Independent generators for the walk, action choice and measurement noise of one run.

    ``overrides`` maps a stream name to its own seed so one stream can be varied
    while the others stay fixed.
    """
    overrides = overrides or {}
    out = {}
    for k, name in enumerate(("walk", "agent", "noise")):
        s = overrides.get(name)
        out[name] = np.random.default_rng(np.random.SeedSequence([seed if s is None else s, k]))
    return out


def train(env: GridEnvironment, cfg: AgentConfig, guide: GuidePolicy | None = None,
          noise: NoiseModel | None = None, seed: int = 0,
          initial: QTable | None = None,
          stream_seeds: dict | None = None) -> tuple[QTable, list[EpisodeLog]]:
    """Train a Q-table for ``cfg.n_epoch`` episodes of ``cfg.horizon_h`` steps.

    Each step: pick a subset, measure all beacons from the true zone, solve with the
    subset, score the estimate, update Q, then move the user one random-walk step.
    """
    noise = NoiseModel() if noise is None else noise
    space = ActionSpace(env.n_beacons, cfg.n_r)
    if guide is not None:
        guide.table.check_compatible(env, space)
    qtable = QTable.zeros(env, space, seed=seed) if initial is None else initial
    qtable.check_compatible(env, space)
    streams = run_streams(seed, stream_seeds)
    walk, agent_rng, noise_rng = streams["walk"], streams["agent"], streams["noise"]
    all_ids = np.arange(env.n_beacons)
    diffs = _diff_tables(env, space)
    logs = []
    for epoch in range(cfg.n_epoch):
        h = guide_step_schedule(epoch, cfg) if guide is not None else 0
        eps = epsilon_schedule(epoch, cfg)
        log = EpisodeLog.empty(epoch, cfg.horizon_h)
        zone = random_zone(env, walk)
        prev = None
        for step in range(cfg.horizon_h):
            s = zone[0] * env.n_y + zone[1]
            a, branch = select_action(s, step, h, qtable, guide, eps, agent_rng)
            toas = measure_zone(s, all_ids, env, noise, noise_rng)
            k = _solve_action(a, space, toas, diffs, env, prev)
            est = env.zone_of(k)
            err = math.hypot(zone[0] - est[0], zone[1] - est[1]) * env.cell_size
            r = reward(err, cfg)
            nxt = step_random_walk(zone, env, walk)
            update_q(qtable, s, a, r, nxt[0] * env.n_y + nxt[1], cfg)
            log.true_zone[step] = zone
            log.action[step] = a
            log.est_zone[step] = est
            log.error_m[step] = err
            log.reward[step] = r
            log.policy[step] = branch
            prev, zone = est, nxt
        logs.append(log)
    return qtable, logs


def _diff_tables(env: GridEnvironment, space: ActionSpace) -> np.ndarray:
    """Predicted TDoA w.r.t. each subset's first beacon, shape (n_a, N_l, n_r - 1)."""
    ids = space._ids
    t = env.toa_table
    return np.stack([t[:, row[1:]] - t[:, row[:1]] for row in ids])


def _solve_action(a: int, space: ActionSpace, toas: np.ndarray, diffs: np.ndarray,
                  env: GridEnvironment, prev) -> int:
    ids = space.ids(a)
    t = toas[ids]
    res = ((diffs[a] - (t[1:] - t[0])) ** 2).sum(axis=1)
    return pick_zone(res, env, prev)


def greedy_policy(qtable: QTable) -> np.ndarray:
    return np.argmax(qtable.values, axis=1)

