"""Anchor-subset selectors sharing one measurement/solver pipeline.

GDOP and WLS selection are reconstructions of the usual formulations; the
JUNO policy selector plays a frozen Q-table greedily.
"""

from __future__ import annotations

import itertools
import math
from typing import Sequence

import numpy as np

from .agent import (
    ActionSpace, AgentConfig, EpisodeLog, EXPLORE_GREEDY, QTable, reward, run_streams,
)
from .env import GridEnvironment, random_zone, step_random_walk, zone_center
from .measurement import NoiseModel, ToaMeasurement, measure_zone
from .solver import TIE_TOL, pick_zone, surface_from_arrays

SELECTORS = ("juno", "nn", "random", "gdop", "wls")
BASELINE = 3

# GtG with a larger condition number is treated as singular
_COND_LIMIT = 1e10


class SelectionError(ValueError):
    pass


def _need(n: int, n_r: int):
    if n_r < 1 or n < n_r:
        raise SelectionError(f"cannot select {n_r} of {n} beacons")


def nn_select(toas: Sequence[ToaMeasurement], n_r: int) -> tuple[int, ...]:
    """The ``n_r`` beacons with the earliest measured arrival (ties -> lower id)."""
    _need(len(toas), n_r)
    ranked = sorted(toas, key=lambda m: (m.toa, m.beacon_id))
    return tuple(sorted(m.beacon_id for m in ranked[:n_r]))


def random_select(n: int, n_r: int, rng: np.random.Generator) -> tuple[int, ...]:
    _need(n, n_r)
    k = int(rng.integers(math.comb(n, n_r)))
    return next(itertools.islice(itertools.combinations(range(n), n_r), k, None))


def geometry_matrix(point, beacon_xy: np.ndarray, augment: bool) -> np.ndarray | None:
    d = beacon_xy - np.asarray(point, dtype=float)
    r = np.hypot(d[:, 0], d[:, 1])
    if (r == 0).any():
        return None
    u = d / r[:, None]
    return np.column_stack([u, np.ones(len(u))]) if augment else u


def gdop_value(zone, subset, env: GridEnvironment) -> float:
    """sqrt(trace((G^T G)^-1)) for the subset seen from the zone center; inf if singular.

    Rows of G are unit vectors to the beacons, augmented with a clock column when
    three or more beacons are used. A pair has no clock column: with it, G^T G
    would always be rank deficient.
    """
    ids = list(subset)
    g = geometry_matrix(zone_center(zone, env), env.beacon_xy[ids], augment=len(ids) >= 3)
    if g is None:
        return math.inf
    m = g.T @ g
    if np.linalg.cond(m) > _COND_LIMIT:
        return math.inf
    return float(math.sqrt(np.trace(np.linalg.inv(m))))


def gdop_select(approx_zone, env: GridEnvironment, n_r: int) -> tuple[int, ...]:
    _need(env.n_beacons, n_r)
    env.check_zone(approx_zone)
    best, best_val = None, math.inf
    for subset in itertools.combinations(range(env.n_beacons), n_r):
        v = gdop_value(approx_zone, subset, env)
        if v < best_val * (1 - 1e-12):
            best, best_val = subset, v
    if best is None:
        raise SelectionError(f"every {n_r}-subset is geometrically singular at {approx_zone}")
    return best


def wls_select(toas: Sequence[ToaMeasurement], env: GridEnvironment, approx_zone, n_r: int,
               range_var: Sequence[float] | None = None) -> tuple[int, ...]:
    """Subset whose grid solution leaves the smallest weighted TDoA residual.

    ``range_var`` gives a per-beacon arrival-time variance; a difference term is
    weighted by the inverse of the summed variances of its two beacons. Without it
    all terms weigh 1.
    """
    _need(len(toas), n_r)
    by_id = {m.beacon_id: m.toa for m in toas}
    if sorted(by_id) != list(range(env.n_beacons)):
        raise SelectionError("WLS selection needs one measurement per beacon")
    toa_arr = np.array([by_id[i] for i in range(env.n_beacons)])
    return _wls_pick(toa_arr, env, approx_zone, n_r, range_var)[0]


def _wls_pick(toa_arr, env, approx_zone, n_r, range_var=None):
    best, best_val = None, math.inf
    for subset in itertools.combinations(range(env.n_beacons), n_r):
        ids = np.array(subset)
        w = None
        if range_var is not None:
            var = np.asarray(range_var, dtype=float)
            w = 1.0 / (var[ids[1:]] + var[ids[0]])
        res = surface_from_arrays(ids, toa_arr[ids], env, w)
        k = pick_zone(res, env, approx_zone)
        if res[k] < best_val - TIE_TOL:
            best, best_val = subset, float(res[k])
    return best, best_val


class Selector:
    """Chooses a beacon subset from observable quantities only."""

    name = "selector"

    def __init__(self, env: GridEnvironment, n_r: int):
        self.env = env
        self.n_r = n_r
        self.space = ActionSpace(env.n_beacons, n_r)

    def choose(self, state: int, approx_zone, toas: np.ndarray, rng) -> tuple[int, ...]:
        raise NotImplementedError


class NearestSelector(Selector):
    name = "nn"

    def choose(self, state, approx_zone, toas, rng):
        order = np.lexsort((np.arange(len(toas)), toas))
        return tuple(sorted(int(i) for i in order[: self.n_r]))


class RandomSelector(Selector):
    name = "random"

    def choose(self, state, approx_zone, toas, rng):
        return self.space.subsets[int(rng.integers(self.space.n_a))]


class GdopSelector(Selector):
    name = "gdop"

    def __init__(self, env, n_r):
        super().__init__(env, n_r)
        self._cache: dict = {}

    def choose(self, state, approx_zone, toas, rng):
        z = tuple(approx_zone)
        if z not in self._cache:
            self._cache[z] = gdop_select(z, self.env, self.n_r)
        return self._cache[z]


class WlsSelector(Selector):
    name = "wls"

    def __init__(self, env, n_r, range_var=None):
        super().__init__(env, n_r)
        self.range_var = range_var

    def choose(self, state, approx_zone, toas, rng):
        return _wls_pick(toas, self.env, approx_zone, self.n_r, self.range_var)[0]


class PolicySelector(Selector):
    """Greedy play of a trained Q-table; the RL state is the occupied zone."""

    name = "juno"

    def __init__(self, env, qtable: QTable):
        n_r = int(qtable.meta.get("n_r", 0)) or _infer_n_r(env.n_beacons, qtable.values.shape[1])
        super().__init__(env, n_r)
        qtable.check_compatible(env, self.space)
        self.greedy = np.argmax(qtable.values, axis=1)

    def choose(self, state, approx_zone, toas, rng):
        return self.space.subsets[int(self.greedy[state])]


def _infer_n_r(n: int, n_a: int) -> int:
    for k in range(2, n + 1):
        if math.comb(n, k) == n_a:
            return k
    raise SelectionError(f"no subset size of {n} beacons gives {n_a} actions")


def make_selector(kind: str, env: GridEnvironment, n_r: int, qtable: QTable | None = None) -> Selector:
    if kind == "juno":
        if qtable is None:
            raise SelectionError("the juno selector needs a Q-table")
        return PolicySelector(env, qtable)
    try:
        cls = {"nn": NearestSelector, "random": RandomSelector,
               "gdop": GdopSelector, "wls": WlsSelector}[kind]
    except KeyError:
        raise SelectionError(f"unknown selector {kind!r}; choose from {', '.join(SELECTORS)}") from None
    return cls(env, n_r)


def grid_center(env: GridEnvironment) -> tuple[int, int]:
    return env.n_x // 2, env.n_y // 2


def localize(env: GridEnvironment, selector: Selector, zones, noise: NoiseModel,
             sel_rng, noise_rng, on_step=None):
    """Localize the user along a zone sequence; yields ``(zone, action, estimate)``.

    Every beacon is measured at each step; the selector sees the measurements and
    the previous estimate (grid center before the first fix), never the true zone
    except as the RL state index for the policy selector.
    """
    all_ids = np.arange(env.n_beacons)
    prev = None
    for step, zone in enumerate(zones):
        s = zone[0] * env.n_y + zone[1]
        toas = measure_zone(s, all_ids, env, noise, noise_rng)
        approx = grid_center(env) if prev is None else prev
        subset = selector.choose(s, approx, toas, sel_rng)
        ids = np.array(subset)
        res = surface_from_arrays(ids, toas[ids], env)
        est = env.zone_of(pick_zone(res, env, prev))
        if on_step is not None:
            on_step(step, res)
        yield zone, selector.space.index(subset), est
        prev = est


def _walk(env, start, horizon, rng):
    zone = start
    for _ in range(horizon):
        yield zone
        zone = step_random_walk(zone, env, rng)


def evaluate_selector(env: GridEnvironment, selector: Selector, noise: NoiseModel,
                      cfg: AgentConfig, n_episodes: int, seed: int,
                      stream_seeds: dict | None = None) -> list[EpisodeLog]:
    """Random-walk episodes under a fixed selector, logged like training episodes."""
    streams = run_streams(seed, stream_seeds)
    code = EXPLORE_GREEDY if isinstance(selector, PolicySelector) else BASELINE
    logs = []
    for ep in range(n_episodes):
        log = EpisodeLog.empty(ep, cfg.horizon_h)
        start = random_zone(env, streams["walk"])
        path = _walk(env, start, cfg.horizon_h, streams["walk"])
        for t, (zone, a, est) in enumerate(localize(env, selector, path, noise,
                                                    streams["agent"], streams["noise"])):
            err = math.hypot(zone[0] - est[0], zone[1] - est[1]) * env.cell_size
            log.true_zone[t] = zone
            log.action[t] = a
            log.est_zone[t] = est
            log.error_m[t] = err
            log.reward[t] = reward(err, cfg)
            log.policy[t] = code
        logs.append(log)
    return logs
