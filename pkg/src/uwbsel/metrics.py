"""Evaluation quantities: per-epoch error and reward curves, ECDF, RMSE, trajectory replay."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .agent import POLICY_NAMES, EpisodeLog, run_streams
from .baselines import Selector, localize
from .env import GridEnvironment, step_random_walk, zone_center
from .measurement import NoiseModel


@dataclass(frozen=True)
class EcdfCurve:
    errors: np.ndarray  # distinct sorted error values (m)
    probs: np.ndarray  # P(error <= errors[i])

    def __call__(self, x):
        idx = np.searchsorted(self.errors, x, side="right")
        p = np.concatenate([[0.0], self.probs])
        return p[idx]


@dataclass
class RunSummary:
    rmse_m: float
    mean_error_m: float
    cumulative_reward_per_epoch: list
    steady_state_window: tuple[int, int]  # [start, stop) epochs

    def to_dict(self) -> dict:
        return {
            "rmse_m": self.rmse_m,
            "mean_error_m": self.mean_error_m,
            "steady_state_window": list(self.steady_state_window),
            "cumulative_reward_per_epoch": self.cumulative_reward_per_epoch,
        }


def steady_window(n_epoch: int, fraction: float = 0.1) -> tuple[int, int]:
    k = max(1, int(round(n_epoch * fraction)))
    return n_epoch - k, n_epoch


def _window_errors(logs: Sequence[EpisodeLog], window) -> np.ndarray:
    lo, hi = window
    chunks = [log.error_m for log in logs if lo <= log.epoch < hi]
    if not chunks:
        raise ValueError(f"no episodes in window {window}")
    return np.concatenate(chunks)


def rmse(logs: Sequence[EpisodeLog], window: tuple[int, int]) -> float:
    e = _window_errors(logs, window)
    return float(np.sqrt(np.mean(e * e)))


def mean_error(logs: Sequence[EpisodeLog], window: tuple[int, int]) -> float:
    return float(np.mean(_window_errors(logs, window)))


def ecdf(errors: Iterable[float]) -> EcdfCurve:
    e = np.sort(np.asarray(list(errors), dtype=float))
    if e.size == 0:
        raise ValueError("ECDF of an empty sample")
    vals, counts = np.unique(e, return_counts=True)
    return EcdfCurve(vals, np.cumsum(counts) / e.size)


def dominates(a: EcdfCurve, b: EcdfCurve) -> bool:
    """True when ``a`` puts at least as much mass below every error value as ``b``."""
    grid = np.union1d(a.errors, b.errors)
    return bool(np.all(a(grid) >= b(grid)))


def _by_epoch(logs: Sequence[EpisodeLog], values) -> list[tuple[int, float]]:
    out: dict[int, float] = {}
    for log in logs:
        out[log.epoch] = out.get(log.epoch, 0.0) + values(log)
    return sorted(out.items())


def cumulative_reward(logs: Sequence[EpisodeLog]) -> list[float]:
    if not logs:
        raise ValueError("no episodes")
    return [v for _, v in _by_epoch(logs, lambda log: float(np.sum(log.reward)))]


def mean_error_per_epoch(logs: Sequence[EpisodeLog]) -> list[float]:
    sums = _by_epoch(logs, lambda log: float(np.sum(log.error_m)))
    counts = dict(_by_epoch(logs, lambda log: float(len(log))))
    return [s / counts[ep] for ep, s in sums]


def epochs_to_reach(logs: Sequence[EpisodeLog], threshold: float) -> int:
    """First epoch whose mean error is at or below ``threshold``; ``len(curve)`` if never."""
    curve = mean_error_per_epoch(logs)
    for i, v in enumerate(curve):
        if v <= threshold:
            return i
    return len(curve)


def summarize(logs: Sequence[EpisodeLog], window=None) -> RunSummary:
    n = max(log.epoch for log in logs) + 1
    window = steady_window(n) if window is None else window
    return RunSummary(rmse(logs, window), mean_error(logs, window), cumulative_reward(logs),
                      tuple(window))


def random_waypoints(env: GridEnvironment, n: int, seed: int, start=None) -> list[tuple[int, int]]:
    rng = np.random.default_rng(seed)
    zone = (env.n_x // 2, env.n_y // 2) if start is None else env.check_zone(start)
    out = []
    for _ in range(n):
        out.append(zone)
        zone = step_random_walk(zone, env, rng)
    return out


def replay_trajectory(env: GridEnvironment, selector: Selector, waypoints, noise: NoiseModel,
                      seed: int, on_step=None, stream_seeds: dict | None = None,
                      ) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Localize along a fixed waypoint list; returns (true, estimated) zone centers in meters."""
    zones = [env.check_zone(w) for w in waypoints]
    streams = run_streams(seed, stream_seeds)
    out = []
    for zone, _, est in localize(env, selector, zones, noise, streams["agent"], streams["noise"],
                                 on_step):
        out.append((zone_center(zone, env), zone_center(est, env)))
    return out


# -- CSV output ---------------------------------------------------------------------

def _write(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_errors_csv(path, logs):
    curve = mean_error_per_epoch(logs)
    _write(path, ["epoch", "mean_error_m"], [(i, _fmt(v)) for i, v in enumerate(curve)])


def write_rewards_csv(path, logs):
    _write(path, ["epoch", "cum_reward"],
           [(i, _fmt(v)) for i, v in enumerate(cumulative_reward(logs))])


def write_ecdf_csv(path, curve: EcdfCurve):
    _write(path, ["error_m", "prob"], [(_fmt(e), _fmt(p)) for e, p in zip(curve.errors, curve.probs)])


def write_trajectory_csv(path, pairs):
    _write(path, ["step", "true_x", "true_y", "est_x", "est_y"],
           [(i, _fmt(t[0]), _fmt(t[1]), _fmt(e[0]), _fmt(e[1])) for i, (t, e) in enumerate(pairs)])


def write_episodes_csv(path, logs: Sequence[EpisodeLog]):
    rows = []
    for log in logs:
        for t in range(len(log)):
            rows.append((log.epoch, t, int(log.true_zone[t, 0]), int(log.true_zone[t, 1]),
                         int(log.action[t]), int(log.est_zone[t, 0]), int(log.est_zone[t, 1]),
                         _fmt(log.error_m[t]), _fmt(log.reward[t]), POLICY_NAMES[log.policy[t]]))
    _write(path, ["epoch", "step", "true_x", "true_y", "action", "est_x", "est_y", "error_m",
                  "reward", "policy"], rows)


def rmse_of_pairs(pairs) -> float:
    if not pairs:
        raise ValueError("empty trajectory")
    return math.sqrt(sum((t[0] - e[0]) ** 2 + (t[1] - e[1]) ** 2 for t, e in pairs) / len(pairs))
