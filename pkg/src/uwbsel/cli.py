"""Command-line front-end: train, evaluate, sweep, replay, dump-env.

Exit codes: 0 success, 1 invalid input, 2 file-system failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from pathlib import Path

import numpy as np

from .agent import (
    ActionSpace, CompatibilityError, GuidePolicy, NumericalError, QTable, pretrained_guide,
    random_guide, train,
)
from .baselines import SELECTORS, SelectionError, evaluate_selector, make_selector
from .config import ConfigError, ExperimentConfig
from .env import VenueError
from .measurement import dump_toa_csv
from .metrics import (
    ecdf, epochs_to_reach, mean_error, random_waypoints, replay_trajectory, rmse,
    summarize, write_ecdf_csv, write_episodes_csv, write_errors_csv, write_rewards_csv,
    write_trajectory_csv,
)
from .solver import SolverError, dump_residuals_csv

log = logging.getLogger("uwbsel")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3
SWEEP_PARAMS = ("alpha", "epsilon", "h_max", "p_nlos", "sigma_toa", "n_r")
REACH_THRESHOLD_M = 1.5


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_config(args) -> ExperimentConfig:
    conf = ExperimentConfig.load(args.config)
    over = list(getattr(args, "set", None) or [])
    if getattr(args, "seeds", None) is not None:
        over.append(f"seeds=[{args.seeds}]" if args.seeds else "seeds=[]")
    if getattr(args, "out", None):
        over.append(f"output_dir={json.dumps(str(args.out))}")
    if getattr(args, "guide", None):
        g = args.guide
        if g in ("none", "random"):
            over.append(f"guide.kind={g}")
        else:
            over += ["guide.kind=pretrained", f"guide.path={json.dumps(g)}"]
    if getattr(args, "h_max", None) is not None:
        over.append(f"agent.h_max={args.h_max}")
    if getattr(args, "selector", None):
        over.append(f"selector={args.selector}")
    return conf.with_overrides(over)


def make_guide(conf: ExperimentConfig, env, space: ActionSpace) -> GuidePolicy | None:
    g = conf.raw["guide"]
    if g["kind"] == "random":
        return random_guide(env, space, int(g["seed"]))
    if g["kind"] == "pretrained":
        if not Path(g["path"]).is_file():
            raise FileNotFoundError(f"guide Q-table not found: {g['path']}")
        return pretrained_guide(g["path"], env, space)
    return None


def train_one(conf: ExperimentConfig, env, seed: int, run_dir: Path) -> dict:
    cfg = conf.agent()
    space = ActionSpace(env.n_beacons, cfg.n_r)
    guide = make_guide(conf, env, space)
    qtable, logs = train(env, cfg, guide, conf.noise(), seed=seed,
                         stream_seeds=conf.stream_seeds(seed))
    run_dir.mkdir(parents=True, exist_ok=False)
    qtable.save(run_dir / "qtable.qt")
    env.save(run_dir / "environment.json")
    write_errors_csv(run_dir / "errors.csv", logs)
    write_rewards_csv(run_dir / "rewards.csv", logs)
    write_episodes_csv(run_dir / "episodes.csv", logs)
    summary = summarize(logs)
    out = {"seed": seed, "rmse_m": summary.rmse_m, "mean_error_m": summary.mean_error_m,
           "steady_state_window": list(summary.steady_state_window),
           "epochs_to_reach_m": {str(REACH_THRESHOLD_M): epochs_to_reach(logs, REACH_THRESHOLD_M)},
           "final_cum_reward": summary.cumulative_reward_per_epoch[-1]}
    _write_json(run_dir / "summary.json", out)
    _write_json(run_dir / "manifest.json",
                conf.manifest(seed, command="train",
                              guide=None if guide is None else guide.source))
    return out


def cmd_train(args) -> int:
    conf = load_config(args)
    env = conf.build_environment()
    root = conf.output_dir
    created = []
    try:
        for seed in conf.seeds:
            run_dir = root / f"seed_{seed}"
            if run_dir.exists():
                shutil.rmtree(run_dir)
            created.append(run_dir)
            res = train_one(conf, env, seed, run_dir)
            log.info("seed %d: mean error %.3f m, rmse %.3f m", seed, res["mean_error_m"], res["rmse_m"])
        if args.dump_toa:
            dump_toa_csv(args.dump_toa, env, conf.noise(), np.random.default_rng(conf.seeds[0]))
    except BaseException:
        for d in created:
            shutil.rmtree(d, ignore_errors=True)
        raise
    print(f"trained {len(conf.seeds)} run(s) into {root}")
    return EXIT_OK


def _load_selector(conf, env, qtable_path):
    kind = conf.raw["selector"]
    qtable = None
    if kind == "juno":
        if not qtable_path:
            raise ConfigError("the juno selector needs --qtable")
        if not Path(qtable_path).is_file():
            raise FileNotFoundError(f"Q-table not found: {qtable_path}")
        qtable = QTable.load(qtable_path)
    return make_selector(kind, env, conf.agent().n_r, qtable)


def cmd_evaluate(args) -> int:
    conf = load_config(args)
    env = conf.build_environment()
    selector = _load_selector(conf, env, args.qtable)
    cfg = conf.agent()
    root = conf.output_dir
    root.mkdir(parents=True, exist_ok=True)
    all_errors, per_seed = [], []
    for seed in conf.seeds:
        logs = evaluate_selector(env, selector, conf.noise(), cfg, conf.raw["eval_episodes"], seed,
                                 conf.stream_seeds(seed))
        window = (0, len(logs))
        per_seed.append({"seed": seed, "rmse_m": rmse(logs, window),
                         "mean_error_m": mean_error(logs, window)})
        all_errors.append(np.concatenate([lg.error_m for lg in logs]))
        run_dir = root / f"eval_{selector.name}_seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        write_episodes_csv(run_dir / "episodes.csv", logs)
        _write_json(run_dir / "manifest.json",
                    conf.manifest(seed, command="evaluate", qtable=args.qtable))
    errors = np.concatenate(all_errors)
    write_ecdf_csv(root / f"ecdf_{selector.name}.csv", ecdf(errors))
    summary = {"selector": selector.name, "rmse_m": float(np.sqrt(np.mean(errors ** 2))),
               "mean_error_m": float(np.mean(errors)), "seeds": per_seed,
               "reconstructed_baseline": selector.name in ("gdop", "wls")}
    _write_json(root / f"summary_{selector.name}.json", summary)
    print(f"{selector.name}: mean error {summary['mean_error_m']:.3f} m, "
          f"rmse {summary['rmse_m']:.3f} m")
    return EXIT_OK


def sweep_override(param: str, value: str) -> list[str]:
    if param == "alpha":
        return [f"agent.alpha={float(value)}"]
    if param == "epsilon":
        hi, _, lo = value.partition(":")
        lo = lo or hi
        return [f"agent.epsilon_max={float(hi)}", f"agent.epsilon_min={float(lo)}"]
    if param == "h_max":
        return [f"agent.h_max={int(value)}"]
    if param == "p_nlos":
        return [f"environment.p_nlos={float(value)}"]
    if param == "sigma_toa":
        return [f"noise.sigma_toa={float(value)}"]
    if param == "n_r":
        return [f"agent.n_r={int(value)}"]
    raise ConfigError(f"unknown sweep parameter {param!r}; choose from {', '.join(SWEEP_PARAMS)}")


def cmd_sweep(args) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep parameter {args.param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    base = load_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("no sweep values given")
    try:
        confs = [(v, base.with_overrides(sweep_override(args.param, v))) for v in values]
    except ValueError as exc:
        raise ConfigError(f"bad sweep value: {exc}") from None
    root = base.output_dir
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for v, conf in confs:
        env = conf.build_environment()
        for seed in conf.seeds:
            run_dir = root / f"{args.param}={v}" / f"seed_{seed}"
            if run_dir.exists():
                shutil.rmtree(run_dir)
            res = train_one(conf, env, seed, run_dir)
            rows.append([v, seed, repr(res["mean_error_m"]), repr(res["rmse_m"]),
                         res["epochs_to_reach_m"][str(REACH_THRESHOLD_M)], repr(res["final_cum_reward"])])
    with open(root / "comparison.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([args.param, "seed", "final_mean_error_m", "rmse_m",
                    f"epochs_to_{REACH_THRESHOLD_M}m", "final_cum_reward"])
        w.writerows(rows)
    print(f"swept {args.param} over {values} into {root}")
    return EXIT_OK


def _read_waypoints(path) -> list[tuple[int, int]]:
    out = []
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].strip().lower() in ("x", "zone_x"):
                continue
            out.append((int(row[0]), int(row[1])))
    return out


def cmd_replay(args) -> int:
    conf = load_config(args)
    env = conf.build_environment()
    selector = _load_selector(conf, env, args.qtable)
    seed = conf.seeds[0]
    if args.waypoints:
        waypoints = _read_waypoints(args.waypoints)
    else:
        waypoints = random_waypoints(env, args.n_steps, args.walk_seed)
    for w in waypoints:
        env.check_zone(w)
    surfaces = []
    on_step = (lambda step, res: surfaces.append((step, res))) if args.residuals_csv else None
    pairs = replay_trajectory(env, selector, waypoints, conf.noise(), seed, on_step,
                              conf.stream_seeds(seed))
    root = conf.output_dir
    root.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(root / f"trajectory_{selector.name}.csv", pairs)
    if args.residuals_csv:
        dump_residuals_csv(args.residuals_csv, surfaces, env)
    _write_json(root / f"replay_{selector.name}_manifest.json",
                conf.manifest(seed, command="replay", waypoints=[list(w) for w in waypoints],
                              qtable=args.qtable))
    print(f"replayed {len(pairs)} waypoints with {selector.name}")
    return EXIT_OK


def cmd_dump_env(args) -> int:
    conf = load_config(args)
    env = conf.build_environment()
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    env.save(out)
    if args.toa_csv:
        dump_toa_csv(args.toa_csv, env, conf.noise(), np.random.default_rng(conf.seeds[0]))
    print(f"{env.n_x}x{env.n_y} zones, {env.n_beacons} beacons, "
          f"NLoS fraction {env.channel_map.nlos_fraction:.3f} -> {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uwbsel", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="YAML/JSON experiment config or a run manifest.json")
        sp.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                        help="override a config value (repeatable)")
        sp.add_argument("--seeds", help="comma-separated run seeds (overrides config)")
        sp.add_argument("--out", help="output directory (overrides config output_dir)")

    sp = sub.add_parser("train", help="train Q-tables, one run per seed")
    common(sp)
    sp.add_argument("--guide", help="'none', 'random' or a pretrained Q-table file")
    sp.add_argument("--h-max", type=int, dest="h_max")
    sp.add_argument("--dump-toa", metavar="CSV", help="also dump one ToA draw per (zone, beacon)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="frozen-policy or baseline evaluation")
    common(sp)
    sp.add_argument("--qtable", help="trained Q-table (juno selector)")
    sp.add_argument("--selector", choices=SELECTORS)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("sweep", help="train over a list of values of one parameter")
    common(sp)
    sp.add_argument("--param", required=True, help=f"one of {', '.join(SWEEP_PARAMS)}")
    sp.add_argument("--values", required=True,
                    help="comma-separated values; epsilon takes MAX:MIN or a fixed value")
    sp.add_argument("--guide", help="'none', 'random' or a pretrained Q-table file")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("replay", help="localize along a fixed trajectory")
    common(sp)
    sp.add_argument("--qtable")
    sp.add_argument("--selector", choices=SELECTORS)
    sp.add_argument("--waypoints", help="CSV of zone_x,zone_y rows")
    sp.add_argument("--n-steps", type=int, default=50)
    sp.add_argument("--walk-seed", type=int, default=0)
    sp.add_argument("--residuals-csv", help="dump every step's residual surface")
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("dump-env", help="write the sampled environment snapshot")
    common(sp)
    sp.add_argument("-o", "--output", default="environment.json")
    sp.add_argument("--toa-csv", help="also dump one ToA draw per (zone, beacon)")
    sp.set_defaults(func=cmd_dump_env)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, CompatibilityError, SelectionError, SolverError, VenueError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
