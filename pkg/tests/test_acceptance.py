"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run alone with ``python3 -m pytest tests/test_acceptance.py -v`` or
``python3 tests/test_acceptance.py`` for just the report lines.
"""

import math
import sys
import tempfile
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import NOISELESS, make_env  # noqa: E402
from instances import random_solver_instance  # noqa: E402
from oracles import naive_q_update, naive_solve  # noqa: E402
from uwbsel.agent import (  # noqa: E402
    EXPLORE_GREEDY, ActionSpace, AgentConfig, QTable, pretrained_guide, random_guide, train,
    update_q,
)
from uwbsel.baselines import evaluate_selector, make_selector  # noqa: E402
from uwbsel.cli import main as cli_main  # noqa: E402
from uwbsel.config import ExperimentConfig  # noqa: E402
from uwbsel.measurement import simulate_toas  # noqa: E402
from uwbsel.metrics import (  # noqa: E402
    dominates, ecdf, epochs_to_reach, mean_error, steady_window,
)
from uwbsel.solver import solve_grid  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
WORLD = ROOT / "configs" / "world20.yaml"
RUN_SEEDS = range(10)
PRIOR_SEED = 1000
REACH_M = 1.5
CONVERGED_EPOCHS = 1000
EVAL_EPISODES = 10


@dataclass
class Verdict:
    ok: bool
    detail: str
    extra: dict = field(default_factory=dict)


def report(tag: str, v: Verdict) -> str:
    return f"[{'PASS' if v.ok else 'FAIL'}] {tag}: {v.detail}"


# -- shared world -------------------------------------------------------------------

@lru_cache(maxsize=None)
def world():
    conf = ExperimentConfig.load(WORLD)
    return conf, conf.build_environment()


def _cfg(**kw) -> AgentConfig:
    conf, _ = world()
    return AgentConfig(**{**conf.agent().to_dict(), **kw})


def _final_mean(logs) -> float:
    n = max(l.epoch for l in logs) + 1
    return mean_error(logs, steady_window(n))


@lru_cache(maxsize=None)
def run(arm: str, seed: int, eps: tuple | None = None):
    """(final-window mean error, epochs to reach REACH_M) for one training run."""
    conf, env = world()
    space = ActionSpace(env.n_beacons, conf.agent().n_r)
    h = conf.agent().horizon_h
    guide, kw = None, {}
    if arm == "pretrained":
        guide, kw = prior_guide(), {"h_max": h}
    elif arm == "random":
        guide, kw = random_guide(env, space, seed), {"h_max": h}
    if eps is not None:
        kw.update(epsilon_max=eps[0], epsilon_min=eps[1])
    _, logs = train(env, _cfg(**kw), guide, conf.noise(), seed=seed)
    return _final_mean(logs), epochs_to_reach(logs, REACH_M)


@lru_cache(maxsize=None)
def prior_guide():
    """Q-table of one conventional prior run on the same world, round-tripped through a file."""
    conf, env = world()
    q, _ = train(env, _cfg(), None, conf.noise(), seed=PRIOR_SEED)
    with tempfile.TemporaryDirectory() as d:
        q.save(Path(d) / "prior.qt")
        return pretrained_guide(Path(d) / "prior.qt", env, ActionSpace(env.n_beacons, _cfg().n_r))


@lru_cache(maxsize=None)
def converged_policy() -> QTable:
    conf, env = world()
    q, _ = train(env, _cfg(n_epoch=CONVERGED_EPOCHS), None, conf.noise(), seed=PRIOR_SEED + 1)
    return q


@lru_cache(maxsize=None)
def frozen_eval(kind: str):
    conf, env = world()
    q = converged_policy() if kind == "juno" else None
    sel = make_selector(kind, env, _cfg().n_r, q)
    errors = []
    for s in RUN_SEEDS:
        logs = evaluate_selector(env, sel, conf.noise(), _cfg(), EVAL_EPISODES, seed=5000 + s)
        errors.append(np.concatenate([l.error_m for l in logs]))
    return np.concatenate(errors)


# -- criteria -------------------------------------------------------------------------

def criterion_1() -> Verdict:
    env = make_env(15, beacons=[(0, 0), (15, 0), (0, 15)], p_nlos=0.0)
    t0 = time.perf_counter()
    hits = 0
    for z in range(env.n_zones):
        zone = env.zone_of(z)
        hits += solve_grid(simulate_toas(zone, [0, 1, 2], env, NOISELESS, None), env).zone == zone
    dt = time.perf_counter() - t0
    return Verdict(hits == env.n_zones and dt < 5.0,
                   f"{hits}/{env.n_zones} zones recovered in {dt:.2f} s (need 100%, < 5 s)")


def criterion_2() -> Verdict:
    rng = np.random.default_rng(20240)
    t0 = time.perf_counter()
    agree = 0
    for _ in range(1000):
        env, ms, prev = random_solver_instance(rng)
        want = naive_solve([b.position for b in env.beacons], {m.beacon_id: m.toa for m in ms},
                           [m.beacon_id for m in ms], env.n_x, env.n_y, env.cell_size, prev)[0]
        agree += solve_grid(ms, env, prev).zone == want
    dt = time.perf_counter() - t0
    return Verdict(agree == 1000 and dt < 30.0,
                   f"{agree}/1000 instances agree with the naive enumerator in {dt:.2f} s "
                   "(need 100%, < 30 s)")


def criterion_3() -> Verdict:
    rng = np.random.default_rng(3)
    n_s, n_a = 25, 20
    q = QTable(rng.normal(size=(n_s, n_a)))
    ref = q.values.tolist()
    for _ in range(1000):
        cfg = AgentConfig(alpha=float(rng.uniform(0.01, 1)), gamma=float(rng.uniform(0, 0.99)))
        s, a, s2 = (int(v) for v in rng.integers(0, [n_s, n_a, n_s]))
        r = float(rng.uniform(-30, 100))
        update_q(q, s, a, r, s2, cfg)
        naive_q_update(ref, s, a, r, s2, cfg.alpha, cfg.gamma)
    worst = float(np.abs(q.values - np.array(ref)).max())
    return Verdict(worst <= 1e-12, f"max |dQ| = {worst:.2e} over 1000 updates (need <= 1e-12)")


def criterion_4() -> Verdict:
    t0 = time.perf_counter()
    base = [run("conventional", s) for s in RUN_SEEDS]
    guided = [run("pretrained", s) for s in RUN_SEEDS]
    dt = time.perf_counter() - t0
    wins = sum(g[0] < b[0] for g, b in zip(guided, base))
    reach_g = float(np.mean([g[1] for g in guided]))
    reach_b = float(np.mean([b[1] for b in base]))
    ok = wins >= 8 and reach_g < reach_b and dt < 600
    return Verdict(ok, f"h_max=H wins {wins}/10 pairs on final error "
                       f"({np.mean([g[0] for g in guided]):.3f} vs {np.mean([b[0] for b in base]):.3f} m); "
                       f"epochs to {REACH_M} m {reach_g:.1f} vs {reach_b:.1f}; {dt:.1f} s "
                       "(need >= 8/10, strictly fewer epochs, < 600 s)")


def criterion_5() -> Verdict:
    reach = {arm: float(np.mean([run(arm, s)[1] for s in RUN_SEEDS]))
             for arm in ("conventional", "pretrained", "random")}
    ok = reach["pretrained"] <= reach["conventional"] and reach["random"] <= reach["conventional"]
    return Verdict(ok, f"epochs to {REACH_M} m: pretrained {reach['pretrained']:.1f}, "
                       f"random {reach['random']:.1f}, h_max=0 {reach['conventional']:.1f} "
                       "(need both guided arms <= h_max=0)", reach)


def criterion_6() -> Verdict:
    juno, rnd, nn = frozen_eval("juno"), frozen_eval("random"), frozen_eval("nn")
    dom = dominates(ecdf(juno), ecdf(rnd))
    ok = dom and juno.mean() <= nn.mean()
    return Verdict(ok, f"JUNO ECDF dominates random: {dom}; mean error JUNO {juno.mean():.3f} m, "
                       f"NN {nn.mean():.3f} m, random {rnd.mean():.3f} m")


def criterion_7() -> Verdict:
    e = frozen_eval("juno")
    r = float(np.sqrt(np.mean(e * e)))
    return Verdict(r <= 1.0, f"steady-state RMSE of the converged policy {r:.3f} m (need <= 1.0 m)")


def criterion_8() -> Verdict:
    arms = {"decayed 1->0.1": (1.0, 0.1), "fixed 1.0": (1.0, 1.0), "fixed 0.1": (0.1, 0.1)}
    means = {k: float(np.mean([run("conventional", s, eps)[0] for s in RUN_SEEDS]))
             for k, eps in arms.items()}
    d = means["decayed 1->0.1"]
    ok = d <= means["fixed 1.0"] and d <= means["fixed 0.1"]
    return Verdict(ok, ", ".join(f"{k} {v:.3f} m" for k, v in means.items())
                   + " (need decayed <= both)")


def criterion_9() -> Verdict:
    cases = {(10, 2): 45, (6, 3): 20, (2, 2): 1}
    got = {}
    for (n, k), want in cases.items():
        space = ActionSpace(n, k)
        formula = math.factorial(n) // (math.factorial(n - k) * math.factorial(k))
        got[(n, k)] = (space.n_a, len(space.subsets), formula)
    ok = all(v == (cases[k],) * 3 for k, v in got.items())
    return Verdict(ok, "; ".join(f"N={n},N_r={k} -> {v[0]} (enumerated {v[1]}, formula {v[2]})"
                                 for (n, k), v in got.items()))


def criterion_10() -> Verdict:
    import json
    import yaml

    small = {"environment": {"n_x": 10, "n_y": 10, "n_beacons": 5, "p_nlos": 0.3, "seed": 4},
             "agent": {"n_r": 3, "n_epoch": 8, "horizon_h": 30}, "seeds": [0, 1],
             "eval_episodes": 2}

    def csvs(d):
        return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*.csv"))}

    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        cfg = tmp / "c.yaml"
        cfg.write_text(yaml.safe_dump(small))
        results = {}
        for tag in ("a", "b"):
            out = tmp / tag
            src = str(cfg) if tag == "a" else str(tmp / "a" / "train" / "seed_0" / "manifest.json")
            seeds = [] if tag == "a" else ["--seeds", "0,1"]
            codes = [
                cli_main(["train", src, "--out", str(out / "train")] + seeds),
                cli_main(["evaluate", src, "--out", str(out / "eval"), "--selector", "gdop"] + seeds),
                cli_main(["evaluate", src, "--out", str(out / "evalq"), "--qtable",
                          str(tmp / "a" / "train" / "seed_1" / "qtable.qt")] + seeds),
                cli_main(["sweep", src, "--out", str(out / "sweep"), "--param", "h_max",
                          "--values", "0,15", "--guide", "random"] + seeds),
                cli_main(["replay", src, "--out", str(out / "replay"), "--selector", "nn",
                          "--n-steps", "25"] + seeds),
                cli_main(["dump-env", src, "-o", str(out / "env.json"),
                          "--toa-csv", str(out / "toa.csv")] + seeds),
            ]
            results[tag] = (codes, csvs(out))
        m = json.loads((tmp / "a" / "train" / "seed_0" / "manifest.json").read_text())
    (ca, fa), (cb, fb) = results["a"], results["b"]
    same = fa == fb
    ok = all(c == 0 for c in ca + cb) and same and len(fa) > 10 and m["seed"] == 0
    return Verdict(ok, f"{len(fa)} CSV files across train/evaluate/sweep/replay/dump-env; "
                       f"re-run from manifest byte-identical: {same}; exit codes {ca} / {cb}")


def evaluate_self_consistency() -> Verdict:
    """Frozen greedy evaluation vs the greedy steps of the training run's final window."""
    conf, env = world()
    cfg = _cfg(n_epoch=CONVERGED_EPOCHS)
    train_g, evals = [], []
    for s in RUN_SEEDS:
        q, logs = train(env, cfg, None, conf.noise(), seed=s)
        lo, hi = steady_window(cfg.n_epoch)
        train_g.append(np.concatenate([l.error_m[l.policy == EXPLORE_GREEDY]
                                       for l in logs if l.epoch >= lo]).mean())
        ev = evaluate_selector(env, make_selector("juno", env, cfg.n_r, q), conf.noise(), cfg,
                               100, seed=7000 + s)
        evals.append(mean_error(ev, (0, len(ev))))
    a, b = float(np.mean(train_g)), float(np.mean(evals))
    rel = b / a - 1
    return Verdict(abs(rel) <= 0.05, f"training greedy-step mean {a:.3f} m, frozen evaluation "
                                     f"{b:.3f} m, difference {rel:+.1%} (need within 5%)")


CRITERIA = [
    ("C1 noiseless exactness", criterion_1),
    ("C2 solver oracle equivalence", criterion_2),
    ("C3 Q-update oracle", criterion_3),
    ("C4 jump-start benefit", criterion_4),
    ("C5 guide-policy variants", criterion_5),
    ("C6 baseline dominance", criterion_6),
    ("C7 desk-scale RMSE", criterion_7),
    ("C8 epsilon schedule", criterion_8),
    ("C9 combinatorics", criterion_9),
    ("C10 determinism", criterion_10),
    ("evaluate self-consistency", evaluate_self_consistency),
]


@pytest.mark.parametrize("tag,check", CRITERIA, ids=[c[0].split()[0] if c[0][0] == "C" else
                                                      "self_consistency" for c in CRITERIA])
def test_criterion(tag, check, capsys):
    v = check()
    with capsys.disabled():
        print("\n" + report(tag, v))
    assert v.ok, v.detail


if __name__ == "__main__":
    failed = 0
    for tag, check in CRITERIA:
        v = check()
        failed += not v.ok
        print(report(tag, v), flush=True)
    sys.exit(1 if failed else 0)
