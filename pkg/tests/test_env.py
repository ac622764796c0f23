import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_env
from uwbsel.env import (
    DIRECTIONS, NLOS, EnvironmentConfig, GridEnvironment, VenueError, apply_move,
    build_environment, perimeter_positions, step_random_walk, zone_center,
)


def test_default_venue_zone_count():
    env = build_environment(EnvironmentConfig(n_x=60, n_y=50, cell_size=1.0))
    assert env.n_zones == 3000
    assert env.channel_map.condition.shape == (3000, env.n_beacons)


def test_zero_nlos_probability_is_all_los():
    env = make_env(12, n_beacons=5, p_nlos=0.0)
    assert not env.channel_map.condition.any()


def test_nlos_fraction_concentrates():
    env = make_env(20, n_beacons=6, p_nlos=0.3, seed=42)
    cond = env.channel_map.condition
    assert cond.size == 2400
    frac = np.count_nonzero(cond == NLOS) / cond.size
    assert 0.25 <= frac <= 0.35


def test_channel_map_covers_every_pair():
    env = make_env(7, n_y=5, n_beacons=3, p_nlos=0.5, seed=3)
    cond = env.channel_map.condition
    assert cond.shape == (35, 3)
    assert set(np.unique(cond)) <= {0, 1}


def test_same_seed_same_world():
    a = make_env(15, n_beacons=5, p_nlos=0.4, seed=9)
    b = make_env(15, n_beacons=5, p_nlos=0.4, seed=9)
    assert np.array_equal(a.channel_map.condition, b.channel_map.condition)
    assert a.to_snapshot() == b.to_snapshot()


@pytest.mark.parametrize("kwargs", [
    dict(beacons=[]),
    dict(beacons=[(0, 0), (11, 3)]),
    dict(beacons=[(0, 0), (-0.1, 3)]),
    dict(p_nlos=1.5),
    dict(p_nlos=-0.1),
    dict(n_beacons=0),
])
def test_invalid_configs_rejected(kwargs):
    base = dict(n_x=10, n_y=10)
    with pytest.raises(VenueError):
        build_environment(EnvironmentConfig(**{**base, **kwargs}))


def test_grid_too_small_rejected():
    with pytest.raises(VenueError):
        build_environment(EnvironmentConfig(n_x=1, n_y=5, n_beacons=2))


def test_beacons_on_boundary_allowed():
    env = make_env(10, beacons=[(0, 0), (10, 10), (10, 0)])
    assert env.n_beacons == 3


def test_perimeter_positions_evenly_spaced():
    pts = perimeter_positions(20, 20, 4)
    assert pts == [(0.0, 0.0), (20.0, 0.0), (20.0, 20.0), (0.0, 20.0)]
    pts = perimeter_positions(20, 10, 6)
    assert pts[1] == (10.0, 0.0)
    assert all(0 <= x <= 20 and 0 <= y <= 10 for x, y in pts)


@pytest.mark.parametrize("zone,cell,expected", [
    ((0, 0), 1.0, (0.5, 0.5)),
    ((5, 4), 1.0, (5.5, 4.5)),
    ((2, 3), 2.0, (5.0, 7.0)),
])
def test_zone_center(zone, cell, expected):
    env = make_env(10, cell=cell)
    assert zone_center(zone, env) == expected


def test_zone_center_out_of_bounds():
    env = make_env(10)
    with pytest.raises(VenueError):
        zone_center((10, 0), env)


def test_walk_substitution_and_clamp():
    env = make_env(10)
    assert apply_move((5, 5), (1, -1), env) == (6, 4)
    assert apply_move((0, 0), (-1, -1), env) == (0, 0)
    assert apply_move((9, 0), (1, 1), env) == (9, 1)


def test_walk_directions_uniform():
    env = make_env(21)
    rng = np.random.default_rng(7)
    n = 100_000
    counts = {tuple(d): 0 for d in DIRECTIONS.tolist()}
    for _ in range(n):
        nxt = step_random_walk((10, 10), env, rng)
        counts[(nxt[0] - 10, nxt[1] - 10)] += 1
    assert (0, 0) not in counts
    for c in counts.values():
        assert abs(c / n - 1 / 8) <= 0.01


def test_walk_stays_in_bounds_long_run():
    env = make_env(6, n_y=4)
    rng = np.random.default_rng(0)
    z = (0, 0)
    for _ in range(100_000):
        z = step_random_walk(z, env, rng)
        assert 0 <= z[0] < 6 and 0 <= z[1] < 4


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nx=st.integers(2, 8), ny=st.integers(2, 8))
def test_walk_bounds_property(seed, nx, ny):
    env = make_env(nx, n_y=ny, n_beacons=2)
    rng = np.random.default_rng(seed)
    z = env.zone_of(rng.integers(env.n_zones))
    for _ in range(500):
        z = step_random_walk(z, env, rng)
        assert env.in_bounds(z)


def test_walk_reproducible():
    env = make_env(9)
    def walk(seed):
        rng = np.random.default_rng(seed)
        z, out = (4, 4), []
        for _ in range(200):
            z = step_random_walk(z, env, rng)
            out.append(z)
        return out
    assert walk(5) == walk(5)


def test_snapshot_round_trip(tmp_path):
    env = make_env(8, n_y=6, n_beacons=5, p_nlos=0.5, seed=11)
    path = tmp_path / "env.json"
    env.save(path)
    back = GridEnvironment.load(path)
    assert back.to_snapshot() == env.to_snapshot()
    assert np.array_equal(back.toa_table, env.toa_table)


def test_environment_arrays_read_only(small_env):
    with pytest.raises(ValueError):
        small_env.toa_table[0, 0] = 1.0
    with pytest.raises(ValueError):
        small_env.channel_map.condition[0, 0] = 1
