import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmarl.dispatch import CostModel
from gridmarl.dynamics import BAState, simulate_ba
from gridmarl.env import (
    ConfigError,
    EnvConfig,
    EpisodeDone,
    LFCEnv,
    apply_grc,
    reward_model2,
    reward_secondary_model1,
    reward_tertiary,
    tertiary_conditions,
)
from gridmarl.scenarios import (
    evaluation_config,
    preset,
    tertiary_area,
    two_gen_network,
    two_unit_area,
)

COSTS = CostModel.quadratic([2.0, 1.0])


# -- reward functions ---------------------------------------------------------


def test_secondary_reward_examples():
    assert reward_secondary_model1(0.0, 0.05, 10) == 10
    assert reward_secondary_model1(0.05, 0.05, 10) == 0
    assert reward_secondary_model1(-0.05, 0.05, 10) == 0
    assert reward_secondary_model1(-0.04, 0.05, 10) == 10


def test_tertiary_reward_examples():
    assert reward_tertiary(0.01, [1.05, 2.10], COSTS, 0.05, 0.2, 200, 100) == 200
    assert reward_tertiary(0.2, [1.05, 2.10], COSTS, 0.05, 0.2, 200, 100) == 100
    assert reward_tertiary(0.01, [3.0, 0.0], COSTS, 0.05, 0.2, 200, 100) == 100
    assert reward_tertiary(0.2, [3.0, 0.0], COSTS, 0.05, 0.2, 200, 100) == 0


def test_cost_condition_reads_as_two_to_one_split():
    # |2 z1 - z2| < 0.2 for the (2, 1) curvature pair
    assert tertiary_conditions(0.0, [1.0, 2.19], COSTS, 0.05, 0.2)[1]
    assert not tertiary_conditions(0.0, [1.0, 2.2], COSTS, 0.05, 0.2)[1]
    assert not tertiary_conditions(0.0, [1.0, 1.79], COSTS, 0.05, 0.2)[1]
    # raw curvatures double the spread
    assert not tertiary_conditions(0.0, [1.0, 2.15], COSTS, 0.05, 0.2, normalize_curvature=False)[1]


def test_model2_reward_tiers():
    assert reward_model2([0.01, 0.2], 0.05, (100, 200)) == 100
    assert reward_model2([0.01, -0.02], 0.05, (100, 200)) == 200
    assert reward_model2([0.05, 0.2], 0.05, (100, 200)) == 0
    with pytest.raises(ValueError):
        reward_model2([0.0, 0.0], 0.05, (200, 100))


def test_grc_examples():
    assert apply_grc(0.0, 0.1) == 0.0
    assert abs(apply_grc(100.0, 0.1) - 0.1) < 1e-6
    assert apply_grc(-2.0, 0.1) == -apply_grc(2.0, 0.1)
    with pytest.raises(ValueError):
        apply_grc(1.0, 0.0)


@given(st.floats(-50, 50), st.sampled_from([0.1, 0.05, 0.01]))
def test_grc_bound(raw, dz_max):
    assert abs(apply_grc(raw, dz_max)) <= dz_max


@given(
    st.floats(-1, 1),
    st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    st.lists(st.floats(0.1, 5), min_size=3, max_size=3),
)
def test_tertiary_codomain_and_permutation_symmetry(w, z, a):
    costs = CostModel.quadratic(a)
    r = reward_tertiary(w, z, costs, 0.05, 0.2, 200, 100)
    assert r in (0, 100, 200)
    for perm in itertools.permutations(range(3)):
        perm = list(perm)
        c_perm = costs.permuted(perm)
        z_perm = np.asarray(z)[perm]
        assert tertiary_conditions(w, z_perm, c_perm, 0.05, 0.2) == tertiary_conditions(w, z, costs, 0.05, 0.2)
        assert reward_tertiary(w, z_perm, c_perm, 0.05, 0.2, 200, 100) == r


@given(st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_model2_codomain(ws):
    assert reward_model2(ws, 0.05, (100, 200)) in (0, 100, 200)


# -- configuration -------------------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigError):
        tertiary_area(costs=None)
    with pytest.raises(ConfigError):
        two_unit_area(eps1=0.0)
    with pytest.raises(ConfigError):
        two_unit_area(d1=100.0, d2=200.0)
    with pytest.raises(ConfigError):
        two_unit_area(initial_z=(1.0,))
    with pytest.raises(ConfigError):
        two_gen_network(tiers=(200.0, 100.0))
    with pytest.raises(ConfigError):
        two_unit_area(reward="model2")
    with pytest.raises(KeyError):
        preset("nope")


# -- reset / step ----------------------------------------------------------------


def test_reset_initial_operating_point():
    env = LFCEnv(two_unit_area())
    obs = env.reset(seed=3)
    assert obs.shape == (2, 2)
    np.testing.assert_array_equal(obs[:, 0], 0.0)
    np.testing.assert_array_equal(obs[:, 1], [1.5, 1.5])
    assert 2.5 <= env.load <= 3.5


def test_reset_without_jitter_and_determinism():
    env = LFCEnv(two_unit_area(load_jitter=0.0))
    env.reset(seed=1)
    assert env.load == 3.0
    env = LFCEnv(two_unit_area())
    loads = []
    for _ in range(2):
        env.reset(seed=42)
        loads.append(env.load)
    assert loads[0] == loads[1]
    env.reset(seed=43)
    assert env.load != loads[0]


def test_step_after_done_raises():
    env = LFCEnv(two_unit_area(episode_len=2))
    env.reset(seed=0)
    env.step([0, 0])
    res = env.step([0, 0])
    assert res.done
    with pytest.raises(EpisodeDone):
        env.step([0, 0])


def test_zero_action_at_equilibrium_is_stationary():
    env = LFCEnv(two_unit_area(load_jitter=0.0))
    env.reset(seed=0)
    res = env.step([0.0, 0.0])
    assert res.info["d_omega"] == 0.0
    np.testing.assert_array_equal(res.info["p"], [1.5, 1.5])
    assert res.info["c1"] and res.reward == 10


def test_held_commands_settle_to_closed_form():
    cfg = tertiary_area(load_jitter=0.0, nominal_load=3.15, initial_z=(3.0, 0.0), episode_len=400)
    env = LFCEnv(cfg)
    env.reset(seed=0)
    for _ in range(cfg.episode_len):
        res = env.step([0.0, 0.0])
    assert abs(res.info["d_omega"] - (-0.15 / 10.016)) < 1e-6
    assert res.info["c1"] and not res.info["c2"]
    assert res.reward == 100


def test_model1_env_matches_aggregate_integration():
    cfg = two_unit_area(load_jitter=0.0, load_step=0.15, initial_z=(2.0, 1.0))
    env = LFCEnv(cfg)
    env.reset(seed=0)
    for _ in range(30):
        res = env.step([0.0, 0.0])
    agg = simulate_ba(BAState(0.0, 3.0, 3.0), cfg.ba, 3.15, cfg.dt, 30 * cfg.substeps)
    assert abs(res.info["d_omega"] - agg.d_omega) < 1e-10
    assert abs(res.info["p"].sum() - agg.p_sv) < 1e-10


def test_actions_are_clamped_and_flagged():
    env = LFCEnv(two_unit_area(load_jitter=0.0))
    env.reset(seed=0)
    res = env.step([0.5, -0.02])
    assert res.info["clamped"]
    np.testing.assert_allclose(res.info["dz"], [0.1, -0.02])
    np.testing.assert_allclose(res.info["z"], [1.6, 1.48])
    res = env.step([0.01, 0.01])
    assert not res.info["clamped"]


def test_observation_locality():
    """Changing agent 2's command never alters what agent 1 observes."""
    cfg = two_gen_network(load_jitter=0.0)
    a, b = LFCEnv(cfg), LFCEnv(cfg)
    a.reset(seed=0)
    b.reset(seed=0)
    ra = a.step([0.0, 0.0])
    rb = b.step([0.0, 0.1])
    assert ra.obs.shape == (2, 2)
    assert ra.obs[0, 1] == rb.obs[0, 1]
    assert ra.obs[1, 1] != rb.obs[1, 1]
    # own column in Model II is the agent's own speed
    np.testing.assert_array_equal(ra.obs[:, 0], ra.info["d_omega"])


def test_step_determinism():
    cfg = replace(preset("wind"), churn=0.1)
    acts = np.random.default_rng(0).uniform(-0.1, 0.1, size=(20, 2))
    runs = []
    for _ in range(2):
        env = LFCEnv(cfg)
        env.reset(seed=5)
        runs.append([env.step(a) for a in acts])
    for r1, r2 in zip(*runs):
        assert r1.reward == r2.reward
        np.testing.assert_array_equal(r1.obs, r2.obs)
        assert r1.info["p_load"] == r2.info["p_load"]


def test_evaluation_config_applies_fixed_step():
    env = LFCEnv(evaluation_config(two_unit_area()))
    env.reset(seed=9)
    assert env.load == pytest.approx(3.15)
    env = LFCEnv(evaluation_config(two_gen_network()))
    env.reset(seed=9)
    np.testing.assert_allclose(env.bus_load, [0, 0, 1.65, 1.65])


def test_model2_droop_only_settles():
    cfg = evaluation_config(two_gen_network(episode_len=300))
    env = LFCEnv(cfg)
    env.reset(seed=0)
    for _ in range(cfg.episode_len):
        res = env.step([0.0, 0.0])
    w = res.info["d_omega"]
    # common frequency at the closed-form aggregate steady state
    g = cfg.gens
    expected = -0.3 / (g.D.sum() + (1 / g.R_D).sum())
    np.testing.assert_allclose(w, expected, atol=1e-6)
    assert res.info["p"].sum() == pytest.approx(3.3, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_random_rollout_respects_grc_and_codomain(seed):
    rng = np.random.default_rng(seed)
    cfg = tertiary_area(episode_len=10, dz_max=0.05)
    env = LFCEnv(cfg)
    env.reset(seed=seed)
    for _ in range(cfg.episode_len):
        raw = rng.normal(scale=5.0, size=2)
        res = env.step(apply_grc(raw, cfg.dz_max))
        assert np.all(np.abs(res.info["dz"]) <= cfg.dz_max)
        assert not res.info["clamped"]
        assert res.reward in (0, cfg.d2, cfg.d1)


def test_churn_moves_load_every_step_after_first():
    cfg = evaluation_config(two_unit_area(), churn=0.1)
    env = LFCEnv(cfg)
    env.reset(seed=0)
    loads = [env.step([0, 0]).info["p_load"] for _ in range(5)]
    assert loads[0] == pytest.approx(3.15)
    assert all(abs(b - a) <= 0.1 for a, b in zip(loads, loads[1:]))
    assert len(set(loads)) == 5


def test_wind_info_reported():
    env = LFCEnv(preset("wind"))
    env.reset(seed=0)
    res = env.step([0, 0])
    assert "p_wind" in res.info and res.info["p_wind"] != 0.0


def test_custom_config_without_initial_z_splits_load():
    cfg = EnvConfig(model=1, n_agents=4, ba=two_unit_area().ba, nominal_load=2.0)
    np.testing.assert_allclose(cfg.start_z(), 0.5)
