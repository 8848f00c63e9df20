import numpy as np
import pytest

from preheat.controllers import PulseOnlyController
from preheat.env import (
    EpisodeConfig,
    PreheatEnv,
    RewardConfig,
    compute_reward,
    normalize_observation,
)
from preheat.errors import ConfigurationError, SolverError
from preheat.supervisor import ActionProposal, PulseConfig
from preheat.thermal import ThermalParameters

RC = RewardConfig()
NULL = ActionProposal(0.0, 0.0, 0.0)


@pytest.fixture
def env(reduced):
    return PreheatEnv(reduced)


def test_reward_examples():
    assert compute_reward({"T_avg": 260.0, "T_range": 0.1}, {"T_avg": 260.5, "T_range": 0.3}, False, RC) == pytest.approx(0.1, abs=1e-12)
    assert compute_reward({"T_avg": 260.0, "T_range": 0.7}, {"T_avg": 260.5, "T_range": 0.8}, False, RC) == pytest.approx(-1.6, abs=1e-12)
    assert compute_reward({"T_avg": 273.0, "T_range": 0.6}, {"T_avg": 273.0, "T_range": 0.6}, True, RC) == -200.0
    assert compute_reward({"T_avg": 273.0, "T_range": 0.2}, {"T_avg": 273.0, "T_range": 0.2}, True, RC) == 200.0


def test_reset_is_seeded(env):
    a = env.reset(seed=7)
    b = env.reset(seed=7)
    assert a == b
    assert env.reset(seed=8) != a


def test_initial_states_within_ranges(env):
    lo, hi = env.episode.T_init_range
    T, soc = [], []
    for k in range(1000):
        obs = env.reset(seed=k)
        T.append(obs.T_m)
        soc.append(env.initial["soc"])
    assert lo <= min(T) and max(T) < hi
    assert 0.2 <= min(soc) and max(soc) < 0.9
    assert max(T) - min(T) > 19.0


def test_reset_state_at_rest(env):
    obs = env.reset(T0=258.15, soc=0.6)
    assert obs.T_m == obs.T_out == 258.15
    assert obs.soc == pytest.approx(0.6, abs=1e-12)
    assert obs.v_t == pytest.approx(env.model.open_circuit_voltage(env.ec), abs=1e-9)
    assert env.initial["ambient"] == 258.15
    assert len(env.trace) == 1 and env.trace[0].t == 0.0


def test_null_action_keeps_temperature(env):
    env.reset(T0=255.0, soc=0.5)
    T0 = env.stats()["T_avg"]
    obs, reward, done, info = env.step(NULL)
    assert info["T_avg"] == pytest.approx(T0, abs=1e-9)
    assert reward == pytest.approx(0.0, abs=1e-9)
    assert not done and info["E_ptc"] == 0.0 and info["E_pulse"] == 0.0
    assert env.time == pytest.approx(5.0)


def test_film_heating_builds_gradient(env):
    env.reset(T0=253.15, soc=0.5)
    _, _, _, info = env.step(ActionProposal(10.0, 0.0, 0.0))
    assert info["T_out"] - info["T_m"] > 0
    assert info["E_ptc"] == pytest.approx(env.trace[-1].Q_ptc * 5.0, rel=1e-12)
    assert info["E_ptc"] > 800.0


def test_reaching_target_gives_terminal_bonus(env):
    env.reset(T0=273.05, soc=0.6)
    ctrl = PulseOnlyController()
    _, reward, done, info = env.step(ctrl.act(env, env.observe(), None))
    assert info["reached"] and info["terminal"] and done
    assert info["T_range"] < 0.5
    assert reward == pytest.approx((info["T_avg"] - 273.05) / 5.0 + 200.0, rel=1e-12)
    with pytest.raises(RuntimeError):
        env.step(NULL)


def test_time_limit_is_not_terminal(reduced):
    env = PreheatEnv(reduced, episode=EpisodeConfig(max_duration=10.0))
    env.reset(T0=260.0, soc=0.5)
    _, _, done, _ = env.step(NULL)
    assert not done
    _, reward, done, info = env.step(NULL)
    assert done and info["timed_out"] and not info["terminal"]
    assert reward == pytest.approx(0.0, abs=1e-9)


def test_solver_failure_aborts_with_penalty(reduced):
    class Failing(type(reduced)):
        def step(self, state, I, T_avg, dt=None):
            if I != 0.0:
                raise SolverError("forced")
            return super().step(state, I, T_avg, dt)

    model = Failing(reduced.params, reduced.mesh)
    env = PreheatEnv(model)
    env.reset(T0=260.0, soc=0.5)
    ctrl = PulseOnlyController()
    _, reward, done, info = env.step(ctrl.act(env, env.observe(), None), action=None)
    assert info["failed"] and info["terminal"] and done
    assert reward == pytest.approx(-200.0, abs=1e-9)


def test_pulse_only_soc_nonincreasing(env):
    env.reset(T0=253.15, soc=0.7)
    ctrl = PulseOnlyController()
    soc = [env.observe().soc]
    for _ in range(8):
        obs, _, done, _ = env.step(ctrl.act(env, env.observe(), None))
        soc.append(obs.soc)
    assert all(b <= a + 1e-12 for a, b in zip(soc, soc[1:]))
    assert soc[-1] < soc[0]


def test_episode_determinism(reduced):
    actions = [ActionProposal(8.0, 1.0, 2.0), ActionProposal(3.0, 4.0, 1.0), ActionProposal(0.0, 2.0, 5.0)]

    def roll():
        env = PreheatEnv(reduced)
        env.reset(seed=3)
        for a in actions:
            env.step(a)
        return [r for r in env.trace]

    assert roll() == roll()


def test_substep_trace(reduced):
    env = PreheatEnv(reduced, trace_substeps=True)
    env.reset(T0=260.0, soc=0.5)
    _, reward, _, _ = env.step(ActionProposal(5.0, 1.0, 2.0))
    assert len(env.trace) == 101
    assert env.trace[-1].t == pytest.approx(5.0)
    assert {r.hold_reward for r in env.trace[1:]} == {reward}


def test_fixed_ambient(reduced):
    env = PreheatEnv(reduced, episode=EpisodeConfig(ambient=243.15))
    env.reset(T0=263.15, soc=0.5)
    _, _, _, info = env.step(NULL)
    assert info["T_avg"] < 263.15


def test_configuration_checks(reduced):
    with pytest.raises(ConfigurationError):
        PreheatEnv(reduced, thermal=ThermalParameters(dt=0.1))
    with pytest.raises(ConfigurationError):
        PreheatEnv(reduced, episode=EpisodeConfig(max_duration=12.0))
    with pytest.raises(ConfigurationError):
        PreheatEnv(reduced, pulse=PulseConfig(hold=10.0), reward=RewardConfig())


def test_observation_scaling(env):
    obs = env.reset(T0=263.15, soc=0.5)
    z = obs.normalized()
    assert z[0] == pytest.approx(0.0) and z[1] == pytest.approx(0.0)
    assert np.allclose(normalize_observation(obs.as_array()), z)
    assert np.all(np.abs(z) < 3)
