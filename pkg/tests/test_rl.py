import math

import numpy as np
import pytest
import torch
from scipy import integrate

from preheat.controllers import ConstantController, RandomController
from preheat.env import EpisodeConfig, PreheatEnv
from preheat.errors import ConfigurationError, ParameterCorruptionError, TrainingDivergenceError
from preheat.rl.agents import AwrAgent, AwrConfig, MpoAgent, MpoConfig, make_agent, train_step
from preheat.rl.buffer import ReplayBuffer
from preheat.rl.networks import (
    ActionBounds,
    Actor,
    MlpSpec,
    QCritic,
    ValueCritic,
    sample_action,
    squashed_log_prob,
    tanh_log_det,
)
from preheat.rl.training import TrainConfig, evaluate_policy, train

TINY = {"hidden": (4, 4), "batch_size": 8, "n_samples": 4}
OBS = np.array([0.3, -0.8, -0.6, 0.4, 1.0])


def _batch(rng, n=8, obs_dim=5, act_dim=3):
    return {
        "obs": rng.normal(size=(n, obs_dim)),
        "action": np.tanh(rng.normal(size=(n, act_dim))),
        "reward": rng.normal(size=n) * 50.0,
        "next_obs": rng.normal(size=(n, obs_dim)),
        "terminal": (rng.uniform(size=n) < 0.3).astype(float),
    }


# ----------------------------------------------------------------------------- networks


def test_actor_forward_is_deterministic_and_finite():
    agent = make_agent("mpo", {"hidden": (64, 64, 64)}, seed=3)
    pol = agent.policy
    m1, v1 = pol.forward_policy(OBS)
    m2, v2 = pol.forward_policy(OBS)
    assert np.array_equal(m1, m2) and np.array_equal(v1, v2)
    assert np.all(np.isfinite(m1)) and np.all(v1 > 0)
    a = pol.bounds.to_physical(np.tanh(m1))
    assert np.all(a >= pol.bounds.low) and np.all(a <= pol.bounds.high)


def test_same_seed_same_initialization():
    a = make_agent("mpo", TINY, seed=5)
    b = make_agent("mpo", TINY, seed=5)
    c = make_agent("mpo", TINY, seed=6)
    pa, pb, pc = (torch.cat([p.reshape(-1) for p in x.actor.parameters()]) for x in (a, b, c))
    assert torch.equal(pa, pb) and not torch.equal(pa, pc)


def test_corrupted_parameters_detected():
    agent = make_agent("mpo", TINY)
    with torch.no_grad():
        next(agent.actor.parameters()).fill_(float("nan"))
    with pytest.raises(ParameterCorruptionError):
        agent.policy.forward_policy(OBS)


def test_output_jacobian_matches_parameter_perturbation():
    torch.manual_seed(0)
    actor = Actor(MlpSpec(hidden=(4, 4))).double()
    obs = torch.as_tensor(OBS)
    params = list(actor.parameters())
    for p in params:
        for idx in [(0,) * p.dim(), tuple(s - 1 for s in p.shape)]:
            mean, log_var = actor(obs)
            out = torch.cat([mean, log_var])
            jac = torch.stack([torch.autograd.grad(o, p, retain_graph=True)[0][idx] for o in out])
            eps = 1e-6
            with torch.no_grad():
                p[idx] += eps
                plus = torch.cat(actor(obs))
                p[idx] -= 2 * eps
                minus = torch.cat(actor(obs))
                p[idx] += eps
            fd = (plus - minus) / (2 * eps)
            assert torch.allclose(jac, fd, rtol=1e-4, atol=1e-9)


def test_deterministic_action_is_squashed_mean(rng):
    pol = make_agent("mpo", TINY).policy
    prop, lp, u = sample_action(pol, OBS, rng, deterministic=True)
    mean, var = pol.forward_policy(OBS)
    assert np.array_equal(u, mean)
    assert np.allclose(prop.as_array(), pol.bounds.to_physical(np.tanh(mean)))
    expected = -0.5 * np.sum(np.log(2 * np.pi * var)) - float(tanh_log_det(torch.as_tensor(mean))) - np.sum(
        np.log(pol.bounds.half_width)
    )
    assert lp == pytest.approx(expected, rel=1e-12)
    assert pol.log_prob(OBS, mean) == pytest.approx(lp, rel=1e-12)


def test_sampling_statistics():
    pol = make_agent("mpo", {"hidden": (16, 16)}, seed=2).policy
    mean, var = pol.forward_policy(OBS)
    rng = np.random.default_rng(0)
    n = 100_000
    u = np.array([sample_action(pol, OBS, rng)[2] for _ in range(n)])
    se_mean = np.sqrt(var / n)
    assert np.all(np.abs(u.mean(0) - mean) < 3 * se_mean)
    se_var = var * np.sqrt(2.0 / (n - 1))
    assert np.all(np.abs(u.var(0, ddof=1) - var) < 3 * se_var)


@pytest.mark.parametrize("mu, var", [(0.0, 0.5), (0.8, 0.2), (-1.5, 1.0)])
def test_squashed_density_normalizes(mu, var):
    bounds = ActionBounds(low=(2.0,), high=(7.0,))
    hw = bounds.half_width[0]

    def density(a):
        z = (a - 2.0) / hw - 1.0
        u = torch.tensor([math.atanh(z)], dtype=torch.float64)
        return math.exp(float(squashed_log_prob(u, torch.tensor([mu]), torch.tensor([var]), bounds)))

    total, err = integrate.quad(density, 2.0, 7.0, limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_tanh_log_det_is_stable():
    u = torch.tensor([[0.0], [30.0], [-30.0]], dtype=torch.float64)
    ld = tanh_log_det(u)
    assert ld[0] == pytest.approx(0.0, abs=1e-15)
    assert torch.all(torch.isfinite(ld))
    assert ld[1] == pytest.approx(math.log(4.0) - 60.0, rel=1e-12)


def test_bounds_round_trip():
    b = ActionBounds()
    a = np.array([3.0, 1.0, 4.5])
    assert np.allclose(b.to_physical(b.to_normalized(a)), a)
    with pytest.raises(ConfigurationError):
        ActionBounds(low=(1.0,), high=(1.0,))


# ----------------------------------------------------------------------------- buffer


def test_buffer_fifo_eviction():
    buf = ReplayBuffer(3, obs_dim=1, act_dim=1)
    for k in range(4):
        buf.store([k], [k], float(k), [k], False)
    assert len(buf) == 3
    assert sorted(buf.reward.tolist()) == [1.0, 2.0, 3.0]
    assert buf.reward[buf.ordered_indices()].tolist() == [1.0, 2.0, 3.0]


def test_buffer_empty_sample_raises(rng):
    with pytest.raises(ValueError):
        ReplayBuffer(5).sample(2, rng)


def test_buffer_uniform_sampling(rng):
    buf = ReplayBuffer(10, obs_dim=1, act_dim=1)
    for k in range(10):
        buf.store([k], [0], 0.0, [k], False)
    idx = buf.sample(100_000, rng)["index"]
    freq = np.bincount(idx, minlength=10) / idx.size
    assert np.all(np.abs(freq - 0.1) < 0.01)


def test_buffer_state_round_trip(rng):
    a = ReplayBuffer(4, obs_dim=1, act_dim=1)
    for k in range(6):
        a.store([k], [k], float(k), [k], k % 2)
    b = ReplayBuffer(4, obs_dim=1, act_dim=1)
    b.load_state_dict(a.state_dict())
    assert (b.cursor, b.size) == (a.cursor, a.size)
    assert np.array_equal(b.reward, a.reward) and np.array_equal(b.terminal, a.terminal)


# ----------------------------------------------------------------------------- learners


@pytest.mark.parametrize("kind", ["mpo", "awr"])
def test_critic_regresses_to_zero_target(kind):
    agent = make_agent(kind, {"hidden": (16, 16), "batch_size": 4}, seed=1)
    row = {"obs": np.tile(OBS, (4, 1)), "action": np.tile([0.1, -0.2, 0.3], (4, 1)), "reward": np.zeros(4), "next_obs": np.tile(OBS, (4, 1)), "terminal": np.ones(4)}
    t = agent.tensors(row)
    losses = []
    for _ in range(400):
        loss = agent.critic_loss(t, agent._noise(2, 4)) if kind == "mpo" else agent.critic_loss(t)
        agent._step(agent.critic_opt, loss, agent.critic.parameters())
        losses.append(loss.item())
    assert losses[-1] < losses[0]
    assert losses[-1] < 1e-3


def test_zero_kl_bound_freezes_policy(rng):
    agent = make_agent("mpo", {**TINY, "eps_mean": 0.0, "eps_cov": 0.0}, seed=4)
    before = [p.detach().clone() for p in agent.actor.parameters()]
    for _ in range(5):
        m = agent.update(_batch(rng))
    after = list(agent.actor.parameters())
    assert sum(float((a.detach() - b).norm()) for a, b in zip(after, before)) == 0.0
    assert m["step_fraction"] == 0.0


def test_update_respects_kl_bounds(rng):
    agent = make_agent("mpo", {**TINY, "eps_mean": 1e-3, "eps_cov": 1e-5, "actor_lr": 1e-1}, seed=4)
    b = _batch(rng)
    m = agent.update(b)
    kl_m, kl_c = agent._kl_to_target(torch.as_tensor(b["obs"], dtype=agent.dtype))
    assert kl_m <= 1e-3 and kl_c <= 1e-5
    assert 0.0 <= m["step_fraction"] <= 1.0


def test_divergence_is_reported(rng):
    agent = make_agent("awr", {"hidden": (4, 4), "batch_size": 8})
    b = _batch(rng)
    b["reward"][0] = np.nan
    with pytest.raises(TrainingDivergenceError) as info:
        train_step(agent, b)
    assert "critic_loss" in info.value.diagnostics["non_finite"]


def test_unknown_agent():
    with pytest.raises(ConfigurationError):
        make_agent("ppo")


def _fd_check(loss_fn, params, h=1e-6, rtol=1e-4, atol=1e-10):
    """Compare autograd gradients of a scalar loss with central differences, element by element."""
    grads = torch.autograd.grad(loss_fn(), params)
    for p, g in zip(params, grads):
        flat, gflat = p.data.view(-1), g.view(-1)
        for i in range(flat.numel()):
            old = flat[i].item()
            flat[i] = old + h
            up = loss_fn().item()
            flat[i] = old - h
            down = loss_fn().item()
            flat[i] = old
            fd = (up - down) / (2 * h)
            assert abs(fd - gflat[i].item()) <= rtol * max(abs(fd), abs(gflat[i].item())) + atol, (p.shape, i, fd, gflat[i].item())


def _double_mpo(seed=0):
    return MpoAgent(MpoConfig(hidden=(4, 4), batch_size=6, n_samples=3), seed=seed, dtype=torch.float64)


def test_gradient_mpo_critic(rng):
    agent = _double_mpo()
    with torch.no_grad():  # decorrelate targets from the online critic
        for p in agent.target_critic.parameters():
            p.add_(0.1 * torch.randn(p.shape, generator=agent.generator, dtype=p.dtype))
    t = agent.tensors(_batch(rng, 6))
    noise = agent._noise(3, 6)
    _fd_check(lambda: agent.critic_loss(t, noise), list(agent.critic.parameters()))


def test_gradient_mpo_actor(rng):
    agent = _double_mpo(1)
    with torch.no_grad():
        for p in agent.actor.parameters():
            p.add_(0.05 * torch.randn(p.shape, generator=agent.generator, dtype=p.dtype))
    t = agent.tensors(_batch(rng, 6))
    noise = agent._noise(3, 6)
    _fd_check(lambda: agent.policy_losses(t, noise)["policy_loss"], list(agent.actor.parameters()))


def test_gradient_mpo_duals(rng):
    agent = _double_mpo(2)
    t = agent.tensors(_batch(rng, 6))
    noise = agent._noise(3, 6)
    _fd_check(lambda: agent.policy_losses(t, noise)["dual_loss"], [agent.duals])


def test_gradient_awr_networks(rng):
    agent = AwrAgent(AwrConfig(hidden=(4, 4), batch_size=6, beta=1.0), seed=3, dtype=torch.float64)
    with torch.no_grad():
        for p in agent.target_critic.parameters():
            p.add_(0.1 * torch.randn(p.shape, generator=agent.generator, dtype=p.dtype))
    t = agent.tensors(_batch(rng, 6))
    _fd_check(lambda: agent.critic_loss(t), list(agent.critic.parameters()))
    _fd_check(lambda: agent.policy_loss(t), list(agent.actor.parameters()))


@pytest.mark.parametrize("net", [Actor, QCritic, ValueCritic])
def test_gradient_each_network_output(net):
    torch.manual_seed(7)
    spec = MlpSpec(hidden=(4, 4))
    model = net(spec).double()
    obs = torch.randn(5, 5, dtype=torch.float64)
    act = torch.tanh(torch.randn(5, 3, dtype=torch.float64))
    w = torch.randn(5, 6 if net is Actor else 1, dtype=torch.float64)

    def loss():
        if net is Actor:
            out = torch.cat(model(obs), dim=-1)
        elif net is QCritic:
            out = model(obs, act)[:, None]
        else:
            out = model(obs)[:, None]
        return (w * torch.sin(out)).sum()

    _fd_check(loss, list(model.parameters()))


# ----------------------------------------------------------------------------- training loop


@pytest.fixture
def short_env(reduced):
    return PreheatEnv(reduced, episode=EpisodeConfig(max_duration=20.0))


def test_checkpoint_resume_is_bitwise(short_env, tmp_path):
    base = dict(agent_config={"hidden": (8, 8), "batch_size": 8, "n_samples": 4}, warmup_steps=8, checkpoint_every=0, seed=11)
    straight = train(short_env, TrainConfig(episodes=4, **base))
    train(short_env, TrainConfig(episodes=2, **base), out_dir=tmp_path)
    resumed = train(short_env, TrainConfig(episodes=4, **base), out_dir=tmp_path, resume=tmp_path / "checkpoint.pt")
    for a, b in zip(straight.agent.actor.parameters(), resumed.agent.actor.parameters()):
        assert torch.equal(a, b)
    for a, b in zip(straight.agent.critic.parameters(), resumed.agent.critic.parameters()):
        assert torch.equal(a, b)
    assert straight.metrics == resumed.metrics
    assert (tmp_path / "metrics.csv").read_text().count("\n") == 5


def test_missing_checkpoint(short_env, tmp_path):
    with pytest.raises(ConfigurationError):
        train(short_env, TrainConfig(episodes=1), resume=tmp_path / "none.pt")


def test_evaluation_is_deterministic(short_env):
    pol = make_agent("mpo", TINY, seed=0).policy
    a, ta = evaluate_policy(pol, short_env, 2, seed=4)
    b, tb = evaluate_policy(pol, short_env, 2, seed=4)
    assert a == b and ta == tb


def test_random_and_zero_baselines_finite(short_env):
    r, _ = evaluate_policy(RandomController(), short_env, 2, seed=0)
    z, _ = evaluate_policy(ConstantController(), short_env, 2, seed=0)
    assert np.isfinite(r.mean_return) and np.isfinite(z.mean_return)
    assert z.mean_ptc_energy == 0.0 and z.reached_fraction == 0.0
