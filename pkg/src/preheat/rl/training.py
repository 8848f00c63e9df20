"""Training loop, policy evaluation, checkpoints and the metrics log."""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from preheat.controllers import Controller, PolicyController
from preheat.energy import energy_accounting, phase_means
from preheat.env import PreheatEnv
from preheat.errors import ConfigurationError
from preheat.rl.agents import make_agent, train_step
from preheat.rl.buffer import ReplayBuffer
from preheat.rl.networks import ActionBounds, sample_action
from preheat.trace import write_atomic

CHECKPOINT_VERSION = 1
METRIC_FIELDS = (
    "episode",
    "env_steps",
    "grad_steps",
    "return",
    "length",
    "final_T_avg",
    "final_T_range",
    "reached",
    "critic_loss",
    "policy_loss",
    "kl_mean",
    "kl_cov",
    "eta",
    "alpha_mean",
    "alpha_cov",
)


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 500
    agent: str = "mpo"
    agent_config: dict = field(default_factory=dict)
    buffer_capacity: int = 100_000
    warmup_steps: int = 256  # transitions collected before the first update
    updates_per_step: int = 1
    seed: int = 0
    checkpoint_every: int = 100  # episodes; 0 disables intermediate checkpoints

    def __post_init__(self):
        if self.episodes < 1 or self.buffer_capacity < 1 or self.warmup_steps < 1 or self.updates_per_step < 0:
            raise ConfigurationError("invalid training budget")


@dataclass
class TrainResult:
    agent: object
    buffer: ReplayBuffer
    metrics: list[dict]
    rng: np.random.Generator
    episode: int


def _metrics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=METRIC_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in METRIC_FIELDS})
    return buf.getvalue()


def save_checkpoint(path, result: TrainResult, cfg: TrainConfig) -> Path:
    """Everything needed to resume bit-for-bit: networks, optimizers, duals, buffer, RNG states."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "version": CHECKPOINT_VERSION,
        "train_config": dataclasses.asdict(cfg),
        "agent": result.agent.state_dict(),
        "buffer": result.buffer.state_dict(),
        "rng": result.rng.bit_generator.state,
        "episode": result.episode,
        "metrics": result.metrics,
    }
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        torch.save(payload, tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path) -> dict:
    if not Path(path).is_file():
        raise ConfigurationError(f"checkpoint {path} not found")
    payload = torch.load(path, weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"unsupported checkpoint version {payload.get('version')}")
    return payload


def _agent_from_payload(payload: dict):
    state = payload["agent"]
    bounds = ActionBounds(**{k: tuple(v) for k, v in state["bounds"].items()})
    agent = make_agent(state["kind"], state["config"], bounds=bounds)
    agent.load_state_dict(state)
    return agent


def agent_from_checkpoint(path):
    return _agent_from_payload(load_checkpoint(path))


def train(
    env: PreheatEnv,
    cfg: TrainConfig,
    out_dir=None,
    resume=None,
    bounds: ActionBounds | None = None,
    log=None,
) -> TrainResult:
    """Run ``cfg.episodes`` training episodes (continuing from ``resume`` if given).

    Writes ``metrics.csv`` and ``checkpoint.pt`` under ``out_dir`` when set.
    """
    if resume is not None:
        payload = load_checkpoint(resume)
        agent = _agent_from_payload(payload)
        buffer = ReplayBuffer(payload["train_config"]["buffer_capacity"])
        buffer.load_state_dict(payload["buffer"])
        rng = np.random.default_rng()
        rng.bit_generator.state = payload["rng"]
        result = TrainResult(agent, buffer, list(payload["metrics"]), rng, int(payload["episode"]))
    else:
        agent = make_agent(cfg.agent, cfg.agent_config, bounds=bounds, seed=cfg.seed)
        result = TrainResult(agent, ReplayBuffer(cfg.buffer_capacity), [], np.random.default_rng(cfg.seed), 0)
    agent, buffer, rng = result.agent, result.buffer, result.rng
    policy = agent.policy
    batch_size = agent.cfg.batch_size
    env_steps = sum(int(m["length"]) for m in result.metrics)

    while result.episode < cfg.episodes:
        obs = env.reset(seed=int(rng.integers(2**31)))
        ep_return, length, done = 0.0, 0, False
        sums: dict[str, float] = {}
        n_updates = 0
        while not done:
            obs_n = obs.normalized()
            proposal, _, u = sample_action(policy, obs_n, rng)
            next_obs, reward, done, info = env.step(proposal)
            buffer.store(obs_n, np.tanh(u), reward, next_obs.normalized(), info["terminal"])
            ep_return += reward
            length += 1
            env_steps += 1
            obs = next_obs
            if len(buffer) >= cfg.warmup_steps:
                for _ in range(cfg.updates_per_step):
                    m = train_step(agent, buffer.sample(batch_size, rng))
                    n_updates += 1
                    for k, v in m.items():
                        sums[k] = sums.get(k, 0.0) + v
        result.episode += 1
        row = {
            "episode": result.episode,
            "env_steps": env_steps,
            "grad_steps": agent.steps,
            "return": ep_return,
            "length": length,
            "final_T_avg": info["T_avg"],
            "final_T_range": info["T_range"],
            "reached": int(info["reached"]),
        }
        row.update({k: v / n_updates for k, v in sums.items() if k in METRIC_FIELDS})
        result.metrics.append(row)
        if log is not None:
            log(row)
        if out_dir is not None:
            out = Path(out_dir)
            write_atomic(out / "metrics.csv", _metrics_csv(result.metrics))
            if cfg.checkpoint_every and result.episode % cfg.checkpoint_every == 0:
                save_checkpoint(out / "checkpoint.pt", result, cfg)
    if out_dir is not None:
        save_checkpoint(Path(out_dir) / "checkpoint.pt", result, cfg)
    return result


@dataclass(frozen=True)
class EvalStats:
    n_episodes: int
    mean_return: float
    reached_fraction: float
    mean_time_to_target: float  # [s] over episodes that reached the target
    mean_final_T_range: float  # [K]
    mean_ptc_energy: float  # [J], cell basis
    mean_pulse_energy: float  # [J]
    ptc_power_first_third: float  # [W]
    ptc_power_last_third: float
    pulse_heat_first_third: float  # [W]
    pulse_heat_last_third: float

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def run_episode(env: PreheatEnv, controller: Controller, rng: np.random.Generator, seed=None, T0=None, soc=None):
    """Roll out one episode; returns ``(return, trace, last info)``."""
    obs = env.reset(seed=seed, T0=T0, soc=soc)
    total, done, info = 0.0, False, {}
    while not done:
        obs, reward, done, info = env.step(controller.act(env, obs, rng))
        total += reward
    return total, list(env.trace), info


def evaluate_policy(
    controller,
    env: PreheatEnv,
    n_episodes: int = 5,
    deterministic: bool = True,
    seed: int = 0,
    initial_states=None,
):
    """Roll out ``n_episodes`` and summarize; returns ``(EvalStats, traces)``.

    ``controller`` is a :class:`Controller` or a Gaussian policy (acting on its
    mean when ``deterministic``). ``initial_states`` optionally fixes
    ``(T0, soc)`` per episode; otherwise episode ``k`` resets with seed
    ``seed + k``.
    """
    if not isinstance(controller, Controller):
        controller = PolicyController(controller, deterministic)
    rng = np.random.default_rng(seed)
    cell_volume = env.thermal.cell_volume
    returns, times, ranges, e_ptc, e_pulse, phases, traces = [], [], [], [], [], [], []
    for k in range(n_episodes):
        T0, soc = initial_states[k % len(initial_states)] if initial_states else (None, None)
        ret, trace, _ = run_episode(env, controller, rng, seed=seed + k, T0=T0, soc=soc)
        report = energy_accounting(trace, cell_volume, env.episode.T_des)
        returns.append(ret)
        if report.complete:
            times.append(report.time_to_target)
        ranges.append(report.final_T_range)
        e_ptc.append(report.ptc_energy)
        e_pulse.append(report.pulse_energy)
        phases.append(phase_means(trace, cell_volume))
        traces.append(trace)
    stats = EvalStats(
        n_episodes=n_episodes,
        mean_return=float(np.mean(returns)),
        reached_fraction=len(times) / n_episodes,
        mean_time_to_target=float(np.mean(times)) if times else float("nan"),
        mean_final_T_range=float(np.mean(ranges)),
        mean_ptc_energy=float(np.mean(e_ptc)),
        mean_pulse_energy=float(np.mean(e_pulse)),
        ptc_power_first_third=float(np.mean([p["ptc_first"] for p in phases])),
        ptc_power_last_third=float(np.mean([p["ptc_last"] for p in phases])),
        pulse_heat_first_third=float(np.mean([p["pulse_first"] for p in phases])),
        pulse_heat_last_third=float(np.mean([p["pulse_last"] for p in phases])),
    )
    return stats, traces
