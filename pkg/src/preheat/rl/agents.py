"""Off-policy learners: MPO with a Q critic and an advantage-weighted-regression fallback.

Both agents share the actor/policy interface and a :meth:`update` on a numpy
batch from :class:`~preheat.rl.buffer.ReplayBuffer`. Loss construction is
separated from sampling (the loss methods take the Gaussian noise explicitly) so the
losses are deterministic functions of the parameters.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch.nn import functional as F

from preheat.errors import ConfigurationError, TrainingDivergenceError
from preheat.rl.networks import (
    ActionBounds,
    Actor,
    GaussianPolicy,
    MlpSpec,
    QCritic,
    ValueCritic,
    gaussian_log_prob,
)


@dataclass(frozen=True)
class MpoConfig:
    gamma: float = 0.99
    batch_size: int = 256
    n_samples: int = 20  # actions per state in the E-step
    eps_eta: float = 0.1  # KL bound of the non-parametric E-step distribution
    eps_mean: float = 0.01  # KL bound of the mean update
    eps_cov: float = 1e-4  # KL bound of the covariance update
    eta_init: float = 1.0
    alpha_mean_init: float = 1.0
    alpha_cov_init: float = 10.0
    dual_lr: float = 1e-2
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    target_period: int = 100  # gradient steps between target-network copies
    grad_clip: float = 40.0
    reward_scale: float = 0.01
    backtracks: int = 10  # halvings of a policy step that overshoots the KL bounds
    hidden: tuple[int, ...] = (64, 64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigurationError("gamma must lie in (0, 1)")
        rates = (self.dual_lr, self.actor_lr, self.critic_lr, self.eta_init, self.reward_scale)
        if min(rates) <= 0 or min(self.alpha_mean_init, self.alpha_cov_init) <= 0:
            raise ConfigurationError("learning rates and dual initializations must be > 0")
        if min(self.eps_eta, self.eps_mean, self.eps_cov) < 0:
            raise ConfigurationError("KL bounds must be >= 0")
        if self.batch_size < 1 or self.n_samples < 1 or self.target_period < 1:
            raise ConfigurationError("batch size, sample count and target period must be >= 1")


@dataclass(frozen=True)
class AwrConfig:
    gamma: float = 0.99
    batch_size: int = 256
    beta: float = 0.05  # advantage temperature (in scaled-reward units)
    max_weight: float = 20.0
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    target_period: int = 100
    grad_clip: float = 40.0
    reward_scale: float = 0.01
    hidden: tuple[int, ...] = (64, 64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ConfigurationError("gamma must lie in (0, 1)")
        if min(self.beta, self.max_weight, self.actor_lr, self.critic_lr, self.reward_scale) <= 0:
            raise ConfigurationError("rates, beta and max_weight must be > 0")
        if self.batch_size < 1 or self.target_period < 1:
            raise ConfigurationError("batch size and target period must be >= 1")


def _softplus_inverse(x: float) -> float:
    return float(np.log(np.expm1(x)))


def _flat_params(module) -> torch.Tensor:
    return torch.cat([p.detach().reshape(-1) for p in module.parameters()])


def _set_flat_params(module, flat: torch.Tensor) -> None:
    i = 0
    with torch.no_grad():
        for p in module.parameters():
            n = p.numel()
            p.copy_(flat[i : i + n].view_as(p))
            i += n


def diag_kl_mean(mean_old, var_old, mean) -> torch.Tensor:
    """KL(N(mean_old, var_old) || N(mean, var_old)), batch-averaged."""
    return (0.5 * (mean - mean_old) ** 2 / var_old).sum(-1).mean()


def diag_kl_cov(var_old, var) -> torch.Tensor:
    """KL(N(m, var_old) || N(m, var)), batch-averaged."""
    return (0.5 * (var_old / var - 1.0 + torch.log(var / var_old))).sum(-1).mean()


class _Agent:
    kind = "base"

    def __init__(self, cfg, bounds: ActionBounds | None, obs_dim: int, act_dim: int, seed: int, dtype):
        self.cfg = cfg
        self.bounds = bounds or ActionBounds()
        self.dtype = dtype
        self.spec = MlpSpec(obs_dim, act_dim, tuple(cfg.hidden), cfg.activation)
        self.generator = torch.Generator().manual_seed(int(seed))
        self.steps = 0

    def _init_module(self, module):
        """Reinitialize weights from the agent's own generator (reproducible, no global state)."""
        with torch.no_grad():
            for layer in module.modules():
                if isinstance(layer, torch.nn.Linear):
                    bound = 1.0 / np.sqrt(layer.in_features)
                    layer.weight.uniform_(-bound, bound, generator=self.generator)
                    layer.bias.uniform_(-bound, bound, generator=self.generator)
        return module.to(self.dtype)

    @property
    def policy(self) -> GaussianPolicy:
        return GaussianPolicy(self.actor, self.bounds)

    def tensors(self, batch: dict) -> dict:
        return {k: torch.as_tensor(batch[k], dtype=self.dtype) for k in ("obs", "action", "reward", "next_obs", "terminal")}

    def _noise(self, n: int, batch: int) -> torch.Tensor:
        return torch.randn((n, batch, self.spec.act_dim), generator=self.generator, dtype=self.dtype)

    def _step(self, opt, loss, params) -> float:
        opt.zero_grad()
        loss.backward()
        norm = torch.nn.utils.clip_grad_norm_(params, self.cfg.grad_clip)
        opt.step()
        return float(norm)

    def _check(self, metrics: dict, batch: dict) -> None:
        bad = [k for k, v in metrics.items() if not np.isfinite(v)]
        params_ok = all(torch.all(torch.isfinite(p)) for m in self.modules().values() for p in m.parameters())
        if bad or not params_ok:
            diagnostics = {
                "step": self.steps,
                "non_finite": bad,
                "metrics": metrics,
                "batch_reward_range": (float(np.min(batch["reward"])), float(np.max(batch["reward"]))),
                "params_finite": bool(params_ok),
            }
            raise TrainingDivergenceError(f"non-finite training quantities {bad}", diagnostics)

    def sync_targets(self) -> None:
        for name, module in self.modules().items():
            if name.startswith("target_"):
                module.load_state_dict(self.modules()[name[len("target_") :]].state_dict())

    def state_dict(self) -> dict:
        return {
            "kind": self.kind,
            "config": asdict(self.cfg),
            "bounds": asdict(self.bounds),
            "steps": self.steps,
            "generator": self.generator.get_state(),
            "modules": {k: m.state_dict() for k, m in self.modules().items()},
            "optimizers": {k: o.state_dict() for k, o in self.optimizers().items()},
            "extra": self._extra_state(),
        }

    def load_state_dict(self, d: dict) -> None:
        if d["kind"] != self.kind:
            raise ConfigurationError(f"checkpoint holds a {d['kind']} agent, not {self.kind}")
        self.steps = int(d["steps"])
        self.generator.set_state(d["generator"])
        for k, m in self.modules().items():
            m.load_state_dict(d["modules"][k])
        for k, o in self.optimizers().items():
            o.load_state_dict(d["optimizers"][k])
        self._load_extra(d["extra"])

    def _extra_state(self) -> dict:
        return {}

    def _load_extra(self, extra: dict) -> None:
        pass


class MpoAgent(_Agent):
    """Decoupled-KL MPO with a state-action critic and 1-step bootstrapped targets."""

    kind = "mpo"

    def __init__(self, cfg: MpoConfig | None = None, bounds=None, obs_dim=5, act_dim=3, seed=0, dtype=torch.float32):
        super().__init__(cfg or MpoConfig(), bounds, obs_dim, act_dim, seed, dtype)
        cfg = self.cfg
        self.actor = self._init_module(Actor(self.spec))
        self.critic = self._init_module(QCritic(self.spec))
        self.target_actor = copy.deepcopy(self.actor)
        self.target_critic = copy.deepcopy(self.critic)
        init = [_softplus_inverse(cfg.eta_init), _softplus_inverse(cfg.alpha_mean_init), _softplus_inverse(cfg.alpha_cov_init)]
        self.duals = torch.nn.Parameter(torch.tensor(init, dtype=dtype))
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=cfg.actor_lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=cfg.critic_lr)
        self.dual_opt = torch.optim.Adam([self.duals], lr=cfg.dual_lr)

    def modules(self) -> dict:
        return {"actor": self.actor, "critic": self.critic, "target_actor": self.target_actor, "target_critic": self.target_critic}

    def optimizers(self) -> dict:
        return {"actor": self.actor_opt, "critic": self.critic_opt, "dual": self.dual_opt}

    def _extra_state(self) -> dict:
        return {"duals": self.duals.detach().clone()}

    def _load_extra(self, extra: dict) -> None:
        with torch.no_grad():
            self.duals.copy_(extra["duals"])

    def dual_values(self) -> torch.Tensor:
        return F.softplus(self.duals) + 1e-8

    def critic_loss(self, t: dict, noise_next: torch.Tensor) -> torch.Tensor:
        cfg = self.cfg
        with torch.no_grad():
            mean, log_var = self.target_actor(t["next_obs"])
            u = mean + torch.exp(0.5 * log_var) * noise_next
            obs2 = t["next_obs"].expand(u.shape[0], *t["next_obs"].shape)
            v_next = self.target_critic(obs2, torch.tanh(u)).mean(0)
            y = cfg.reward_scale * t["reward"] + cfg.gamma * (1.0 - t["terminal"]) * v_next
        return 0.5 * ((self.critic(t["obs"], t["action"]) - y) ** 2).mean()

    def e_step(self, t: dict, noise: torch.Tensor):
        """Sampled actions, their target Q values and the target policy moments."""
        with torch.no_grad():
            mean_b, log_var_b = self.target_actor(t["obs"])
            var_b = torch.exp(log_var_b)
            u = mean_b + torch.sqrt(var_b) * noise
            obs = t["obs"].expand(u.shape[0], *t["obs"].shape)
            q = self.target_critic(obs, torch.tanh(u))
        return u, q, mean_b, var_b

    def policy_losses(self, t: dict, noise: torch.Tensor) -> dict:
        cfg = self.cfg
        u, q, mean_b, var_b = self.e_step(t, noise)
        eta, alpha_mean, alpha_cov = self.dual_values()
        n = q.shape[0]
        eta_loss = eta * cfg.eps_eta + eta * (torch.logsumexp(q / eta, dim=0) - np.log(n)).mean()
        weights = torch.softmax(q / eta.detach(), dim=0)

        mean, log_var = self.actor(t["obs"])
        var = torch.exp(log_var)
        lp_mean = gaussian_log_prob(u, mean, var_b)
        lp_cov = gaussian_log_prob(u, mean_b, var)
        nll = -(weights * (lp_mean + lp_cov)).sum(0).mean()
        kl_mean = diag_kl_mean(mean_b, var_b, mean)
        kl_cov = diag_kl_cov(var_b, var)
        policy_loss = nll + alpha_mean.detach() * kl_mean + alpha_cov.detach() * kl_cov
        alpha_loss = alpha_mean * (cfg.eps_mean - kl_mean.detach()) + alpha_cov * (cfg.eps_cov - kl_cov.detach())
        return {
            "policy_loss": policy_loss,
            "dual_loss": eta_loss + alpha_loss,
            "kl_mean": kl_mean,
            "kl_cov": kl_cov,
            "q_mean": q.mean(),
        }

    def _kl_to_target(self, obs: torch.Tensor) -> tuple[float, float]:
        with torch.no_grad():
            mean_b, log_var_b = self.target_actor(obs)
            mean, log_var = self.actor(obs)
            var_b, var = torch.exp(log_var_b), torch.exp(log_var)
            return float(diag_kl_mean(mean_b, var_b, mean)), float(diag_kl_cov(var_b, var))

    def _trust_region(self, old: torch.Tensor, obs: torch.Tensor) -> float:
        """Shrink the last policy step until both KL bounds hold; returns the kept fraction."""
        new = _flat_params(self.actor)
        scale = 1.0
        for _ in range(self.cfg.backtracks + 1):
            kl_m, kl_c = self._kl_to_target(obs)
            if kl_m <= self.cfg.eps_mean and kl_c <= self.cfg.eps_cov:
                return scale
            scale *= 0.5
            _set_flat_params(self.actor, old + scale * (new - old))
        _set_flat_params(self.actor, old)
        return 0.0

    def update(self, batch: dict) -> dict:
        cfg = self.cfg
        t = self.tensors(batch)
        n_batch = t["obs"].shape[0]
        noise_next = self._noise(cfg.n_samples, n_batch)
        noise = self._noise(cfg.n_samples, n_batch)

        c_loss = self.critic_loss(t, noise_next)
        c_norm = self._step(self.critic_opt, c_loss, self.critic.parameters())

        losses = self.policy_losses(t, noise)
        old = _flat_params(self.actor)
        self.dual_opt.zero_grad()
        losses["dual_loss"].backward(inputs=[self.duals])
        self.dual_opt.step()
        p_norm = self._step(self.actor_opt, losses["policy_loss"], self.actor.parameters())
        kept = self._trust_region(old, t["obs"])

        self.steps += 1
        if self.steps % cfg.target_period == 0:
            self.sync_targets()
        eta, alpha_mean, alpha_cov = (float(x) for x in self.dual_values().detach())
        metrics = {
            "critic_loss": c_loss.item(),
            "policy_loss": losses["policy_loss"].item(),
            "dual_loss": losses["dual_loss"].item(),
            "kl_mean": losses["kl_mean"].item(),
            "kl_cov": losses["kl_cov"].item(),
            "q_mean": losses["q_mean"].item(),
            "eta": eta,
            "alpha_mean": alpha_mean,
            "alpha_cov": alpha_cov,
            "critic_grad_norm": c_norm,
            "policy_grad_norm": p_norm,
            "step_fraction": kept,
        }
        self._check(metrics, batch)
        return metrics


class AwrAgent(_Agent):
    """Advantage-weighted regression on buffer actions with a state-value critic."""

    kind = "awr"

    def __init__(self, cfg: AwrConfig | None = None, bounds=None, obs_dim=5, act_dim=3, seed=0, dtype=torch.float32):
        super().__init__(cfg or AwrConfig(), bounds, obs_dim, act_dim, seed, dtype)
        cfg = self.cfg
        self.actor = self._init_module(Actor(self.spec))
        self.critic = self._init_module(ValueCritic(self.spec))
        self.target_critic = copy.deepcopy(self.critic)
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=cfg.actor_lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=cfg.critic_lr)

    def modules(self) -> dict:
        return {"actor": self.actor, "critic": self.critic, "target_critic": self.target_critic}

    def optimizers(self) -> dict:
        return {"actor": self.actor_opt, "critic": self.critic_opt}

    def targets(self, t: dict) -> torch.Tensor:
        with torch.no_grad():
            v_next = self.target_critic(t["next_obs"])
            return self.cfg.reward_scale * t["reward"] + self.cfg.gamma * (1.0 - t["terminal"]) * v_next

    def critic_loss(self, t: dict) -> torch.Tensor:
        return 0.5 * ((self.critic(t["obs"]) - self.targets(t)) ** 2).mean()

    def policy_loss(self, t: dict) -> torch.Tensor:
        cfg = self.cfg
        with torch.no_grad():
            adv = self.targets(t) - self.critic(t["obs"])
            w = torch.clamp(torch.exp(adv / cfg.beta), max=cfg.max_weight)
        u = torch.atanh(torch.clamp(t["action"], -1 + 1e-6, 1 - 1e-6))
        mean, log_var = self.actor(t["obs"])
        return -(w * gaussian_log_prob(u, mean, torch.exp(log_var))).mean()

    def update(self, batch: dict) -> dict:
        t = self.tensors(batch)
        c_loss = self.critic_loss(t)
        c_norm = self._step(self.critic_opt, c_loss, self.critic.parameters())
        p_loss = self.policy_loss(t)
        p_norm = self._step(self.actor_opt, p_loss, self.actor.parameters())
        self.steps += 1
        if self.steps % self.cfg.target_period == 0:
            self.sync_targets()
        metrics = {
            "critic_loss": c_loss.item(),
            "policy_loss": p_loss.item(),
            "critic_grad_norm": c_norm,
            "policy_grad_norm": p_norm,
        }
        self._check(metrics, batch)
        return metrics


AGENTS = {"mpo": (MpoAgent, MpoConfig), "awr": (AwrAgent, AwrConfig)}


def make_agent(kind: str = "mpo", config: dict | None = None, bounds=None, seed: int = 0, dtype=torch.float32):
    if kind not in AGENTS:
        raise ConfigurationError(f"unknown agent {kind!r}; choose from {sorted(AGENTS)}")
    cls, cfg_cls = AGENTS[kind]
    config = dict(config or {})
    if "hidden" in config:
        config["hidden"] = tuple(config["hidden"])
    return cls(cfg_cls(**config), bounds=bounds, seed=seed, dtype=dtype)


def train_step(agent, batch: dict) -> dict:
    """One critic and one policy update on a buffer batch; returns scalar metrics."""
    if len(batch["reward"]) == 0:
        raise ValueError("empty batch")
    return agent.update(batch)
