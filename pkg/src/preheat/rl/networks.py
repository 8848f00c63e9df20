"""Actor and critic networks and the squashed diagonal Gaussian policy.

The actor maps a normalized observation to the mean and log-variance of a
Gaussian over pre-squash actions ``u``; physical actions are
``a = low + (high - low) (tanh(u) + 1) / 2``. Critics see actions in the
normalized form ``tanh(u)`` in [-1, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from preheat.errors import ConfigurationError, ParameterCorruptionError
from preheat.supervisor import ActionProposal

LOG_VAR_MIN, LOG_VAR_MAX = -10.0, 2.0
_ACTIVATIONS = {"tanh": nn.Tanh, "relu": nn.ReLU, "elu": nn.ELU}


@dataclass(frozen=True)
class MlpSpec:
    obs_dim: int = 5
    act_dim: int = 3
    hidden: tuple[int, ...] = (64, 64, 64)
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.obs_dim < 1 or self.act_dim < 1 or any(h < 1 for h in self.hidden):
            raise ConfigurationError("layer widths must be >= 1")


@dataclass(frozen=True)
class ActionBounds:
    low: tuple[float, ...] = (0.0, 0.0, 0.0)
    high: tuple[float, ...] = (10.0, 5.0, 5.0)  # v_PTC [V], i_c [A], i_d [A]

    def __post_init__(self):
        if len(self.low) != len(self.high) or not all(h > l for l, h in zip(self.low, self.high)):
            raise ConfigurationError("action bounds need high > low in every dimension")

    @property
    def half_width(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.high) - np.asarray(self.low))

    def to_physical(self, a_norm: np.ndarray) -> np.ndarray:
        """Map normalized actions in [-1, 1] to physical units."""
        return np.asarray(self.low) + self.half_width * (np.asarray(a_norm) + 1.0)

    def to_normalized(self, a: np.ndarray) -> np.ndarray:
        return np.clip((np.asarray(a, dtype=float) - np.asarray(self.low)) / self.half_width - 1.0, -1.0, 1.0)


def mlp(in_dim: int, hidden: tuple[int, ...], out_dim: int, activation: str) -> nn.Sequential:
    layers, width = [], in_dim
    for h in hidden:
        layers += [nn.Linear(width, h), _ACTIVATIONS[activation]()]
        width = h
    layers.append(nn.Linear(width, out_dim))
    return nn.Sequential(*layers)


class Actor(nn.Module):
    """Outputs per-dimension mean and clamped log-variance of the pre-squash Gaussian."""

    def __init__(self, spec: MlpSpec):
        super().__init__()
        self.spec = spec
        self.body = mlp(spec.obs_dim, spec.hidden, 2 * spec.act_dim, spec.activation)

    def forward(self, obs: torch.Tensor):
        out = self.body(obs)
        mean, log_var = out.chunk(2, dim=-1)
        return mean, log_var.clamp(LOG_VAR_MIN, LOG_VAR_MAX)


class QCritic(nn.Module):
    def __init__(self, spec: MlpSpec):
        super().__init__()
        self.body = mlp(spec.obs_dim + spec.act_dim, spec.hidden, 1, spec.activation)

    def forward(self, obs: torch.Tensor, a_norm: torch.Tensor) -> torch.Tensor:
        return self.body(torch.cat([obs, a_norm], dim=-1)).squeeze(-1)


class ValueCritic(nn.Module):
    def __init__(self, spec: MlpSpec):
        super().__init__()
        self.body = mlp(spec.obs_dim, spec.hidden, 1, spec.activation)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.body(obs).squeeze(-1)


def gaussian_log_prob(u: torch.Tensor, mean: torch.Tensor, var: torch.Tensor) -> torch.Tensor:
    """Diagonal Gaussian log-density summed over the last axis."""
    return -0.5 * (((u - mean) ** 2) / var + torch.log(2.0 * math.pi * var)).sum(-1)


def tanh_log_det(u: torch.Tensor) -> torch.Tensor:
    """log |d tanh(u) / du| summed over the last axis, stable for large |u|."""
    return (2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))).sum(-1)


def squashed_log_prob(u, mean, var, bounds: ActionBounds) -> torch.Tensor:
    """Log-density of the physical action ``a(u)`` under the squashed policy."""
    scale = torch.as_tensor(np.log(bounds.half_width), dtype=u.dtype).sum()
    return gaussian_log_prob(u, mean, var) - tanh_log_det(u) - scale


def _check_finite(*tensors):
    for t in tensors:
        if not torch.all(torch.isfinite(t)):
            raise ParameterCorruptionError("policy produced non-finite outputs")


class GaussianPolicy:
    """Actor plus the squashing map; numpy-facing helpers for rollouts."""

    def __init__(self, actor: Actor, bounds: ActionBounds | None = None):
        self.actor = actor
        self.bounds = bounds or ActionBounds()

    def forward_policy(self, obs_norm: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and variance of the pre-squash Gaussian for one normalized observation."""
        dtype = next(self.actor.parameters()).dtype
        with torch.no_grad():
            mean, log_var = self.actor(torch.as_tensor(np.asarray(obs_norm), dtype=dtype))
        var = torch.exp(log_var)
        _check_finite(mean, var)
        return mean.double().numpy(), var.double().numpy()

    def log_prob(self, obs_norm: np.ndarray, u: np.ndarray) -> float:
        mean, var = self.forward_policy(obs_norm)
        return float(
            squashed_log_prob(torch.as_tensor(u), torch.as_tensor(mean), torch.as_tensor(var), self.bounds)
        )

    def proposal(self, u: np.ndarray) -> ActionProposal:
        a = self.bounds.to_physical(np.tanh(u))
        return ActionProposal(*(float(x) for x in a))


def sample_action(policy: GaussianPolicy, obs_norm: np.ndarray, rng: np.random.Generator, deterministic=False):
    """Draw ``u ~ N(mean, var)`` (or take the mean) and squash it.

    Returns ``(proposal, log_prob, u)``; ``log_prob`` is the density of the
    physical proposal including the squash correction.
    """
    mean, var = policy.forward_policy(obs_norm)
    u = mean if deterministic else mean + np.sqrt(var) * rng.standard_normal(mean.shape)
    log_prob = float(
        squashed_log_prob(torch.as_tensor(u), torch.as_tensor(mean), torch.as_tensor(var), policy.bounds)
    )
    return policy.proposal(u), log_prob, u
