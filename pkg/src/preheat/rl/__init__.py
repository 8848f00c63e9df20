"""Gaussian actor-critic learners for the preheating task."""

from preheat.rl.agents import AwrAgent, AwrConfig, MpoAgent, MpoConfig, make_agent, train_step
from preheat.rl.buffer import ReplayBuffer
from preheat.rl.networks import ActionBounds, Actor, GaussianPolicy, MlpSpec, QCritic, ValueCritic, sample_action

__all__ = [
    "ActionBounds",
    "Actor",
    "AwrAgent",
    "AwrConfig",
    "GaussianPolicy",
    "MlpSpec",
    "MpoAgent",
    "MpoConfig",
    "QCritic",
    "ReplayBuffer",
    "ValueCritic",
    "make_agent",
    "sample_action",
    "train_step",
]
