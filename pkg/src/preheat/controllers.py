"""Controllers that propose one action per hold from the environment state."""

from __future__ import annotations

import numpy as np

from preheat.rl.networks import ActionBounds, GaussianPolicy, sample_action
from preheat.supervisor import ActionProposal, max_safe_charge_current


class Controller:
    name = "controller"

    def act(self, env, obs, rng: np.random.Generator) -> ActionProposal:
        raise NotImplementedError


class ConstantController(Controller):
    name = "constant"

    def __init__(self, v_ptc: float = 0.0, i_c: float = 0.0, i_d: float = 0.0):
        self.proposal = ActionProposal(float(v_ptc), float(i_c), float(i_d))

    def act(self, env, obs, rng):
        return self.proposal


class PtcOnlyController(ConstantController):
    """Full film voltage, no pulsing."""

    name = "ptc-only"

    def __init__(self, v_max: float = 10.0):
        super().__init__(v_max, 0.0, 0.0)


class PulseOnlyController(Controller):
    """Largest safe charge amplitude each hold, discharge at ``(1 + delta)`` times it."""

    name = "pulse-only"

    def act(self, env, obs, rng):
        cfg = env.pulse
        upper = min(cfg.i_charge_max, cfg.i_discharge_max / (1.0 + cfg.margin))
        i_c = max_safe_charge_current(env.model, env.ec, env.th.T_avg, cfg, upper=upper)
        return ActionProposal(0.0, i_c, i_c * (1.0 + cfg.margin))


class RandomController(Controller):
    """Uniform proposals over the action box."""

    name = "random"

    def __init__(self, bounds: ActionBounds | None = None):
        self.bounds = bounds or ActionBounds()

    def act(self, env, obs, rng):
        a = rng.uniform(self.bounds.low, self.bounds.high)
        return ActionProposal(*(float(x) for x in a))


class PolicyController(Controller):
    name = "policy"

    def __init__(self, policy: GaussianPolicy, deterministic: bool = True):
        self.policy = policy
        self.deterministic = deterministic

    def act(self, env, obs, rng):
        proposal, _, _ = sample_action(self.policy, obs.normalized(), rng, self.deterministic)
        return proposal
