"""Preheating MDP coupling the cell model, the thermal model and the supervisor.

One environment step applies a supervised command for one hold (5 s by default)
as ``hold / dt`` coupled substeps: electrochemical step at the current
x-averaged temperature, heat generation, thermal step with the film power at
the outer-surface temperature.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from preheat.electrochem.base import CellModel, ElectrochemState
from preheat.errors import ConfigurationError, ParameterError, SolverError
from preheat.supervisor import ActionProposal, PulseConfig, SafeAction, supervise, synthesize_pulse_waveform
from preheat.thermal import (
    PtcParameters,
    ThermalParameters,
    ThermalState,
    ptc_power,
    step_thermal,
    temperature_stats,
)
from preheat.trace import TraceRecord

# affine observation scaling: (value - offset) / scale
OBS_OFFSET = np.array([0.5, 263.15, 263.15, 3.6, 263.15])
OBS_SCALE = np.array([0.5, 10.0, 10.0, 0.5, 10.0])


@dataclass(frozen=True)
class Observation:
    soc: float
    T_m: float  # [K]
    T_out: float  # [K]
    v_t: float  # [V]
    T_des: float  # [K]

    def as_array(self) -> np.ndarray:
        return np.array([self.soc, self.T_m, self.T_out, self.v_t, self.T_des], dtype=float)

    def normalized(self) -> np.ndarray:
        return normalize_observation(self.as_array())


def normalize_observation(raw: np.ndarray) -> np.ndarray:
    return (np.asarray(raw, dtype=float) - OBS_OFFSET) / OBS_SCALE


@dataclass(frozen=True)
class RewardConfig:
    w_rtr: float = 1.0
    w_range: float = 2.0
    w_delta_range: float = 1.0
    threshold: float = 0.5  # T_t [K]
    r_term: float = 200.0
    dt: float = 5.0  # [s], equal to the action hold

    def __post_init__(self):
        if min(self.w_rtr, self.w_range, self.w_delta_range, self.r_term) < 0:
            raise ParameterError("reward weights must be >= 0")
        if not (self.threshold > 0 and self.dt > 0):
            raise ParameterError("reward threshold and dt must be > 0")


@dataclass(frozen=True)
class EpisodeConfig:
    T_init_range: tuple[float, float] = (253.15, 273.15)  # [K], sampled uniformly, upper end open
    soc_range: tuple[float, float] = (0.2, 0.9)
    T_des: float = 273.15  # [K]
    max_duration: float = 1800.0  # [s]
    ambient: float | None = None  # [K]; None keeps the ambient at the initial temperature
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.T_init_range
        if not (0 < lo < hi):
            raise ParameterError("initial temperature range must be nonempty and positive")
        lo, hi = self.soc_range
        if not (0 <= lo <= hi <= 1):
            raise ParameterError("SOC range must lie in [0, 1]")
        if not (self.T_des > 0 and self.max_duration > 0):
            raise ParameterError("T_des and max_duration must be > 0")

    def replace(self, **changes) -> "EpisodeConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class Transition:
    obs: Observation
    proposal: ActionProposal
    action: SafeAction
    reward: float
    next_obs: Observation
    done: bool
    terminal: bool  # target reached or failure; False for a time-limit stop
    log_prob: float = float("nan")
    diagnostics: dict = field(default_factory=dict)


def compute_reward(prev_stats: dict, cur_stats: dict, done: bool, cfg: RewardConfig) -> float:
    """Heating-rate reward with a gradient penalty; terminal bonus or penalty at ``done``."""
    r_rtr = (cur_stats["T_avg"] - prev_stats["T_avg"]) / cfg.dt
    t_range = cur_stats["T_range"]
    if done:
        r_g = cfg.r_term if t_range < cfg.threshold else -cfg.r_term
    elif t_range > cfg.threshold:
        r_g = -cfg.w_range * t_range - cfg.w_delta_range * (t_range - prev_stats["T_range"])
    else:
        r_g = 0.0
    return float(cfg.w_rtr * r_rtr + r_g)


class PreheatEnv:
    def __init__(
        self,
        model: CellModel,
        thermal: ThermalParameters | None = None,
        ptc: PtcParameters | None = None,
        pulse: PulseConfig | None = None,
        reward: RewardConfig | None = None,
        episode: EpisodeConfig | None = None,
        trace_substeps: bool = False,
    ):
        self.model = model
        self.thermal = thermal or ThermalParameters()
        self.ptc = ptc or PtcParameters()
        self.pulse = pulse or PulseConfig()
        self.reward_cfg = reward or RewardConfig(dt=self.pulse.hold)
        self.episode = episode or EpisodeConfig()
        self.trace_substeps = trace_substeps
        dt = model.mesh.dt_ec
        if abs(self.thermal.dt - dt) > 1e-12:
            raise ConfigurationError("thermal dt must equal the electrochemical dt")
        model.mesh.check_half_period(self.pulse.charge_time)
        model.mesh.check_half_period(self.pulse.discharge_time)
        if abs(self.reward_cfg.dt - self.pulse.hold) > 1e-12:
            raise ConfigurationError("reward dt must equal the action hold")
        holds = self.episode.max_duration / self.pulse.hold
        if abs(holds - round(holds)) > 1e-9:
            raise ConfigurationError("max episode duration must be a multiple of the hold")
        self.ec: ElectrochemState | None = None
        self.th: ThermalState | None = None
        self.time = 0.0
        self.done = True
        self.trace: list[TraceRecord] = []
        self._params_th = self.thermal

    # ------------------------------------------------------------------
    def reset(self, seed: int | None = None, T0: float | None = None, soc: float | None = None) -> Observation:
        """Start an episode at rest; ``T0``/``soc`` override the sampled values."""
        cfg = self.episode
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        T_s = rng.uniform(*cfg.T_init_range)
        soc_s = rng.uniform(*cfg.soc_range)
        T0 = T_s if T0 is None else float(T0)
        soc = soc_s if soc is None else float(soc)
        ambient = T0 if cfg.ambient is None else cfg.ambient
        self._params_th = self.thermal.replace(ambient=ambient)
        self.ec = self.model.equilibrium_state(soc, T0)
        self.th = ThermalState.uniform(self._params_th, T0)
        self.time = 0.0
        self.done = False
        self.initial = {"T0": T0, "soc": soc, "ambient": ambient}
        obs = self.observe()
        self.trace = [self._row(0.0, 0.0, obs.v_t, 0.0, 0.0, 0.0)]
        return obs

    def observe(self) -> Observation:
        st = self.th
        return Observation(
            soc=self.model.soc(self.ec),
            T_m=st.T_m,
            T_out=st.T_out,
            v_t=self.model.terminal_voltage(self.ec),
            T_des=self.episode.T_des,
        )

    def stats(self) -> dict:
        return temperature_stats(self.th)

    def _row(self, current, v_ptc, v_t, Q_gen, Q_ptc, reward) -> TraceRecord:
        s = self.th
        return TraceRecord(
            t=self.time,
            applied_current=float(current),
            v_ptc=float(v_ptc),
            v_t=float(v_t),
            soc=self.model.soc(self.ec),
            T_m=s.T_m,
            T_out=s.T_out,
            T_avg=s.T_avg,
            T_range=s.T_range,
            Q_gen=float(Q_gen),
            Q_ptc=float(Q_ptc),
            hold_reward=float(reward),
        )

    # ------------------------------------------------------------------
    def step(self, proposal: ActionProposal, action: SafeAction | None = None):
        """Apply one hold. Returns ``(observation, reward, done, info)``.

        ``action`` skips supervision (used by scripted baselines that already
        hold a supervised command).
        """
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        model, dt = self.model, self.model.mesh.dt_ec
        prev = self.stats()
        T_avg = self.th.T_avg
        if action is None:
            action = supervise(proposal, model, self.ec, T_avg, self.pulse, self.ptc.v_max)
        currents = synthesize_pulse_waveform(self.pulse, action.i_c, action.i_d, dt).substep_currents(dt)
        V_cell = self._params_th.cell_volume
        e_ptc = e_pulse = e_battery = 0.0
        sum_q = sum_p = 0.0
        failed = False
        substep_rows = []
        t_start = self.time
        try:
            for k, current in enumerate(currents):
                density = model.params.current_density(current)
                self.ec = model.step(self.ec, density, T_avg)
                v_t = model.terminal_voltage(self.ec)
                q_gen = model.heat_generation(self.ec, T_avg)
                q_ptc = ptc_power(self.ptc, action.v_ptc, self.th.T_out)
                self.th = step_thermal(self.th, q_gen, q_ptc, self._params_th, dt)
                self.time = t_start + (k + 1) * dt
                T_avg = self.th.T_avg
                e_ptc += q_ptc * dt
                if current != 0.0:
                    e_pulse += q_gen * V_cell * dt
                e_battery += v_t * current * dt
                sum_q += q_gen
                sum_p += q_ptc
                if self.trace_substeps:
                    substep_rows.append(self._row(current, action.v_ptc, v_t, q_gen, q_ptc, 0.0))
        except SolverError:
            failed = True

        n = max(len(substep_rows) if self.trace_substeps else len(currents), 1)
        cur = self.stats()
        reached = cur["T_avg"] >= self.episode.T_des
        timed_out = self.time >= self.episode.max_duration - 1e-9
        terminal = reached or failed
        self.done = terminal or timed_out
        if failed:
            rc = self.reward_cfg
            reward = rc.w_rtr * (cur["T_avg"] - prev["T_avg"]) / rc.dt - rc.r_term
        else:
            # a time-limit stop is not a terminal state: no bonus/penalty switch
            reward = compute_reward(prev, cur, reached, self.reward_cfg)
        obs = self.observe()
        if self.trace_substeps:
            self.trace.extend(dataclasses.replace(r, hold_reward=reward) for r in substep_rows)
        else:
            self.trace.append(
                self._row(float(np.mean(currents)), action.v_ptc, obs.v_t, sum_q / n, sum_p / n, reward)
            )
        info = {
            "action": action,
            "failed": failed,
            "reached": reached,
            "timed_out": timed_out and not terminal,
            "terminal": terminal,
            "time": self.time,
            "T_avg": cur["T_avg"],
            "T_range": cur["T_range"],
            "T_m": cur["T_m"],
            "T_out": cur["T_out"],
            "E_ptc": e_ptc,
            "E_pulse": e_pulse,
            "E_battery": e_battery,
            "Q_gen_mean": sum_q / n,
            "Q_ptc_mean": sum_p / n,
        }
        return obs, reward, self.done, info
