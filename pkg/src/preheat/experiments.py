"""Scenario runners: film-only, pulse-only and learned combined heating, the film
voltage sweep, and their energy reports and output files."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from preheat.controllers import PolicyController, PtcOnlyController, PulseOnlyController
from preheat.electrochem import make_model
from preheat.energy import BASES, EnergyReport, energy_accounting
from preheat.env import EpisodeConfig, PreheatEnv, RewardConfig
from preheat.errors import ConfigurationError
from preheat.params import MeshSpec, load_parameters
from preheat.rl.networks import ActionBounds
from preheat.rl.training import TrainConfig, agent_from_checkpoint, run_episode, train
from preheat.supervisor import PulseConfig
from preheat.thermal import PtcParameters, ThermalParameters
from preheat.trace import trace_to_csv, write_atomic

SCENARIOS = ("ptc-only", "pulse-only", "combined-policy", "train", "sweep", "compare")

__all__ = [
    "EnergyReport",
    "RunConfig",
    "build_env",
    "compare",
    "energy_accounting",
    "load_run_config",
    "run_scenario",
    "run_vmax_sweep",
]


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "ptc-only"
    fidelity: str = "reduced"
    parameter_set: str | None = None  # YAML path; None uses the bundled set
    mesh: dict = field(default_factory=dict)  # MeshSpec overrides
    thermal: dict = field(default_factory=dict)  # ThermalParameters overrides
    ptc: dict = field(default_factory=dict)  # PtcParameters overrides
    pulse: dict = field(default_factory=dict)  # PulseConfig overrides
    reward: dict = field(default_factory=dict)  # RewardConfig overrides
    episode: dict = field(default_factory=dict)  # EpisodeConfig overrides
    initial_temperature: float = 253.15  # [K] fixed start for scenario runs
    initial_soc: float = 0.5
    v_max_list: tuple[float, ...] = (10.0, 8.0, 6.0, 4.0)
    seed: int = 0
    seeds: tuple[int, ...] = (0, 1, 2)
    training: dict = field(default_factory=dict)  # TrainConfig overrides (seed comes from `seed`)
    checkpoint: str | None = None
    eval_episodes: int = 5
    energy_basis: str = "cell"
    trace_substeps: bool = False
    out_dir: str = "runs"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}")
        if self.fidelity not in ("dfn", "reduced"):
            raise ConfigurationError("fidelity must be 'dfn' or 'reduced'")
        if self.energy_basis not in BASES:
            raise ConfigurationError(f"energy_basis must be one of {BASES}")
        if self.scenario == "sweep" and not self.v_max_list:
            raise ConfigurationError("sweep needs a nonempty v_max_list")
        if self.parameter_set is not None and not Path(self.parameter_set).is_file():
            raise ConfigurationError(f"parameter set {self.parameter_set} not found")
        if self.scenario == "combined-policy" and self.checkpoint is None:
            raise ConfigurationError("combined-policy needs a checkpoint")
        if self.checkpoint is not None and self.scenario == "combined-policy" and not Path(self.checkpoint).is_file():
            raise ConfigurationError(f"checkpoint {self.checkpoint} not found")
        if self.eval_episodes < 1:
            raise ConfigurationError("eval_episodes must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown run-config keys {sorted(unknown)}")
        d = dict(d)
        for key in ("v_max_list", "seeds"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def load_run_config(path=None, **overrides) -> RunConfig:
    """Read a YAML run config (``None`` gives the bundled defaults) and apply overrides."""
    if path is None:
        text = resources.files("preheat.data").joinpath("default_run.yaml").read_text(encoding="utf-8")
    else:
        if not Path(path).is_file():
            raise ConfigurationError(f"config {path} not found")
        text = Path(path).read_text(encoding="utf-8")
    d = yaml.safe_load(text) or {}
    d.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(d)


def build_env(cfg: RunConfig, v_max: float | None = None) -> PreheatEnv:
    params = load_parameters(cfg.parameter_set)
    mesh = MeshSpec(**cfg.mesh)
    model = make_model(params, cfg.fidelity, mesh)
    thermal = ThermalParameters(**{"dt": mesh.dt_ec, **cfg.thermal})
    ptc = PtcParameters(**cfg.ptc)
    if v_max is not None:
        ptc = ptc.replace(v_max=float(v_max))
    pulse = PulseConfig(**cfg.pulse)
    reward = RewardConfig(**{"dt": pulse.hold, **cfg.reward})
    ep = dict(cfg.episode)
    for key in ("T_init_range", "soc_range"):
        if key in ep:
            ep[key] = tuple(ep[key])
    episode = EpisodeConfig(**{"seed": cfg.seed, **ep})
    return PreheatEnv(model, thermal, ptc, pulse, reward, episode, trace_substeps=cfg.trace_substeps)


def action_bounds(env: PreheatEnv) -> ActionBounds:
    return ActionBounds(high=(env.ptc.v_max, env.pulse.i_charge_max, env.pulse.i_discharge_max))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    return obj


def write_json(path, obj) -> Path:
    return write_atomic(path, json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def plot_description(name: str, trace_file: str) -> dict:
    """Renderer-agnostic description of the standard trace figures."""
    return {
        "title": name,
        "data": trace_file,
        "panels": [
            {"y": ["v_ptc"], "label": "film voltage [V]"},
            {"y": ["applied_current"], "label": "cell current [A]"},
            {"y": ["T_m", "T_out", "T_avg"], "label": "temperature [K]"},
            {"y": ["T_range"], "label": "outer minus core [K]"},
            {"y": ["Q_ptc"], "label": "film power [W]"},
            {"y": ["soc"], "label": "SOC"},
        ],
        "x": "t",
    }


def write_scenario(out_dir, name: str, trace, report: EnergyReport, extra: dict | None = None) -> None:
    out = Path(out_dir)
    write_atomic(out / f"{name}_trace.csv", trace_to_csv(trace))
    write_json(out / f"{name}_report.json", {**report.as_dict(), **(extra or {})})
    write_json(out / f"{name}_plot.json", plot_description(name, f"{name}_trace.csv"))


def scenario_controller(kind: str, env: PreheatEnv, checkpoint=None):
    if kind == "ptc-only":
        return PtcOnlyController(env.ptc.v_max)
    if kind == "pulse-only":
        return PulseOnlyController()
    if kind == "combined-policy":
        if checkpoint is None or not Path(checkpoint).is_file():
            raise ConfigurationError(f"combined-policy needs an existing checkpoint, got {checkpoint}")
        agent = agent_from_checkpoint(checkpoint)
        return PolicyController(agent.policy, deterministic=True)
    raise ConfigurationError(f"{kind!r} is not a single-episode scenario")


def run_scenario(cfg: RunConfig, kind: str | None = None, env: PreheatEnv | None = None, controller=None):
    """One episode from the configured start; returns ``(trace, EnergyReport)``."""
    kind = kind or cfg.scenario
    env = env or build_env(cfg)
    controller = controller or scenario_controller(kind, env, cfg.checkpoint)
    rng = np.random.default_rng(cfg.seed)
    _, trace, _ = run_episode(
        env, controller, rng, seed=cfg.seed, T0=cfg.initial_temperature, soc=cfg.initial_soc
    )
    report = energy_accounting(trace, env.thermal.cell_volume, env.episode.T_des, cfg.energy_basis)
    return trace, report


def _train_for(cfg: RunConfig, env: PreheatEnv, out_dir, seed: int, log=None):
    tcfg = TrainConfig(**{**cfg.training, "seed": seed})
    result = train(env, tcfg, out_dir=out_dir, bounds=action_bounds(env), log=log)
    return result, Path(out_dir) / "checkpoint.pt"


def compare(cfg: RunConfig, out_dir=None, log=None) -> dict:
    """Film-only, pulse-only and combined runs from the same start.

    Without ``cfg.checkpoint`` a policy is trained first (``cfg.training``).
    Returns ``{scenario: (trace, {basis: EnergyReport})}``.
    """
    out = Path(out_dir or cfg.out_dir)
    env = build_env(cfg)
    checkpoint = cfg.checkpoint
    if checkpoint is None:
        _, checkpoint = _train_for(cfg, env, out / "policy", cfg.seed, log)
    results = {}
    rows = []
    for kind in ("ptc-only", "combined-policy", "pulse-only"):
        controller = scenario_controller(kind, env, checkpoint)
        trace, _ = run_scenario(cfg, kind, env, controller)
        reports = {b: energy_accounting(trace, env.thermal.cell_volume, env.episode.T_des, b) for b in BASES}
        results[kind] = (trace, reports)
        write_scenario(out, kind, trace, reports[cfg.energy_basis], {"other_bases": {b: r.as_dict() for b, r in reports.items()}})
        for b, r in reports.items():
            rows.append([kind, b, r.ptc_energy, r.pulse_energy, r.total_energy, r.time_to_target, r.final_T_range, r.mean_rtr, r.battery_energy])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scenario", "basis", "ptc_energy", "pulse_energy", "total_energy", "time_to_target", "final_T_range", "mean_rtr", "battery_energy"])
    writer.writerows([[r[0], r[1], *(repr(float(x)) for x in r[2:])] for r in rows])
    write_atomic(out / "compare_table.csv", buf.getvalue())
    return results


@dataclass(frozen=True)
class SweepPoint:
    v_max: float
    mean_rtr: float  # [K/s]
    time_to_target: float  # [s]
    pulse_share: float  # pulse heat / total energy
    mean_v_ptc: float  # [V] over holds
    saturated_fraction: float  # holds with v_PTC >= 0.98 v_max
    final_T_range: float  # [K]
    ptc_energy: float
    pulse_energy: float


def summarize_sweep_point(v_max: float, trace, report: EnergyReport) -> SweepPoint:
    v = np.array([r.v_ptc for r in trace[1:]])
    return SweepPoint(
        v_max=float(v_max),
        mean_rtr=report.mean_rtr,
        time_to_target=report.time_to_target,
        pulse_share=report.pulse_energy / report.total_energy if report.total_energy > 0 else 0.0,
        mean_v_ptc=float(v.mean()) if v.size else 0.0,
        saturated_fraction=float(np.mean(v >= 0.98 * v_max)) if v.size else 0.0,
        final_T_range=report.final_T_range,
        ptc_energy=report.ptc_energy,
        pulse_energy=report.pulse_energy,
    )


def run_vmax_sweep(cfg: RunConfig, out_dir=None, checkpoints: dict | None = None, log=None) -> list[SweepPoint]:
    """Train (or load) a combined policy per film voltage limit and evaluate it from the configured start."""
    out = Path(out_dir or cfg.out_dir)
    points = []
    for v_max in cfg.v_max_list:
        env = build_env(cfg, v_max=v_max)
        level = out / f"vmax_{float(v_max):g}"
        ckpt = (checkpoints or {}).get(v_max)
        if ckpt is None:
            _, ckpt = _train_for(cfg, env, level, cfg.seed, log)
        controller = scenario_controller("combined-policy", env, ckpt)
        trace, report = run_scenario(cfg, "combined-policy", env, controller)
        write_scenario(level, "combined", trace, report)
        points.append(summarize_sweep_point(v_max, trace, report))
    buf = io.StringIO()
    names = [f.name for f in dataclasses.fields(SweepPoint)]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    writer.writerows([[repr(float(getattr(p, n))) for n in names] for p in points])
    write_atomic(out / "sweep.csv", buf.getvalue())
    return points
