"""Pulse waveform synthesis and the safety supervisor for heating commands.

Amplitudes are cell currents in amperes, both nonnegative. In the applied
current profile a charge segment carries ``-i_c`` and a discharge segment
``+i_d`` (positive current discharges the cell).

The supervisor predicts constraint violations by simulating copies of the
electrochemical state at a frozen temperature:

* the largest safe charge amplitude is bisected over one charge half-period
  against the upper cutoff and the plating margin ``phi_s - phi_e >= 0``;
* the largest safe discharge amplitude is bisected the same way against the
  lower cutoff;
* the final command is replayed over the whole hold and both amplitudes are
  scaled down together until the replay stays inside the cutoffs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from preheat.electrochem.base import CellModel, ElectrochemState
from preheat.errors import ConfigurationError, DomainError, ParameterError


@dataclass(frozen=True)
class PulseConfig:
    frequency: float = 1.0  # [Hz]
    duty: float = 0.5  # fraction of each period spent charging
    hold: float = 5.0  # [s] an action is applied for this long
    charge_first: bool = True
    margin: float = 0.05  # delta: i_d >= (1 + delta) i_c
    bisection_rtol: float = 0.01
    i_charge_max: float = 5.0  # [A] upper end of the charge search / action range
    i_discharge_max: float = 5.0  # [A]
    v_min: float | None = None  # cutoffs; None takes the parameter set's values
    v_max: float | None = None
    shrink: float = 0.8  # amplitude scale factor per failed hold replay
    max_shrinks: int = 30

    def __post_init__(self):
        if not self.frequency > 0:
            raise ParameterError("pulse frequency must be > 0")
        if not 0 < self.duty < 1:
            raise ParameterError("duty cycle must lie in (0, 1)")
        cycles = self.hold * self.frequency
        if not (self.hold > 0 and abs(cycles - round(cycles)) < 1e-9 and round(cycles) >= 1):
            raise ParameterError("hold must be a whole number of pulse periods")
        if not (self.margin >= 0 and 0 < self.bisection_rtol < 1):
            raise ParameterError("margin must be >= 0 and bisection_rtol in (0, 1)")
        if not (self.i_charge_max > 0 and self.i_discharge_max > 0):
            raise ParameterError("current bounds must be > 0")
        if not 0 < self.shrink < 1:
            raise ParameterError("shrink must lie in (0, 1)")

    @property
    def period(self) -> float:
        return 1.0 / self.frequency

    @property
    def n_cycles(self) -> int:
        return int(round(self.hold * self.frequency))

    @property
    def charge_time(self) -> float:
        return self.duty * self.period

    @property
    def discharge_time(self) -> float:
        return (1.0 - self.duty) * self.period

    def cutoffs(self, model: CellModel) -> tuple[float, float]:
        lo = model.params.v_min if self.v_min is None else self.v_min
        hi = model.params.v_max if self.v_max is None else self.v_max
        return lo, hi

    def replace(self, **changes) -> "PulseConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class ActionProposal:
    v_ptc: float  # [V]
    i_c: float  # [A]
    i_d: float  # [A]

    def as_array(self) -> np.ndarray:
        return np.array([self.v_ptc, self.i_c, self.i_d], dtype=float)


@dataclass(frozen=True)
class SafeAction:
    v_ptc: float
    i_c: float
    i_d: float
    v_clamped: bool = False
    charge_limited: bool = False
    discharge_raised: bool = False
    discharge_limited: bool = False
    hold_scaled: bool = False
    i_c_limit: float = float("nan")  # [A] safe charge amplitude found for the state
    i_d_limit: float = float("nan")

    def as_proposal(self) -> ActionProposal:
        return ActionProposal(self.v_ptc, self.i_c, self.i_d)

    def as_array(self) -> np.ndarray:
        return np.array([self.v_ptc, self.i_c, self.i_d], dtype=float)


@dataclass(frozen=True)
class CurrentProfile:
    segments: tuple[tuple[float, float], ...]  # (duration [s], cell current [A]); + is discharge

    @property
    def duration(self) -> float:
        return float(sum(d for d, _ in self.segments))

    def mean_current(self) -> float:
        return float(sum(d * i for d, i in self.segments) / self.duration)

    def substep_currents(self, dt: float) -> np.ndarray:
        """Cell current applied in each substep of length ``dt``."""
        out = []
        for duration, current in self.segments:
            n = round(duration / dt)
            if n < 1 or abs(n * dt - duration) > 1e-9 * max(duration, 1.0):
                raise ConfigurationError(f"segment of {duration} s is not a multiple of dt = {dt} s")
            out.extend([current] * n)
        return np.asarray(out, dtype=float)


def synthesize_pulse_waveform(cfg: PulseConfig, i_c: float, i_d: float, dt_ec: float = 0.05) -> CurrentProfile:
    """Square bidirectional pulse train over one hold."""
    if not (i_c >= 0 and i_d >= 0):
        raise DomainError("pulse amplitudes must be >= 0")
    for duration in (cfg.charge_time, cfg.discharge_time):
        n = round(duration / dt_ec)
        if n < 1 or abs(n * dt_ec - duration) > 1e-9 * duration:
            raise ConfigurationError(f"pulse half-period {duration} s is not a multiple of dt_ec = {dt_ec} s")
    charge = (cfg.charge_time, -float(i_c))
    discharge = (cfg.discharge_time, float(i_d))
    cycle = (charge, discharge) if cfg.charge_first else (discharge, charge)
    return CurrentProfile(cycle * cfg.n_cycles)


# ----------------------------------------------------------------------------
# predictive checks


def simulate_currents(
    model: CellModel,
    state: ElectrochemState,
    currents: np.ndarray,
    T_avg: float,
    v_lo: float = -np.inf,
    v_hi: float = np.inf,
    plating: bool = False,
):
    """Replay cell currents [A] per substep at fixed temperature.

    Returns ``(v_max, v_min, plating_margin_min, failed)``; the replay stops at
    the first violation of the given limits.
    """
    density = np.asarray(currents, dtype=float) / model.params.total_area
    return model.probe(state, density, T_avg, v_lo, v_hi, plating)


def _bisect(feasible, upper: float, rtol: float) -> float:
    """Largest x in [0, upper] with feasible(x), assuming feasibility is monotone."""
    if feasible(upper):
        return upper
    lo, hi = 0.0, upper
    floor = 1e-4 * upper
    while hi - lo > rtol * lo and hi > floor:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def max_safe_charge_current(
    model: CellModel, state: ElectrochemState, T_avg: float, cfg: PulseConfig, upper: float | None = None
) -> float:
    """Largest charge amplitude [A] keeping V <= V_max and phi_s - phi_e >= 0 over one charge half-period."""
    _, v_hi = cfg.cutoffs(model)
    n = round(cfg.charge_time / model.mesh.dt_ec)
    upper = cfg.i_charge_max if upper is None else upper

    def feasible(i):
        vmax, _, margin, failed = simulate_currents(model, state, np.full(n, -i), T_avg, v_hi=v_hi, plating=True)
        return not failed and vmax <= v_hi and margin >= 0.0

    vmax, _, _, failed = simulate_currents(model, state, np.zeros(n), T_avg, v_hi=v_hi)
    if failed or vmax > v_hi:
        return 0.0
    return _bisect(feasible, upper, cfg.bisection_rtol)


def max_safe_discharge_current(
    model: CellModel, state: ElectrochemState, T_avg: float, cfg: PulseConfig, upper: float | None = None
) -> float:
    """Largest discharge amplitude [A] keeping V >= V_min over one discharge half-period."""
    v_lo, _ = cfg.cutoffs(model)
    n = round(cfg.discharge_time / model.mesh.dt_ec)
    upper = cfg.i_discharge_max if upper is None else upper

    def feasible(i):
        _, vmin, _, failed = simulate_currents(model, state, np.full(n, i), T_avg, v_lo=v_lo)
        return not failed and vmin >= v_lo

    _, vmin, _, failed = simulate_currents(model, state, np.zeros(n), T_avg, v_lo=v_lo)
    if failed or vmin < v_lo:
        return 0.0
    return _bisect(feasible, upper, cfg.bisection_rtol)


def hold_is_feasible(
    model: CellModel, state: ElectrochemState, T_avg: float, cfg: PulseConfig, i_c: float, i_d: float
) -> bool:
    """Replay the full hold at frozen temperature and check both cutoffs."""
    v_lo, v_hi = cfg.cutoffs(model)
    currents = synthesize_pulse_waveform(cfg, i_c, i_d, model.mesh.dt_ec).substep_currents(model.mesh.dt_ec)
    vmax, vmin, _, failed = simulate_currents(model, state, currents, T_avg, v_lo, v_hi)
    return not failed and v_lo <= vmin and vmax <= v_hi


def _dominated_charge(i_c: float, i_d: float, margin: float) -> float:
    """Largest i <= i_c with i (1 + margin) <= i_d in floating point."""
    i = min(i_c, i_d / (1.0 + margin))
    while i > 0 and i * (1.0 + margin) > i_d:
        i = np.nextafter(i, 0.0)
    return float(i)


def supervise(
    proposal: ActionProposal,
    model: CellModel,
    state: ElectrochemState,
    T_avg: float,
    cfg: PulseConfig,
    v_max: float,
) -> SafeAction:
    """Map a proposal to a feasible command; ``v_max`` is the film drive limit [V]."""
    raw = np.array([proposal.v_ptc, proposal.i_c, proposal.i_d], dtype=float)
    if not np.all(np.isfinite(raw)):
        raise DomainError(f"non-finite action proposal {proposal}")
    v = float(min(max(raw[0], 0.0), v_max))
    v_clamped = v != raw[0]
    i_c = float(min(max(raw[1], 0.0), cfg.i_charge_max))
    i_d = float(min(max(raw[2], 0.0), cfg.i_discharge_max))

    # charge: plating/upper cutoff limit, and room for a dominant discharge
    c_upper = min(cfg.i_charge_max, cfg.i_discharge_max / (1.0 + cfg.margin))
    i_c_limit = max_safe_charge_current(model, state, T_avg, cfg, upper=c_upper) if i_c > 0 else float("nan")
    charge_limited = i_c > 0 and i_c > i_c_limit
    if charge_limited:
        i_c = i_c_limit

    # discharge must dominate charge
    discharge_raised = i_d < i_c * (1.0 + cfg.margin)
    if discharge_raised:
        i_d = min(i_c * (1.0 + cfg.margin), cfg.i_discharge_max)
    i_c = _dominated_charge(i_c, i_d, cfg.margin)

    # discharge: lower cutoff limit
    i_d_limit = max_safe_discharge_current(model, state, T_avg, cfg) if i_d > 0 else float("nan")
    discharge_limited = i_d > 0 and i_d > i_d_limit
    if discharge_limited:
        i_d = i_d_limit
        i_c = _dominated_charge(i_c, i_d, cfg.margin)

    # the whole hold must stay inside the cutoffs
    hold_scaled = False
    if i_c > 0 or i_d > 0:
        for _ in range(cfg.max_shrinks):
            if hold_is_feasible(model, state, T_avg, cfg, i_c, i_d):
                break
            hold_scaled = True
            i_d *= cfg.shrink
            i_c = _dominated_charge(i_c * cfg.shrink, i_d, cfg.margin)
        else:
            i_c = i_d = 0.0
    return SafeAction(
        v_ptc=v,
        i_c=float(i_c),
        i_d=float(i_d),
        v_clamped=v_clamped,
        charge_limited=bool(charge_limited),
        discharge_raised=bool(discharge_raised),
        discharge_limited=bool(discharge_limited),
        hold_scaled=hold_scaled,
        i_c_limit=float(i_c_limit),
        i_d_limit=float(i_d_limit),
    )
