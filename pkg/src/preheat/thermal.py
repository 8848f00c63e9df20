"""Through-thickness thermal model of the half cell and the PTC film heater.

The half cell ``[0, L]`` is discretised with a vertex-centred finite-volume mesh:
``n_x`` nodes at ``x_i = i L / (n_x - 1)`` each owning a control volume (half
width at both ends). ``x = 0`` is the symmetry plane, ``x = L`` carries the
aluminium plate and film, so the end nodes read out the core and outer
temperatures directly.

Each step is implicit Euler for the increment ``dT``:

    (rho c V / dt + K + H V) dT = -K T + V Q_gen + H V (T_inf - T) + q_film

with ``K`` the conduction matrix, ``H = 2 (l_y + l_z) / (l_y l_z) h`` the edge
convection per unit volume and ``q_film`` the film flux entering the last node.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from preheat.errors import CommandRangeError, DegenerateParametersError, ParameterError, SolverError
from preheat.linalg import solve_tridiagonal


@dataclass(frozen=True)
class ThermalParameters:
    conductivity: float = 2.0  # lambda [W/(m K)]
    boundary_conductivity: float | None = None  # lambda_cn; None means equal to lambda
    convection: float = 10.0  # h [W/(m^2 K)]
    heat_capacity: float = 1.8e6  # rho c [J/(m^3 K)]
    half_thickness: float = 5.3e-3  # [m]
    l_y: float = 0.137  # [m]
    l_z: float = 0.207  # [m]
    plate_thickness: float = 1.0e-3  # t_Al [m]; plate is ideal, not a separate node
    ambient: float = 253.15  # T_inf [K]
    n_x: int = 20
    dt: float = 0.05  # [s]

    def __post_init__(self):
        checks = {
            "conductivity": self.conductivity,
            "boundary_conductivity": self.lambda_cn,
            "heat_capacity": self.heat_capacity,
            "half_thickness": self.half_thickness,
            "l_y": self.l_y,
            "l_z": self.l_z,
            "plate_thickness": self.plate_thickness,
            "ambient": self.ambient,
            "dt": self.dt,
        }
        for key, value in checks.items():
            if not (np.isfinite(value) and value > 0):
                raise ParameterError(f"thermal {key} must be > 0, got {value}")
        if not (np.isfinite(self.convection) and self.convection >= 0):
            raise ParameterError("thermal convection must be >= 0")
        if self.n_x < 5:
            raise ParameterError("thermal n_x must be >= 5")

    @property
    def lambda_cn(self) -> float:
        return self.conductivity if self.boundary_conductivity is None else self.boundary_conductivity

    @property
    def area(self) -> float:
        """A_yz [m^2]."""
        return self.l_y * self.l_z

    @property
    def edge_loss_coefficient(self) -> float:
        """Volumetric edge-convection coefficient 2 (l_y + l_z) h / (l_y l_z) [W/(m^3 K)]."""
        return 2.0 * (self.l_y + self.l_z) / (self.l_y * self.l_z) * self.convection

    @property
    def cell_volume(self) -> float:
        """Volume of the whole cell (both halves) [m^3]."""
        return 2.0 * self.half_thickness * self.area

    def node_widths(self) -> np.ndarray:
        dx = self.half_thickness / (self.n_x - 1)
        w = np.full(self.n_x, dx)
        w[0] = w[-1] = dx / 2.0
        return w

    def replace(self, **changes) -> "ThermalParameters":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class PtcParameters:
    r0: float = 0.367  # [Ohm] at t0
    t0: float = 298.15  # [K]
    t1: float = 393.0  # [K]
    alpha0: float = -0.0044  # [1/K]
    alpha1: float = 0.937  # [1/K]
    v_max: float = 10.0  # [V]
    r1: float | None = None  # [Ohm] at t1; None places the switch-over exactly at t1

    def __post_init__(self):
        if self.r1 is None:
            object.__setattr__(self, "r1", self.r0 * float(np.exp(self.alpha0 * (self.t1 - self.t0))))
        if not (self.r0 > 0 and self.r1 > 0):
            raise ParameterError("PTC resistances must be > 0")
        if not self.v_max > 0:
            raise ParameterError("PTC v_max must be > 0")
        tc = curie_temperature(self)
        if not np.isfinite(tc):
            raise DegenerateParametersError("PTC switch-over temperature is not finite")

    def replace(self, **changes) -> "PtcParameters":
        return dataclasses.replace(self, **changes)


def curie_temperature(ptc: PtcParameters) -> float:
    """Temperature at which both resistance branches agree [K]."""
    if ptc.alpha0 == ptc.alpha1:
        raise DegenerateParametersError("alpha0 == alpha1: resistance branches never cross")
    num = np.log(ptc.r1) - np.log(ptc.r0) + ptc.alpha0 * ptc.t0 - ptc.alpha1 * ptc.t1
    return float(num / (ptc.alpha0 - ptc.alpha1))


def ptc_resistance(ptc: PtcParameters, T_film: float) -> float:
    """Film resistance [Ohm]: exponential below the switch-over, steep exponential above."""
    if not T_film > 0:
        raise ParameterError("film temperature must be > 0 K")
    if T_film < curie_temperature(ptc):
        return float(ptc.r0 * np.exp(ptc.alpha0 * (T_film - ptc.t0)))
    with np.errstate(over="ignore"):
        return float(ptc.r1 * np.exp(ptc.alpha1 * (T_film - ptc.t1)))


def ptc_power(ptc: PtcParameters, v: float, T_film: float) -> float:
    """Ohmic power of both films of the cell, v^2 / R [W]."""
    if not (0.0 <= v <= ptc.v_max):
        raise CommandRangeError(f"PTC voltage {v} outside [0, {ptc.v_max}]")
    return float(v * v / ptc_resistance(ptc, T_film))


@dataclass(frozen=True)
class ThermalState:
    T: np.ndarray  # node temperatures, x = 0 (core) to x = L (outer) [K]
    time: float = 0.0
    T_avg: float = dataclasses.field(init=False)
    T_m: float = dataclasses.field(init=False)
    T_out: float = dataclasses.field(init=False)
    T_range: float = dataclasses.field(init=False)

    def __post_init__(self):
        T = np.asarray(self.T, dtype=float)
        if T.ndim != 1 or T.size < 2:
            raise ParameterError("temperature field must be a 1D array of nodes")
        if not (np.all(np.isfinite(T)) and np.all(T > 0)):
            raise SolverError("temperature field is not finite and positive")
        object.__setattr__(self, "T", T)
        w = np.full(T.size, 1.0)
        w[0] = w[-1] = 0.5
        object.__setattr__(self, "T_avg", float(w @ T / w.sum()))
        object.__setattr__(self, "T_m", float(T[0]))
        object.__setattr__(self, "T_out", float(T[-1]))
        object.__setattr__(self, "T_range", float(T[-1] - T[0]))

    @classmethod
    def uniform(cls, params: ThermalParameters, T: float, time: float = 0.0) -> "ThermalState":
        return cls(np.full(params.n_x, float(T)), time)


def temperature_stats(state: ThermalState) -> dict:
    return {"T_avg": state.T_avg, "T_m": state.T_m, "T_out": state.T_out, "T_range": state.T_range}


def stored_energy(state: ThermalState, params: ThermalParameters) -> float:
    """Sensible heat of the whole cell relative to 0 K [J]."""
    return float(2.0 * params.area * params.heat_capacity * (params.node_widths() @ state.T))


def film_heat_flux(Q_ptc: float, params: ThermalParameters) -> float:
    """Heat flux entering the outer face of the half cell [W/m^2]."""
    return params.conductivity / params.lambda_cn * (Q_ptc / 2.0) / params.area


def step_thermal(
    state: ThermalState, Q_gen: float, Q_ptc: float, params: ThermalParameters, dt: float | None = None
) -> ThermalState:
    """One implicit step with uniform volumetric source ``Q_gen`` [W/m^3] and film power ``Q_ptc`` [W]."""
    dt = params.dt if dt is None else float(dt)
    if not (np.isfinite(Q_gen) and np.isfinite(Q_ptc) and Q_ptc >= 0 and dt > 0):
        raise ParameterError("heat sources must be finite, film power >= 0 and dt > 0")
    T = state.T
    w = params.node_widths()
    dx = params.half_thickness / (params.n_x - 1)
    G = params.conductivity / dx
    H = params.edge_loss_coefficient
    diag = params.heat_capacity * w / dt + H * w
    diag[:-1] += G
    diag[1:] += G
    off = np.full(T.size - 1, -G)
    flux = G * np.diff(T)  # conduction from node i+1 into node i
    rhs = w * Q_gen + H * w * (params.ambient - T)
    rhs[:-1] += flux
    rhs[1:] -= flux
    rhs[-1] += film_heat_flux(Q_ptc, params)
    try:
        dT = solve_tridiagonal(off, diag, off.copy(), rhs)
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"thermal solve failed: {exc}") from None
    return ThermalState(T + dT, state.time + dt)
