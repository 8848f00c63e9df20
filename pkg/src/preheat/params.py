"""Electrochemical parameter sets and the mesh specification.

Parameter sets are plain YAML key-value files (one per chemistry). Scalars are
SI; fitted curves are referenced by name from :mod:`preheat.materials`.
Loaded sets are frozen dataclasses and safe to share between threads.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from preheat import materials
from preheat.errors import ParameterError

FARADAY = 96485.33212  # C/mol
GAS_CONSTANT = 8.314462618  # J/(mol K)
REFERENCE_TEMPERATURE = 298.15  # K


def arrhenius(activation_energy: float, T: float, T_ref: float = REFERENCE_TEMPERATURE) -> float:
    return float(np.exp(activation_energy / GAS_CONSTANT * (1.0 / T_ref - 1.0 / T)))


@dataclass(frozen=True)
class ElectrodeParams:
    name: str
    thickness: float
    particle_radius: float
    active_fraction: float
    porosity: float
    conductivity: float
    c_s_max: float
    diffusivity: float
    diffusivity_activation: float
    rate_constant: float
    rate_activation: float
    alpha: float
    sto_0: float
    sto_100: float
    ocp: Callable = field(repr=False)
    entropic: Callable = field(repr=False)
    bruggeman: float = 1.5

    @property
    def surface_area(self) -> float:
        """Specific interfacial area a_s = 3 eps_s / R_s [1/m]."""
        return 3.0 * self.active_fraction / self.particle_radius

    @property
    def sigma_eff(self) -> float:
        return self.conductivity * self.active_fraction**self.bruggeman

    def diffusivity_at(self, T: float) -> float:
        return self.diffusivity * arrhenius(self.diffusivity_activation, T)

    def rate_constant_at(self, T: float) -> float:
        return self.rate_constant * arrhenius(self.rate_activation, T)


@dataclass(frozen=True)
class SeparatorParams:
    thickness: float
    porosity: float
    bruggeman: float = 1.5


@dataclass(frozen=True)
class ElectrolyteParams:
    initial_concentration: float
    transference: float
    diffusivity: Callable = field(repr=False)
    diffusivity_activation: float = 0.0
    conductivity: Callable = field(repr=False, default=None)
    conductivity_activation: float = 0.0
    # 1 + dln(f)/dln(c_e); 1.0 means no activity correction
    thermodynamic_factor: float = 1.0

    def diffusivity_at(self, c_e, T: float):
        return self.diffusivity(c_e) * arrhenius(self.diffusivity_activation, T)

    def conductivity_at(self, c_e, T: float):
        return self.conductivity(c_e) * arrhenius(self.conductivity_activation, T)


@dataclass(frozen=True)
class DfnParameters:
    negative: ElectrodeParams
    separator: SeparatorParams
    positive: ElectrodeParams
    electrolyte: ElectrolyteParams
    v_min: float
    v_max: float
    capacity_ah: float
    n_units: int
    unit_area: float
    ocv_full: float
    name: str = "unnamed"

    def __post_init__(self):
        _validate(self)

    def electrode(self, side: str) -> ElectrodeParams:
        if side in ("negative", "neg", "n", "-"):
            return self.negative
        if side in ("positive", "pos", "p", "+"):
            return self.positive
        raise ParameterError(f"unknown electrode side {side!r}")

    @property
    def unit_thickness(self) -> float:
        return self.negative.thickness + self.separator.thickness + self.positive.thickness

    @property
    def total_area(self) -> float:
        """Electrode area summed over the parallel units [m^2]."""
        return self.n_units * self.unit_area

    def current_density(self, cell_current: float) -> float:
        """Cell current [A] to unit current density [A/m^2]; units share current equally."""
        return cell_current / self.total_area

    def cell_current(self, current_density: float) -> float:
        return current_density * self.total_area

    def window_capacity_ah(self, side: str = "negative") -> float:
        e = self.electrode(side)
        moles = self.total_area * e.thickness * e.active_fraction * e.c_s_max
        return moles * abs(e.sto_100 - e.sto_0) * FARADAY / 3600.0

    def stoichiometry_at_soc(self, soc: float) -> tuple[float, float]:
        n, p = self.negative, self.positive
        return (n.sto_0 + soc * (n.sto_100 - n.sto_0), p.sto_0 + soc * (p.sto_100 - p.sto_0))

    def replace(self, **changes) -> "DfnParameters":
        return dataclasses.replace(self, **changes)


def _validate(p: DfnParameters) -> None:
    for e in (p.negative, p.positive):
        positive = {
            "thickness": e.thickness,
            "particle_radius": e.particle_radius,
            "active_fraction": e.active_fraction,
            "porosity": e.porosity,
            "conductivity": e.conductivity,
            "c_s_max": e.c_s_max,
            "diffusivity": e.diffusivity,
            "rate_constant": e.rate_constant,
        }
        for key, value in positive.items():
            if not value > 0:
                raise ParameterError(f"{e.name}.{key} must be > 0, got {value}")
        if not 0 < e.alpha < 1:
            raise ParameterError(f"{e.name}.alpha must lie in (0, 1)")
        if e.active_fraction + e.porosity > 1 + 1e-12:
            raise ParameterError(f"{e.name}: active_fraction + porosity exceeds 1")
        lo, hi = sorted((e.sto_0, e.sto_100))
        if not (0 <= lo < hi <= 1):
            raise ParameterError(f"{e.name}: stoichiometry window must satisfy 0 <= x0 < x100 <= 1")
    if not (p.separator.thickness > 0 and 0 < p.separator.porosity <= 1):
        raise ParameterError("separator thickness/porosity invalid")
    el = p.electrolyte
    if not el.initial_concentration > 0:
        raise ParameterError("electrolyte.initial_concentration must be > 0")
    if not 0 < el.transference < 1:
        raise ParameterError("electrolyte.transference must lie in (0, 1)")
    if not p.v_min < p.v_max:
        raise ParameterError("v_min must be below v_max")
    if not (p.capacity_ah > 0 and p.n_units >= 1 and p.unit_area > 0):
        raise ParameterError("capacity, unit count and unit area must be positive")


@dataclass(frozen=True)
class MeshSpec:
    n_neg: int = 20
    n_sep: int = 20
    n_pos: int = 20
    n_r: int = 20
    dt_ec: float = 0.05

    def __post_init__(self):
        if min(self.n_neg, self.n_sep, self.n_pos, self.n_r) < 3:
            raise ParameterError("every mesh count must be >= 3")
        if not self.dt_ec > 0:
            raise ParameterError("dt_ec must be positive")

    def check_half_period(self, half_period: float) -> int:
        """Number of substeps per pulse half-period; raises if dt_ec does not divide it."""
        n = round(half_period / self.dt_ec)
        if n < 1 or abs(n * self.dt_ec - half_period) > 1e-9 * half_period:
            raise ParameterError(f"dt_ec={self.dt_ec} does not divide half-period {half_period}")
        return n

    def refined(self, factor: int = 2) -> "MeshSpec":
        return MeshSpec(
            self.n_neg * factor, self.n_sep * factor, self.n_pos * factor, self.n_r * factor, self.dt_ec
        )


def _electrode(name: str, d: dict) -> ElectrodeParams:
    try:
        return ElectrodeParams(
            name=name,
            thickness=float(d["thickness"]),
            particle_radius=float(d["particle_radius"]),
            active_fraction=float(d["active_fraction"]),
            porosity=float(d["porosity"]),
            conductivity=float(d["conductivity"]),
            c_s_max=float(d["c_s_max"]),
            diffusivity=float(d["diffusivity"]),
            diffusivity_activation=float(d.get("diffusivity_activation", 0.0)),
            rate_constant=float(d["rate_constant"]),
            rate_activation=float(d.get("rate_activation", 0.0)),
            alpha=float(d.get("alpha", 0.5)),
            sto_0=float(d["sto_0"]),
            sto_100=float(d["sto_100"]),
            ocp=materials.lookup(materials.OCP_CURVES, d["ocp"], "ocp"),
            entropic=materials.lookup(materials.ENTROPIC_CURVES, d.get("entropic", "zero"), "entropic"),
            bruggeman=float(d.get("bruggeman", 1.5)),
        )
    except KeyError as exc:
        raise ParameterError(f"{name}: missing key {exc.args[0]!r}") from None


def parameters_from_dict(d: dict) -> DfnParameters:
    try:
        sep, el, cell = d["separator"], d["electrolyte"], d["cell"]
        return DfnParameters(
            negative=_electrode("negative", d["negative"]),
            separator=SeparatorParams(
                thickness=float(sep["thickness"]),
                porosity=float(sep["porosity"]),
                bruggeman=float(sep.get("bruggeman", 1.5)),
            ),
            positive=_electrode("positive", d["positive"]),
            electrolyte=ElectrolyteParams(
                initial_concentration=float(el["initial_concentration"]),
                transference=float(el["transference"]),
                diffusivity=materials.lookup(materials.ELECTROLYTE_CURVES, el["diffusivity"], "diffusivity"),
                diffusivity_activation=float(el.get("diffusivity_activation", 0.0)),
                conductivity=materials.lookup(materials.ELECTROLYTE_CURVES, el["conductivity"], "conductivity"),
                conductivity_activation=float(el.get("conductivity_activation", 0.0)),
                thermodynamic_factor=float(el.get("thermodynamic_factor", 1.0)),
            ),
            v_min=float(cell["v_min"]),
            v_max=float(cell["v_max"]),
            capacity_ah=float(cell["capacity_ah"]),
            n_units=int(cell["n_units"]),
            unit_area=float(cell["unit_area"]),
            ocv_full=float(cell["ocv_full"]),
            name=str(d.get("name", "unnamed")),
        )
    except KeyError as exc:
        raise ParameterError(f"parameter set missing key {exc.args[0]!r}") from None


def load_parameters(path: str | Path | None = None) -> DfnParameters:
    """Load a parameter set; ``None`` gives the bundled LiPF6/graphite/LiCoO2 set."""
    if path is None:
        text = resources.files("preheat.data").joinpath("marquis2019.yaml").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parameters_from_dict(yaml.safe_load(text))
