"""Geometry, state container and field readouts shared by the DFN and reduced models.

Sign convention: a positive applied current density is a discharge. The pore-wall
flux ``j`` is positive when lithium leaves the solid (anodic).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from preheat.electrochem.kinetics import entropic_coefficient, open_circuit_potential
from preheat.linalg import solve_tridiagonal
from preheat.params import FARADAY, GAS_CONSTANT, DfnParameters, MeshSpec


@dataclass
class ElectrochemState:
    c_e: np.ndarray  # (N,) electrolyte concentration per macro volume [mol/m^3]
    phi_e: np.ndarray  # (N,) [V]
    phi_s: np.ndarray  # (Ne,) electrode volumes, negative first [V]
    j: np.ndarray  # (Ne,) pore-wall flux [mol/(m^2 s)]
    c_s: np.ndarray  # (Ne, n_r) shell concentrations [mol/m^3]
    eta: np.ndarray  # (Ne,) reaction overpotential [V]
    c_surf: np.ndarray  # (Ne,) particle surface concentration [mol/m^3]
    current: float = 0.0  # unit current density [A/m^2]
    temperature: float = 298.15  # T_avg used for the last step [K]
    time: float = 0.0

    def copy(self) -> "ElectrochemState":
        return replace(
            self,
            c_e=self.c_e.copy(),
            phi_e=self.phi_e.copy(),
            phi_s=self.phi_s.copy(),
            j=self.j.copy(),
            c_s=self.c_s.copy(),
            eta=self.eta.copy(),
            c_surf=self.c_surf.copy(),
        )


@dataclass
class Particle:
    """Spherical shell finite volumes for one electrode's particles."""

    radius: float
    n_r: int
    dr: float = field(init=False)
    volumes: np.ndarray = field(init=False)  # shell volume / 4 pi
    face_areas: np.ndarray = field(init=False)  # interior face r^2

    def __post_init__(self):
        edges = np.linspace(0.0, self.radius, self.n_r + 1)
        self.dr = self.radius / self.n_r
        self.volumes = (edges[1:] ** 3 - edges[:-1] ** 3) / 3.0
        self.face_areas = edges[1:-1] ** 2

    def operator(self, D: float, dt: float):
        """Implicit-Euler operator (V/dt + D K) as (lower, diag, upper) bands."""
        q = D * self.face_areas / self.dr
        diag = self.volumes / dt
        diag[:-1] += q
        diag[1:] += q
        return -q, diag, -q

    def implicit_solve(self, c_old: np.ndarray, D: float, dt: float):
        """Return (base, w, s0, g) with c_new = base - outer(w, j) and c_surf = s0 - g j.

        ``c_old`` has shape (n_cells, n_r).
        """
        rhs = np.empty((self.n_r, c_old.shape[0] + 1))
        rhs[:, :-1] = (self.volumes / dt)[:, None] * c_old.T
        rhs[:, -1] = 0.0
        rhs[-1, -1] = self.radius**2
        sol = solve_tridiagonal(*self.operator(D, dt), rhs)
        base = sol[:, :-1].T
        w = sol[:, -1]
        s0 = base[:, -1]
        g = w[-1] + self.dr / (2.0 * D)
        return base, w, s0, g

    def mean_concentration(self, c_s: np.ndarray) -> np.ndarray:
        return c_s @ self.volumes / self.volumes.sum()


class UnitGeometry:
    """Macroscale finite-volume mesh of one cell unit (negative | separator | positive)."""

    def __init__(self, params: DfnParameters, mesh: MeshSpec):
        self.params = params
        self.mesh = mesh
        n, s, p = params.negative, params.separator, params.positive
        nn, ns, np_ = mesh.n_neg, mesh.n_sep, mesh.n_pos
        self.nn, self.ns, self.np = nn, ns, np_
        self.N = nn + ns + np_
        self.Ne = nn + np_
        self.dx = np.concatenate(
            [np.full(nn, n.thickness / nn), np.full(ns, s.thickness / ns), np.full(np_, p.thickness / np_)]
        )
        self.porosity = np.concatenate([np.full(nn, n.porosity), np.full(ns, s.porosity), np.full(np_, p.porosity)])
        brug = np.concatenate([np.full(nn, n.bruggeman), np.full(ns, s.bruggeman), np.full(np_, p.bruggeman)])
        self.transport_factor = self.porosity**brug
        # electrode volume k -> macro volume index
        self.electrode_cells = np.concatenate([np.arange(nn), np.arange(nn + ns, self.N)])
        self.neg = slice(0, nn)
        self.pos = slice(nn, self.Ne)
        self.dx_e = self.dx[self.electrode_cells]
        self.a_e = np.concatenate([np.full(nn, n.surface_area), np.full(np_, p.surface_area)])
        self.a_full = np.zeros(self.N)
        self.a_full[self.electrode_cells] = self.a_e
        self.c_max_e = np.concatenate([np.full(nn, n.c_s_max), np.full(np_, p.c_s_max)])
        self.sigma_e = np.concatenate([np.full(nn, n.sigma_eff), np.full(np_, p.sigma_eff)])
        # solid conductances between neighbouring volumes of the same electrode
        self.gs_neg = np.full(nn - 1, n.sigma_eff / (n.thickness / nn))
        self.gs_pos = np.full(np_ - 1, p.sigma_eff / (p.thickness / np_))
        self.particle_neg = Particle(n.particle_radius, mesh.n_r)
        self.particle_pos = Particle(p.particle_radius, mesh.n_r)
        self.length = params.unit_thickness

    def face_conductance(self, k_cell: np.ndarray) -> np.ndarray:
        """Harmonic face conductance 1 / (dx_i/2k_i + dx_{i+1}/2k_{i+1})."""
        dx = self.dx
        return 1.0 / (dx[:-1] / (2.0 * k_cell[:-1]) + dx[1:] / (2.0 * k_cell[1:]))

    def face_conductance_grad(self, k_cell: np.ndarray, dk_cell: np.ndarray):
        """Face conductance and its derivatives w.r.t. the left and right cell coefficient."""
        dx = self.dx
        G = self.face_conductance(k_cell)
        dleft = G**2 * dx[:-1] / (2.0 * k_cell[:-1] ** 2) * dk_cell[:-1]
        dright = G**2 * dx[1:] / (2.0 * k_cell[1:] ** 2) * dk_cell[1:]
        return G, dleft, dright


def _central_derivative(fn, x, rel=1e-6):
    h = rel * np.maximum(np.abs(x), 1e-3)
    return (fn(x + h) - fn(x - h)) / (2.0 * h)


class CellModel:
    """Common readouts; subclasses implement :meth:`step`."""

    fidelity = "base"

    def __init__(self, params: DfnParameters, mesh: MeshSpec | None = None):
        self.params = params
        self.mesh = mesh or MeshSpec()
        self.geo = UnitGeometry(params, self.mesh)

    # ----- construction -------------------------------------------------
    def equilibrium_state(self, soc: float, T: float = 298.15) -> ElectrochemState:
        g, p = self.geo, self.params
        x_n, x_p = p.stoichiometry_at_soc(soc)
        c_n = x_n * p.negative.c_s_max
        c_p = x_p * p.positive.c_s_max
        c_s = np.empty((g.Ne, self.mesh.n_r))
        c_s[g.neg] = c_n
        c_s[g.pos] = c_p
        u_n = open_circuit_potential(p, "negative", x_n)
        u_p = open_circuit_potential(p, "positive", x_p)
        phi_s = np.empty(g.Ne)
        phi_s[g.neg] = 0.0
        phi_s[g.pos] = u_p - u_n
        return ElectrochemState(
            c_e=np.full(g.N, p.electrolyte.initial_concentration),
            phi_e=np.full(g.N, -u_n),
            phi_s=phi_s,
            j=np.zeros(g.Ne),
            c_s=c_s,
            eta=np.zeros(g.Ne),
            c_surf=c_s[:, -1].copy(),
            current=0.0,
            temperature=T,
            time=0.0,
        )

    # ----- material helpers --------------------------------------------
    def ocp_cells(self, c_surf: np.ndarray) -> np.ndarray:
        g = self.geo
        out = np.empty(g.Ne)
        out[g.neg] = self.params.negative.ocp(c_surf[g.neg] / self.params.negative.c_s_max)
        out[g.pos] = self.params.positive.ocp(c_surf[g.pos] / self.params.positive.c_s_max)
        return out

    def ocp_slope_cells(self, sto: np.ndarray) -> np.ndarray:
        g = self.geo
        out = np.empty(g.Ne)
        out[g.neg] = _central_derivative(self.params.negative.ocp, sto[g.neg])
        out[g.pos] = _central_derivative(self.params.positive.ocp, sto[g.pos])
        return out

    def entropic_cells(self, c_surf: np.ndarray) -> np.ndarray:
        g, p = self.geo, self.params
        out = np.empty(g.Ne)
        out[g.neg] = entropic_coefficient(p, "negative", c_surf[g.neg] / p.negative.c_s_max)
        out[g.pos] = entropic_coefficient(p, "positive", c_surf[g.pos] / p.positive.c_s_max)
        return out

    def diffusion_potential_coefficient(self, T: float) -> float:
        """beta in i_e = -kappa grad(phi_e) + kappa beta grad(ln c_e)."""
        el = self.params.electrolyte
        return 2.0 * GAS_CONSTANT * T * (1.0 - el.transference) * el.thermodynamic_factor / FARADAY

    # ----- readouts -----------------------------------------------------
    def terminal_voltage(self, state: ElectrochemState) -> float:
        g = self.geo
        I = state.current
        phi_neg = state.phi_s[0] + I * g.dx_e[0] / (2.0 * g.sigma_e[0])
        phi_pos = state.phi_s[-1] - I * g.dx_e[-1] / (2.0 * g.sigma_e[-1])
        return float(phi_pos - phi_neg)

    def open_circuit_voltage(self, state: ElectrochemState) -> float:
        """U+(mean x_pos) - U-(mean x_neg) using particle-averaged stoichiometries."""
        x_n, x_p = self.mean_stoichiometry(state)
        p = self.params
        return open_circuit_potential(p, "positive", x_p) - open_circuit_potential(p, "negative", x_n)

    def mean_stoichiometry(self, state: ElectrochemState) -> tuple[float, float]:
        g, p = self.geo, self.params
        cn = g.particle_neg.mean_concentration(state.c_s[g.neg])
        cp = g.particle_pos.mean_concentration(state.c_s[g.pos])
        dxn, dxp = g.dx_e[g.neg], g.dx_e[g.pos]
        x_n = float(cn @ dxn / dxn.sum()) / p.negative.c_s_max
        x_p = float(cp @ dxp / dxp.sum()) / p.positive.c_s_max
        return x_n, x_p

    def soc(self, state: ElectrochemState, clamp: bool = True) -> float:
        n = self.params.negative
        x_n, _ = self.mean_stoichiometry(state)
        s = (x_n - n.sto_0) / (n.sto_100 - n.sto_0)
        return float(min(max(s, 0.0), 1.0)) if clamp else float(s)

    def total_lithium(self, state: ElectrochemState) -> float:
        """Moles of lithium in solid plus electrolyte over all units of the cell."""
        g, p = self.geo, self.params
        solid = 0.0
        for sl, particle, e in ((g.neg, g.particle_neg, p.negative), (g.pos, g.particle_pos, p.positive)):
            per_volume = (state.c_s[sl] @ particle.volumes) * 3.0 / particle.radius**3
            solid += e.active_fraction * float(per_volume @ g.dx_e[sl])
        liquid = float(np.sum(g.porosity * g.dx * state.c_e))
        return (solid + liquid) * p.total_area

    def plating_margin(self, state: ElectrochemState) -> float:
        """Minimum phi_s - phi_e over the negative electrode [V]; negative means plating risk."""
        g = self.geo
        return float(np.min(state.phi_s[g.neg] - state.phi_e[g.electrode_cells[g.neg]]))

    def heat_terms(self, state: ElectrochemState, T: float) -> dict:
        """Unit-integrated heat terms [W/m^2 of unit area] from the discrete fields."""
        g, p = self.geo, self.params
        I = state.current
        dUdT = self.entropic_cells(state.c_surf)
        flux = g.dx_e * g.a_e * FARADAY * state.j
        irreversible = flux * state.eta
        reversible = flux * T * dUdT
        # solid ohmic: interior faces plus the current-collector half volumes
        dphi_n = np.diff(state.phi_s[g.neg])
        dphi_p = np.diff(state.phi_s[g.pos])
        solid = float(np.sum(g.gs_neg * dphi_n**2) + np.sum(g.gs_pos * dphi_p**2))
        solid += I**2 * g.dx_e[0] / (2.0 * g.sigma_e[0]) + I**2 * g.dx_e[-1] / (2.0 * g.sigma_e[-1])
        kappa = p.electrolyte.conductivity_at(state.c_e, T) * g.transport_factor
        Gk = g.face_conductance(kappa)
        dphe = np.diff(state.phi_e)
        dlnc = np.diff(np.log(state.c_e))
        beta = self.diffusion_potential_coefficient(T)
        electrolyte = float(np.sum(Gk * dphe * (dphe - beta * dlnc)))
        return {
            "irreversible": irreversible,
            "reversible": reversible,
            "solid_ohmic": solid,
            "electrolyte_ohmic": electrolyte,
        }

    def heat_generation(self, state: ElectrochemState, T: float) -> float:
        """Volume-averaged heat generation over the unit [W/m^3]."""
        t = self.heat_terms(state, T)
        total = t["irreversible"].sum() + t["reversible"].sum() + t["solid_ohmic"] + t["electrolyte_ohmic"]
        return float(total / self.geo.length)

    def step(self, state: ElectrochemState, I: float, T_avg: float, dt: float | None = None):
        raise NotImplementedError

    def probe(self, state, currents, T_avg, v_lo=-np.inf, v_hi=np.inf, plating=False):
        """Replay unit current densities at fixed temperature from a copy of ``state``.

        Stops at the first substep outside ``[v_lo, v_hi]`` (or with a negative
        plating margin when ``plating``). Returns ``(v_max, v_min, margin_min, failed)``
        where ``failed`` flags a solver breakdown.
        """
        from preheat.errors import DomainError, SolverError

        v_max, v_min, margin = -np.inf, np.inf, np.inf
        st = state
        try:
            for I in currents:
                st = self.step(st, float(I), T_avg)
                v = self.terminal_voltage(st)
                v_max, v_min = max(v_max, v), min(v_min, v)
                margin = min(margin, self.plating_margin(st))
                if v > v_hi or v < v_lo or (plating and margin < 0.0):
                    break
        except (SolverError, DomainError, ArithmeticError):
            return v_max, v_min, margin, True
        return v_max, v_min, margin, False
