"""Reduced single-particle model with electrolyte (fast fidelity).

Each electrode is represented by one particle carrying the electrode-averaged
flux ``j = +-I / (a F L)``. The electrolyte concentration is advanced with the
same finite-volume operator as the full model (diffusivity lagged one step), and
the potential fields are rebuilt from the resulting ionic/electronic currents so
that the shared heat and plating readouts of :class:`CellModel` apply unchanged.
The particle profile is broadcast to every electrode volume of the state.

The arithmetic lives in :mod:`preheat.electrochem.spme_kernels` (numba).
"""

from __future__ import annotations

import numpy as np

from preheat.electrochem import spme_kernels as kern
from preheat.electrochem.base import CellModel, ElectrochemState
from preheat.electrochem.kinetics import entropic_coefficient
from preheat.errors import SolverError
from preheat.params import DfnParameters, MeshSpec


class SpmeModel(CellModel):
    fidelity = "reduced"

    def __init__(self, params: DfnParameters, mesh: MeshSpec | None = None):
        super().__init__(params, mesh)
        g = self.geo
        n, p, el = params.negative, params.positive, params.electrolyte
        k = np.zeros(kern.N_K)
        k[kern.K_AN], k[kern.K_AP] = n.surface_area, p.surface_area
        k[kern.K_LN], k[kern.K_LP] = n.thickness, p.thickness
        k[kern.K_DSN], k[kern.K_DSP] = n.diffusivity, p.diffusivity
        k[kern.K_EDN], k[kern.K_EDP] = n.diffusivity_activation, p.diffusivity_activation
        k[kern.K_K0N], k[kern.K_K0P] = n.rate_constant, p.rate_constant
        k[kern.K_EKN], k[kern.K_EKP] = n.rate_activation, p.rate_activation
        k[kern.K_ALN], k[kern.K_ALP] = n.alpha, p.alpha
        k[kern.K_CMN], k[kern.K_CMP] = n.c_s_max, p.c_s_max
        k[kern.K_TPLUS] = el.transference
        k[kern.K_ED], k[kern.K_EK] = el.diffusivity_activation, el.conductivity_activation
        k[kern.K_TF] = el.thermodynamic_factor
        k[kern.K_SIG0], k[kern.K_SIG1] = g.sigma_e[0], g.sigma_e[-1]
        k[kern.K_DX0], k[kern.K_DX1] = g.dx_e[0], g.dx_e[-1]
        self._k = k
        self._flux_per_current = np.where(
            np.arange(g.Ne) < g.nn,
            1.0 / (n.surface_area * kern.FARADAY * n.thickness),
            -1.0 / (p.surface_area * kern.FARADAY * p.thickness),
        )
        self._geo = (
            g.dx.copy(),
            g.porosity * g.dx,
            g.transport_factor.copy(),
            g.a_full.copy(),
            g.electrode_cells[g.neg].astype(np.int64),
            g.electrode_cells[g.pos].astype(np.int64),
            g.gs_neg.copy(),
            g.gs_pos.copy(),
            g.particle_neg.volumes.copy(),
            g.particle_neg.face_areas.copy(),
            g.particle_pos.volumes.copy(),
            g.particle_pos.face_areas.copy(),
            np.array([n.particle_radius, p.particle_radius]),
        )
        self._curves = kern.curve_codes((n.ocp, p.ocp, el.diffusivity, el.conductivity))

    def step(self, state: ElectrochemState, I: float, T_avg: float, dt: float | None = None) -> ElectrochemState:
        """Advance one implicit step; ``I`` is the unit current density [A/m^2]."""
        dt = self.mesh.dt_ec if dt is None else float(dt)
        g = self.geo
        I = float(I)
        status, cs_n, cs_p, c_e, phi_e, phi_s, eta, surf_n, surf_p = kern.substep(
            state.c_s[0], state.c_s[g.nn], state.c_e, I, float(T_avg), dt, self._k, self._geo, *self._curves
        )
        if status == kern.PARTICLE_OUT:
            raise SolverError("particle surface concentration left (0, c_max)")
        if status == kern.ELECTROLYTE_OUT:
            raise SolverError("electrolyte depleted")
        c_s = np.empty_like(state.c_s)
        c_s[g.neg] = cs_n
        c_s[g.pos] = cs_p
        c_surf = np.empty(g.Ne)
        c_surf[g.neg] = surf_n
        c_surf[g.pos] = surf_p
        return ElectrochemState(
            c_e=c_e,
            phi_e=phi_e,
            phi_s=phi_s,
            j=I * self._flux_per_current,
            c_s=c_s,
            eta=eta,
            c_surf=c_surf,
            current=I,
            temperature=float(T_avg),
            time=state.time + dt,
        )

    def entropic_cells(self, c_surf: np.ndarray) -> np.ndarray:
        # surface concentration is uniform per electrode: evaluate once and broadcast
        g, p = self.geo, self.params
        out = np.empty(g.Ne)
        out[g.neg] = entropic_coefficient(p, "negative", c_surf[:1] / p.negative.c_s_max)[0]
        out[g.pos] = entropic_coefficient(p, "positive", c_surf[g.nn : g.nn + 1] / p.positive.c_s_max)[0]
        return out

    def probe(self, state, currents, T_avg, v_lo=-np.inf, v_hi=np.inf, plating=False):
        """Compiled replay of unit current densities; see :meth:`CellModel.probe`."""
        return kern.probe(
            state.c_s[0],
            state.c_s[self.geo.nn],
            state.c_e,
            np.asarray(currents, dtype=float),
            float(T_avg),
            self.mesh.dt_ec,
            self._k,
            self._geo,
            *self._curves,
            float(v_lo),
            float(v_hi),
            bool(plating),
        )
