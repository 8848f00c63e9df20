"""Full Doyle-Fuller-Newman model: implicit Euler plus damped Newton on the coupled DAE.

Unknowns per step are ``[c_e (N), phi_e (N), phi_s (Ne), j (Ne)]``. Particle
concentrations are condensed out: with the step's diffusivity fixed, each
particle's implicit update is affine in its surface flux, so
``c_surf = s0 - g * j`` and the shells are recovered after convergence.

Residual rows carry natural units: mol/(m^2 s) for electrolyte mass, A/m^2 for
charge conservation, Butler-Volmer and the potential gauge.

The positive solid potential (~4 V) is solved as an anchor plus offsets so the
stiff solid-conductance differences are not taken between large numbers.
"""

from __future__ import annotations

import numpy as np

from preheat.electrochem.base import CellModel, ElectrochemState
from preheat.electrochem.kinetics import OVERFLOW_GUARD
from preheat.errors import SolverError
from preheat.params import FARADAY, GAS_CONSTANT, DfnParameters, MeshSpec


class DfnModel(CellModel):
    fidelity = "dfn"

    def __init__(
        self,
        params: DfnParameters,
        mesh: MeshSpec | None = None,
        tol: float = 1e-10,
        max_iter: int = 50,
        max_halvings: int = 4,
    ):
        super().__init__(params, mesh)
        self.tol = tol
        self.max_iter = max_iter
        self.max_halvings = max_halvings
        g = self.geo
        N, Ne = g.N, g.Ne
        self.n_unknowns = 2 * N + 2 * Ne
        self._ce = np.arange(0, N)
        self._pe = np.arange(N, 2 * N)
        self._ps = np.arange(2 * N, 2 * N + Ne)
        self._jj = np.arange(2 * N + Ne, 2 * N + 2 * Ne)
        # solid faces: local index pairs inside each electrode, in electrode-cell numbering
        left_n = np.arange(g.nn - 1)
        left_p = np.arange(g.nn, g.Ne - 1)
        self._solid_left = np.concatenate([left_n, left_p])
        self._solid_G = np.concatenate([g.gs_neg, g.gs_pos])
        self._anchor = self._ps[g.nn]
        self._pos_cols = self._ps[g.nn:]

    def _pack(self, state: ElectrochemState) -> np.ndarray:
        g = self.geo
        ps = state.phi_s.copy()
        ps[g.nn + 1 :] -= ps[g.nn]
        return np.concatenate([state.c_e, state.phi_e, ps, state.j])

    def _solid_absolute(self, ps_local: np.ndarray) -> np.ndarray:
        g = self.geo
        out = ps_local.copy()
        out[g.nn + 1 :] += ps_local[g.nn]
        return out

    # ------------------------------------------------------------------
    def step(self, state: ElectrochemState, I: float, T_avg: float, dt: float | None = None) -> ElectrochemState:
        """Advance one implicit step of length ``dt`` (default ``mesh.dt_ec``)."""
        dt = self.mesh.dt_ec if dt is None else dt
        return self._step_with_halving(state, float(I), float(T_avg), dt, depth=0)

    def _step_with_halving(self, state, I, T, dt, depth):
        try:
            # trial Newton iterates may leave the kinetics domain; the line search rejects them
            with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
                return self._solve_step(state, I, T, dt)
        except SolverError:
            if depth >= self.max_halvings:
                raise
            half = self._step_with_halving(state, I, T, dt / 2.0, depth + 1)
            return self._step_with_halving(half, I, T, dt / 2.0, depth + 1)

    # ------------------------------------------------------------------
    def _prepare(self, state: ElectrochemState, T: float, dt: float) -> dict:
        g, p = self.geo, self.params
        n, pp = p.negative, p.positive
        base_n, w_n, s0_n, g_n = g.particle_neg.implicit_solve(state.c_s[g.neg], n.diffusivity_at(T), dt)
        base_p, w_p, s0_p, g_p = g.particle_pos.implicit_solve(state.c_s[g.pos], pp.diffusivity_at(T), dt)
        k0 = np.concatenate([np.full(g.nn, n.rate_constant_at(T)), np.full(g.np, pp.rate_constant_at(T))])
        alpha = np.concatenate([np.full(g.nn, n.alpha), np.full(g.np, pp.alpha)])
        return {
            "T": T,
            "dt": dt,
            "f": FARADAY / (GAS_CONSTANT * T),
            "base": (base_n, base_p),
            "w": (w_n, w_p),
            "s0": np.concatenate([s0_n, s0_p]),
            "g": np.concatenate([np.full(g.nn, g_n), np.full(g.np, g_p)]),
            "k0": k0,
            "alpha": alpha,
            "beta": self.diffusion_potential_coefficient(T),
            "c_old": state.c_e,
        }

    def _residual(self, u: np.ndarray, I: float, ctx: dict, jacobian: bool):
        g, p = self.geo, self.params
        el = p.electrolyte
        N, Ne = g.N, g.Ne
        T, dt = ctx["T"], ctx["dt"]
        c = u[self._ce]
        phe = u[self._pe]
        ps_local = u[self._ps].copy()
        phs = self._solid_absolute(ps_local)
        ps_local[g.nn] = 0.0
        j = u[self._jj]
        ec = g.electrode_cells
        j_full = np.zeros(N)
        j_full[ec] = j

        # electrolyte mass
        D = el.diffusivity_at(c, T) * g.transport_factor
        h = 1e-6 * c
        dD = (el.diffusivity_at(c + h, T) - el.diffusivity_at(c - h, T)) / (2 * h) * g.transport_factor
        GD, dGD_l, dGD_r = g.face_conductance_grad(D, dD)
        dc = np.diff(c)
        Nf = -GD * dc
        r_ce = g.porosity * g.dx * (c - ctx["c_old"]) / dt - g.dx * g.a_full * (1 - el.transference) * j_full
        r_ce[:-1] += Nf
        r_ce[1:] -= Nf

        # electrolyte charge
        kap = el.conductivity_at(c, T) * g.transport_factor
        dkap = (el.conductivity_at(c + h, T) - el.conductivity_at(c - h, T)) / (2 * h) * g.transport_factor
        Gk, dGk_l, dGk_r = g.face_conductance_grad(kap, dkap)
        beta = ctx["beta"]
        logc = np.log(c)
        W = np.diff(phe) - beta * np.diff(logc)
        ie = -Gk * W
        r_pe = -g.dx * g.a_full * FARADAY * j_full
        r_pe[:-1] += ie
        r_pe[1:] -= ie
        # the last charge balance is implied by the others; replace it with the gauge
        sig0 = g.sigma_e[0]
        r_pe[-1] = 2.0 * sig0 / g.dx_e[0] * phs[0] + I

        # solid charge
        L = self._solid_left
        is_f = -self._solid_G * (ps_local[L + 1] - ps_local[L])
        r_ps = g.dx_e * g.a_e * FARADAY * j
        r_ps[L] += is_f
        r_ps[L + 1] -= is_f
        r_ps[0] -= I  # collector current enters the negative electrode
        r_ps[-1] += I  # and leaves the positive one

        # Butler-Volmer
        cs = ctx["s0"] - ctx["g"] * j
        cmax = g.c_max_e
        sto = cs / cmax
        U = self.ocp_cells(cs)
        ce_e = c[ec]
        eta = phs - phe[ec] - U
        a = ctx["alpha"]
        f = ctx["f"]
        x = np.clip(f * eta, -OVERFLOW_GUARD, OVERFLOW_GUARD)
        ea = np.exp((1 - a) * x)
        eb = np.exp(-a * x)
        S = ea - eb
        i0 = FARADAY * ctx["k0"] * ce_e ** (1 - a) * (cmax - cs) ** (1 - a) * cs**a
        r_bv = FARADAY * j - i0 * S

        R = np.concatenate([r_ce, r_pe, r_ps, r_bv])
        extra = {"eta": eta, "cs": cs}
        if not jacobian:
            return R, None, extra

        J = np.zeros((self.n_unknowns, self.n_unknowns))
        ce_i, pe_i, ps_i, jj_i = self._ce, self._pe, self._ps, self._jj
        i_l = np.arange(N - 1)
        i_r = i_l + 1
        # r_ce: +N_f at left cell, -N_f at right cell
        dN_dl = GD - dc * dGD_l
        dN_dr = -GD - dc * dGD_r
        diag = g.porosity * g.dx / dt
        J[ce_i, ce_i] += diag
        J[ce_i[i_l], ce_i[i_l]] += dN_dl
        J[ce_i[i_l], ce_i[i_r]] += dN_dr
        J[ce_i[i_r], ce_i[i_l]] -= dN_dl
        J[ce_i[i_r], ce_i[i_r]] -= dN_dr
        J[ce_i[ec], jj_i] -= g.dx_e * g.a_e * (1 - el.transference)

        # r_pe (rows 0..N-2 are balances, row N-1 is the gauge)
        die_dphl = Gk
        die_dphr = -Gk
        die_dcl = -Gk * beta / c[i_l] - W * dGk_l
        die_dcr = Gk * beta / c[i_r] - W * dGk_r
        rows_l = pe_i[i_l]
        rows_r = pe_i[i_r]
        J[rows_l, pe_i[i_l]] += die_dphl
        J[rows_l, pe_i[i_r]] += die_dphr
        J[rows_l, ce_i[i_l]] += die_dcl
        J[rows_l, ce_i[i_r]] += die_dcr
        J[rows_r, pe_i[i_l]] -= die_dphl
        J[rows_r, pe_i[i_r]] -= die_dphr
        J[rows_r, ce_i[i_l]] -= die_dcl
        J[rows_r, ce_i[i_r]] -= die_dcr
        J[pe_i[ec], jj_i] -= g.dx_e * g.a_e * FARADAY
        J[pe_i[-1], :] = 0.0
        J[pe_i[-1], ps_i[0]] = 2.0 * sig0 / g.dx_e[0]

        # r_ps
        G = self._solid_G
        J[ps_i[L], ps_i[L]] += G
        J[ps_i[L], ps_i[L + 1]] -= G
        J[ps_i[L + 1], ps_i[L]] -= G
        J[ps_i[L + 1], ps_i[L + 1]] += G
        J[ps_i, jj_i] += g.dx_e * g.a_e * FARADAY

        # r_bv
        dS = f * ((1 - a) * ea + a * eb)
        di0_dcs = i0 * (a / cs - (1 - a) / (cmax - cs))
        dU = self.ocp_slope_cells(sto)
        gg = ctx["g"]
        J[jj_i, jj_i] += FARADAY + gg * S * di0_dcs - i0 * dS * dU * gg / cmax
        J[jj_i, ps_i] += -i0 * dS
        J[jj_i, pe_i[ec]] += i0 * dS
        J[jj_i, ce_i[ec]] += -(1 - a) * i0 / ce_e * S
        # chain rule for the anchor + offset parametrisation of the positive solid
        J[:, self._anchor] = J[:, self._pos_cols].sum(axis=1)
        return R, J, extra

    def _feasible_fraction(self, u, du, ctx) -> float:
        """Largest step fraction keeping c_e > 0 and surface concentrations inside (0, c_max)."""
        frac = 1.0
        c = u[self._ce]
        dc = du[self._ce]
        neg = dc < 0
        if np.any(neg):
            frac = min(frac, 0.9 * np.min(-c[neg] / dc[neg]))
        cs = ctx["s0"] - ctx["g"] * u[self._jj]
        dcs = -ctx["g"] * du[self._jj]
        cmax = self.geo.c_max_e
        lo = dcs < 0
        if np.any(lo):
            frac = min(frac, 0.9 * np.min(-cs[lo] / dcs[lo]))
        hi = dcs > 0
        if np.any(hi):
            frac = min(frac, 0.9 * np.min((cmax[hi] - cs[hi]) / dcs[hi]))
        return frac

    def _solve_step(self, state: ElectrochemState, I: float, T: float, dt: float) -> ElectrochemState:
        g = self.geo
        ctx = self._prepare(state, T, dt)
        if np.any(ctx["s0"] <= 0) or np.any(ctx["s0"] >= g.c_max_e):
            raise SolverError("particle surface left (0, c_max) before the flux update")
        u = self._pack(state)
        R, J, extra = self._residual(u, I, ctx, jacobian=True)
        norm = np.max(np.abs(R))
        it = 0
        while norm > self.tol:
            if it >= self.max_iter:
                raise SolverError("Newton did not converge", norm)
            try:
                du = np.linalg.solve(J, -R)
            except np.linalg.LinAlgError:
                raise SolverError("singular Newton Jacobian", norm) from None
            lam = self._feasible_fraction(u, du, ctx)
            accepted = False
            # close to the root a full Newton step is taken without line search
            n_search = 1 if (norm < 1e-6 and lam == 1.0) else 30
            for _ in range(n_search):
                trial = u + lam * du
                R_t, _, _ = self._residual(trial, I, ctx, jacobian=False)
                n_t = np.max(np.abs(R_t))
                if np.isfinite(n_t) and (n_t < (1 - 1e-4 * lam) * norm or n_t <= self.tol or n_search == 1):
                    accepted = True
                    break
                lam *= 0.5
            if not accepted:
                # stagnation at round-off level counts as converged
                if norm < 1e3 * self.tol:
                    break
                raise SolverError("Newton line search failed", norm)
            u = trial
            R, J, extra = self._residual(u, I, ctx, jacobian=True)
            norm = np.max(np.abs(R))
            it += 1
        return self._assemble(state, u, I, T, dt, ctx, extra)

    def _assemble(self, state, u, I, T, dt, ctx, extra) -> ElectrochemState:
        g = self.geo
        j = u[self._jj].copy()
        base_n, base_p = ctx["base"]
        w_n, w_p = ctx["w"]
        c_s = np.empty_like(state.c_s)
        c_s[g.neg] = base_n - np.outer(j[g.neg], w_n)
        c_s[g.pos] = base_p - np.outer(j[g.pos], w_p)
        return ElectrochemState(
            c_e=u[self._ce].copy(),
            phi_e=u[self._pe].copy(),
            phi_s=self._solid_absolute(u[self._ps]),
            j=j,
            c_s=c_s,
            eta=extra["eta"].copy(),
            c_surf=extra["cs"].copy(),
            current=I,
            temperature=T,
            time=state.time + dt,
        )

    def residual_norm(self, prev: ElectrochemState, new: ElectrochemState, dt: float) -> float:
        """Max-norm of the algebraic/implicit residual of ``new`` as a step from ``prev``."""
        ctx = self._prepare(prev, new.temperature, dt)
        u = self._pack(new)
        R, _, _ = self._residual(u, new.current, ctx, jacobian=False)
        return float(np.max(np.abs(R)))
