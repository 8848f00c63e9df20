import dataclasses

import numpy as np
import pytest

from conftest import one_c_density
from preheat import materials
from preheat.electrochem import make_model
from preheat.params import FARADAY, GAS_CONSTANT, MeshSpec


def _pulse_density(params, k, dt=0.05, amp=2.0):
    # 1 Hz square wave: charge first half, discharge second half
    phase = (k * dt) % 1.0
    return params.current_density(-amp if phase < 0.5 else amp)


def _run(model, state, density, T, n, dt=None):
    for _ in range(n):
        state = model.step(state, density, T, dt)
    return state


def test_rest_is_fixed_point(dfn):
    s0 = dfn.equilibrium_state(0.6, 280.0)
    s1 = dfn.step(s0, 0.0, 280.0)
    for name in ("c_e", "c_s", "phi_s", "phi_e", "j", "eta"):
        assert np.allclose(getattr(s1, name), getattr(s0, name), rtol=1e-12, atol=1e-12), name
    assert s1.time == pytest.approx(0.05)


def test_equilibrium_voltage_is_ocv(dfn, params):
    for soc in (0.1, 0.5, 0.95):
        s = dfn.equilibrium_state(soc, 298.15)
        x_n, x_p = params.stoichiometry_at_soc(soc)
        u = params.positive.ocp(x_p) - params.negative.ocp(x_n)
        assert abs(dfn.terminal_voltage(s) - u) < 1e-6
        assert abs(dfn.open_circuit_voltage(s) - u) < 1e-6


def test_discharge_voltage_below_ocv(dfn, params):
    s = _run(dfn, dfn.equilibrium_state(0.7, 298.15), one_c_density(params), 298.15, 20)
    assert dfn.terminal_voltage(s) < dfn.open_circuit_voltage(s)


def test_cold_discharge_voltage_lower(dfn, params):
    I = one_c_density(params)
    warm = _run(dfn, dfn.equilibrium_state(0.7, 298.15), I, 298.15, 100)
    cold = _run(dfn, dfn.equilibrium_state(0.7, 253.15), I, 253.15, 100)
    assert dfn.terminal_voltage(cold) < dfn.terminal_voltage(warm) - 0.01


def test_lithium_conserved_each_step_under_pulsing(dfn, params):
    s = dfn.equilibrium_state(0.5, 263.15)
    ref = dfn.total_lithium(s)
    prev = ref
    for k in range(100):
        s = dfn.step(s, _pulse_density(params, k), 263.15)
        cur = dfn.total_lithium(s)
        assert abs(cur - prev) / ref < 1e-10
        prev = cur
    assert abs(prev - ref) / ref < 1e-8


def test_total_lithium_closed_form(dfn, params):
    s = dfn.equilibrium_state(0.4)
    x_n, x_p = params.stoichiometry_at_soc(0.4)
    n, sep, p = params.negative, params.separator, params.positive
    c0 = params.electrolyte.initial_concentration
    expected = (
        n.active_fraction * n.thickness * x_n * n.c_s_max
        + p.active_fraction * p.thickness * x_p * p.c_s_max
        + c0 * (n.porosity * n.thickness + sep.porosity * sep.thickness + p.porosity * p.thickness)
    ) * params.total_area
    assert dfn.total_lithium(s) == pytest.approx(expected, rel=1e-12)


def test_lithium_drift_over_100_pulse_cycles(params):
    model = make_model(params, "dfn", MeshSpec(n_neg=8, n_sep=6, n_pos=8, n_r=8, dt_ec=0.25))
    s = model.equilibrium_state(0.5, 263.15)
    ref = model.total_lithium(s)
    for k in range(400):
        s = model.step(s, _pulse_density(params, k, dt=0.25, amp=3.0), 263.15)
    assert abs(model.total_lithium(s) - ref) / ref < 1e-8


def test_reaction_current_balances_applied(dfn, params):
    I = one_c_density(params)
    s = _run(dfn, dfn.equilibrium_state(0.6, 273.15), I, 273.15, 10)
    g = dfn.geo
    per_cell = g.a_e * FARADAY * s.j * g.dx_e
    assert per_cell[g.neg].sum() == pytest.approx(I, rel=1e-8)
    assert per_cell[g.pos].sum() == pytest.approx(-I, rel=1e-8)


@pytest.mark.parametrize("soc, expected", [(1.0, 1.0), (0.0, 0.0)])
def test_soc_window_endpoints(dfn, soc, expected):
    assert dfn.soc(dfn.equilibrium_state(soc)) == pytest.approx(expected, abs=1e-12)


def test_soc_coulomb_counting(params):
    model = make_model(params, "dfn", MeshSpec(n_neg=10, n_sep=6, n_pos=10, n_r=10))
    I = params.current_density(params.capacity_ah / 5.0)
    s = model.equilibrium_state(1.0, 298.15)
    # 0.34 A.h at C/5 takes 9000 s
    s = _run(model, s, I, 298.15, 900, dt=10.0)
    assert model.soc(s) == pytest.approx(0.5, abs=0.01)


def test_self_convergence_one_c(params):
    # 60 s at 1C against a 10x finer step on a 2x finer mesh
    I = one_c_density(params)
    mesh = MeshSpec()

    def trajectory(model, dt):
        s = model.equilibrium_state(0.9, 298.15)
        per_second = round(1.0 / dt)
        out = []
        for k in range(60 * per_second):
            s = model.step(s, I, 298.15, dt)
            if (k + 1) % per_second == 0:
                out.append(model.terminal_voltage(s))
        return np.array(out)

    coarse = trajectory(make_model(params, "dfn", mesh), mesh.dt_ec)
    fine = trajectory(make_model(params, "dfn", mesh.refined(2)), mesh.dt_ec / 10.0)
    assert np.max(np.abs(coarse - fine)) < 2e-3


def test_heat_zero_at_rest(dfn):
    s = dfn.equilibrium_state(0.5, 260.0)
    assert dfn.heat_generation(s, 260.0) == 0.0


def _independent_heat(model, state, T):
    """Separately written quadrature of the heat-source terms over the unit [W/m^3]."""
    p = model.params
    n, sep, pos, el = p.negative, p.separator, p.positive, p.electrolyte
    m = model.mesh
    widths = np.r_[[n.thickness / m.n_neg] * m.n_neg, [sep.thickness / m.n_sep] * m.n_sep, [pos.thickness / m.n_pos] * m.n_pos]
    eps = np.r_[[n.porosity] * m.n_neg, [sep.porosity] * m.n_sep, [pos.porosity] * m.n_pos]
    brug = np.r_[[n.bruggeman] * m.n_neg, [sep.bruggeman] * m.n_sep, [pos.bruggeman] * m.n_pos]
    kappa = el.conductivity_at(state.c_e, T) * eps**brug
    total = 0.0
    # interfacial reaction and entropic heat
    k = 0
    for e, nx in ((n, m.n_neg), (pos, m.n_pos)):
        dx = e.thickness / nx
        a = 3.0 * e.active_fraction / e.particle_radius
        for i in range(nx):
            x = state.c_surf[k] / e.c_s_max
            total += a * FARADAY * state.j[k] * (state.eta[k] + T * float(e.entropic(np.array([x]), e.c_s_max)[0])) * dx
            k += 1
    # solid ohmic heat: sigma |grad phi_s|^2 on interior faces, plus the collector half cells
    I = state.current
    for e, phi in ((n, state.phi_s[: m.n_neg]), (pos, state.phi_s[m.n_neg :])):
        dx = e.thickness / len(phi)
        sig = e.conductivity * e.active_fraction**1.5
        total += sum(sig * ((phi[i + 1] - phi[i]) / dx) ** 2 * dx for i in range(len(phi) - 1))
        total += I**2 / sig * dx / 2.0
    # electrolyte ohmic heat with the diffusion-potential term
    beta = 2.0 * GAS_CONSTANT * T * (1.0 - el.transference) * el.thermodynamic_factor / FARADAY
    for i in range(len(widths) - 1):
        h = 0.5 * (widths[i] + widths[i + 1])
        kf = h / (widths[i] / (2 * kappa[i]) + widths[i + 1] / (2 * kappa[i + 1]))
        gphi = (state.phi_e[i + 1] - state.phi_e[i]) / h
        glnc = (np.log(state.c_e[i + 1]) - np.log(state.c_e[i])) / h
        total += kf * gphi * (gphi - beta * glnc) * h
    return total / widths.sum()


def test_heat_generation_matches_independent_quadrature(dfn, params):
    T = 268.15
    s = _run(dfn, dfn.equilibrium_state(0.6, T), one_c_density(params), T, 40)
    q = dfn.heat_generation(s, T)
    assert q > 0
    assert q == pytest.approx(_independent_heat(dfn, s, T), rel=1e-8)


@pytest.mark.parametrize("amps", [-3.0, -0.5, 0.5, 3.0])
def test_heat_nonnegative_without_entropic_term(params, amps):
    zero = materials.lookup(materials.ENTROPIC_CURVES, "zero", "entropic")
    p0 = params.replace(
        negative=dataclasses.replace(params.negative, entropic=zero),
        positive=dataclasses.replace(params.positive, entropic=zero),
    )
    model = make_model(p0, "dfn")
    T = 258.15
    s = model.equilibrium_state(0.5, T)
    for _ in range(10):
        s = model.step(s, p0.current_density(amps), T)
        assert model.heat_generation(s, T) >= 0.0


def test_dt_override_and_clock(dfn):
    s = dfn.step(dfn.equilibrium_state(0.5), 0.0, 298.15, dt=0.2)
    assert s.time == pytest.approx(0.2)
