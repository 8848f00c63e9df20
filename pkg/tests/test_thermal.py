import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from preheat.errors import CommandRangeError, DegenerateParametersError, ParameterError
from preheat.thermal import (
    PtcParameters,
    ThermalParameters,
    ThermalState,
    curie_temperature,
    ptc_power,
    ptc_resistance,
    step_thermal,
    stored_energy,
)

PTC = PtcParameters()


def test_default_r1_gives_curie_at_t1():
    assert PTC.r1 == pytest.approx(0.2418, abs=5e-5)
    assert curie_temperature(PTC) == pytest.approx(393.0, abs=0.1)
    explicit = PTC.replace(r1=0.2418)
    assert curie_temperature(explicit) == pytest.approx(393.0, abs=0.1)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(250.0, 320.0), st.floats(340.0, 450.0), st.floats(-0.02, -0.001), st.floats(0.1, 2.0))
def test_curie_identity(r0, t0, t1, a0, a1):
    p = PtcParameters(r0=r0, t0=t0, t1=t1, alpha0=a0, alpha1=a1, r1=r0 * float(np.exp(a0 * (t1 - t0))))
    assert curie_temperature(p) == pytest.approx(t1, rel=1e-12)


def test_equal_slopes_are_degenerate():
    with pytest.raises(DegenerateParametersError):
        curie_temperature(PtcParameters(alpha1=-0.0044, r1=0.3))
    with pytest.raises(DegenerateParametersError):
        PtcParameters(alpha1=-0.0044, r1=0.3)


def test_resistance_examples():
    assert ptc_resistance(PTC, 298.15) == pytest.approx(0.367, rel=1e-15)
    assert ptc_resistance(PTC, 253.15) == pytest.approx(0.367 * np.exp(-0.0044 * -45.0), rel=1e-14)
    assert ptc_resistance(PTC, 253.15) == pytest.approx(0.4474, abs=5e-5)


def test_resistance_continuous_at_curie():
    for p in (PTC, PTC.replace(r1=0.5), PTC.replace(r1=0.1)):
        tc = curie_temperature(p)
        below = p.r0 * np.exp(p.alpha0 * (tc - p.t0))
        above = p.r1 * np.exp(p.alpha1 * (tc - p.t1))
        assert abs(below - above) / below < 1e-9
        eps = 1e-9
        assert ptc_resistance(p, tc - eps) == pytest.approx(ptc_resistance(p, tc + eps), rel=1e-7)


def test_power_examples_and_self_limiting():
    assert ptc_power(PTC, 0.0, 253.15) == 0.0
    assert ptc_power(PTC, 10.0, 253.15) == pytest.approx(223.5, abs=0.1)
    hot = [ptc_power(PTC, 10.0, T) for T in (393.0, 400.0, 410.0, 430.0)]
    assert all(a > b for a, b in zip(hot, hot[1:]))
    assert hot[-1] < 1e-10


@pytest.mark.parametrize("v", [-0.1, 10.01, np.nan])
def test_power_command_range(v):
    with pytest.raises(CommandRangeError):
        ptc_power(PTC, v, 260.0)


def test_uniform_equilibrium_unchanged():
    p = ThermalParameters(ambient=260.0)
    s = ThermalState.uniform(p, 260.0)
    s1 = step_thermal(s, 0.0, 0.0, p)
    assert np.array_equal(s1.T, s.T)
    assert s1.time == pytest.approx(0.05)


@pytest.mark.parametrize("q_gen, q_ptc", [(5e4, 0.0), (0.0, 150.0), (2e4, 80.0)])
def test_adiabatic_energy_balance(q_gen, q_ptc):
    p = ThermalParameters(convection=0.0)
    s = ThermalState(np.linspace(253.15, 258.15, p.n_x))
    for _ in range(50):
        e0 = stored_energy(s, p)
        s = step_thermal(s, q_gen, q_ptc, p)
        added = (q_gen * p.cell_volume + q_ptc) * p.dt
        assert abs(stored_energy(s, p) - e0 - added) / added < 1e-9


def test_steady_flux_balance():
    p = ThermalParameters(ambient=253.15)
    s = ThermalState.uniform(p, 253.15)
    q_ptc = 20.0
    for _ in range(400):
        s = step_thermal(s, 0.0, q_ptc, p, dt=2000.0)
    loss = p.edge_loss_coefficient * 2.0 * p.area * float(p.node_widths() @ (s.T - p.ambient))
    assert loss == pytest.approx(q_ptc, rel=1e-6)


def test_temperature_statistics():
    p = ThermalParameters()
    u = ThermalState.uniform(p, 263.0)
    assert u.T_range == 0.0 and u.T_avg == u.T_m == u.T_out == 263.0
    lin = ThermalState(np.linspace(253.0, 255.0, p.n_x))
    assert lin.T_avg == pytest.approx(254.0, abs=1e-12)
    assert lin.T_range == pytest.approx(2.0, abs=1e-12)


def test_film_heating_keeps_outer_face_hottest():
    p = ThermalParameters(ambient=253.15)
    s = ThermalState.uniform(p, 253.15)
    for k in range(2000):
        q = ptc_power(PTC, 10.0 if k < 1200 else 3.0, s.T_out)
        s = step_thermal(s, 2e3, q, p)
        assert s.T_range >= 0.0
        assert np.all(np.diff(s.T) >= -1e-12)


def test_relaxation_is_monotone_in_max_norm():
    p = ThermalParameters(ambient=260.0)
    s = ThermalState(260.0 + 8.0 * np.sin(np.linspace(0, 3 * np.pi, p.n_x)) ** 2)
    prev = np.max(np.abs(s.T - p.ambient))
    for _ in range(500):
        s = step_thermal(s, 0.0, 0.0, p, dt=5.0)
        cur = np.max(np.abs(s.T - p.ambient))
        assert cur <= prev + 1e-12
        prev = cur
    assert prev < 8.0


def test_mesh_refinement_converges():
    def run(n_x, dt):
        p = ThermalParameters(n_x=n_x, dt=dt)
        s = ThermalState.uniform(p, 253.15)
        for _ in range(round(60.0 / dt)):
            s = step_thermal(s, 1e4, 200.0, p)
        return s

    a, b, c = run(20, 0.05), run(40, 0.025), run(80, 0.0125)
    assert abs(a.T_avg - b.T_avg) < 2e-3
    assert abs(b.T_range - c.T_range) < abs(a.T_range - b.T_range)
    assert abs(a.T_range - b.T_range) < 0.05


def test_invalid_inputs():
    p = ThermalParameters()
    with pytest.raises(ParameterError):
        ThermalParameters(n_x=3)
    with pytest.raises(ParameterError):
        step_thermal(ThermalState.uniform(p, 260.0), 0.0, -1.0, p)
