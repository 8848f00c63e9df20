import math

import numpy as np
import pytest

from preheat.energy import energy_accounting, phase_means
from preheat.trace import TraceRecord, read_trace_csv, trace_to_csv, write_trace_csv

VOL = 2 * 5.3e-3 * 0.137 * 0.207


def _row(t, current=0.0, v_ptc=0.0, T_avg=253.15, T_range=0.0, Q_gen=0.0, Q_ptc=0.0):
    return TraceRecord(
        t=t, applied_current=current, v_ptc=v_ptc, v_t=3.8, soc=0.5, T_m=T_avg, T_out=T_avg + T_range,
        T_avg=T_avg, T_range=T_range, Q_gen=Q_gen, Q_ptc=Q_ptc, hold_reward=0.0,
    )


def test_all_zero_trace():
    r = energy_accounting([_row(5.0 * k) for k in range(10)], VOL)
    assert r.ptc_energy == r.pulse_energy == r.total_energy == 0.0
    assert not r.complete and math.isnan(r.time_to_target)


def test_constant_power_override():
    trace = [_row(0.05 * k) for k in range(201)]
    r = energy_accounting(trace, VOL, ptc_power_override=100.0)
    assert r.ptc_energy == pytest.approx(1000.0, rel=1e-12)
    assert energy_accounting(trace, VOL, basis="table", ptc_power_override=100.0).ptc_energy == pytest.approx(500.0)


def test_total_is_sum_and_pulse_counts_only_pulsing_rows():
    trace = [_row(0.0)] + [_row(5.0 * k, current=0.5 * (k % 2), Q_gen=1e4, Q_ptc=50.0) for k in range(1, 7)]
    r = energy_accounting(trace, VOL)
    assert r.total_energy == r.ptc_energy + r.pulse_energy
    assert r.ptc_energy == pytest.approx(50.0 * 30.0)
    assert r.pulse_energy == pytest.approx(1e4 * VOL * 15.0)


def test_time_to_target_and_rtr():
    trace = [_row(5.0 * k, T_avg=253.15 + 2.0 * k) for k in range(12)]
    r = energy_accounting(trace, VOL, T_des=273.15)
    assert r.complete and r.time_to_target == pytest.approx(50.0)
    assert r.mean_rtr == pytest.approx(0.4)


def test_truncated_trace_flagged_incomplete():
    trace = [_row(5.0 * k, T_avg=253.15 + 0.1 * k) for k in range(5)]
    assert not energy_accounting(trace, VOL).complete


def test_bad_inputs():
    with pytest.raises(ValueError):
        energy_accounting([], VOL)
    with pytest.raises(ValueError):
        energy_accounting([_row(1.0), _row(0.0)], VOL)
    with pytest.raises(ValueError):
        energy_accounting([_row(0.0)], VOL, basis="other")


def test_phase_means():
    trace = [_row(0.0)] + [_row(5.0 * k, current=1.0 if k > 3 else 0.0, Q_gen=1e4, Q_ptc=100.0 if k <= 3 else 0.0) for k in range(1, 10)]
    p = phase_means(trace, VOL)
    assert p["ptc_first"] == 100.0 and p["ptc_last"] == 0.0
    assert p["pulse_first"] == 0.0 and p["pulse_last"] == pytest.approx(1e4 * VOL)


def test_csv_round_trip_reproduces_report(tmp_path):
    rng = np.random.default_rng(3)
    trace = [_row(5.0 * k, current=rng.uniform(-1, 1), T_avg=253.15 + 2.1 * k, T_range=rng.uniform(0, 2), Q_gen=rng.uniform(0, 1e4), Q_ptc=rng.uniform(0, 200)) for k in range(11)]
    path = write_trace_csv(tmp_path / "t.csv", trace)
    back = read_trace_csv(path)
    assert back == trace
    assert energy_accounting(back, VOL) == energy_accounting(trace, VOL)
    assert trace_to_csv(back) == path.read_text()
