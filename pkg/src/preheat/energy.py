"""Energy accounting over a trace.

Trace rows carry interval means of the powers over ``(t_prev, t]``, so each
component is integrated exactly as ``sum(P_i (t_i - t_prev))``.

Two bookkeeping bases are offered:

* ``"cell"``: film energy ``int v^2/R dt`` and pulse heat ``int Q_gen V_cell dt``
  both refer to the whole cell;
* ``"table"``: the film term is the heat entering through one outer face
  (half of ``v^2/R``) while the pulse term stays whole-cell. This mixed
  convention is the one that reproduces the published reference magnitudes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

BASES = ("cell", "table")


@dataclass(frozen=True)
class EnergyReport:
    ptc_energy: float  # [J]
    pulse_energy: float  # [J]
    total_energy: float  # [J]
    time_to_target: float  # [s], nan if the target was not reached
    final_T_range: float  # [K]
    battery_energy: float  # [J] net electrical energy drawn from the cell, at trace resolution
    mean_rtr: float  # [K/s] average rate of temperature rise up to the last row
    duration: float  # [s]
    complete: bool  # target reached
    basis: str = "cell"

    def as_dict(self) -> dict:
        return asdict(self)


def energy_accounting(
    trace, cell_volume: float, T_des: float | None = 273.15, basis: str = "cell", ptc_power_override=None
) -> EnergyReport:
    """Integrate film and pulse energy over trace rows.

    ``ptc_power_override`` (a constant [W]) replaces the recorded film power;
    it exists to check the integration rule independently of the resistance law.
    """
    if basis not in BASES:
        raise ValueError(f"unknown energy basis {basis!r}; choose from {BASES}")
    rows = list(trace)
    if not rows:
        raise ValueError("empty trace")
    t = np.array([r.t for r in rows])
    if np.any(np.diff(t) < 0):
        raise ValueError("trace times must be nondecreasing")
    dt = np.diff(t)
    later = rows[1:]
    q_ptc = np.array([r.Q_ptc for r in later]) if ptc_power_override is None else np.full(len(later), ptc_power_override)
    pulsing = np.array([r.applied_current != 0.0 for r in later], dtype=bool)
    q_gen = np.array([max(r.Q_gen, 0.0) for r in later])
    e_ptc = float(np.sum(q_ptc * dt))
    if basis == "table":
        e_ptc *= 0.5
    e_pulse = float(np.sum(np.where(pulsing, q_gen, 0.0) * cell_volume * dt))
    e_batt = float(np.sum(np.array([r.v_t * r.applied_current for r in later]) * dt))

    T_avg = np.array([r.T_avg for r in rows])
    reached = np.nonzero(T_avg >= T_des)[0] if T_des is not None else np.array([], dtype=int)
    complete = reached.size > 0
    duration = float(t[-1] - t[0])
    return EnergyReport(
        ptc_energy=e_ptc,
        pulse_energy=e_pulse,
        total_energy=e_ptc + e_pulse,
        time_to_target=float(t[reached[0]] - t[0]) if complete else float("nan"),
        final_T_range=float(rows[-1].T_range),
        battery_energy=e_batt,
        mean_rtr=float((T_avg[-1] - T_avg[0]) / duration) if duration > 0 else 0.0,
        duration=duration,
        complete=bool(complete),
        basis=basis,
    )


def phase_means(trace, cell_volume: float) -> dict:
    """Mean film power and pulse heat power [W] in the first and last third of an episode."""
    rows = list(trace)[1:]
    n = len(rows)
    if n == 0:
        return {k: 0.0 for k in ("ptc_first", "ptc_last", "pulse_first", "pulse_last")}
    k = max(n // 3, 1)
    ptc = np.array([r.Q_ptc for r in rows])
    pulse = np.array([max(r.Q_gen, 0.0) * cell_volume if r.applied_current != 0.0 else 0.0 for r in rows])
    return {
        "ptc_first": float(ptc[:k].mean()),
        "ptc_last": float(ptc[-k:].mean()),
        "pulse_first": float(pulse[:k].mean()),
        "pulse_last": float(pulse[-k:].mean()),
    }
