"""Interfacial kinetics: open-circuit potentials and Butler-Volmer flux."""

from __future__ import annotations

import numpy as np

from preheat.errors import DomainError, OverpotentialOverflowError
from preheat.params import FARADAY, GAS_CONSTANT, DfnParameters

# |F eta / (R T)| above this overflows exp() in practice
OVERFLOW_GUARD = 500.0


def open_circuit_potential(params: DfnParameters, side: str, stoichiometry):
    """U(sto) for one electrode [V]. Raises DomainError outside [0, 1]."""
    sto = np.asarray(stoichiometry, dtype=float)
    if np.any(~np.isfinite(sto)) or np.any(sto < 0.0) or np.any(sto > 1.0):
        raise DomainError(f"stoichiometry outside [0, 1]: {stoichiometry}")
    u = params.electrode(side).ocp(sto)
    return float(u) if u.ndim == 0 else u


def entropic_coefficient(params: DfnParameters, side: str, stoichiometry):
    e = params.electrode(side)
    return e.entropic(np.asarray(stoichiometry, dtype=float), e.c_s_max)


def exchange_current_density(c_e, c_s_surf, T, side: str, params: DfnParameters):
    """i0 = F k0(T) c_e^(1-a) (c_max - c_s)^(1-a) c_s^a  [A/m^2].

    The surface concentration must lie strictly inside (0, c_s_max).
    """
    e = params.electrode(side)
    c_e = np.asarray(c_e, dtype=float)
    c_s = np.asarray(c_s_surf, dtype=float)
    if np.any(c_s <= 0.0) or np.any(c_s >= e.c_s_max):
        raise DomainError(f"surface concentration outside (0, {e.c_s_max}): {c_s_surf}")
    if np.any(c_e <= 0.0):
        raise DomainError("electrolyte concentration must be positive")
    if not T > 0:
        raise DomainError("temperature must be positive")
    a = e.alpha
    i0 = FARADAY * e.rate_constant_at(T) * c_e ** (1 - a) * (e.c_s_max - c_s) ** (1 - a) * c_s**a
    return float(i0) if i0.ndim == 0 else i0


def butler_volmer_flux(i0, eta, T, alpha):
    """Pore-wall molar flux j [mol/(m^2 s)]; positive eta gives positive (anodic) j."""
    f = FARADAY / (GAS_CONSTANT * T)
    x = f * np.asarray(eta, dtype=float)
    if np.any(np.abs(x) > OVERFLOW_GUARD):
        raise OverpotentialOverflowError(f"|F eta/RT| = {np.max(np.abs(x)):.1f} exceeds {OVERFLOW_GUARD}")
    j = np.asarray(i0, dtype=float) / FARADAY * (np.exp((1 - alpha) * x) - np.exp(-alpha * x))
    return float(j) if j.ndim == 0 else j


def overpotential_for_flux(i0, j, T, alpha):
    """Invert Butler-Volmer for eta given j (closed form at alpha = 0.5, Newton otherwise)."""
    f = FARADAY / (GAS_CONSTANT * T)
    ratio = FARADAY * np.asarray(j, dtype=float) / np.asarray(i0, dtype=float)
    eta = 2.0 / f * np.arcsinh(ratio / 2.0)
    if alpha == 0.5:
        return eta
    for _ in range(50):
        x = f * eta
        g = np.exp((1 - alpha) * x) - np.exp(-alpha * x) - ratio
        dg = f * ((1 - alpha) * np.exp((1 - alpha) * x) + alpha * np.exp(-alpha * x))
        step = g / dg
        eta = eta - step
        if np.all(np.abs(step) < 1e-14):
            break
    return eta
