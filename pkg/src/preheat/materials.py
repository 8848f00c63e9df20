"""Fitted material curves referenced by name from parameter files.

Every open-circuit-potential curve takes a stoichiometry array and returns volts.
Entropic curves take ``(sto, c_s_max)`` and return V/K. Electrolyte transport
curves take a concentration in mol/m^3 and return the 298.15 K value; the
Arrhenius factor is applied separately by :class:`preheat.params.DfnParameters`.

Curves are written with plain numpy ufuncs on floats or arrays so that the
reduced model can compile them with numba.
"""

from __future__ import annotations

import numpy as np

from preheat.errors import ParameterError

_LICOO2_STRETCH = 1.062


def graphite_mcmb2528_ocp_dualfoil1998(sto):
    # Dualfoil fit (Bogatu, Telcordia/PolyStor 2000)
    return (
        0.194
        + 1.5 * np.exp(-120.0 * sto)
        + 0.0351 * np.tanh((sto - 0.286) / 0.083)
        - 0.0045 * np.tanh((sto - 0.849) / 0.119)
        - 0.035 * np.tanh((sto - 0.9233) / 0.05)
        - 0.0147 * np.tanh((sto - 0.5) / 0.034)
        - 0.102 * np.tanh((sto - 0.194) / 0.142)
        - 0.022 * np.tanh((sto - 0.9) / 0.0164)
        - 0.011 * np.tanh((sto - 0.124) / 0.0226)
        + 0.0155 * np.tanh((sto - 0.105) / 0.029)
    )


def lico2_ocp_dualfoil1998(sto):
    # Dualfoil fit with the 1.062 stoichiometry stretch
    sto = _LICOO2_STRETCH * sto
    return (
        2.16216
        + 0.07645 * np.tanh(30.834 - 54.4806 * sto)
        + 2.1581 * np.tanh(52.294 - 50.294 * sto)
        - 0.14169 * np.tanh(11.0923 - 19.8543 * sto)
        + 0.2051 * np.tanh(1.4684 - 5.4888 * sto)
        + 0.2531 * np.tanh((-sto + 0.56478) / 0.1316)
        - 0.02167 * np.tanh((sto - 0.525) / 0.006)
    )


def _sech2(x):
    return 1.0 / np.cosh(x) ** 2


def graphite_entropic_moura2016(sto, c_s_max):
    # fastDFN (Moura 2016) form, scaled by c_s_max as distributed with the set
    return (
        -1.5 * (120.0 / c_s_max) * np.exp(-120.0 * sto)
        + (0.0351 / (0.083 * c_s_max)) * _sech2((sto - 0.286) / 0.083)
        - (0.0045 / (0.119 * c_s_max)) * _sech2((sto - 0.849) / 0.119)
        - (0.035 / (0.05 * c_s_max)) * _sech2((sto - 0.9233) / 0.05)
        - (0.0147 / (0.034 * c_s_max)) * _sech2((sto - 0.5) / 0.034)
        - (0.102 / (0.142 * c_s_max)) * _sech2((sto - 0.194) / 0.142)
        - (0.022 / (0.0164 * c_s_max)) * _sech2((sto - 0.9) / 0.0164)
        - (0.011 / (0.0226 * c_s_max)) * _sech2((sto - 0.124) / 0.0226)
        + (0.0155 / (0.029 * c_s_max)) * _sech2((sto - 0.105) / 0.029)
    )


def lico2_entropic_moura2016(sto, c_s_max):
    sto = _LICOO2_STRETCH * sto
    return (
        0.07645 * (-54.4806 / c_s_max) * _sech2(30.834 - 54.4806 * sto)
        + 2.1581 * (-50.294 / c_s_max) * _sech2(52.294 - 50.294 * sto)
        + 0.14169 * (19.854 / c_s_max) * _sech2(11.0923 - 19.8543 * sto)
        - 0.2051 * (5.4888 / c_s_max) * _sech2(1.4684 - 5.4888 * sto)
        - (0.2531 / 0.1316 / c_s_max) * _sech2((-sto + 0.56478) / 0.1316)
        - (0.02167 / 0.006 / c_s_max) * _sech2((sto - 0.525) / 0.006)
    )


def zero_entropic(sto, c_s_max):
    return sto * 0.0


def electrolyte_diffusivity_capiglia1999(c_e):
    return 5.34e-10 * np.exp(-0.65 * c_e / 1000.0)


def electrolyte_conductivity_capiglia1999(c_e):
    c = c_e / 1000.0
    return 0.0911 + 1.9101 * c - 1.052 * c**2 + 0.1554 * c**3


def constant(value):
    """Curve that ignores its argument; used for ``{constant: x}`` entries."""

    def curve(x, c_s_max=1.0):
        return x * 0.0 + value

    curve.__name__ = f"constant_{value:g}"
    curve.constant_value = value
    return curve


OCP_CURVES = {
    "graphite_mcmb2528_ocp_dualfoil1998": graphite_mcmb2528_ocp_dualfoil1998,
    "lico2_ocp_dualfoil1998": lico2_ocp_dualfoil1998,
}

ENTROPIC_CURVES = {
    "graphite_entropic_moura2016": graphite_entropic_moura2016,
    "lico2_entropic_moura2016": lico2_entropic_moura2016,
    "zero": zero_entropic,
}

ELECTROLYTE_CURVES = {
    "electrolyte_diffusivity_capiglia1999": electrolyte_diffusivity_capiglia1999,
    "electrolyte_conductivity_capiglia1999": electrolyte_conductivity_capiglia1999,
}


def lookup(table: dict, spec, kind: str):
    """Resolve a curve entry: a registered name or ``{constant: value}``."""
    if isinstance(spec, dict) and set(spec) == {"constant"}:
        return constant(float(spec["constant"]))
    if isinstance(spec, (int, float)):
        return constant(float(spec))
    try:
        return table[spec]
    except (KeyError, TypeError):
        raise ParameterError(f"unknown {kind} curve {spec!r}; known: {sorted(table)}") from None
