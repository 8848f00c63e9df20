"""numba kernels for the reduced model.

``substep`` is the whole reduced-model time step; ``probe`` chains substeps for
a current sequence at fixed temperature and tracks the voltage and plating
extremes with early exit. Scalars travel in a float64 vector indexed by the
``K_*`` constants below and geometry in a tuple of arrays. Material curves are
selected by integer code (see :func:`curve_codes`), which keeps every kernel
cacheable on disk; constant curves carry their value alongside the code.
"""

from __future__ import annotations

import numba
import numpy as np

from preheat import materials
from preheat.errors import ConfigurationError

FARADAY = 96485.33212
GAS_CONSTANT = 8.314462618
T_REF = 298.15

# scalar slots
K_AN, K_AP = 0, 1  # specific surface areas
K_LN, K_LP = 2, 3  # electrode thicknesses
K_DSN, K_DSP = 4, 5  # particle diffusivities at T_REF
K_EDN, K_EDP = 6, 7  # their activation energies
K_K0N, K_K0P = 8, 9  # rate constants at T_REF
K_EKN, K_EKP = 10, 11
K_ALN, K_ALP = 12, 13  # transfer coefficients
K_CMN, K_CMP = 14, 15  # c_s_max
K_TPLUS = 16
K_ED, K_EK = 17, 18  # electrolyte diffusivity / conductivity activation
K_TF = 19  # thermodynamic factor
K_SIG0, K_SIG1 = 20, 21  # effective solid conductivity at the two collectors
K_DX0, K_DX1 = 22, 23  # collector volume widths
N_K = 24

OK, PARTICLE_OUT, ELECTROLYTE_OUT = 0, 1, 2

_REGISTERED = (
    materials.graphite_mcmb2528_ocp_dualfoil1998,
    materials.lico2_ocp_dualfoil1998,
    materials.electrolyte_diffusivity_capiglia1999,
    materials.electrolyte_conductivity_capiglia1999,
)
CONSTANT = -1

_graphite_ocp = numba.njit(cache=True)(materials.graphite_mcmb2528_ocp_dualfoil1998)
_lico2_ocp = numba.njit(cache=True)(materials.lico2_ocp_dualfoil1998)
_diffusivity = numba.njit(cache=True)(materials.electrolyte_diffusivity_capiglia1999)
_conductivity = numba.njit(cache=True)(materials.electrolyte_conductivity_capiglia1999)


def curve_codes(curves) -> tuple[np.ndarray, np.ndarray]:
    """Integer codes and constant values for (ocp_n, ocp_p, D_e, kappa_e)."""
    codes = np.empty(len(curves), dtype=np.int64)
    values = np.zeros(len(curves))
    for i, curve in enumerate(curves):
        if hasattr(curve, "constant_value"):
            codes[i] = CONSTANT
            values[i] = curve.constant_value
        elif curve in _REGISTERED:
            codes[i] = _REGISTERED.index(curve)
        else:
            raise ConfigurationError(f"curve {curve.__name__!r} has no compiled form for the reduced model")
    return codes, values


@numba.njit(cache=True)
def _curve(code, value, x):
    if code == 0:
        return _graphite_ocp(x)
    if code == 1:
        return _lico2_ocp(x)
    if code == 2:
        return _diffusivity(x)
    if code == 3:
        return _conductivity(x)
    return x * 0.0 + value


@numba.njit(cache=True)
def _arrhenius(E, T):
    return np.exp(E / GAS_CONSTANT * (1.0 / T_REF - 1.0 / T))


@numba.njit(cache=True)
def _thomas(lower, diag, upper, rhs):
    n = diag.size
    c = np.empty(n)
    d = np.empty(n)
    c[0] = upper[0] / diag[0] if n > 1 else 0.0
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        m = diag[i] - lower[i - 1] * c[i - 1]
        if i < n - 1:
            c[i] = upper[i] / m
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / m
    x = np.empty(n)
    x[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


@numba.njit(cache=True)
def _particle(c_old, j, D, dt, volumes, face_areas, dr, radius):
    """Implicit shell update with surface flux j; returns (c_new, c_surf)."""
    n = c_old.size
    q = D * face_areas / dr
    diag = volumes / dt
    diag[:-1] += q
    diag[1:] += q
    rhs = volumes / dt * c_old
    rhs[n - 1] -= radius * radius * j
    c = _thomas(-q, diag, -q, rhs)
    return c, c[n - 1] - j * dr / (2.0 * D)


@numba.njit(cache=True)
def _face(k, dx):
    n = k.size
    G = np.empty(n - 1)
    for i in range(n - 1):
        G[i] = 1.0 / (dx[i] / (2.0 * k[i]) + dx[i + 1] / (2.0 * k[i + 1]))
    return G


@numba.njit(cache=True)
def _eta(c_e, c_surf, cmax, k0, alpha, j, T):
    f = FARADAY / (GAS_CONSTANT * T)
    n = c_e.size
    out = np.empty(n)
    for i in range(n):
        i0 = FARADAY * k0 * c_e[i] ** (1 - alpha) * (cmax - c_surf) ** (1 - alpha) * c_surf**alpha
        ratio = FARADAY * j / i0
        eta = 2.0 / f * np.arcsinh(ratio / 2.0)
        if alpha != 0.5:
            for _ in range(50):
                x = f * eta
                ea = np.exp((1 - alpha) * x)
                eb = np.exp(-alpha * x)
                step = (ea - eb - ratio) / (f * ((1 - alpha) * ea + alpha * eb))
                eta -= step
                if abs(step) < 1e-14:
                    break
        out[i] = eta
    return out


@numba.njit(cache=True)
def substep(cs_n, cs_p, c_e_old, I, T, dt, k, geo, codes, values):
    """One reduced step. Returns (status, cs_n, cs_p, c_e, phi_e, phi_s, eta, surf_n, surf_p)."""
    (dx, eps_dx, transport, a_full, ec_n, ec_p, gs_n, gs_p, vol_n, fa_n, vol_p, fa_p, rad) = geo
    nn = ec_n.size
    npos = ec_p.size
    j_n = I / (k[K_AN] * FARADAY * k[K_LN])
    j_p = -I / (k[K_AP] * FARADAY * k[K_LP])
    Dn = k[K_DSN] * _arrhenius(k[K_EDN], T)
    Dp = k[K_DSP] * _arrhenius(k[K_EDP], T)
    new_n, surf_n = _particle(cs_n, j_n, Dn, dt, vol_n, fa_n, rad[0] / vol_n.size, rad[0])
    new_p, surf_p = _particle(cs_p, j_p, Dp, dt, vol_p, fa_p, rad[1] / vol_p.size, rad[1])
    N = dx.size
    Ne = nn + npos
    phi_e = np.zeros(N)
    phi_s = np.zeros(Ne)
    eta = np.zeros(Ne)
    c_e = c_e_old.copy()
    if not (0.0 < surf_n < k[K_CMN] and 0.0 < surf_p < k[K_CMP]):
        return PARTICLE_OUT, new_n, new_p, c_e, phi_e, phi_s, eta, surf_n, surf_p

    j_full = np.zeros(N)
    for i in range(nn):
        j_full[ec_n[i]] = j_n
    for i in range(npos):
        j_full[ec_p[i]] = j_p
    D = _curve(codes[2], values[2], c_e_old) * _arrhenius(k[K_ED], T) * transport
    GD = _face(D, dx)
    diag = eps_dx / dt
    diag[:-1] += GD
    diag[1:] += GD
    rhs = eps_dx * c_e_old / dt + dx * a_full * (1.0 - k[K_TPLUS]) * j_full
    c_e = _thomas(-GD, diag, -GD, rhs)
    for i in range(N):
        if not c_e[i] > 0.0:
            return ELECTROLYTE_OUT, new_n, new_p, c_e, phi_e, phi_s, eta, surf_n, surf_p

    kap = _curve(codes[3], values[3], c_e) * _arrhenius(k[K_EK], T) * transport
    Gk = _face(kap, dx)
    beta = 2.0 * GAS_CONSTANT * T * (1.0 - k[K_TPLUS]) * k[K_TF] / FARADAY
    ie = 0.0
    for i in range(N - 1):
        ie += dx[i] * a_full[i] * FARADAY * j_full[i]
        phi_e[i + 1] = phi_e[i] - ie / Gk[i] + beta * (np.log(c_e[i + 1]) - np.log(c_e[i]))

    # electronic current in the solid is I minus the ionic current at each face
    ie = 0.0
    phi_s[0] = -I * k[K_DX0] / (2.0 * k[K_SIG0])
    for i in range(nn - 1):
        ie += dx[i] * a_full[i] * FARADAY * j_full[i]
        phi_s[i + 1] = phi_s[i] - (I - ie) / gs_n[i]
    ie = I
    for i in range(npos - 1):
        c = ec_p[i]
        ie -= dx[c] * a_full[c] * FARADAY * (-j_full[c])
        phi_s[nn + i + 1] = phi_s[nn + i] - (I - ie) / gs_p[i]

    U_n = _curve(codes[0], values[0], np.array([surf_n / k[K_CMN]]))[0]
    U_p = _curve(codes[1], values[1], np.array([surf_p / k[K_CMP]]))[0]
    ce_n = np.empty(nn)
    for i in range(nn):
        ce_n[i] = c_e[ec_n[i]]
    ce_p = np.empty(npos)
    for i in range(npos):
        ce_p[i] = c_e[ec_p[i]]
    eta_n = _eta(ce_n, surf_n, k[K_CMN], k[K_K0N] * _arrhenius(k[K_EKN], T), k[K_ALN], j_n, T)
    eta_p = _eta(ce_p, surf_p, k[K_CMP], k[K_K0P] * _arrhenius(k[K_EKP], T), k[K_ALP], j_p, T)

    # fix the free potential levels so each electrode balances on average
    shift = 0.0
    for i in range(nn):
        shift += phi_s[i] - phi_e[ec_n[i]] - U_n - eta_n[i]
    phi_e += shift / nn
    shift = 0.0
    for i in range(npos):
        shift += phi_e[ec_p[i]] + U_p + eta_p[i] - phi_s[nn + i]
    shift /= npos
    for i in range(npos):
        phi_s[nn + i] += shift
    eta[:nn] = eta_n
    eta[nn:] = eta_p
    return OK, new_n, new_p, c_e, phi_e, phi_s, eta, surf_n, surf_p


@numba.njit(cache=True)
def probe(cs_n, cs_p, c_e, currents, T, dt, k, geo, codes, values, v_lo, v_hi, plating):
    """Run current densities at fixed T; stop at the first cutoff or plating violation.

    Returns (v_max, v_min, plating_margin_min, failed).
    """
    ec_n = geo[4]
    nn = ec_n.size
    v_max = -np.inf
    v_min = np.inf
    margin = np.inf
    for s in range(currents.size):
        I = currents[s]
        status, cs_n, cs_p, c_e, phi_e, phi_s, eta, surf_n, surf_p = substep(
            cs_n, cs_p, c_e, I, T, dt, k, geo, codes, values
        )
        if status != OK:
            return v_max, v_min, margin, True
        v = (phi_s[phi_s.size - 1] - I * k[K_DX1] / (2.0 * k[K_SIG1])) - (phi_s[0] + I * k[K_DX0] / (2.0 * k[K_SIG0]))
        v_max = max(v_max, v)
        v_min = min(v_min, v)
        for i in range(nn):
            margin = min(margin, phi_s[i] - phi_e[ec_n[i]])
        if v > v_hi or v < v_lo or (plating and margin < 0.0):
            break
    return v_max, v_min, margin, False
